"""Partially oblivious neural-network inference under CKKS."""
