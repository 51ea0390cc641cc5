"""Partition of a layer's weights into packing groups.

A group is the set of weights sharing one polynomial (or one set of
polynomials), so it must be revealed or hidden as a unit. Groups are returned
as arrays of flat indices into the weight tensor, in a fixed order that the
packers and the leakage planner agree on.
"""
from __future__ import annotations

import numpy as np

from ..exceptions import PlanError, ShapeError

FC_KINDS = ("naive", "diagonal", "hybrid")
CONV_SCHEMES = ("filter", "kernel", "weight")
SCHEMES = FC_KINDS + CONV_SCHEMES


def group_count(shape, scheme: str) -> int:
    """Number of groups without materializing the partition."""
    shape = tuple(shape)
    if scheme in FC_KINDS:
        _check_rank(shape, 2, scheme)
        inputs, outputs = shape
        return inputs if scheme == "diagonal" else outputs
    if scheme in CONV_SCHEMES:
        _check_rank(shape, 4, scheme)
        k1, k2, cin, cout = shape
        return {"filter": cout, "kernel": cout * cin, "weight": k1 * k2 * cin * cout}[scheme]
    raise PlanError(f"unknown grouping scheme {scheme!r}; expected one of {SCHEMES}")


def _check_rank(shape, rank, scheme):
    if len(shape) != rank:
        raise ShapeError(f"scheme {scheme!r} needs a rank-{rank} weight tensor, got shape {shape}")


def group_weights(shape, scheme: str) -> list[np.ndarray]:
    """Flat-index arrays, one per group, covering every weight exactly once.

    FC tensors are ``(inputs, outputs)``: a naive or hybrid group is the column
    feeding one output, and diagonal group ``i`` holds ``W[(j + i) % inputs, j]``
    for every output ``j``. Conv tensors are ``(k, k, in, out)``: groups are a
    whole filter, one ``k x k`` kernel (ordered filter-major), or a single weight
    (ordered filter, channel, row, column).
    """
    shape = tuple(shape)
    count = group_count(shape, scheme)
    index = np.arange(int(np.prod(shape))).reshape(shape)
    if scheme in ("naive", "hybrid"):
        return [index[:, n].copy() for n in range(count)]
    if scheme == "diagonal":
        inputs, outputs = shape
        cols = np.arange(outputs)
        return [index[(cols + i) % inputs, cols] for i in range(count)]
    if scheme == "filter":
        return [index[..., n].ravel() for n in range(count)]
    k1, k2, cin, cout = shape
    if scheme == "kernel":
        return [index[:, :, c, n].ravel() for n in range(cout) for c in range(cin)]
    return [np.array([index[dy, dx, c, n]]) for n in range(cout) for c in range(cin) for dy in range(k1) for dx in range(k2)]


def hidden_mask(shape, scheme: str, hidden) -> np.ndarray:
    """Boolean tensor marking every weight that belongs to a hidden group."""
    groups = group_weights(shape, scheme)
    mask = np.zeros(int(np.prod(shape)), dtype=bool)
    for g in hidden:
        mask[groups[g]] = True
    return mask.reshape(shape)


def hidden_quota(p: float, count: int) -> int:
    """Number of hidden groups for fraction ``p``: ``floor(p * count)``.

    A small tolerance keeps grid values such as 0.3 * 10 from flooring to 2
    because of binary rounding.
    """
    if not 0.0 <= p <= 1.0:
        raise PlanError(f"hidden fraction must lie in [0, 1], got {p}")
    return min(count, int(np.floor(p * count + 1e-9)))
