"""Counting wrapper that applies a rescale policy on top of any backend."""
from __future__ import annotations

import time
from collections import defaultdict

from ..exceptions import ParameterError
from .ledger import OpLedger

MODES = ("relin-only", "rescale-all")


class Evaluator:
    """Runs homomorphic operations on ``backend`` and records them in ``ledger``.

    In ``relin-only`` mode every ciphertext-ciphertext product is relinearized
    and nothing is rescaled. In ``rescale-all`` mode every product, plaintext or
    ciphertext, is also rescaled.

    ``timings`` accumulates wall-clock seconds per counter; on the cost-model
    backend ``ledger.estimated_time`` accumulates table units instead.
    """

    def __init__(self, backend, keys, mode: str = "relin-only", ledger: OpLedger | None = None):
        if mode not in MODES:
            raise ParameterError(f"unknown evaluation mode {mode!r}; expected one of {MODES}")
        self.backend = backend
        self.keys = keys
        self.mode = mode
        self.ledger = ledger if ledger is not None else OpLedger()
        self.timings = defaultdict(float)
        self._table = getattr(backend, "cost_table", None)

    def _run(self, counter: str, fn, *args):
        start = time.perf_counter()
        out = fn(*args)
        self.timings[counter] += time.perf_counter() - start
        self.ledger.record(counter, self._table.unit(counter) if self._table else 0.0)
        return out

    def mul_pt(self, ct, pt):
        return self._run("plain_mults", self.backend.mul_pt, ct, pt)

    def mul_ct(self, a, b):
        return self._run("ciph_mults", self.backend.mul_ct, a, b)

    def relinearize(self, ct):
        return self._run("relins", self.backend.relinearize, ct, self.keys)

    def rescale(self, ct):
        return self._run("rescales", self.backend.rescale, ct)

    def multiply(self, ct, operand):
        """Product with ``operand`` (plaintext or ciphertext) under the active mode."""
        if operand.is_encrypted:
            out = self.relinearize(self.mul_ct(ct, operand))
        else:
            out = self.mul_pt(ct, operand)
        if self.mode == "rescale-all":
            out = self.rescale(out)
        return out

    def add(self, ct, operand):
        if operand.is_encrypted:
            return self._run("ct_adds", self.backend.add_ct, ct, operand)
        return self._run("pt_adds", self.backend.add_pt, ct, operand)

    def rotate(self, ct, steps: int):
        if int(steps) % self.backend.params.slot_count == 0:
            return ct
        return self._run("rotations", self.backend.rotate, ct, steps, self.keys)

    def rotate_sum(self, ct, stride: int, count: int):
        """Sum ``count`` (a power of two) copies of ``ct`` shifted by multiples of ``stride``."""
        shift = stride
        while shift < stride * count:
            ct = self.add(ct, self.rotate(ct, shift))
            shift *= 2
        return ct

    def refresh(self, ct):
        return self._run("refreshes", self.backend.refresh, ct, self.keys)

    def mult_seconds(self) -> float:
        """Wall-clock time spent in multiplications, relinearizations and rescales."""
        return sum(self.timings[k] for k in ("plain_mults", "ciph_mults", "relins", "rescales"))
