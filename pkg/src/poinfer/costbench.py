"""Operation-cost calibration, overhead-factor reports and the bilinear cost example."""
from __future__ import annotations

import csv
import platform
import statistics
import time
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .exceptions import HEError
from .he.cost import CostModelBackend, CostTable
from .he.evaluator import Evaluator
from .he.ledger import OpLedger
from .packing.predict import make_layout, predicted_ops

OPERATIONS = ("plain_mult", "ciph_mult", "rescale", "relinearization")


def calibrate(backend, repetitions: int = 30, warmup: int = 3, seed: int = 0, min_ticks: float = 100.0,
              pool: int = 32) -> CostTable:
    """Median timings of the four costed operations, relative to a plain multiplication.

    Each repetition times every operation once over a pool of distinct
    operands, so that operands come from memory as they do inside a layer,
    where each multiplication reads a different weight plaintext. Repeating one
    cached operand makes the cheap, memory-bound operations look cheaper still.
    Operations are visited round-robin so drift in machine load affects all of
    them alike.
    """
    if repetitions < 30:
        raise ValueError(f"calibration needs at least 30 repetitions, got {repetitions}")
    if pool < 2:
        raise ValueError(f"pool needs at least 2 operand sets, got {pool}")
    params = backend.params
    keys = backend.keygen(seed)
    rng = np.random.default_rng(seed)
    pts = [backend.encode(rng.uniform(-1, 1, params.slot_count)) for _ in range(pool)]
    cts = [backend.encrypt(pt, keys) for pt in pts]
    cts3 = [backend.mul_ct(ct, ct) for ct in cts]
    ops = {
        "plain_mult": lambda i: backend.mul_pt(cts[i], pts[i]),
        "ciph_mult": lambda i: backend.mul_ct(cts[i], cts[i - 1]),
        "rescale": lambda i: backend.rescale(cts[i]),
        "relinearization": lambda i: backend.relinearize(cts3[i], keys),
    }
    samples = {name: [] for name in ops}
    for rep in range(warmup + repetitions):
        for name, fn in ops.items():
            start = time.perf_counter()
            for i in range(pool):
                fn(i)
            elapsed = (time.perf_counter() - start) / pool
            if rep >= warmup:
                samples[name].append(elapsed)
    medians = {name: statistics.median(s) for name, s in samples.items()}
    resolution = time.get_clock_info("perf_counter").resolution
    if min(medians.values()) < min_ticks * resolution:
        raise HEError(f"timer resolution {resolution:.2e}s is too coarse for operations of {min(medians.values()):.2e}s")
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return CostTable.from_raw(
        medians["plain_mult"], medians["ciph_mult"], medians["rescale"], medians["relinearization"],
        provenance=f"measured({platform.node()},{stamp})",
    )


@dataclass(frozen=True)
class OverheadReport:
    """Estimated multiplication time at each hidden fraction, relative to ``p = 0``."""

    dims: tuple
    kind: str
    mode: str
    provenance: str
    grid: tuple
    ledgers: tuple
    times: tuple

    @property
    def factors(self) -> dict:
        base = self.times[self.grid.index(0.0)] if 0.0 in self.grid else None
        if base is None:
            raise ValueError("overhead factors need p = 0 on the grid")
        return {p: t / base for p, t in zip(self.grid, self.times)}

    def factor(self, p: float) -> float:
        return self.factors[p]

    @property
    def label(self) -> str:
        if self.kind in ("filter", "kernel", "weight"):
            h, w, cin, cout, k = self.dims
            return f"conv{k}x{k}({h}x{w}x{cin},{cout})"
        return f"{self.kind}({self.dims[0]},{self.dims[1]})"


def overhead_factor(dims, kind: str, p_grid, cost_table: CostTable, mode: str = "relin-only",
                    slots: int = 4096) -> OverheadReport:
    """Cost-table estimate of multiplication time over ``p_grid``; 0 is always included."""
    grid = sorted({0.0, *(float(p) for p in p_grid)})
    layout = make_layout(dims, kind, slots)
    ledgers = tuple(predicted_ops(layout, kind, p, mode) for p in grid)
    times = tuple(ledger.cost(cost_table) for ledger in ledgers)
    return OverheadReport(tuple(dims), kind, mode, cost_table.provenance, tuple(grid), ledgers, times)


def measured_overhead(dims, kind: str, p_grid, backend, keys, mode: str = "relin-only", repetitions: int = 3,
                      seed: int = 0) -> dict:
    """Wall-clock multiplication time of real evaluations relative to ``p = 0`` (median of repetitions)."""
    from .packing import encrypt_conv_input, encrypt_fc_input, eval_conv_he, eval_fc_he, pack_conv, pack_fc
    from .leakage import LayerPlan
    from .packing.groups import hidden_quota

    rng = np.random.default_rng(seed)
    layout = make_layout(dims, kind, backend.params.slot_count)
    keys = backend.with_rotation_keys(keys, layout.rotation_steps())
    conv = kind in ("filter", "kernel", "weight")
    shape = (layout.kernel, layout.kernel, layout.in_channels, layout.out_channels) if conv else tuple(dims)
    W = rng.uniform(-1, 1, shape)
    b = rng.uniform(-1, 1, shape[-1])
    x = rng.uniform(-1, 1, (layout.height, layout.width, layout.in_channels) if conv else shape[0])
    grid = sorted({0.0, *(float(p) for p in p_grid)})
    seconds = {}
    for p in grid:
        hidden = tuple(range(hidden_quota(p, layout.group_count)))
        plan = LayerPlan("bench", kind, shape, hidden, True, p)
        if conv:
            packed = pack_conv(W, b, dims[:3], plan, backend, keys, kind, mode)
            ct = encrypt_conv_input(packed, x, backend, keys)
            run = eval_conv_he
        else:
            packed = pack_fc(W, b, kind, plan, backend, keys, mode)
            ct = encrypt_fc_input(packed, x, backend, keys)
            run = eval_fc_he
        times = []
        for _ in range(repetitions):
            ev = Evaluator(backend, keys, mode)
            run(packed, ct, backend, keys, ev)
            times.append(ev.mult_seconds())
        seconds[p] = statistics.median(times)
    return {p: s / seconds[0.0] for p, s in seconds.items()}


def speedup_summary(report: OverheadReport, p_high: float = 1.0, p_low: float = 0.2) -> float:
    """How many times cheaper the multiplications get when going from ``p_high`` to ``p_low`` hidden."""
    factors = report.factors
    if p_high not in factors or p_low not in factors:
        raise ValueError(f"p values {p_high} and {p_low} must both be on the report grid")
    return factors[p_high] / factors[p_low]


def count_bilinear(leaked, relinearize: bool = False, params=None) -> OpLedger:
    """Operations needed for ``x*y + z*w`` when the operands in ``leaked`` are plaintexts.

    A product of two plaintexts is computed in the clear and costs nothing, as
    does a sum of two plaintexts.
    """
    from .he.params import preset

    leaked = set(leaked)
    unknown = leaked - set("xyzw")
    if unknown:
        raise ValueError(f"unknown operands {sorted(unknown)}; expected a subset of x, y, z, w")
    backend = CostModelBackend(params or preset("n4096-d2"))
    keys = backend.keygen()
    ev = Evaluator(backend, keys)

    def operand(name):
        pt = backend.encode([1.0])
        return pt if name in leaked else backend.encrypt(pt, keys)

    def product(a, b):
        if not a.is_encrypted and not b.is_encrypted:
            return backend.encode([1.0], scale=a.scale * b.scale)
        if not a.is_encrypted:
            a, b = b, a
        if not b.is_encrypted:
            return ev.mul_pt(a, b)
        out = ev.mul_ct(a, b)
        return ev.relinearize(out) if relinearize else out

    left = product(operand("x"), operand("y"))
    right = product(operand("z"), operand("w"))
    if left.is_encrypted and right.is_encrypted:
        if left.size != right.size:
            raise HEError("cannot add ciphertexts of different sizes without relinearizing")
        ev.add(left, right)
    elif left.is_encrypted or right.is_encrypted:
        ct, pt = (left, right) if left.is_encrypted else (right, left)
        ev.add(ct, pt)
    return ev.ledger


COST_COLUMNS = ("operation", "relative_cost")
OVERHEAD_COLUMNS = ("layer", "kind", "mode", "p", "plain_mults", "ciph_mults", "relins", "rescales",
                    "estimated_time", "factor")


def write_cost_table_csv(path, table: CostTable, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        fh.write(f"# provenance={table.provenance}\n")
        w = csv.writer(fh)
        w.writerow(COST_COLUMNS)
        for name in OPERATIONS:
            w.writerow([name, repr(float(getattr(table, name)))])


def read_cost_table_csv(path) -> CostTable:
    provenance = "custom"
    rows = {}
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("# provenance="):
                provenance = line.strip()[len("# provenance="):]
            elif not line.startswith("#"):
                lines.append(line)
    for row in csv.DictReader(lines):
        rows[row["operation"]] = float(row["relative_cost"])
    return CostTable(rows["ciph_mult"], rows["rescale"], rows["relinearization"], rows["plain_mult"], provenance)


def write_overhead_csv(path, reports, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(OVERHEAD_COLUMNS)
        for r in reports:
            factors = r.factors
            for p, ledger, t in zip(r.grid, r.ledgers, r.times):
                w.writerow([r.label, r.kind, r.mode, repr(p), ledger.plain_mults, ledger.ciph_mults, ledger.relins,
                            ledger.rescales, repr(float(t)), repr(float(factors[p]))])
