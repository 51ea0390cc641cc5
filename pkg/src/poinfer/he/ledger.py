"""Operation counters for homomorphic evaluations."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

COUNTERS = ("plain_mults", "ciph_mults", "relins", "rescales", "rotations", "pt_adds", "ct_adds", "refreshes")


@dataclass
class OpLedger:
    """Counts of every homomorphic operation performed during one evaluation.

    ``estimated_time`` accumulates unit costs when the evaluation runs on the
    cost-model backend; it stays 0 on the exact backend.
    """

    plain_mults: int = 0
    ciph_mults: int = 0
    relins: int = 0
    rescales: int = 0
    rotations: int = 0
    pt_adds: int = 0
    ct_adds: int = 0
    refreshes: int = 0
    estimated_time: float = 0.0

    def record(self, counter: str, unit_cost: float = 0.0, times: int = 1) -> None:
        if counter not in COUNTERS:
            raise KeyError(counter)
        setattr(self, counter, getattr(self, counter) + times)
        self.estimated_time += unit_cost * times

    def __add__(self, other: "OpLedger") -> "OpLedger":
        if not isinstance(other, OpLedger):
            return NotImplemented
        return OpLedger(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    merge = __add__

    def counts(self) -> dict:
        """Integer counters only, for comparisons that must ignore timing."""
        return {name: getattr(self, name) for name in COUNTERS}

    def as_dict(self) -> dict:
        return asdict(self)

    def cost(self, table) -> float:
        """Weighted sum of the multiplication-related counters under ``table``.

        Additions and rotations are absent from the cost tables and contribute 0.
        """
        return (
            self.plain_mults * table.plain_mult
            + self.ciph_mults * table.ciph_mult
            + self.rescales * table.rescale
            + self.relins * table.relinearization
        )
