"""Closed-form operation counts for packed linear layers."""
from __future__ import annotations

import math

from ..exceptions import HEError, ShapeError
from ..he.evaluator import MODES
from ..he.ledger import OpLedger
from .conv import ConvLayout
from .fc import FcLayout
from .groups import CONV_SCHEMES, FC_KINDS, hidden_quota


def make_layout(dims, kind: str, slots: int):
    """FC dims are ``(inputs, outputs)``; conv dims are ``(height, width, in, out, k)``."""
    dims = tuple(int(d) for d in dims)
    if kind in FC_KINDS:
        if len(dims) != 2:
            raise ShapeError(f"FC dims must be (inputs, outputs), got {dims}")
        return FcLayout(kind, *dims, slots)
    if kind in CONV_SCHEMES:
        if len(dims) != 5:
            raise ShapeError(f"conv dims must be (height, width, in, out, k), got {dims}")
        return ConvLayout(*dims, kind, slots)
    raise ShapeError(f"unknown packing {kind!r}")


def predicted_ops(dims, kind: str, p: float, mode: str = "relin-only", slots: int = 4096,
                  bias_hidden: bool = True) -> OpLedger:
    """Operation counts of one evaluation with ``floor(p * groups)`` hidden groups."""
    if mode not in MODES:
        raise HEError(f"unknown evaluation mode {mode!r}")
    layout = dims if isinstance(dims, (FcLayout, ConvLayout)) else make_layout(dims, kind, slots)
    return layout_ops(layout, hidden_quota(p, layout.group_count), mode, bias_hidden)


def layout_ops(layout, hidden: int, mode: str = "relin-only", bias_hidden: bool = True) -> OpLedger:
    groups = layout.group_count
    if isinstance(layout, ConvLayout):
        per_group = layout.polys_per_filter * layout.out_channels // groups
        reduce = int(math.log2(layout.channel_span))
        outputs = layout.out_channels
        rotations = len(layout.rotated_offsets) + outputs * reduce
        ct_adds = outputs * (layout.polys_per_filter - 1 + reduce)
    elif layout.kind == "diagonal":
        per_group = 1
        outputs = 1
        rotations = (layout.baby - 1) + (layout.giant - 1)
        ct_adds = layout.inputs - 1
    else:
        per_group = 1
        outputs = layout.output_count
        reduce = int(math.log2(layout.window))
        rotations = outputs * reduce
        ct_adds = (layout.outputs - outputs) + outputs * reduce
    ledger = OpLedger(
        plain_mults=(groups - hidden) * per_group,
        ciph_mults=hidden * per_group,
        relins=hidden * per_group,
        rotations=rotations,
        ct_adds=ct_adds + (outputs if bias_hidden else 0),
        pt_adds=0 if bias_hidden else outputs,
    )
    if mode == "rescale-all":
        ledger.rescales = groups * per_group
    return ledger
