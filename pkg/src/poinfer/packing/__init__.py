from .conv import ConvLayout, decode_conv_output, encrypt_conv_input, eval_conv_he, pack_conv
from .fc import FcLayout, decode_fc_output, encrypt_fc_input, eval_fc_he, pack_fc
from .groups import CONV_SCHEMES, FC_KINDS, SCHEMES, group_count, group_weights, hidden_mask, hidden_quota
from .packed import PackedLayer
from .predict import layout_ops, make_layout, predicted_ops

__all__ = [
    "CONV_SCHEMES",
    "ConvLayout",
    "decode_conv_output",
    "decode_fc_output",
    "encrypt_conv_input",
    "encrypt_fc_input",
    "eval_conv_he",
    "eval_fc_he",
    "FC_KINDS",
    "FcLayout",
    "group_count",
    "group_weights",
    "hidden_mask",
    "hidden_quota",
    "layout_ops",
    "make_layout",
    "PackedLayer",
    "pack_conv",
    "pack_fc",
    "predicted_ops",
    "SCHEMES",
]
