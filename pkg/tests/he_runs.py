"""Pack, encrypt, evaluate and decrypt one linear layer."""
from types import SimpleNamespace

from poinfer.packing import (
    decode_conv_output,
    decode_fc_output,
    encrypt_conv_input,
    encrypt_fc_input,
    eval_conv_he,
    eval_fc_he,
    make_layout,
    pack_conv,
    pack_fc,
)


def layer_plan(scheme, hidden, bias_hidden=True):
    return SimpleNamespace(scheme=scheme, hidden=tuple(hidden), bias_hidden=bias_hidden)


def with_layout_keys(backend, keys, dims, kind):
    layout = make_layout(dims, kind, backend.params.slot_count)
    return backend.with_rotation_keys(keys, layout.rotation_steps())


def run_fc(backend, keys, W, b, x, kind, hidden, bias_hidden=True, mode="relin-only"):
    keys = with_layout_keys(backend, keys, W.shape, kind)
    packed = pack_fc(W, b, kind, layer_plan(kind, hidden, bias_hidden), backend, keys, mode)
    outputs, ledger = eval_fc_he(packed, encrypt_fc_input(packed, x, backend, keys), backend, keys)
    result = decode_fc_output(packed, outputs, backend, keys) if backend.exact else None
    return packed, result, ledger


def run_conv(backend, keys, W, b, image, scheme, hidden, bias_hidden=True, mode="relin-only"):
    dims = (*image.shape, W.shape[3], W.shape[0])
    keys = with_layout_keys(backend, keys, dims, scheme)
    packed = pack_conv(W, b, image.shape, layer_plan(scheme, hidden, bias_hidden), backend, keys, scheme, mode)
    outputs, ledger = eval_conv_he(packed, encrypt_conv_input(packed, image, backend, keys), backend, keys)
    result = decode_conv_output(packed, outputs, backend, keys) if backend.exact else None
    return packed, result, ledger
