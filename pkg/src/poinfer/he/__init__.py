from .ckks import CanonicalEmbedding, Ciphertext, CKKSBackend, KeySet, Plaintext
from .cost import CostModelBackend, CostTable, SymbolicCiphertext, SymbolicPlaintext
from .evaluator import MODES, Evaluator
from .ledger import COUNTERS, OpLedger
from .params import CkksParams, PRESETS, preset

__all__ = [
    "CanonicalEmbedding",
    "Ciphertext",
    "CKKSBackend",
    "CkksParams",
    "COUNTERS",
    "CostModelBackend",
    "CostTable",
    "Evaluator",
    "KeySet",
    "MODES",
    "OpLedger",
    "Plaintext",
    "PRESETS",
    "preset",
    "SymbolicCiphertext",
    "SymbolicPlaintext",
]
