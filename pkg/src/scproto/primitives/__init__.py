from scproto.primitives.group import (
    BilinearGroup,
    CurveGroup,
    G1Element,
    GTElement,
    MockGroup,
    get_group,
    kernel,
)
from scproto.primitives.hashing import HashKey, crhf_hash, hgen
from scproto.primitives.schemes import (
    DecryptionError,
    KeyMaterial,
    pke_dec,
    pke_enc,
    sample_keys,
    se_dec,
    se_enc,
    sign,
    verify,
)

__all__ = [
    "BilinearGroup",
    "CurveGroup",
    "DecryptionError",
    "G1Element",
    "GTElement",
    "HashKey",
    "KeyMaterial",
    "MockGroup",
    "crhf_hash",
    "get_group",
    "hgen",
    "kernel",
    "pke_dec",
    "pke_enc",
    "sample_keys",
    "se_dec",
    "se_enc",
    "sign",
    "verify",
]
