"""Binary PGM images, JSON key files, keystream dumps and chosen-plaintext images."""
from __future__ import annotations

import json
from decimal import Decimal
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError

__all__ = [
    "read_pgm",
    "write_pgm",
    "pgm_bytes",
    "parse_pgm",
    "make_chosen_image",
    "bytes_as_image",
    "load_key",
    "save_key",
    "key_to_dict",
    "key_from_dict",
    "dump_keystream",
]

_WS = b" \t\n\r\v\f"


def pgm_bytes(img) -> bytes:
    """Canonical P5 serialization: ``P5\\n<width> <height>\\n255\\n`` + payload."""
    a = np.asarray(img)
    if a.ndim != 2:
        raise DomainError(f"image must be 2-D, got shape {a.shape}")
    a = a.astype(np.uint8, copy=False)
    h, w = a.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(a).tobytes()


def write_pgm(img, path) -> None:
    Path(path).write_bytes(pgm_bytes(img))


def parse_pgm(data: bytes) -> np.ndarray:
    if data[:2] != b"P5":
        raise ParseError(f"unsupported magic {data[:2]!r}; only binary P5 is accepted")
    pos = 2
    fields = []
    while len(fields) < 3:
        # skip whitespace and comments between header tokens
        while pos < len(data) and (data[pos] in _WS or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                end = data.find(b"\n", pos)
                pos = len(data) if end < 0 else end + 1
            else:
                pos += 1
        start = pos
        while pos < len(data) and data[pos] not in _WS and data[pos] != ord("#"):
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise ParseError(f"bad header token {token!r}")
        fields.append(int(token))
    if pos >= len(data) or data[pos] not in _WS:
        raise ParseError("header must end with a single whitespace byte")
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        raise ParseError(f"maxval must be 255, got {maxval}")
    need = width * height
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise ParseError(f"truncated payload: {len(payload)} of {need} bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def read_pgm(path) -> np.ndarray:
    return parse_pgm(Path(path).read_bytes())


def bytes_as_image(data: bytes) -> np.ndarray:
    """Wrap an arbitrary byte string as a 1 x L image."""
    return np.frombuffer(bytes(data), dtype=np.uint8).reshape(1, -1).copy()


def make_chosen_image(kind: str, M: int, N: int, v: int) -> np.ndarray:
    """Chosen plaintexts for the attack.

    ``kind="constant"``: every pixel equals ``v``.
    ``kind="digit"``: pixel at linear index n holds the ``v``-th base-256 digit of n.
    """
    if kind == "constant":
        if not 0 <= v < 256:
            raise DomainError(f"constant value must be a byte, got {v}")
        return np.full((M, N), v, dtype=np.uint8)
    if kind == "digit":
        if v < 0:
            raise DomainError(f"digit plane must be >= 0, got {v}")
        n = np.arange(M * N, dtype=np.int64)
        return ((n >> (8 * v)) & 0xFF).astype(np.uint8).reshape(M, N)
    raise ValueError(f"unknown chosen-image kind {kind!r}")


# --------------------------------------------------------------------------
# key files: reals as decimal strings, S as an integer


def _real(v) -> float:
    if isinstance(v, bool):
        raise ParseError(f"expected a decimal string, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    try:
        return float(Decimal(str(v)))
    except Exception as exc:
        raise ParseError(f"bad real {v!r}") from exc


def key_to_dict(key) -> dict:
    def triple(t, names):
        return {n: repr(float(x)) for n, x in zip(names, t)}

    return {
        "f1": triple(key.f1, ("x0", "alpha1", "alpha2")),
        "f2": triple(key.f2, ("x0", "alpha1", "alpha2")),
        "f3": triple(key.f3, ("x0", "alpha1", "alpha2")),
        "g": triple(key.g, ("y0", "alpha3", "alpha4")),
        "S": int(key.s),
    }


def key_from_dict(doc: dict):
    from .cipher import FTriple, GTriple, SecretKey

    try:
        fs = [FTriple(*(_real(doc[f][n]) for n in ("x0", "alpha1", "alpha2"))) for f in ("f1", "f2", "f3")]
        g = GTriple(*(_real(doc["g"][n]) for n in ("y0", "alpha3", "alpha4")))
        s = doc["S"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"key file missing field: {exc}") from exc
    if not isinstance(s, int) or isinstance(s, bool):
        raise ParseError(f"S must be an integer, got {s!r}")
    return SecretKey(*fs, g, s)


def save_key(key, path) -> None:
    Path(path).write_text(json.dumps(key_to_dict(key), indent=2) + "\n")


def load_key(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return key_from_dict(doc)


def dump_keystream(seq, path) -> None:
    """One decimal integer per line."""
    Path(path).write_text("".join(f"{int(v)}\n" for v in seq))
