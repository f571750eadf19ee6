"""Differential chosen-plaintext attack recovering an equivalent key.

Three phases, ``6 + ceil(log_256(MN))`` chosen plaintexts in total:

1. Six constant images (pairs (9, 127), (1, 52), (33, 65) by default).  For a
   constant pair the permutation is invisible and the XOR of the two cipher
   chains pins ``phi3(k)`` up to its top bit at every position.
2. No new query: the constant-9 answer minus the Confusion I chain computed
   with seed 0 gives ``phi4`` with the unknown seed ``S`` folded in.
3. ``d`` digit-plane images tag every position with its own index in base
   256; stripping both confusion stages reveals where each index landed.
"""
from __future__ import annotations

import base64
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .cipher import SecretKey, as_image, confusion1, confusion1_inverse, confusion2, decrypt_with_keystreams, encrypt_with_keystreams, net_permutation
from .errors import (
    AmbiguousPosition,
    CodeOutOfRange,
    DimensionMismatch,
    LengthMismatch,
    NotBijective,
    OracleMismatch,
)
from .fileio import make_chosen_image, read_pgm, write_pgm

__all__ = [
    "ALPHABET",
    "DEFAULT_PAIRS",
    "EncryptionOracle",
    "InProcessOracle",
    "FileExchangeOracle",
    "MaskedAddConstraint",
    "EquivalentKey",
    "AttackTranscript",
    "masked_add",
    "solve_masked_add",
    "check_pair_set",
    "permutation_digits",
    "recover_phi3",
    "recover_phi4",
    "recover_permutation",
    "run_differential_attack",
    "decrypt_with_equivalent",
]

ALPHABET = 256
DEFAULT_PAIRS = ((9, 127), (1, 52), (33, 65))


class EncryptionOracle(Protocol):
    """Anything that encrypts chosen ``(M, N)`` images under one hidden key."""

    shape: tuple

    def encrypt(self, img: np.ndarray) -> np.ndarray: ...


class InProcessOracle:
    """Wraps the cipher with a hidden key; keystreams are derived once and cached."""

    def __init__(self, key: SecretKey, M: int, N: int):
        self.shape = (M, N)
        self._key = key
        self._ks = key.keystreams(M, N)
        self._src = net_permutation(self._ks.phi1, self._ks.phi2, M, N)
        self.queries = 0

    def encrypt(self, img):
        img = as_image(img)
        if img.shape != self.shape:
            raise OracleMismatch(f"oracle encrypts {self.shape} images, got {img.shape}")
        self.queries += 1
        return encrypt_with_keystreams(img, self._ks, self._key.s, self._src)

    # Ground truth for tests and reports; never used by the attack itself.
    def reveal(self):
        return self._key, self._ks, self._src

    def decrypt(self, cimg):
        return decrypt_with_keystreams(cimg, self._ks, self._key.s, self._src)


class FileExchangeOracle:
    """Queries an external encryptor through two directories.

    Query ``i`` is written to ``outbox/query_{i:03d}.pgm``; the oracle then
    waits until a cipher image of the same name appears in ``inbox``.
    """

    def __init__(self, outbox, inbox, M: int, N: int, timeout: float = 600.0, poll: float = 0.05):
        self.shape = (M, N)
        self.outbox = Path(outbox)
        self.inbox = Path(inbox)
        self.timeout = timeout
        self.poll = poll
        self.queries = 0
        self.outbox.mkdir(parents=True, exist_ok=True)
        self.inbox.mkdir(parents=True, exist_ok=True)

    def encrypt(self, img):
        img = as_image(img)
        if img.shape != self.shape:
            raise OracleMismatch(f"oracle encrypts {self.shape} images, got {img.shape}")
        name = f"query_{self.queries:03d}.pgm"
        self.queries += 1
        tmp = self.outbox / (name + ".part")
        write_pgm(img, tmp)
        os.replace(tmp, self.outbox / name)
        answer = self.inbox / name
        deadline = time.monotonic() + self.timeout
        while not answer.exists():
            if time.monotonic() > deadline:
                raise TimeoutError(f"no answer for {name} in {self.inbox}")
            time.sleep(self.poll)
        cimg = read_pgm(answer)
        if cimg.shape != self.shape:
            raise OracleMismatch(f"answer {answer} has shape {cimg.shape}, expected {self.shape}")
        return cimg


def serve_file_exchange(key: SecretKey, outbox, inbox, count: int, timeout: float = 600.0, poll: float = 0.05):
    """Answer ``count`` queries of a :class:`FileExchangeOracle` by encrypting with ``key``.

    Intended for a helper thread or process playing the external encryptor.
    """
    outbox, inbox = Path(outbox), Path(inbox)
    inbox.mkdir(parents=True, exist_ok=True)
    cache = {}
    for i in range(count):
        name = f"query_{i:03d}.pgm"
        path = outbox / name
        deadline = time.monotonic() + timeout
        while not path.exists():
            if time.monotonic() > deadline:
                raise TimeoutError(f"query {name} never arrived")
            time.sleep(poll)
        img = read_pgm(path)
        if img.shape not in cache:
            ks = key.keystreams(*img.shape)
            cache[img.shape] = (ks, net_permutation(ks.phi1, ks.phi2, *img.shape))
        ks, src = cache[img.shape]
        tmp = inbox / (name + ".part")
        write_pgm(encrypt_with_keystreams(img, ks, key.s, src), tmp)
        os.replace(tmp, inbox / name)


def start_file_exchange_server(key, outbox, inbox, count, **kw) -> threading.Thread:
    t = threading.Thread(target=serve_file_exchange, args=(key, outbox, inbox, count), kwargs=kw, daemon=True)
    t.start()
    return t


# --------------------------------------------------------------------------
# masked-add equation  y = (a + x) ^ (b + x)  (mod 256)


@dataclass(frozen=True)
class MaskedAddConstraint:
    a: int
    b: int
    y: int


def masked_add(a, b, x):
    return ((a + x) & 0xFF) ^ ((b + x) & 0xFF)


def solve_masked_add(constraints: Sequence[MaskedAddConstraint]) -> set:
    """All bytes ``x`` satisfying every constraint (exhaustive over 256 candidates)."""
    if not constraints:
        raise ValueError("need at least one constraint")
    xs = np.arange(256)
    ok = np.ones(256, dtype=bool)
    for c in constraints:
        ok &= masked_add(c.a, c.b, xs) == c.y
    return set(int(x) for x in np.flatnonzero(ok))


def check_pair_set(pairs) -> None:
    """Raise :class:`AmbiguousPosition` unless ``pairs`` pin every x to ``{x, x ^ 128}``.

    Runs before any oracle query is spent.
    """
    for x in range(256):
        cons = [MaskedAddConstraint(a, b, masked_add(a, b, x)) for a, b in pairs]
        sol = solve_masked_add(cons)
        if sol != {x, x ^ 0x80}:
            raise AmbiguousPosition(f"pair set {list(pairs)} leaves {sorted(sol)} for x={x}", position=None, x=x)


def _codebook(pairs):
    """Map the packed tuple of per-pair differences to the canonical phi3 byte (or -1)."""
    width = 8 * len(pairs)
    if width > 24:
        return None
    table = np.full(1 << width, -1, dtype=np.int16)
    for x in range(128):
        code = 0
        for a, b in pairs:
            code = (code << 8) | masked_add(a, b, x)
        sol = solve_masked_add([MaskedAddConstraint(a, b, masked_add(a, b, x)) for a, b in pairs])
        table[code] = min(sol)
    return table


# --------------------------------------------------------------------------
# equivalent key and transcript


@dataclass
class EquivalentKey:
    phi3_rep: np.ndarray  # uint8, top bit clear
    phi4_abs: np.ndarray  # uint8, phi4 ^ S
    perm: np.ndarray  # int64, perm[s] = position of source pixel s after permutation
    shape: tuple

    def __post_init__(self):
        n = self.shape[0] * self.shape[1]
        for name in ("phi3_rep", "phi4_abs", "perm"):
            if len(getattr(self, name)) != n:
                raise LengthMismatch(f"{name} has length {len(getattr(self, name))}, expected {n}")

    def to_json(self, perm_path) -> dict:
        """Serialize; the permutation goes to ``perm_path`` as little-endian uint32."""
        perm_path = Path(perm_path)
        perm_path.write_bytes(self.perm.astype("<u4").tobytes())
        return {
            "rows": int(self.shape[0]),
            "cols": int(self.shape[1]),
            "phi3": base64.b64encode(self.phi3_rep.astype(np.uint8).tobytes()).decode("ascii"),
            "phi4": base64.b64encode(self.phi4_abs.astype(np.uint8).tobytes()).decode("ascii"),
            "perm_path": str(perm_path),
        }

    def save(self, json_path, perm_path=None):
        json_path = Path(json_path)
        if perm_path is None:
            perm_path = json_path.with_suffix(".perm.bin")
        doc = self.to_json(perm_path)
        # store the perm path relative to the JSON file when possible
        try:
            doc["perm_path"] = os.path.relpath(perm_path, json_path.parent)
        except ValueError:
            pass
        json_path.write_text(json.dumps(doc, indent=2) + "\n")

    @classmethod
    def load(cls, json_path) -> "EquivalentKey":
        json_path = Path(json_path)
        doc = json.loads(json_path.read_text())
        perm_path = Path(doc["perm_path"])
        if not perm_path.is_absolute():
            perm_path = json_path.parent / perm_path
        perm = np.frombuffer(perm_path.read_bytes(), dtype="<u4").astype(np.int64)
        return cls(
            np.frombuffer(base64.b64decode(doc["phi3"]), dtype=np.uint8).copy(),
            np.frombuffer(base64.b64decode(doc["phi4"]), dtype=np.uint8).copy(),
            perm,
            (int(doc["rows"]), int(doc["cols"])),
        )


@dataclass
class AttackTranscript:
    shape: tuple
    queries: list = field(default_factory=list)  # descriptors, in submission order
    phases: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return len(self.queries)

    def to_dict(self) -> dict:
        return {
            "rows": self.shape[0],
            "cols": self.shape[1],
            "total_chosen_plaintexts": self.total,
            "expected_total": 6 + permutation_digits(self.shape[0] * self.shape[1]),
            "queries": self.queries,
            "phases": self.phases,
        }


class _RecordingOracle:
    """Forwards queries, logging descriptors and answers."""

    def __init__(self, oracle, transcript):
        self.oracle = oracle
        self.transcript = transcript
        self.shape = tuple(oracle.shape)
        self.log = []

    def encrypt(self, img, descriptor):
        img = as_image(img)
        out = as_image(self.oracle.encrypt(img))
        if out.shape != self.shape:
            raise OracleMismatch(f"oracle answered {out.shape} for a {self.shape} query")
        self.transcript.queries.append(descriptor)
        self.log.append((img, out))
        return out


def permutation_digits(n: int) -> int:
    """``ceil(log_256 n)``, computed in integers."""
    d, cap = 0, 1
    while cap < n:
        cap *= ALPHABET
        d += 1
    return d


# --------------------------------------------------------------------------
# phases


def _check_shape(oracle, shape):
    if shape is not None and tuple(oracle.shape) != tuple(shape):
        raise OracleMismatch(f"oracle dimensions {tuple(oracle.shape)} differ from requested {tuple(shape)}")


def _solve_phi3(diffs, pairs):
    """Per-position solve of the stacked differences ``diffs[pair, k]``."""
    n = diffs.shape[1]
    table = _codebook(pairs)
    if table is not None:
        code = np.zeros(n, dtype=np.int64)
        for row in diffs:
            code = (code << 8) | row
        rep = table[code]
        bad = np.flatnonzero(rep < 0)
        if bad.size == 0:
            return rep.astype(np.uint8)
        k = int(bad[0])
    else:
        rep = np.empty(n, dtype=np.uint8)
        k = None
        for pos in range(n):
            sol = solve_masked_add([MaskedAddConstraint(a, b, int(diffs[i, pos])) for i, (a, b) in enumerate(pairs)])
            if len(sol) != 2 or max(sol) != min(sol) ^ 0x80:
                k = pos
                break
            rep[pos] = min(sol)
        if k is None:
            return rep
    sol = solve_masked_add([MaskedAddConstraint(a, b, int(diffs[i, k])) for i, (a, b) in enumerate(pairs)])
    if not sol:
        # no byte explains the observations: the oracle is not a fixed-key instance of this cipher
        raise OracleMismatch(f"no keystream byte is consistent with the answers at position {k}", position=k)
    raise AmbiguousPosition(f"position {k} admits {sorted(sol)}", position=k)


def _phase1(rec, pairs, shape):
    M, N = shape
    answers = {}
    for a, b in pairs:
        for v in (a, b):
            if v not in answers:
                answers[v] = rec.encrypt(make_chosen_image("constant", M, N, v), {"kind": "constant", "value": int(v)}).ravel()
    rows = []
    for a, b in pairs:
        d = answers[a] ^ answers[b]
        prev = np.zeros_like(d)
        prev[1:] = d[:-1]
        rows.append((d ^ prev).astype(np.int64))
    return _solve_phi3(np.array(rows), pairs), answers


def recover_phi3(oracle, pairs=DEFAULT_PAIRS, shape=None) -> np.ndarray:
    """Recover ``phi3`` (top bit cleared) with one constant-image query per distinct pair value."""
    _check_shape(oracle, shape)
    pairs = tuple((int(a), int(b)) for a, b in pairs)
    check_pair_set(pairs)
    rec = oracle if isinstance(oracle, _RecordingOracle) else _RecordingOracle(oracle, AttackTranscript(tuple(oracle.shape)))
    phi3, _ = _phase1(rec, pairs, rec.shape)
    return phi3


def recover_phi4(c9, phi3_rep, value: int = 9) -> np.ndarray:
    """``phi4 ^ S`` from the cipher-image of the constant-``value`` plaintext."""
    c9 = np.asarray(c9, dtype=np.uint8).ravel()
    phi3_rep = np.asarray(phi3_rep, dtype=np.uint8).ravel()
    if len(c9) != len(phi3_rep):
        raise LengthMismatch(f"cipher length {len(c9)} != keystream length {len(phi3_rep)}")
    chain = confusion1(np.full(len(c9), value, dtype=np.uint8), phi3_rep, 0)
    return c9 ^ chain


def _strip(cipher, phi3_rep, phi4_abs):
    return confusion1_inverse(confusion2(cipher, phi4_abs), phi3_rep, 0)


def _decode_permutation(planes, n):
    code = np.zeros(n, dtype=np.int64)
    for j, plane in enumerate(planes):
        code += plane.astype(np.int64) * ALPHABET**j
    out_of_range = np.flatnonzero(code >= n)
    if out_of_range.size:
        t = int(out_of_range[0])
        raise CodeOutOfRange(f"position {t} decodes to {int(code[t])} >= {n}", position=t)
    perm = np.full(n, -1, dtype=np.int64)
    perm[code] = np.arange(n)
    if np.any(perm < 0):
        counts = np.bincount(code, minlength=n)
        dup = int(np.flatnonzero(counts > 1)[0])
        raise NotBijective(f"source index {dup} decoded at {int(counts[dup])} positions", code=dup)
    return perm


def recover_permutation(oracle, phi3_rep, phi4_abs, shape=None) -> np.ndarray:
    """Recover ``P`` with ``P[s]`` = position of source pixel ``s`` after the swaps."""
    _check_shape(oracle, shape)
    rec = oracle if isinstance(oracle, _RecordingOracle) else _RecordingOracle(oracle, AttackTranscript(tuple(oracle.shape)))
    M, N = rec.shape
    n = M * N
    planes = []
    for j in range(permutation_digits(n)):
        c = rec.encrypt(make_chosen_image("digit", M, N, j), {"kind": "digit", "plane": j})
        planes.append(_strip(c.ravel(), phi3_rep, phi4_abs))
    return _decode_permutation(planes, n)


def decrypt_with_equivalent(cimg, ek: EquivalentKey) -> np.ndarray:
    cimg = as_image(cimg)
    if cimg.shape != tuple(ek.shape):
        raise DimensionMismatch(f"cipher-image {cimg.shape} vs key {tuple(ek.shape)}")
    permuted = _strip(cimg.ravel(), ek.phi3_rep, ek.phi4_abs)
    return permuted[ek.perm].reshape(cimg.shape)


def encrypt_with_equivalent(img, ek: EquivalentKey) -> np.ndarray:
    img = as_image(img)
    if img.shape != tuple(ek.shape):
        raise DimensionMismatch(f"image {img.shape} vs key {tuple(ek.shape)}")
    permuted = np.empty(img.size, dtype=np.uint8)
    permuted[ek.perm] = img.ravel()
    return confusion2(confusion1(permuted, ek.phi3_rep, 0), ek.phi4_abs).reshape(img.shape)


def run_differential_attack(oracle, pairs=DEFAULT_PAIRS, shape=None):
    """Run all three phases; returns ``(EquivalentKey, AttackTranscript)``.

    A final self-check re-encrypts every chosen plaintext with the recovered
    key and compares with the recorded answers, without spending queries.
    On failure the raised error carries the partial transcript as ``transcript``.
    """
    _check_shape(oracle, shape)
    pairs = tuple((int(a), int(b)) for a, b in pairs)
    transcript = AttackTranscript(tuple(oracle.shape))
    rec = _RecordingOracle(oracle, transcript)
    M, N = rec.shape
    phase = "preflight"
    try:
        check_pair_set(pairs)
        transcript.phases["preflight"] = "ok"
        phase = "confusion1"
        phi3, answers = _phase1(rec, pairs, rec.shape)
        transcript.phases[phase] = "ok"
        phase = "confusion2"
        first = pairs[0][0]
        phi4 = recover_phi4(answers[first], phi3, first)
        transcript.phases[phase] = "ok"
        phase = "permutation"
        perm = recover_permutation(rec, phi3, phi4)
        transcript.phases[phase] = "ok"
        ek = EquivalentKey(phi3, phi4, perm, (M, N))
        phase = "self-check"
        for i, (img, answer) in enumerate(rec.log):
            if not np.array_equal(encrypt_with_equivalent(img, ek), answer):
                raise OracleMismatch(f"query {i} is not reproduced by the recovered key; oracle is inconsistent", query=i)
        transcript.phases[phase] = "ok"
    except Exception as exc:
        transcript.phases[phase] = f"failed: {type(exc).__name__}: {exc}"
        exc.transcript = transcript
        raise
    return ek, transcript
