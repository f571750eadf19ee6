"""The composition-map image cipher: swap permutation, Confusion I, Confusion II.

Images are 2-D ``uint8`` arrays of shape ``(M, N)``; the linear index of
pixel ``(i, j)`` is ``i * N + j`` (raster order).  All indices are 0-based and
the Confusion I chain is seeded with ``out(-1) = S``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .chaos import KeystreamSet, generate_keystreams
from .errors import DomainError, LengthMismatch

__all__ = [
    "FTriple",
    "GTriple",
    "SecretKey",
    "PUBLISHED_KEY",
    "as_image",
    "swap_targets",
    "net_permutation",
    "permute",
    "inverse_permute",
    "confusion1",
    "confusion1_inverse",
    "confusion2",
    "encrypt",
    "decrypt",
    "encrypt_with_keystreams",
    "KEY_RANGES",
    "sample_key",
    "decrypt_with_keystreams",
]


class FTriple(NamedTuple):
    x0: float
    alpha1: float
    alpha2: float


class GTriple(NamedTuple):
    y0: float
    alpha3: float
    alpha4: float


@dataclass(frozen=True)
class SecretKey:
    f1: FTriple
    f2: FTriple
    f3: FTriple
    g: GTriple
    s: int

    def __post_init__(self):
        for name in ("f1", "f2", "f3"):
            object.__setattr__(self, name, FTriple(*map(float, getattr(self, name))))
        object.__setattr__(self, "g", GTriple(*map(float, self.g)))
        for t in (self.f1, self.f2, self.f3, self.g):
            if t[1] == 0 or t[2] == 0:
                raise DomainError(f"control parameters must be nonzero: {t}")
        if not 0 <= int(self.s) < 256 or int(self.s) != self.s:
            raise DomainError(f"S must be a byte, got {self.s!r}")
        object.__setattr__(self, "s", int(self.s))

    def keystreams(self, M: int, N: int) -> KeystreamSet:
        """Keystreams for an ``M x N`` image; memoized, arrays are read-only."""
        return _keystreams_cached(self, int(M), int(N))


@functools.lru_cache(maxsize=16)
def _keystreams_cached(key, M, N):
    ks = generate_keystreams(key, M, N)
    for a in (ks.phi1, ks.phi2, ks.phi3, ks.phi4):
        a.setflags(write=False)
    return ks


# Key of the published experiment (S = 33).
PUBLISHED_KEY = SecretKey(
    f1=FTriple(25.687, 2.10155, 3.569221),
    f2=FTriple(574.461, 1.8874, 4.23562),
    f3=FTriple(814.217217, 2.8912, 3.89954),
    g=GTriple(79.82, 61.522, 257.26223),
    s=33,
)


# Uniform sampling box for random keys; brackets PUBLISHED_KEY.
KEY_RANGES = {
    "x0": (0.0, 1000.0),  # half-open on the left
    "alpha1": (1.0, 4.0),
    "alpha2": (1.0, 5.0),
    "alpha3": (1.0, 100.0),
    "alpha4": (1.0, 300.0),
}


def sample_key(rng: np.random.Generator) -> SecretKey:
    """Draw a key from :data:`KEY_RANGES` (initial conditions in ``(0, 1000]``, S uniform).

    No usability check is made here; orbits that blow up surface later as
    :class:`~compmap.errors.KeyRejected`.
    """
    lo, hi = KEY_RANGES["x0"]

    def init():
        return hi - (hi - lo) * rng.random()

    def f_triple():
        return FTriple(init(), rng.uniform(*KEY_RANGES["alpha1"]), rng.uniform(*KEY_RANGES["alpha2"]))

    f1, f2, f3 = f_triple(), f_triple(), f_triple()
    g = GTriple(init(), rng.uniform(*KEY_RANGES["alpha3"]), rng.uniform(*KEY_RANGES["alpha4"]))
    return SecretKey(f1, f2, f3, g, int(rng.integers(0, 256)))


def as_image(img) -> np.ndarray:
    """Validate and return ``img`` as a C-contiguous 2-D uint8 array."""
    a = np.asarray(img)
    if a.ndim != 2:
        raise DomainError(f"image must be 2-D, got shape {a.shape}")
    if a.dtype != np.uint8:
        if a.size and (a.min() < 0 or a.max() > 255):
            raise DomainError("pixel values must lie in [0, 255]")
        a = a.astype(np.uint8)
    return np.ascontiguousarray(a)


def _check_len(n, *streams):
    for s in streams:
        if len(s) != n:
            raise LengthMismatch(f"keystream length {len(s)} != {n}", expected=n, got=len(s))


def swap_targets(phi1, phi2, N: int) -> np.ndarray:
    """Swap partner ``phi1(k) * N + phi2(k)`` of every linear index k."""
    return np.asarray(phi1, dtype=np.int64) * N + np.asarray(phi2, dtype=np.int64)


def net_permutation(phi1, phi2, M: int, N: int) -> np.ndarray:
    """Source index of every output position after all MN swaps.

    ``permute(img)`` equals ``img.ravel()[src]``.
    """
    n = M * N
    _check_len(n, phi1, phi2)
    targets = swap_targets(phi1, phi2, N).tolist()
    src = list(range(n))
    for k, t in enumerate(targets):
        src[k], src[t] = src[t], src[k]
    return np.array(src, dtype=np.int64)


def permute(img, phi1, phi2) -> np.ndarray:
    """Swap ``I(k)`` with ``I(phi1(k) N + phi2(k))`` for k = 0 .. MN-1 in ascending order."""
    img = np.asarray(img)
    M, N = img.shape
    src = net_permutation(phi1, phi2, M, N)
    return img.ravel()[src].reshape(M, N)


def inverse_permute(img, phi1, phi2) -> np.ndarray:
    """Undo :func:`permute`: the same swaps applied for k = MN-1 .. 0."""
    img = np.asarray(img)
    M, N = img.shape
    src = net_permutation(phi1, phi2, M, N)
    out = np.empty_like(img.ravel())
    out[src] = img.ravel()
    return out.reshape(M, N)


def confusion1(buf, phi3, seed: int) -> np.ndarray:
    """``out(k) = phi3(k) ^ ((buf(k) + phi3(k)) mod 256) ^ out(k-1)`` with ``out(-1) = seed``.

    The chain is a running XOR, so it is evaluated with a prefix XOR scan.
    """
    buf = np.asarray(buf, dtype=np.uint8).ravel()
    phi3 = np.asarray(phi3, dtype=np.uint8).ravel()
    _check_len(len(buf), phi3)
    masked = phi3 ^ (buf + phi3)  # uint8 addition wraps mod 256
    if masked.size == 0:
        return masked
    masked[0] ^= np.uint8(seed)
    return np.bitwise_xor.accumulate(masked)


def confusion1_inverse(buf, phi3, seed: int) -> np.ndarray:
    buf = np.asarray(buf, dtype=np.uint8).ravel()
    phi3 = np.asarray(phi3, dtype=np.uint8).ravel()
    _check_len(len(buf), phi3)
    prev = np.empty_like(buf)
    if buf.size:
        prev[0] = seed
        prev[1:] = buf[:-1]
    return (buf ^ prev ^ phi3) - phi3


def confusion2(buf, phi4) -> np.ndarray:
    buf = np.asarray(buf, dtype=np.uint8).ravel()
    phi4 = np.asarray(phi4, dtype=np.uint8).ravel()
    _check_len(len(buf), phi4)
    return buf ^ phi4


def encrypt_with_keystreams(img, ks: KeystreamSet, s: int, src: np.ndarray | None = None) -> np.ndarray:
    """Encrypt with precomputed keystreams; ``src`` may carry a cached net permutation."""
    img = as_image(img)
    M, N = img.shape
    _check_len(M * N, ks.phi1, ks.phi2, ks.phi3, ks.phi4)
    if src is None:
        src = net_permutation(ks.phi1, ks.phi2, M, N)
    permuted = img.ravel()[src]
    return confusion2(confusion1(permuted, ks.phi3, s), ks.phi4).reshape(M, N)


def decrypt_with_keystreams(cimg, ks: KeystreamSet, s: int, src: np.ndarray | None = None) -> np.ndarray:
    cimg = as_image(cimg)
    M, N = cimg.shape
    _check_len(M * N, ks.phi1, ks.phi2, ks.phi3, ks.phi4)
    if src is None:
        src = net_permutation(ks.phi1, ks.phi2, M, N)
    permuted = confusion1_inverse(confusion2(cimg, ks.phi4), ks.phi3, s)
    out = np.empty_like(permuted)
    out[src] = permuted
    return out.reshape(M, N)


def encrypt(img, key: SecretKey) -> np.ndarray:
    img = as_image(img)
    return encrypt_with_keystreams(img, key.keystreams(*img.shape), key.s)


def decrypt(cimg, key: SecretKey) -> np.ndarray:
    cimg = as_image(cimg)
    return decrypt_with_keystreams(cimg, key.keystreams(*cimg.shape), key.s)
