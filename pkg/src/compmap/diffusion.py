"""Plaintext sensitivity: flip one plaintext bit and locate the changed cipher bits.

Every stage of the cipher is a permutation, an XOR or a mod-256 addition, so
a flip at bit level ``b`` can only disturb levels ``b..7`` of the
cipher-image, and only at scan positions from the flipped pixel's permuted
position onward.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cipher import SecretKey, as_image, encrypt_with_keystreams, net_permutation
from .errors import DomainError

__all__ = ["DiffReport", "PlaneRow", "bit_flip_diff", "bit_flip_diff_with_keystreams", "plane_change_summary"]


@dataclass
class DiffReport:
    position: tuple  # (row, col) of the flipped plaintext pixel
    bit: int  # 0 = least significant
    masks: np.ndarray  # (8, M, N) bool, masks[p] marks changed bits of plane p
    first_changed: int | None  # linear scan index of the first changed cipher byte
    permuted_position: int | None = None  # where the flipped pixel lands after permutation

    @property
    def counts(self) -> np.ndarray:
        return self.masks.reshape(8, -1).sum(axis=1)

    @property
    def changed_fraction(self) -> float:
        """Fraction of all cipher bits (all planes) that changed."""
        return float(self.masks.mean())

    def to_dict(self) -> dict:
        return {
            "position": list(self.position),
            "bit": self.bit,
            "shape": list(self.masks.shape[1:]),
            "plane_counts": [int(c) for c in self.counts],
            "changed_fraction": self.changed_fraction,
            "first_changed": self.first_changed,
            "permuted_position": self.permuted_position,
            "lowest_changed_plane": _lowest(self.counts),
        }


def _lowest(counts):
    nz = np.flatnonzero(counts)
    return int(nz[0]) if nz.size else None


def _diff(c1, c2, i, j, b, src):
    x = np.bitwise_xor(c1, c2)
    masks = np.stack([((x >> p) & 1).astype(bool) for p in range(8)])
    flat = np.flatnonzero(x.ravel())
    permuted = None
    if src is not None:
        permuted = int(np.flatnonzero(src == i * c1.shape[1] + j)[0])
    return DiffReport((i, j), b, masks, int(flat[0]) if flat.size else None, permuted)


def bit_flip_diff_with_keystreams(img, ks, s, i, j, b, src=None) -> DiffReport:
    img = as_image(img)
    M, N = img.shape
    if not (0 <= i < M and 0 <= j < N):
        raise DomainError(f"position ({i}, {j}) outside {M}x{N} image")
    if not 0 <= b < 8:
        raise DomainError(f"bit level must be in [0, 8), got {b}")
    if src is None:
        src = net_permutation(ks.phi1, ks.phi2, M, N)
    flipped = img.copy()
    flipped[i, j] ^= np.uint8(1 << b)
    c1 = encrypt_with_keystreams(img, ks, s, src)
    c2 = encrypt_with_keystreams(flipped, ks, s, src)
    return _diff(c1, c2, i, j, b, src)


def bit_flip_diff(key: SecretKey, img, i: int, j: int, b: int) -> DiffReport:
    """Encrypt ``img`` and ``img`` with bit ``b`` of pixel ``(i, j)`` flipped; report per-plane changes."""
    img = as_image(img)
    return bit_flip_diff_with_keystreams(img, key.keystreams(*img.shape), key.s, i, j, b)


@dataclass(frozen=True)
class PlaneRow:
    plane: int
    count: int
    fraction: float
    lowest: bool


def plane_change_summary(report: DiffReport) -> list:
    counts = report.counts
    total = report.masks[0].size
    lowest = _lowest(counts)
    return [PlaneRow(p, int(counts[p]), float(counts[p]) / total, p == lowest) for p in range(8)]
