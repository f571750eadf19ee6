import numpy as np
import pytest

from compmap.chaos import KeystreamSet
from compmap.cipher import PUBLISHED_KEY
from compmap.diffusion import bit_flip_diff, bit_flip_diff_with_keystreams, plane_change_summary
from compmap.errors import DomainError

from conftest import usable_key


def xor_only_streams(M, N):
    k = np.arange(M * N)
    z = np.zeros(M * N, np.uint8)
    return KeystreamSet(k // N, k % N, z, z)


class TestXorOnlyDouble:
    @pytest.mark.parametrize("b", range(8))
    def test_single_plane_tail(self, b, rng):
        M, N = 6, 5
        img = rng.integers(0, 256, (M, N), dtype=np.uint8)
        rep = bit_flip_diff_with_keystreams(img, xor_only_streams(M, N), 0, 2, 3, b)
        k0 = 2 * N + 3
        assert rep.permuted_position == k0 == rep.first_changed
        for p in range(8):
            expect = np.zeros(M * N, bool)
            if p == b:
                expect[k0:] = True
            assert np.array_equal(rep.masks[p].ravel(), expect)
        rows = plane_change_summary(rep)
        assert [r.plane for r in rows if r.count] == [b]
        assert [r.plane for r in rows if r.lowest] == [b]
        assert rows[b].count == M * N - k0


class TestContainment:
    def test_random_cases(self, rng):
        for _ in range(20):
            key = usable_key(rng, 16, 16)
            img = rng.integers(0, 256, (16, 16), dtype=np.uint8)
            i, j, b = (int(v) for v in (rng.integers(0, 16), rng.integers(0, 16), rng.integers(0, 8)))
            rep = bit_flip_diff(key, img, i, j, b)
            assert rep.counts[:b].sum() == 0
            assert rep.counts[b] > 0  # the flipped pixel itself always changes at level b
            assert rep.first_changed == rep.permuted_position
            assert rep.changed_fraction < 0.5

    def test_random_keystreams_prefix_immunity(self, rng):
        M, N = 9, 7
        n = M * N
        for _ in range(50):
            ks = KeystreamSet(rng.integers(0, M, n), rng.integers(0, N, n), rng.integers(0, 256, n).astype(np.uint8), rng.integers(0, 256, n).astype(np.uint8))
            img = rng.integers(0, 256, (M, N), dtype=np.uint8)
            b = int(rng.integers(0, 8))
            rep = bit_flip_diff_with_keystreams(img, ks, int(rng.integers(0, 256)), 4, 4, b)
            flat = rep.masks.reshape(8, -1)
            assert not flat[:, : rep.permuted_position].any()
            assert not flat[:b].any()


class TestReport:
    def test_to_dict(self, rng):
        img = rng.integers(0, 256, (8, 8), dtype=np.uint8)
        doc = bit_flip_diff(PUBLISHED_KEY, img, 1, 2, 3).to_dict()
        assert doc["position"] == [1, 2] and doc["bit"] == 3 and doc["shape"] == [8, 8]
        assert len(doc["plane_counts"]) == 8
        assert doc["lowest_changed_plane"] == 3

    def test_bad_arguments(self):
        img = np.zeros((4, 4), np.uint8)
        with pytest.raises(DomainError):
            bit_flip_diff(PUBLISHED_KEY, img, 4, 0, 0)
        with pytest.raises(DomainError):
            bit_flip_diff(PUBLISHED_KEY, img, 0, 0, 8)
