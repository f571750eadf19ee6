import json

import numpy as np
import pytest

from compmap.attack import (
    DEFAULT_PAIRS,
    EquivalentKey,
    FileExchangeOracle,
    InProcessOracle,
    MaskedAddConstraint,
    check_pair_set,
    decrypt_with_equivalent,
    encrypt_with_equivalent,
    masked_add,
    permutation_digits,
    recover_phi3,
    recover_phi4,
    run_differential_attack,
    solve_masked_add,
    start_file_exchange_server,
)
from compmap.cipher import PUBLISHED_KEY, confusion1, encrypt_with_keystreams, permute
from compmap.chaos import KeystreamSet
from compmap.errors import AmbiguousPosition, DimensionMismatch, OracleMismatch

from conftest import usable_key


def brute(constraints):
    return {x for x in range(256) if all(masked_add(c.a, c.b, x) == c.y for c in constraints)}


class TestMaskedAdd:
    def test_example(self):
        # (9 + 33) ^ (127 + 33) = 42 ^ 160 = 138
        assert masked_add(9, 127, 33) == 138
        sol = solve_masked_add([MaskedAddConstraint(9, 127, 138)])
        assert {33, 161} <= sol

    def test_equal_operands(self):
        assert solve_masked_add([MaskedAddConstraint(5, 5, 0)]) == set(range(256))
        assert solve_masked_add([MaskedAddConstraint(5, 5, 1)]) == set()

    def test_against_brute_force(self, rng):
        for _ in range(10_000):
            k = int(rng.integers(1, 4))
            ab = rng.integers(0, 256, (k, 2))
            x = int(rng.integers(0, 256))
            cons = [MaskedAddConstraint(int(a), int(b), masked_add(int(a), int(b), x)) for a, b in ab]
            if rng.random() < 0.2:
                c = cons[0]
                cons[0] = MaskedAddConstraint(c.a, c.b, int(rng.integers(0, 256)))
            assert solve_masked_add(cons) == brute(cons)

    def test_top_bit_always_free(self, rng):
        for _ in range(500):
            a, b, x = (int(v) for v in rng.integers(0, 256, 3))
            assert masked_add(a, b, x) == masked_add(a, b, x ^ 128)

    def test_empty_constraints(self):
        with pytest.raises(ValueError):
            solve_masked_add([])

    def test_default_pairs_pin_every_byte(self):
        check_pair_set(DEFAULT_PAIRS)

    def test_weak_pairs_rejected(self):
        with pytest.raises(AmbiguousPosition):
            check_pair_set([(9, 127)])


class TestPhaseIdentities:
    def test_xor_of_consecutive_chain_differences(self, rng):
        # D(k) ^ D(k-1) = masked_add(a, b, phi3(k)) for a constant pair
        n = 50
        phi3 = rng.integers(0, 256, n)
        s = int(rng.integers(0, 256))
        a, b = 9, 127
        d = confusion1(np.full(n, a), phi3, s) ^ confusion1(np.full(n, b), phi3, s)
        prev = np.concatenate([[0], d[:-1]])
        assert np.array_equal(d ^ prev, masked_add(a, b, phi3))

    def test_seed_absorption_exhaustive_length_three(self):
        # confusion1 with seed S equals confusion1 with seed 0, XORed with S everywhere
        rng = np.random.default_rng(3)
        for _ in range(64):
            phi3 = rng.integers(0, 256, 3)
            bufs = rng.integers(0, 256, (256, 3))
            for s in range(256):
                for buf in bufs[:4]:
                    assert np.array_equal(confusion1(buf, phi3, s), confusion1(buf, phi3, 0) ^ s)

    def test_phi4_abs_absorbs_seed(self, rng):
        n = 64
        phi3 = rng.integers(0, 256, n).astype(np.uint8)
        phi4 = rng.integers(0, 256, n).astype(np.uint8)
        s = 77
        c9 = confusion1(np.full(n, 9), phi3, s) ^ phi4
        assert np.array_equal(recover_phi4(c9, phi3 & 0x7F, 9), phi4 ^ s)

    @pytest.mark.parametrize("n,d", [(1, 0), (2, 1), (256, 1), (257, 2), (4096, 2), (65536, 2), (65537, 3), (512 * 512, 3)])
    def test_permutation_digits(self, n, d):
        assert permutation_digits(n) == d


class FakeOracle:
    """A fixed-keystream oracle for crafted streams."""

    def __init__(self, ks, s, shape):
        self.ks, self.s, self.shape, self.queries = ks, s, shape, 0

    def encrypt(self, img):
        self.queries += 1
        return encrypt_with_keystreams(img, self.ks, self.s)


class TestRecovery:
    def test_zero_phi3_and_seed(self, rng):
        M, N = 8, 8
        n = M * N
        ks = KeystreamSet(rng.integers(0, M, n), rng.integers(0, N, n), np.zeros(n, np.uint8), rng.integers(0, 256, n).astype(np.uint8))
        oracle = FakeOracle(ks, 0, (M, N))
        ek, tr = run_differential_attack(oracle)
        assert np.all(ek.phi3_rep == 0)
        assert np.array_equal(ek.phi4_abs, ks.phi4)
        assert tr.total == 6 + 1

    def test_phi3_matches_truth_modulo_top_bit(self, published_keystreams_64):
        oracle = InProcessOracle(PUBLISHED_KEY, 64, 64)
        phi3 = recover_phi3(oracle)
        assert np.array_equal(phi3, published_keystreams_64.phi3 & 0x7F)
        assert oracle.queries == 6

    def test_perm_equals_net_permutation(self, rng):
        key = usable_key(rng, 32, 32)
        oracle = InProcessOracle(key, 32, 32)
        ek, tr = run_differential_attack(oracle)
        _, ks, src = oracle.reveal()
        # src[t] is the source of position t; perm[s] is where source s lands
        assert np.array_equal(ek.perm[src], np.arange(32 * 32))
        assert np.array_equal(ek.phi4_abs, ks.phi4 ^ key.s)
        assert tr.total == 8 and oracle.queries == 8

    def test_random_keys_decrypt(self, rng):
        for M, N in [(1, 1), (1, 7), (5, 3), (16, 16), (20, 17)]:
            key = usable_key(rng, M, N)
            oracle = InProcessOracle(key, M, N)
            ek, tr = run_differential_attack(oracle)
            img = rng.integers(0, 256, (M, N), dtype=np.uint8)
            assert np.array_equal(decrypt_with_equivalent(oracle.encrypt(img), ek), img)
            assert np.array_equal(encrypt_with_equivalent(img, ek), oracle.encrypt(img))
            assert tr.total == 6 + permutation_digits(M * N)

    def test_transcript_layout(self):
        oracle = InProcessOracle(PUBLISHED_KEY, 64, 64)
        _, tr = run_differential_attack(oracle)
        doc = tr.to_dict()
        assert doc["total_chosen_plaintexts"] == doc["expected_total"] == 8
        assert [q["kind"] for q in doc["queries"]] == ["constant"] * 6 + ["digit"] * 2
        assert [q["value"] for q in doc["queries"][:6]] == [9, 127, 1, 52, 33, 65]
        assert set(doc["phases"].values()) == {"ok"}

    def test_wrong_dimensions(self):
        oracle = InProcessOracle(PUBLISHED_KEY, 8, 8)
        with pytest.raises(OracleMismatch):
            run_differential_attack(oracle, shape=(8, 9))
        with pytest.raises(OracleMismatch):
            oracle.encrypt(np.zeros((4, 4), np.uint8))

    def test_equivalent_key_shape_checked(self):
        oracle = InProcessOracle(PUBLISHED_KEY, 8, 8)
        ek, _ = run_differential_attack(oracle)
        with pytest.raises(DimensionMismatch):
            decrypt_with_equivalent(np.zeros((4, 16), np.uint8), ek)


class NoisyOracle:
    def __init__(self, shape, seed):
        self.shape = shape
        self.rng = np.random.default_rng(seed)

    def encrypt(self, img):
        return self.rng.integers(0, 256, self.shape, dtype=np.uint8)


class TestInconsistentOracles:
    def test_random_answers(self):
        with pytest.raises((OracleMismatch, AmbiguousPosition)) as info:
            run_differential_attack(NoisyOracle((8, 8), 0))
        assert info.value.transcript.total >= 1

    def test_key_changes_between_queries(self, rng):
        keys = [usable_key(rng, 8, 8) for _ in range(2)]
        oracles = [InProcessOracle(k, 8, 8) for k in keys]

        class Flaky:
            shape = (8, 8)
            calls = 0

            def encrypt(self, img):
                Flaky.calls += 1
                return oracles[Flaky.calls % 2].encrypt(img)

        with pytest.raises((OracleMismatch, AmbiguousPosition)) as info:
            run_differential_attack(Flaky())
        assert any(v.startswith("failed") for v in info.value.transcript.phases.values())

    def test_digit_queries_tampered(self):
        inner = InProcessOracle(PUBLISHED_KEY, 8, 8)

        class Tamper:
            shape = (8, 8)
            n = 0

            def encrypt(self, img):
                Tamper.n += 1
                c = inner.encrypt(img)
                if Tamper.n == 7:
                    c = permute(c, np.zeros(64, int), np.arange(64) % 8)
                return c

        with pytest.raises(Exception) as info:
            run_differential_attack(Tamper())
        assert info.value.transcript.phases.get("confusion1") == "ok"


class TestPersistence:
    def test_save_load_roundtrip(self, tmp_path):
        oracle = InProcessOracle(PUBLISHED_KEY, 16, 16)
        ek, _ = run_differential_attack(oracle)
        ek.save(tmp_path / "ek.json")
        doc = json.loads((tmp_path / "ek.json").read_text())
        assert doc["perm_path"] == "ek.perm.bin"
        assert (tmp_path / "ek.perm.bin").stat().st_size == 4 * 256
        back = EquivalentKey.load(tmp_path / "ek.json")
        assert back.shape == (16, 16)
        for name in ("phi3_rep", "phi4_abs", "perm"):
            assert np.array_equal(getattr(back, name), getattr(ek, name))


class TestFileExchange:
    def test_attack_through_directories(self, tmp_path):
        M, N = 12, 10
        out, inbox = tmp_path / "out", tmp_path / "in"
        server = start_file_exchange_server(PUBLISHED_KEY, out, inbox, 6 + permutation_digits(M * N), timeout=30, poll=0.01)
        oracle = FileExchangeOracle(out, inbox, M, N, timeout=30, poll=0.01)
        ek, tr = run_differential_attack(oracle)
        server.join(5)
        assert not server.is_alive()
        assert sorted(p.name for p in out.iterdir()) == [f"query_{i:03d}.pgm" for i in range(7)]
        truth = InProcessOracle(PUBLISHED_KEY, M, N)
        img = np.arange(M * N, dtype=np.uint8).reshape(M, N)
        assert np.array_equal(decrypt_with_equivalent(truth.encrypt(img), ek), img)

    def test_timeout(self, tmp_path):
        oracle = FileExchangeOracle(tmp_path / "o", tmp_path / "i", 2, 2, timeout=0.1, poll=0.02)
        with pytest.raises(TimeoutError):
            oracle.encrypt(np.zeros((2, 2), np.uint8))


@pytest.mark.slow
def test_published_key_512(published_oracle_512):
    before = published_oracle_512.queries
    ek, tr = run_differential_attack(published_oracle_512)
    assert published_oracle_512.queries - before == 9 == tr.total
    _, ks, src = published_oracle_512.reveal()
    assert np.array_equal(ek.perm[src], np.arange(512 * 512))
    assert np.array_equal(ek.phi3_rep, ks.phi3 & 0x7F)
