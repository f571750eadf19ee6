"""Nine NIST SP 800-22 statistical tests and a batch runner for map keystreams.

The test mathematics follow SP 800-22 rev. 1a.  Pinned variants: Rank on
32x32 matrices, DFT peak threshold ``sqrt(ln(1/0.05) n)``, Serial reports
both the first and second differences of psi^2, Cumulative Sums runs
forward only.

Each test function takes a 1-D array of 0/1 values and returns a
:class:`TestResult`; :func:`run_single_test` adds minimum-length checks and
default parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import erfc, gammaincc
from scipy.stats import norm

from .chaos import orbit_keystream
from .errors import GeneratorExhausted, KeyRejected, NonFiniteState, SequenceTooShort

__all__ = [
    "TestResult",
    "SuiteReport",
    "TEST_NAMES",
    "DEFAULT_PARAMS",
    "bytes_to_bits",
    "frequency",
    "block_frequency",
    "cumulative_sums_forward",
    "runs",
    "rank",
    "non_overlapping_template",
    "serial",
    "approximate_entropy",
    "spectral",
    "gf2_rank",
    "run_single_test",
    "run_all_tests",
    "run_suite",
    "format_table",
]

ALPHA = 0.01


@dataclass
class TestResult:
    name: str
    params: dict
    p_values: tuple
    alpha: float = ALPHA

    @property
    def passed(self) -> bool:
        return all(p >= self.alpha for p in self.p_values)

    @property
    def p_value(self) -> float:
        return min(self.p_values)


def bytes_to_bits(data) -> np.ndarray:
    """MSB-first expansion, 8 bits per byte."""
    a = np.asarray(bytearray(data) if isinstance(data, (bytes, bytearray)) else data, dtype=np.uint8).ravel()
    if a.size == 0:
        raise ValueError("empty input")
    return np.unpackbits(a)


def _bits(bits) -> np.ndarray:
    return np.asarray(bits, dtype=np.int64).ravel()


def _clip(p):
    return float(min(max(p, 0.0), 1.0))


def frequency(bits) -> TestResult:
    e = _bits(bits)
    n = e.size
    s_obs = abs(2 * int(e.sum()) - n) / math.sqrt(n)
    return TestResult("Frequency", {}, (_clip(erfc(s_obs / math.sqrt(2))),))


def block_frequency(bits, m: int = 100) -> TestResult:
    e = _bits(bits)
    N = e.size // m
    pi = e[: N * m].reshape(N, m).mean(axis=1)
    chi2 = 4.0 * m * float(np.sum((pi - 0.5) ** 2))
    return TestResult("Block Frequency", {"m": m}, (_clip(gammaincc(N / 2.0, chi2 / 2.0)),))


def _tdiv(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b > 0) else -q


def cumulative_sums_forward(bits) -> TestResult:
    e = _bits(bits)
    n = e.size
    z = int(np.max(np.abs(np.cumsum(2 * e - 1))))
    if z == 0:
        # the walk never leaves zero only for n = 0; guard the division anyway
        return TestResult("Cumulative Sums-Forward", {}, (1.0,))
    sq = math.sqrt(n)
    # summation bounds use integer division truncating toward zero, as in the NIST reference code
    hi = _tdiv(_tdiv(n, z) - 1, 4)
    total = 1.0
    for k in range(_tdiv(_tdiv(-n, z) + 1, 4), hi + 1):
        total -= norm.cdf((4 * k + 1) * z / sq) - norm.cdf((4 * k - 1) * z / sq)
    for k in range(_tdiv(_tdiv(-n, z) - 3, 4), hi + 1):
        total += norm.cdf((4 * k + 3) * z / sq) - norm.cdf((4 * k + 1) * z / sq)
    return TestResult("Cumulative Sums-Forward", {}, (_clip(total),))


def runs(bits) -> TestResult:
    e = _bits(bits)
    n = e.size
    pi = e.mean()
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        # frequency prerequisite failed
        return TestResult("Runs", {}, (0.0,))
    v = 1 + int(np.count_nonzero(e[1:] != e[:-1]))
    p = erfc(abs(v - 2 * n * pi * (1 - pi)) / (2 * math.sqrt(2 * n) * pi * (1 - pi)))
    return TestResult("Runs", {}, (_clip(p),))


def gf2_rank(rows: list, ncols: int) -> int:
    """Rank over GF(2) of a matrix given as row bitmasks."""
    rows = list(rows)
    r = 0
    for col in reversed(range(ncols)):
        bit = 1 << col
        pivot = next((i for i in range(r, len(rows)) if rows[i] & bit), None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        for i in range(len(rows)):
            if i != r and rows[i] & bit:
                rows[i] ^= rows[r]
        r += 1
    return r


def _rank_probabilities(m: int, q: int):
    def p_rank(r):
        prod = 1.0
        for i in range(r):
            prod *= (1 - 2.0 ** (i - q)) * (1 - 2.0 ** (i - m)) / (1 - 2.0 ** (i - r))
        return 2.0 ** (r * (q + m - r) - m * q) * prod

    full = p_rank(m)
    minus1 = p_rank(m - 1)
    return full, minus1, 1.0 - full - minus1


def rank(bits, m: int = 32, q: int = 32) -> TestResult:
    e = _bits(bits)
    N = e.size // (m * q)
    weights = 1 << np.arange(q - 1, -1, -1, dtype=np.uint64)
    rowvals = (e[: N * m * q].reshape(N * m, q).astype(np.uint64) * weights).sum(axis=1)
    counts = [0, 0, 0]
    for i in range(N):
        r = gf2_rank(rowvals[i * m : (i + 1) * m].tolist(), q)
        counts[0 if r == min(m, q) else 1 if r == min(m, q) - 1 else 2] += 1
    probs = _rank_probabilities(m, q)
    chi2 = sum((c - N * p) ** 2 / (N * p) for c, p in zip(counts, probs))
    return TestResult("Rank", {"m": m, "q": q, "N": N}, (_clip(math.exp(-chi2 / 2.0)),))


def _windows(e, m, wrap):
    """Integer value of every length-m window (overlapping)."""
    ext = np.concatenate([e, e[: m - 1]]) if wrap else e
    count = e.size if wrap else e.size - m + 1
    val = np.zeros(count, dtype=np.int64)
    for j in range(m):
        val = (val << 1) | ext[j : j + count]
    return val


def non_overlapping_template(bits, template: str = "110001000", n_blocks: int = 8) -> TestResult:
    e = _bits(bits)
    m = len(template)
    B = int(template, 2)
    M = e.size // n_blocks
    W = []
    for blk in e[: n_blocks * M].reshape(n_blocks, M):
        hits = _windows(blk, m, wrap=False) == B
        # count non-overlapping matches: after a hit, skip m-1 positions
        count, j = 0, 0
        idx = np.flatnonzero(hits)
        for i in idx:
            if i >= j:
                count += 1
                j = i + m
        W.append(count)
    mu = (M - m + 1) / 2.0**m
    var = M * (1.0 / 2.0**m - (2 * m - 1) / 2.0 ** (2 * m))
    chi2 = sum((w - mu) ** 2 for w in W) / var
    return TestResult(
        "Non-overlapping Template", {"m": m, "B": template, "N": n_blocks}, (_clip(gammaincc(n_blocks / 2.0, chi2 / 2.0)),)
    )


def _psi2(e, m):
    if m <= 0:
        return 0.0
    n = e.size
    counts = np.bincount(_windows(e, m, wrap=True), minlength=1 << m)
    return (2.0**m / n) * float(np.sum(counts.astype(np.float64) ** 2)) - n


def serial(bits, m: int = 16) -> TestResult:
    e = _bits(bits)
    p0, p1, p2 = _psi2(e, m), _psi2(e, m - 1), _psi2(e, m - 2)
    d1 = p0 - p1
    d2 = p0 - 2 * p1 + p2
    pv1 = gammaincc(2.0 ** (m - 2), d1 / 2.0)
    pv2 = gammaincc(2.0 ** (m - 3), d2 / 2.0)
    return TestResult("Serial", {"m": m}, (_clip(pv1), _clip(pv2)))


def _phi(e, m):
    n = e.size
    counts = np.bincount(_windows(e, m, wrap=True), minlength=1 << m).astype(np.float64)
    c = counts[counts > 0] / n
    return float(np.sum(c * np.log(c)))


def approximate_entropy(bits, m: int = 10) -> TestResult:
    e = _bits(bits)
    n = e.size
    apen = _phi(e, m) - _phi(e, m + 1)
    chi2 = 2.0 * n * (math.log(2) - apen)
    return TestResult("Approximate Entropy", {"m": m}, (_clip(gammaincc(2.0 ** (m - 1), chi2 / 2.0)),))


def spectral(bits) -> TestResult:
    e = _bits(bits)
    n = e.size
    x = 2.0 * e - 1.0
    mod = np.abs(np.fft.fft(x))[: n // 2]
    T = math.sqrt(math.log(1 / 0.05) * n)
    n0 = 0.95 * n / 2.0
    n1 = int(np.count_nonzero(mod < T))
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4.0)
    return TestResult("FFT", {"threshold": T}, (_clip(erfc(abs(d) / math.sqrt(2))),))


# name -> (function, default params, minimum n)
_TESTS: dict[str, tuple[Callable, dict, Callable]] = {
    "Frequency": (frequency, {}, lambda p: 100),
    "Block Frequency": (block_frequency, {"m": 100}, lambda p: max(100, p["m"])),
    "Cumulative Sums-Forward": (cumulative_sums_forward, {}, lambda p: 100),
    "Runs": (runs, {}, lambda p: 100),
    "Rank": (rank, {"m": 32, "q": 32}, lambda p: 38 * p["m"] * p["q"]),
    "Non-overlapping Template": (
        non_overlapping_template,
        {"template": "110001000", "n_blocks": 8},
        lambda p: p["n_blocks"] * len(p["template"]),
    ),
    "Serial": (serial, {"m": 16}, lambda p: 2 ** p["m"]),
    "Approximate Entropy": (approximate_entropy, {"m": 10}, lambda p: 2 ** (p["m"] + 1)),
    "FFT": (spectral, {}, lambda p: 1000),
}

TEST_NAMES = tuple(_TESTS)
DEFAULT_PARAMS = {name: dict(spec[1]) for name, spec in _TESTS.items()}


def run_single_test(name: str, bits, params: dict | None = None, alpha: float = ALPHA) -> TestResult:
    try:
        fn, defaults, min_n = _TESTS[name]
    except KeyError:
        raise ValueError(f"unknown test {name!r}; expected one of {TEST_NAMES}") from None
    p = {**defaults, **(params or {})}
    e = _bits(bits)
    need = min_n(p)
    if e.size < need:
        raise SequenceTooShort(f"{name} needs n >= {need}, got {e.size}", test=name, required=need)
    res = fn(e, **p)
    res.alpha = alpha
    return res


def run_all_tests(bits, alpha: float = ALPHA) -> list:
    return [run_single_test(name, bits, alpha=alpha) for name in TEST_NAMES]


# --------------------------------------------------------------------------
# batch runner


@dataclass
class SuiteReport:
    generator: str
    batch: int
    sample_bytes: int
    alpha: float
    counts: dict
    rejected: int = 0
    seed: int | None = None
    p_values: dict = field(default_factory=dict)  # test -> list of min p-values per sample

    def to_dict(self) -> dict:
        return {
            "generator": self.generator,
            "batch": self.batch,
            "sample_bytes": self.sample_bytes,
            "alpha": self.alpha,
            "seed": self.seed,
            "rejected_keys": self.rejected,
            "passed": dict(self.counts),
            "p_values": {k: list(v) for k, v in self.p_values.items()},
        }


def _row_label(name):
    params = DEFAULT_PARAMS[name]
    if name == "Non-overlapping Template":
        return f"{name} (m={len(params['template'])}, B={params['template']})"
    if name == "Rank":
        return f"{name} ({params['m']}x{params['q']})"
    if "m" in params:
        return f"{name} (m={params['m']})"
    return name


def format_table(reports) -> str:
    """Plain-text table with one pass-count column per report."""
    labels = [_row_label(n) for n in TEST_NAMES]
    width = max(len(lab) for lab in labels) + 2
    lines = [
        f"{'Name of Test':<{width}}" + "".join(f"{r.generator:>10}" for r in reports),
        "-" * (width + 10 * len(reports)),
    ]
    for name, label in zip(TEST_NAMES, labels):
        lines.append(f"{label:<{width}}" + "".join(f"{r.counts[name]:>10d}" for r in reports))
    batch = ", ".join(f"{r.generator}: {r.batch} sequences" for r in reports)
    lines.append(f"(passed at alpha={reports[0].alpha}; {batch})")
    return "\n".join(lines) + "\n"


def _map_sample(generator, key, n_bytes):
    if generator == "f":
        x0, a1, a2 = key.f3
        return orbit_keystream("f", x0, (a1, a2), n_bytes, 256)
    y0, a3, a4 = key.g
    return orbit_keystream("g", y0, (a3, a4), n_bytes, 256)


def run_suite(
    generator: str = "f",
    batch: int = 100,
    sample_bytes: int = 32768,
    alpha: float = ALPHA,
    seed: int = 0,
    key_sampler=None,
    external=None,
) -> SuiteReport:
    """Run the nine tests on ``batch`` samples.

    ``generator``: ``"f"`` tests phi4 (driven by map f), ``"g"`` tests phi3
    (map g), ``"external"`` draws bytes from ``external(rng, n_bytes)``.
    ``key_sampler(rng)`` returns a :class:`~compmap.cipher.SecretKey`; keys
    whose orbit blows up are resampled, at most ``10 * batch`` times.
    """
    from .cipher import sample_key

    if generator not in ("f", "g", "external"):
        raise ValueError(f"unknown generator {generator!r}")
    key_sampler = key_sampler or sample_key
    rng = np.random.default_rng(seed)
    counts = {name: 0 for name in TEST_NAMES}
    pvals = {name: [] for name in TEST_NAMES}
    rejected = 0
    for _ in range(batch):
        if generator == "external":
            if external is None:
                raise ValueError("generator='external' needs an external byte source")
            data = np.asarray(external(rng, sample_bytes), dtype=np.uint8)
        else:
            while True:
                key = key_sampler(rng)
                try:
                    data = _map_sample(generator, key, sample_bytes)
                    break
                except (NonFiniteState, KeyRejected):
                    rejected += 1
                    if rejected > 10 * batch:
                        raise GeneratorExhausted(f"{rejected} keys rejected for a batch of {batch}", rejected=rejected)
        bits = bytes_to_bits(data.astype(np.uint8))
        for res in run_all_tests(bits, alpha):
            counts[res.name] += int(res.passed)
            pvals[res.name].append(res.p_value)
    return SuiteReport(generator, batch, sample_bytes, alpha, counts, rejected, seed, pvals)
