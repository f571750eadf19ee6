"""Composition maps, orbit iteration, keystream quantization and map diagnostics.

Two one-dimensional maps drive the cipher::

    f(x) = tan^2(5 atan(tan(3 atan(sqrt x)) / a1)) / a2^2          x >= 0
    g(y) = cot^2(8 atan(a3 tan(4 atan(1 / sqrt y)))) / a4^2        y > 0

The logistic map ``r x (1 - x)`` is carried along only to calibrate the
Lyapunov estimator against its known exponent.

Singularities are detected, never clamped.  Besides a non-finite result, an
evaluation is rejected when the argument of the outer tangent/cotangent lies
within a few ulps of a pole: in that band the rounding noise of the inner
terms is as large as the distance to the pole, so the returned value would be
an artefact of the math library rather than of the map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DomainError, NonFiniteState, OrbitEscaped

__all__ = [
    "FMapParams",
    "GMapParams",
    "LogisticParams",
    "Orbit",
    "KeystreamSet",
    "GraphPoint",
    "SweepCell",
    "SweepResult",
    "QUANT_SCALE",
    "eval_f",
    "eval_g",
    "eval_logistic",
    "evaluate",
    "iterate_map",
    "quantize",
    "quantize_array",
    "orbit_keystream",
    "generate_keystreams",
    "lyapunov_exponent",
    "lyapunov_sweep",
    "param_grid",
    "map_graph",
    "orbit_collapse_fraction",
]

QUANT_SCALE = 1e14

# Width of the rejection band around a pole, in units of machine epsilon
# relative to the magnitude of the trigonometric argument.
POLE_ULPS = 16
_POLE_TOL = POLE_ULPS * np.finfo(float).eps

_HALF_PI = 0.5 * math.pi


@dataclass(frozen=True)
class FMapParams:
    alpha1: float
    alpha2: float

    def __post_init__(self):
        if self.alpha1 == 0 or self.alpha2 == 0:
            raise DomainError("alpha1 and alpha2 must be nonzero", alpha1=self.alpha1, alpha2=self.alpha2)


@dataclass(frozen=True)
class GMapParams:
    alpha3: float
    alpha4: float

    def __post_init__(self):
        if self.alpha3 == 0 or self.alpha4 == 0:
            raise DomainError("alpha3 and alpha4 must be nonzero", alpha3=self.alpha3, alpha4=self.alpha4)


@dataclass(frozen=True)
class LogisticParams:
    r: float


@dataclass(frozen=True)
class Orbit:
    """States ``psi(1..n)`` of an orbit started at ``origin`` (``origin`` itself excluded)."""

    states: np.ndarray
    origin: float

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True)
class KeystreamSet:
    phi1: np.ndarray
    phi2: np.ndarray
    phi3: np.ndarray
    phi4: np.ndarray

    def __len__(self):
        return len(self.phi1)


# --------------------------------------------------------------------------
# scalar maps


def _check_finite(x):
    if not math.isfinite(x):
        raise NonFiniteState(f"non-finite input {x!r}")


def eval_f(x: float, p: FMapParams) -> float:
    _check_finite(x)
    if x < 0:
        raise DomainError(f"f is defined for x >= 0, got {x!r}", x=x)
    u = 5.0 * math.atan(math.tan(3.0 * math.atan(math.sqrt(x))) / p.alpha1)
    # tan poles at u = (j + 1/2) pi
    j = math.floor(u / math.pi)
    if abs(u - (j + 0.5) * math.pi) <= _POLE_TOL * abs(u):
        raise NonFiniteState(f"f: tangent pole at x={x!r}", x=x)
    t = math.tan(u)
    y = (t * t) / (p.alpha2 * p.alpha2)
    if not math.isfinite(y):
        raise NonFiniteState(f"f: non-finite value at x={x!r}", x=x)
    return y


def eval_g(y: float, p: GMapParams) -> float:
    _check_finite(y)
    if y <= 0:
        raise DomainError(f"g is defined for y > 0, got {y!r}", y=y)
    v = 4.0 * math.atan(1.0 / math.sqrt(y))
    t = math.tan(v)
    # tan(v) vanishes at v = pi (y = 1), which is a cot pole at u = 0
    if abs(t) <= _POLE_TOL * v:
        raise NonFiniteState(f"g: cotangent pole at y={y!r}", y=y)
    u = 8.0 * math.atan(p.alpha3 * t)
    j = round(u / math.pi)
    if j != 0 and abs(u - j * math.pi) <= _POLE_TOL * abs(u):
        raise NonFiniteState(f"g: cotangent pole at y={y!r}", y=y)
    s = math.sin(u)
    if s == 0.0:
        raise NonFiniteState(f"g: cotangent pole at y={y!r}", y=y)
    c = math.cos(u) / s
    out = (c * c) / (p.alpha4 * p.alpha4)
    if not math.isfinite(out):
        raise NonFiniteState(f"g: non-finite value at y={y!r}", y=y)
    return out


def eval_logistic(x: float, p: LogisticParams) -> float:
    _check_finite(x)
    out = p.r * x * (1.0 - x)
    if not math.isfinite(out):
        raise NonFiniteState(f"logistic: non-finite value at x={x!r}", x=x)
    return out


class _MapInfo(NamedTuple):
    scalar: Callable
    params: type
    lower: float  # domain lower bound
    open_lower: bool


_MAPS = {
    "f": _MapInfo(eval_f, FMapParams, 0.0, False),
    "g": _MapInfo(eval_g, GMapParams, 0.0, True),
    "logistic": _MapInfo(eval_logistic, LogisticParams, -math.inf, True),
}


def _map_info(name) -> _MapInfo:
    try:
        return _MAPS[name]
    except KeyError:
        raise ValueError(f"unknown map {name!r}; expected one of {sorted(_MAPS)}") from None


def _coerce_params(name, params):
    info = _map_info(name)
    if isinstance(params, info.params):
        return params
    if isinstance(params, dict):
        return info.params(**params)
    return info.params(*params)


def evaluate(map: str, params, x: float) -> float:
    """Evaluate the named map (``"f"``, ``"g"`` or ``"logistic"``) at ``x``."""
    params = _coerce_params(map, params)
    return _map_info(map).scalar(x, params)


def _in_domain(info: _MapInfo, x: float) -> bool:
    return x > info.lower if info.open_lower else x >= info.lower


def _f_orbit(x, p, out):
    """Unchecked f iteration; stops before the first step that needs the full checks.

    Same floating-point operations as :func:`eval_f`, so the states agree bit
    for bit.  Returns ``(steps done, current state)``.
    """
    sqrt, atan, tan, floor, pi = math.sqrt, math.atan, math.tan, math.floor, math.pi
    a1, a2sq, tol, inf = p.alpha1, p.alpha2 * p.alpha2, _POLE_TOL, math.inf
    for k in range(len(out)):
        if not 0.0 <= x < inf:
            return k, x
        u = 5.0 * atan(tan(3.0 * atan(sqrt(x))) / a1)
        if abs(u - (floor(u / pi) + 0.5) * pi) <= tol * abs(u):
            return k, x
        t = tan(u)
        x_next = (t * t) / a2sq
        if x_next == inf:
            return k, x
        out[k] = x = x_next
    return len(out), x


def _g_orbit(y, p, out):
    """Unchecked g iteration, the counterpart of :func:`_f_orbit`."""
    sqrt, atan, tan, sin, cos, pi = math.sqrt, math.atan, math.tan, math.sin, math.cos, math.pi
    a3, a4sq, tol, inf = p.alpha3, p.alpha4 * p.alpha4, _POLE_TOL, math.inf
    for k in range(len(out)):
        if not 0.0 < y < inf:
            return k, y
        v = 4.0 * atan(1.0 / sqrt(y))
        t = tan(v)
        if abs(t) <= tol * v:
            return k, y
        u = 8.0 * atan(a3 * t)
        j = round(u / pi)
        if j != 0 and abs(u - j * pi) <= tol * abs(u):
            return k, y
        s = sin(u)
        if s == 0.0:
            return k, y
        c = cos(u) / s
        y_next = (c * c) / a4sq
        if not y_next < inf:
            return k, y
        out[k] = y = y_next
    return len(out), y


_FAST_ORBITS = {"f": _f_orbit, "g": _g_orbit}


def iterate_map(map: str, params, x0: float, n: int) -> Orbit:
    """Iterate ``n`` times from ``x0``; ``states[k-1]`` is the k-th iterate.

    Any domain violation or singularity aborts with :class:`NonFiniteState`
    whose ``index`` is the 1-based number of the failing iteration.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    params = _coerce_params(map, params)
    step = _map_info(map).scalar
    out = [0.0] * n
    x = x0
    start = 0
    fast = _FAST_ORBITS.get(map)
    if fast is not None and math.isfinite(x0):
        start, x = fast(x0, params, out)
    for k in range(start, n):
        try:
            x = step(x, params)
        except (NonFiniteState, DomainError) as exc:
            raise NonFiniteState(f"{map}-orbit from {x0!r} failed at iteration {k + 1}: {exc}", index=k + 1) from exc
        out[k] = x
    return Orbit(np.array(out, dtype=np.float64), float(x0))


# --------------------------------------------------------------------------
# quantization


def quantize(psi: float, modulus: int) -> int:
    """``floor(psi * 1e14) mod modulus``, exact for every representable product."""
    if modulus < 1:
        raise ValueError("modulus must be a positive integer")
    scaled = psi * QUANT_SCALE
    if not math.isfinite(scaled):
        raise NonFiniteState(f"cannot quantize {psi!r}")
    # floor and fmod are both exact on doubles
    return int(math.fmod(math.floor(scaled), modulus))


def quantize_array(psi, modulus: int) -> np.ndarray:
    scaled = np.asarray(psi, dtype=np.float64) * QUANT_SCALE
    if not np.all(np.isfinite(scaled)):
        raise NonFiniteState("cannot quantize non-finite states")
    return np.fmod(np.floor(scaled), modulus).astype(np.int64)


def orbit_keystream(map: str, x0: float, params, n: int, modulus: int) -> np.ndarray:
    """Quantized orbit of length ``n``; the building block of every keystream."""
    return quantize_array(iterate_map(map, params, x0, n).states, modulus)


def generate_keystreams(key, M: int, N: int) -> KeystreamSet:
    """Derive ``phi1..phi4`` (each of length ``M*N``) from a secret key.

    ``key`` needs attributes ``f1``, ``f2``, ``f3`` holding ``(x0, alpha1, alpha2)``
    and ``g`` holding ``(y0, alpha3, alpha4)``.
    """
    from .errors import KeyRejected

    if M < 1 or N < 1:
        raise ValueError("M and N must be >= 1")
    n = M * N
    plan = [("phi1", "f", key.f1, M), ("phi2", "f", key.f2, N), ("phi3", "g", key.g, 256), ("phi4", "f", key.f3, 256)]
    streams = {}
    for label, name, (x0, a, b), modulus in plan:
        try:
            streams[label] = orbit_keystream(name, x0, (a, b), n, modulus)
        except NonFiniteState as exc:
            raise KeyRejected(f"{label} orbit unusable: {exc}", stream=label, index=exc.index) from exc
    return KeystreamSet(**streams)


# --------------------------------------------------------------------------
# Lyapunov exponents

_H_SCALE = 2.0**-20


def _derivative(info: _MapInfo, params, x: float) -> float:
    h = max(abs(x), 1.0) * _H_SCALE
    F = info.scalar
    if _in_domain(info, x - h):
        return (F(x + h, params) - F(x - h, params)) / (2.0 * h)
    # one-sided at the domain edge
    return (F(x + h, params) - F(x, params)) / h


def lyapunov_exponent(map: str, params, x0: float, n_transient: int = 1000, n_sample: int = 5000) -> float:
    """Mean of ``ln|map'(x_k)|`` over ``n_sample`` iterates following ``n_transient`` discarded ones."""
    if n_sample < 100:
        raise ValueError("n_sample must be >= 100")
    params = _coerce_params(map, params)
    info = _map_info(map)
    F = info.scalar
    x = x0
    k = 0
    try:
        for k in range(n_transient):
            x = F(x, params)
        total = 0.0
        for k in range(n_transient, n_transient + n_sample):
            d = abs(_derivative(info, params, x))
            if d == 0.0 or not math.isfinite(d):
                raise OrbitEscaped(f"derivative {d!r} at iterate {k}", index=k)
            total += math.log(d)
            x = F(x, params)
    except (NonFiniteState, DomainError) as exc:
        raise OrbitEscaped(f"{map}-orbit from {x0!r} escaped at iterate {k}: {exc}", index=k) from exc
    return total / n_sample


# Vectorized evaluators for sweeps: NaN marks an escaped lane.


def _f_vec(x, a1, a2):
    with np.errstate(all="ignore"):
        bad = ~np.isfinite(x) | (x < 0)
        u = 5.0 * np.arctan(np.tan(3.0 * np.arctan(np.sqrt(np.where(bad, 0.0, x)))) / a1)
        j = np.floor(u / np.pi)
        bad |= np.abs(u - (j + 0.5) * np.pi) <= _POLE_TOL * np.abs(u)
        t = np.tan(u)
        y = t * t / (a2 * a2)
        bad |= ~np.isfinite(y)
    return np.where(bad, np.nan, y)


def _g_vec(y, a3, a4):
    with np.errstate(all="ignore"):
        bad = ~np.isfinite(y) | (y <= 0)
        v = 4.0 * np.arctan(1.0 / np.sqrt(np.where(bad, 1.0, y)))
        t = np.tan(v)
        bad |= np.abs(t) <= _POLE_TOL * v
        u = 8.0 * np.arctan(a3 * t)
        j = np.round(u / np.pi)
        bad |= (j != 0) & (np.abs(u - j * np.pi) <= _POLE_TOL * np.abs(u))
        s = np.sin(u)
        bad |= s == 0
        c = np.cos(u) / s
        out = c * c / (a4 * a4)
        bad |= ~np.isfinite(out)
    return np.where(bad, np.nan, out)


def _logistic_vec(x, r):
    with np.errstate(all="ignore"):
        out = r * x * (1.0 - x)
    return np.where(np.isfinite(out), out, np.nan)


_VEC = {"f": _f_vec, "g": _g_vec, "logistic": _logistic_vec}


class SweepCell(NamedTuple):
    params: tuple
    exponent: float  # NaN when escaped
    escaped: bool


@dataclass
class SweepResult:
    map: str
    cells: list
    param_names: tuple
    n_transient: int
    n_sample: int
    x0: float
    extra: dict = field(default_factory=dict)

    @property
    def fraction_positive(self) -> float:
        if not self.cells:
            return 0.0
        return sum(1 for c in self.cells if not c.escaped and c.exponent > 0) / len(self.cells)

    @property
    def fraction_escaped(self) -> float:
        return sum(1 for c in self.cells if c.escaped) / len(self.cells) if self.cells else 0.0

    def to_csv(self) -> str:
        lines = [",".join(self.param_names + ("lambda", "escaped"))]
        for c in self.cells:
            lam = "nan" if c.escaped else repr(float(c.exponent))
            lines.append(",".join([*(repr(float(v)) for v in c.params), lam, str(int(c.escaped))]))
        return "\n".join(lines) + "\n"


def param_grid(range1: tuple, range2: tuple, resolution) -> list:
    """Row-major list of ``(p1, p2)`` pairs spanning two closed ranges."""
    if isinstance(resolution, int):
        resolution = (resolution, resolution)
    ax1 = np.linspace(range1[0], range1[1], resolution[0])
    ax2 = np.linspace(range2[0], range2[1], resolution[1])
    return [(float(a), float(b)) for a in ax1 for b in ax2]


def lyapunov_sweep(map: str, grid: Sequence, x0: float, n_transient: int = 1000, n_sample: int = 5000) -> SweepResult:
    """Lyapunov exponent for every parameter tuple in ``grid``.

    All cells are iterated together as numpy lanes; a lane whose orbit hits a
    singularity, leaves the domain or meets a zero derivative is flagged as
    escaped and kept in the output.
    """
    info = _map_info(map)
    names = tuple(f.name for f in info.params.__dataclass_fields__.values())
    cells = [tuple(float(v) for v in (_astuple(c) if hasattr(c, "__dataclass_fields__") else np.atleast_1d(c))) for c in grid]
    if not cells:
        raise ValueError("grid must be non-empty")
    for c in cells:
        _coerce_params(map, c)
    P = np.array(cells, dtype=np.float64).T
    F = _VEC[map]
    x = np.full(P.shape[1], float(x0))
    for _ in range(n_transient):
        x = F(x, *P)
    total = np.zeros_like(x)
    escaped = ~np.isfinite(x)
    lower = info.lower
    with np.errstate(all="ignore"):
        for _ in range(n_sample):
            h = np.maximum(np.abs(x), 1.0) * _H_SCALE
            central = (x - h > lower) if info.open_lower else (x - h >= lower)
            up = F(x + h, *P)
            down = np.where(central, F(np.where(central, x - h, x), *P), np.nan)
            here = F(x, *P)
            d = np.where(central, (up - down) / (2.0 * h), (up - here) / h)
            d = np.abs(d)
            escaped |= ~np.isfinite(d) | (d == 0)
            total += np.where(escaped, 0.0, np.log(np.where(escaped, 1.0, d)))
            x = here
            escaped |= ~np.isfinite(x)
    lam = total / n_sample
    out = [
        SweepCell(c, float("nan") if esc else float(v), bool(esc))
        for c, v, esc in zip(cells, lam, escaped)
    ]
    return SweepResult(map, out, names, n_transient, n_sample, float(x0))


def _astuple(obj):
    return tuple(getattr(obj, f) for f in obj.__dataclass_fields__)


# --------------------------------------------------------------------------
# graphs and orbit collapse


class GraphPoint(NamedTuple):
    x: float
    value: float  # NaN when escaped
    escaped: bool


def map_graph(map: str, params, x_range: tuple, samples: int) -> list:
    lo, hi = x_range
    if not lo < hi or samples < 2:
        raise ValueError("need lo < hi and samples >= 2")
    params = _coerce_params(map, params)
    F = _map_info(map).scalar
    points = []
    for x in np.linspace(lo, hi, samples):
        x = float(x)
        try:
            points.append(GraphPoint(x, F(x, params), False))
        except (NonFiniteState, DomainError):
            points.append(GraphPoint(x, float("nan"), True))
    return points


def graph_csv(points: Iterable[GraphPoint]) -> str:
    lines = ["x,value,escaped"]
    for p in points:
        lines.append(f"{p.x!r},{'nan' if p.escaped else repr(p.value)},{int(p.escaped)}")
    return "\n".join(lines) + "\n"


def orbit_collapse_fraction(params: GMapParams, n_starts: int = 100, n_iter: int = 1000,
                            threshold: float = 1e-6, y_max: float = 1000.0, seed: int = 0) -> dict:
    """Fraction of random starts in ``(0, y_max]`` whose g-orbit drops below ``threshold``.

    Orbits that hit a singularity before dropping below the threshold are
    counted separately under ``"escaped"``.
    """
    rng = np.random.default_rng(seed)
    starts = y_max * (1.0 - rng.random(n_starts))  # (0, y_max]
    collapsed = escaped = 0
    for y0 in starts:
        y = float(y0)
        try:
            for _ in range(n_iter):
                y = eval_g(y, params)
                if y < threshold:
                    collapsed += 1
                    break
        except (NonFiniteState, DomainError):
            escaped += 1
    return {
        "fraction": collapsed / n_starts,
        "escaped": escaped / n_starts,
        "n_starts": n_starts,
        "n_iter": n_iter,
        "threshold": threshold,
        "seed": seed,
    }
