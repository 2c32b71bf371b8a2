"""Continuous-time systems x' = A(t) x + f(t, x) and their time-1 discretization.

Evolution operators are computed with a classical fixed-step RK4 scheme so
repeated evaluations are bit-reproducible.  The state norm is the max norm
throughout, so ``N`` bounds the induced max-row-sum norm of ``A(t)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .errors import ShadowingError, StepSizeUnderflow
from .green import GreenKernel
from .linsys import LinearCocycle, TrichotomyData, constant_dichotomy, verify_trichotomy
from .seqspace import LInfty, WindowSequence, matrix_norm, vector_norms
from .shadow import Perturbation, ShadowResult, shadow_two_sided

DEFAULT_STEP = 1e-2
MAX_STEPS = 10_000_000


@dataclass(frozen=True)
class ContinuousSystem:
    """``x' = A(t) x + f(t, x)`` with certified ``N >= sup ||A(t)||`` and Lipschitz ``c``.

    With ``vectorized=True``, ``A`` accepts an array of times and returns a
    stack of matrices, and ``f`` accepts times ``(k,)`` with states ``(k, d)``.
    Otherwise both are called one point at a time.
    """

    d: int
    A: Callable
    N: float
    f: Callable | None = None
    c: float = 0.0
    vectorized: bool = False
    name: str = "custom"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be positive")
        if not (math.isfinite(self.N) and self.N >= 0):
            raise ValueError(f"N must be finite and >= 0, got {self.N}")
        if not self.c >= 0:
            raise ValueError("Lipschitz constant must be >= 0")

    def matrices(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if self.vectorized:
            M = np.asarray(self.A(ts), dtype=float)
            return np.broadcast_to(M, ts.shape + (self.d, self.d))
        uniq, inv = np.unique(ts, return_inverse=True)
        Ms = np.array([np.atleast_2d(np.asarray(self.A(float(t)), dtype=float)) for t in uniq])
        return Ms[inv.reshape(ts.shape)]

    def nonlinearity(self, ts: np.ndarray, X: np.ndarray) -> np.ndarray:
        if self.f is None:
            return np.zeros_like(X)
        if self.vectorized:
            return np.asarray(self.f(ts, X), dtype=float).reshape(X.shape)
        return np.array([np.asarray(self.f(float(t), x), dtype=float)
                         for t, x in zip(ts, X)]).reshape(X.shape)

    def rhs(self, ts, X, nonlinear: bool = True) -> np.ndarray:
        out = np.einsum("kij,kj->ki", self.matrices(ts), X)
        if nonlinear and self.f is not None:
            out = out + self.nonlinearity(ts, X)
        return out


def constant_system(A, f: Callable | None = None, c: float = 0.0, name: str = "constant"):
    """Autonomous linear part; ``f`` must be vectorised in the same sense as the class."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return ContinuousSystem(A.shape[0], lambda ts: A, matrix_norm(A, "max"), f, float(c), True, name)


def diagonal_system(diag, f: Callable | None = None, c: float = 0.0):
    return constant_system(np.diag(np.atleast_1d(np.asarray(diag, dtype=float))), f, c,
                           f"diag{tuple(np.atleast_1d(diag).tolist())}")


def sine_nonlinearity(c: float) -> Callable:
    """``f(t, x) = c sin(x)`` entrywise; Lipschitz constant ``c`` in the max norm."""
    return lambda ts, X: c * np.sin(X)


def tabulated_system(times, matrices, f: Callable | None = None, c: float = 0.0):
    """``A(t)`` linearly interpolated between knots, constant outside them."""
    times = np.asarray(times, dtype=float)
    mats = np.asarray(matrices, dtype=float)
    if times.ndim != 1 or mats.shape[0] != times.size or mats.ndim != 3:
        raise ValueError("tabulated system needs times (k,) and matrices (k, d, d)")
    if np.any(np.diff(times) <= 0):
        raise ValueError("knot times must be strictly increasing")
    d = mats.shape[1]
    flat = mats.reshape(len(times), -1)

    def A(ts):
        ts = np.asarray(ts, dtype=float)
        cols = [np.interp(ts, times, flat[:, j]) for j in range(d * d)]
        return np.stack(cols, axis=-1).reshape(ts.shape + (d, d))

    # the max-row-sum norm is convex, so its maximum sits at a knot
    N = max(matrix_norm(M, "max") for M in mats)
    return ContinuousSystem(d, A, N, f, float(c), True, "tabulated")


def spot_check(sys: ContinuousSystem, ts, rng=None, samples: int = 32) -> dict:
    """Sampled ``sup ||A(t)||``, difference quotients of ``f`` and ``max ||f(t, 0)||``."""
    rng = np.random.default_rng(rng)
    ts = np.asarray(ts, dtype=float)
    N_obs = float(max(matrix_norm(M, "max") for M in sys.matrices(ts)))
    out = {"N_observed": N_obs, "N": sys.N, "c_observed": 0.0, "c": sys.c, "f_at_origin": 0.0}
    if sys.f is not None:
        tt = rng.choice(ts, samples)
        X = rng.standard_normal((samples, sys.d))
        Z = X + rng.standard_normal((samples, sys.d)) * 10.0 ** rng.uniform(-6, 0, (samples, 1))
        num = vector_norms(sys.nonlinearity(tt, X) - sys.nonlinearity(tt, Z))
        out["c_observed"] = float(np.max(num / vector_norms(X - Z)))
        out["f_at_origin"] = float(np.max(vector_norms(sys.nonlinearity(ts, np.zeros((ts.size, sys.d))))))
    slack = 1e-9
    out["ok"] = bool(N_obs <= sys.N * (1 + slack) + slack and out["c_observed"] <= sys.c * (1 + slack) + slack
                     and out["f_at_origin"] <= slack)
    return out


def growth_constants(sys: ContinuousSystem) -> dict:
    """``||T(t,s)|| <= D e^{b(t-s)}`` and ``||U(t,s)x|| <= K e^{a(t-s)} ||x||`` via Gronwall."""
    return {"D": 1.0, "b": sys.N, "K": 1.0, "a": sys.N + sys.c}


def _rk4(sys: ContinuousSystem, t0, X: np.ndarray, duration: float, h: float,
         nonlinear: bool = True) -> np.ndarray:
    """Advance each row of ``X`` (shape ``(k, d)``) from its own start time by ``duration``."""
    if not (h > 0 and math.isfinite(h)):
        raise ValueError(f"step h must be positive and finite, got {h}")
    X = np.array(X, dtype=float)
    if duration == 0:
        return X
    steps = max(1, math.ceil(abs(duration) / h - 1e-9))
    t0 = np.broadcast_to(np.asarray(t0, dtype=float), (X.shape[0],))
    if steps > MAX_STEPS:
        raise StepSizeUnderflow(f"{steps} steps requested (limit {MAX_STEPS})")
    dt = duration / steps
    if abs(dt) <= 8 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(t0))) + abs(duration)):
        raise StepSizeUnderflow(f"step {dt:.3g} below time resolution")
    for j in range(steps):
        t = t0 + j * dt
        k1 = sys.rhs(t, X, nonlinear)
        k2 = sys.rhs(t + dt / 2, X + dt / 2 * k1, nonlinear)
        k3 = sys.rhs(t + dt / 2, X + dt / 2 * k2, nonlinear)
        k4 = sys.rhs(t + dt, X + dt * k3, nonlinear)
        X = X + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return X


def linear_evolution(sys: ContinuousSystem, t: float, s: float, h: float = DEFAULT_STEP) -> np.ndarray:
    """``T(t, s)`` by integrating ``X' = A X`` from the identity (forward or backward in time)."""
    rows = _rk4(sys, s, np.eye(sys.d), t - s, h, nonlinear=False)
    return rows.T


def nonlinear_evolution(sys: ContinuousSystem, t: float, s: float, x0, h: float = DEFAULT_STEP) -> np.ndarray:
    """``U(t, s) x0``; ``x0`` may be one state ``(d,)`` or a batch ``(k, d)``."""
    x0 = np.asarray(x0, dtype=float)
    X = _rk4(sys, s, np.atleast_2d(x0), t - s, h)
    return X[0] if x0.ndim == 1 else X


def discretize(sys: ContinuousSystem, n_min: int, n_max: int, h: float = DEFAULT_STEP):
    """Time-1 cocycle ``A_n = T(n+1, n)`` and maps ``f_n(x) = U(n+1, n) x - A_n x``.

    The perturbation's constant is ``c D K e^{a+b}``, the Gronwall bound on
    the discrete Lipschitz constant.
    """
    if n_max <= n_min:
        raise ValueError("window needs at least one transition")
    mats = np.array([linear_evolution(sys, n + 1, n, h) for n in range(n_min, n_max)])
    cocycle = LinearCocycle(n_min, mats)
    if sys.f is None:
        from .shadow import zero_perturbation
        return cocycle, zero_perturbation()
    gc = growth_constants(sys)
    c_disc = sys.c * gc["D"] * gc["K"] * math.exp(gc["a"] + gc["b"])

    def batch(ns, X):
        ns = np.asarray(ns, dtype=int)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        ends = _rk4(sys, ns.astype(float), X, 1.0, h)
        return ends - np.einsum("kij,kj->ki", cocycle.matrices[ns - n_min], X)

    def func(n, x):
        return batch(np.array([n]), np.asarray(x, dtype=float)[None])[0]

    return cocycle, Perturbation(func, c_disc, batch, f"time-1 map of {sys.name}")


@dataclass(frozen=True)
class SampledPath:
    """Values of a path ``y(t)`` on an increasing grid, with optional exact derivative."""

    t: np.ndarray
    values: np.ndarray
    derivative: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or t.size < 2 or v.shape[0] != t.size:
            raise ValueError("SampledPath needs a grid (k,) and values (k, d) with k >= 2")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def slopes(self) -> np.ndarray:
        if self.derivative is not None:
            return np.array([np.asarray(self.derivative(t), dtype=float).reshape(self.d) for t in self.t])
        return np.gradient(self.values, self.t, axis=0, edge_order=2)

    def integer_samples(self) -> WindowSequence:
        idx = _integer_indices(self.t)
        ns = np.rint(self.t[idx]).astype(int)
        if np.any(np.diff(ns) != 1):
            raise ValueError("grid must contain every integer between its first and last")
        return WindowSequence(int(ns[0]), self.values[idx])


def _integer_indices(t: np.ndarray) -> np.ndarray:
    return np.flatnonzero(np.abs(t - np.rint(t)) <= 1e-9)


def sample_function(fn: Callable, t_grid, derivative: Callable | None = None) -> SampledPath:
    t_grid = np.asarray(t_grid, dtype=float)
    return SampledPath(t_grid, np.array([np.atleast_1d(fn(t)) for t in t_grid]), derivative)


def integrate_path(sys: ContinuousSystem, t_grid, x_start, h: float = DEFAULT_STEP) -> SampledPath:
    """True solution through ``x_start`` at ``t_grid[0]``, recorded on the grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    out = [np.asarray(x_start, dtype=float).reshape(sys.d)]
    for a, b in zip(t_grid[:-1], t_grid[1:]):
        out.append(nonlinear_evolution(sys, b, a, out[-1], h))
    return SampledPath(t_grid, np.array(out))


def write_path_csv(path: SampledPath, dest):
    with Path(dest).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x_{i + 1}" for i in range(path.d)])
        for t, row in zip(path.t, path.values):
            w.writerow([format(float(t), ".17g")] + [format(float(v), ".17g") for v in row])


def read_path_csv(src) -> SampledPath:
    with Path(src).open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0][0].strip() != "t":
        raise ValueError(f"{src}: header row starting with 't' required")
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    if body.size == 0:
        raise ValueError(f"{src}: no data rows")
    return SampledPath(body[:, 0], body[:, 1:])


class DefectMeasurement(NamedTuple):
    delta: float
    coarse_grid: bool


def delta_defect(sys: ContinuousSystem, y: SampledPath) -> DefectMeasurement:
    """Grid supremum of ``||y' - A y - f(t, y)||``; flags grids under 10 points per unit time."""
    if y.d != sys.d:
        raise ValueError(f"path has d={y.d}, system has d={sys.d}")
    r = y.slopes() - sys.rhs(y.t, y.values)
    density = (y.t.size - 1) / (y.t[-1] - y.t[0])
    return DefectMeasurement(float(np.max(vector_norms(r))), bool(density < 10))


def ode_residual(sys: ContinuousSystem, x: SampledPath, h: float = DEFAULT_STEP / 4) -> float:
    """Largest jump ``||x(t_{i+1}) - U(t_{i+1}, t_i) x(t_i)||`` re-integrated with step ``h``."""
    worst = 0.0
    for i in range(x.t.size - 1):
        nxt = nonlinear_evolution(sys, x.t[i + 1], x.t[i], x.values[i], h)
        worst = max(worst, float(np.max(np.abs(nxt - x.values[i + 1]))))
    return worst


@dataclass
class ContinuousShadowResult:
    path: SampledPath
    discrete: ShadowResult
    delta: float
    discrete_delta: float
    discrete_delta_bound: float
    L: float
    epsilon: float
    sup_deviation: float
    coarse_grid: bool
    constants: dict

    def summary(self) -> dict:
        return {
            "delta": self.delta,
            "discrete_delta": self.discrete_delta,
            "discrete_delta_bound": self.discrete_delta_bound,
            "L": self.L,
            "epsilon": self.epsilon,
            "sup_deviation": self.sup_deviation,
            "coarse_grid": self.coarse_grid,
            "growth_constants": dict(self.constants),
            "discrete": self.discrete.summary(),
        }


def time_one_dichotomy(sys: ContinuousSystem, n_min: int, n_max: int, h: float = DEFAULT_STEP):
    """Dichotomy data for the time-1 map of an autonomous hyperbolic linear part."""
    _, tri = constant_dichotomy(linear_evolution(sys, 1.0, 0.0, h), n_min, n_max)
    return tri


def continuous_shadow(sys: ContinuousSystem, tri: TrichotomyData | None, y: SampledPath,
                      tol: float = 1e-12, h: float = DEFAULT_STEP, gnorm="exact",
                      verify_tol: float = 1e-6) -> ContinuousShadowResult:
    """Shadow a continuous pseudotrajectory through the time-1 discretization.

    The grid must start and end at integers and contain every integer in
    between.  ``tri`` describes the time-1 cocycle on that integer window;
    ``None`` derives it from ``A(0)`` for autonomous systems.  The exact
    orbit ``x(t) = U(t, n) x_n`` is reconstructed leg by leg on the grid.
    """
    if sys.d != y.d:
        raise ValueError(f"path has d={y.d}, system has d={sys.d}")
    ys = y.integer_samples()
    if abs(y.t[0] - ys.n_min) > 1e-9 or abs(y.t[-1] - ys.n_max) > 1e-9:
        raise ValueError("path grid must start and end at integer times")
    check = spot_check(sys, y.t, rng=0)
    if not check["ok"]:
        raise ValueError(f"system constants fail the spot check: {check}")
    cocycle, pert = discretize(sys, ys.n_min, ys.n_max, h)
    if tri is None:
        tri = time_one_dichotomy(sys, ys.n_min, ys.n_max, h)
    report = verify_trichotomy(cocycle, tri, tol=verify_tol)
    if not report.passes:
        raise ShadowingError(f"time-1 cocycle fails trichotomy verification: {report.worst_pair}")
    meas = delta_defect(sys, y)
    gk = GreenKernel(cocycle, tri)
    res = shadow_two_sided(cocycle, tri, pert, ys, tol=tol, kind=LInfty(), gnorm=gnorm, gk=gk)
    gc = growth_constants(sys)
    e = math.exp(sys.N + sys.c)
    L = 1.0 / res.K
    epsilon = meas.delta * (1.0 + e / L) * e

    xs = np.empty_like(y.values)
    ints = _integer_indices(y.t)
    for j, i0 in enumerate(ints):
        xs[i0] = res.x.values[j]
        if j + 1 == len(ints):
            break
        cur = res.x.values[j]
        for i in range(i0 + 1, ints[j + 1]):
            cur = nonlinear_evolution(sys, y.t[i], y.t[i - 1], cur, h)
            xs[i] = cur
    path = SampledPath(y.t, xs)
    dev = float(np.max(vector_norms(xs - y.values)))
    return ContinuousShadowResult(path, res, meas.delta, res.delta, meas.delta * e, L, epsilon, dev,
                                  meas.coarse_grid, gc)
