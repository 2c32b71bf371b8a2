"""Shadowing of pseudotrajectories for x_{n+1} = A_n x_n + f_n(x_n).

The correction ``v = x - y`` is the fixed point of ``T(v) = G S(v)`` with
``S(v)_{n+1} = f_n(y_n + v_n) - f_n(y_n) - defect_{n+1}``.  Under the
small-gain condition ``c ||G|| < 1`` the map ``T`` contracts with rate
``q = c ||G||`` and the fixed point obeys ``||v||_B <= K delta`` with
``K = ||G|| / (1 - q)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DichotomyRequired, HyperbolicityError, NonConvergence, SmallGainViolated
from .green import GreenKernel, ae_residual, exact_section_norm
from .linsys import (LinearCocycle, TrichotomyData, fit_constants, require_dichotomy,
                     spectral_split)
from .seqspace import LInfty, SeqSpaceKind, WindowSequence, norm_b, vector_norms

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Perturbation:
    """Family of maps ``f_n : R^d -> R^d`` with a caller-certified Lipschitz constant ``c``.

    ``func(n, x)`` evaluates one map.  ``batch(ns, X)`` is an optional
    vectorised form taking an index array and a ``(k, d)`` state array.
    """

    func: Callable
    c: float
    batch: Callable | None = None
    name: str = "custom"

    def __post_init__(self):
        if not self.c >= 0:
            raise ValueError("Lipschitz constant must be >= 0")

    def __call__(self, n: int, x) -> np.ndarray:
        return np.asarray(self.func(n, np.asarray(x, dtype=float)), dtype=float)

    def evaluate(self, ns, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.batch is not None:
            return np.asarray(self.batch(np.asarray(ns), X), dtype=float).reshape(X.shape)
        return np.array([self(int(n), x) for n, x in zip(ns, X)]).reshape(X.shape)

    def supported_on(self, lo: int, hi: int) -> "Perturbation":
        """Same maps on ``[lo, hi]``, identically zero elsewhere."""
        inner = self

        def func(n, x):
            return inner(n, x) if lo <= n <= hi else np.zeros_like(x)

        def batch(ns, X):
            mask = (ns >= lo) & (ns <= hi)
            out = np.zeros_like(X)
            if np.any(mask):
                out[mask] = inner.evaluate(ns[mask], X[mask])
            return out

        return Perturbation(func, self.c, batch, f"{self.name}|[{lo},{hi}]")


def zero_perturbation() -> Perturbation:
    return Perturbation(lambda n, x: np.zeros_like(x), 0.0,
                        lambda ns, X: np.zeros_like(X), "zero")


def _reverse(X):
    return X[..., ::-1]


def scaled_sine(c: float) -> Perturbation:
    """``f_n(x) = c sin(reverse(x))``; e.g. ``c (sin x2, sin x1)`` for d = 2.

    Coordinate reversal preserves both the max and the euclidean norm, so
    ``c`` is a Lipschitz constant for either.
    """
    return Perturbation(lambda n, x: c * np.sin(_reverse(x)), float(c),
                        lambda ns, X: c * np.sin(_reverse(X)), f"scaled-sine({c:g})")


def scaled_tanh(c: float) -> Perturbation:
    return Perturbation(lambda n, x: c * np.tanh(_reverse(x)), float(c),
                        lambda ns, X: c * np.tanh(_reverse(X)), f"scaled-tanh({c:g})")


def tabulated(knots, values) -> Perturbation:
    """Elementwise piecewise-linear map through ``(knots, values)``, flat outside.

    The certified constant is the steepest slope between knots.
    """
    knots = np.asarray(knots, dtype=float)
    values = np.asarray(values, dtype=float)
    if knots.ndim != 1 or knots.shape != values.shape or knots.size < 2:
        raise ValueError("tabulated map needs matching 1-D knots and values (>= 2)")
    if np.any(np.diff(knots) <= 0):
        raise ValueError("knots must be strictly increasing")
    c = float(np.max(np.abs(np.diff(values) / np.diff(knots))))

    def batch(ns, X):
        return np.interp(X, knots, values)

    return Perturbation(lambda n, x: np.interp(x, knots, values), c, batch, "tabulated")


def spot_check_lipschitz(pert: Perturbation, ns, d: int, rng=None, samples: int = 64,
                         scale: float = 1.0, norm: str = "max") -> float:
    """Largest sampled difference quotient ``||f_n(x) - f_n(z)|| / ||x - z||``."""
    rng = np.random.default_rng(rng)
    worst = 0.0
    for n in ns:
        X = scale * rng.standard_normal((samples, d))
        Z = X + scale * rng.standard_normal((samples, d)) * 10.0 ** rng.uniform(-6, 0, (samples, 1))
        nn = np.full(samples, n)
        num = vector_norms(pert.evaluate(nn, X) - pert.evaluate(nn, Z), norm)
        den = vector_norms(X - Z, norm)
        ok = den > 0
        if np.any(ok):
            worst = max(worst, float(np.max(num[ok] / den[ok])))
    return worst


@dataclass(frozen=True)
class Pseudotrajectory:
    y: WindowSequence
    delta: float
    kind: SeqSpaceKind = LInfty()


@dataclass
class ShadowResult:
    x: WindowSequence
    correction_norm: float
    iterations: int
    contraction_estimate: float
    certified_bound: float
    residual: float
    delta: float
    K: float
    gnorm: float
    q: float
    kind: SeqSpaceKind
    ratios: list = field(default_factory=list)
    noise_floor: bool = False

    @property
    def epsilon(self) -> float:
        return self.certified_bound

    def summary(self) -> dict:
        return {
            "kind": str(self.kind),
            "delta": self.delta,
            "gnorm": self.gnorm,
            "c_times_gnorm": self.q,
            "K": self.K,
            "epsilon": self.certified_bound,
            "correction_norm": self.correction_norm,
            "iterations": self.iterations,
            "contraction_estimate": self.contraction_estimate,
            "orbit_residual": self.residual,
            "noise_floor_stop": self.noise_floor,
        }


def defect(cocycle: LinearCocycle, pert: Perturbation, y: WindowSequence) -> WindowSequence:
    """Orbit defect ``y_{n+1} - A_n y_n - f_n(y_n)``, stored at index ``n + 1``.

    The result lives on ``[n_min + 1, n_max]``.
    """
    if y.d != cocycle.d:
        raise ValueError(f"dimension mismatch: cocycle d={cocycle.d}, sequence d={y.d}")
    yv = y.embed(cocycle.n_min, cocycle.n_max).values if (y.n_min, y.n_max) != (
        cocycle.n_min, cocycle.n_max) else y.values
    ns = np.arange(cocycle.n_min, cocycle.n_max)
    lin = np.einsum("nij,nj->ni", cocycle.matrices, yv[:-1])
    return WindowSequence(cocycle.n_min + 1, yv[1:] - lin - pert.evaluate(ns, yv[:-1]))


def orbit_residual(cocycle: LinearCocycle, pert: Perturbation, x: WindowSequence,
                   norm: str = "max") -> float:
    return float(np.max(vector_norms(defect(cocycle, pert, x).values, norm)))


def measure(cocycle, pert, y: WindowSequence, kind: SeqSpaceKind = LInfty(),
            norm: str = "max") -> Pseudotrajectory:
    """Wrap ``y`` as a pseudotrajectory with its measured ``delta``."""
    return Pseudotrajectory(y, norm_b(kind, defect(cocycle, pert, y), norm), kind)


def resolve_gnorm(gk: GreenKernel, kind: SeqSpaceKind, gnorm=None) -> float:
    """Turn a ``gnorm`` selector into a number.

    ``None``/``"analytic"`` gives the analytic bound, ``"exact"`` the exact
    finite-section norm (only where that has a closed form), a number is
    used as given.
    """
    if gnorm is None or gnorm == "analytic":
        return gk.analytic_norm
    if gnorm == "exact":
        val = exact_section_norm(gk, kind)
        if val is None:
            raise ValueError(f"no closed-form section norm for {kind} with the {gk.norm} "
                             "state norm; use the euclidean norm for l^2 or pass a number")
        return val
    val = float(gnorm)
    if not val > 0:
        raise ValueError("gnorm must be positive")
    return val


def shadowing_constant(gk: GreenKernel, c: float, kind: SeqSpaceKind = LInfty(),
                       gnorm=None) -> float:
    """``K = ||G|| / (1 - c ||G||)``; raises :class:`SmallGainViolated` if ``c ||G|| >= 1``."""
    g = resolve_gnorm(gk, kind, gnorm)
    if c * g >= 1.0:
        raise SmallGainViolated(c, g)
    return g / (1.0 - c * g)


def _contract(gk: GreenKernel, Y: np.ndarray, base: np.ndarray, pert: Perturbation,
              kind: SeqSpaceKind, q: float, tol: float, x0, max_iter: int, slack: float):
    """Iterate ``v <- G S(v)``; returns ``(v, iterations, ratios, noise_floor)``."""
    W, d = Y.shape
    M = gk.matrix()
    ns = np.arange(gk.n_min, gk.n_max)
    fy = pert.evaluate(ns, Y[:-1])
    linear = pert.c == 0

    def T(V):
        S = base.copy()
        if not linear:
            S[1:] += pert.evaluate(ns, Y[:-1] + V[:-1]) - fy
        return (M @ S.ravel()).reshape(W, d)

    def nb(V):
        return norm_b(kind, V, gk.norm)

    V = np.zeros((W, d)) if x0 is None else np.array(x0, dtype=float).reshape(W, d)
    # rounding of Y + V perturbs S by about c * ulp(Y); G spreads that by ||G||
    y_noise = 4.0 * EPS * q * float(np.max(np.abs(Y), initial=0.0))
    ratios = []
    prev = None
    bad = 0
    floor_hits = 0
    for it in range(1, max_iter + 1):
        Vn = T(V)
        step = nb(Vn - V)
        V = Vn
        floor = 100.0 * EPS * max(1.0, nb(V)) + y_noise
        if prev is not None and prev > 0 and step > floor:
            r = step / prev
            ratios.append(r)
            if r > q + slack:
                bad += 1
                if bad >= 2:
                    raise NonConvergence(
                        f"observed contraction ratio {r:.6g} exceeds c*||G|| = {q:.6g}; "
                        "the Lipschitz certificate looks inconsistent", ratios)
            else:
                bad = 0
        if step <= tol * (1.0 - q):
            return V, it, ratios, False
        # rounding dominates the sup-norm step; a few more sweeps still
        # shrink the error wherever the orbit is of moderate size
        floor_hits = floor_hits + 1 if step <= floor else 0
        if floor_hits >= 3:
            return V, it, ratios, True
        prev = step
    raise NonConvergence(f"no convergence after {max_iter} iterations", ratios)


def _as_pseudo(y, cocycle, pert, kind, norm) -> tuple[WindowSequence, float]:
    if isinstance(y, Pseudotrajectory):
        seq, declared, kind = y.y, y.delta, y.kind
    else:
        seq, declared = y, None
    delta = norm_b(kind, defect(cocycle, pert, seq), norm)
    if declared is not None and delta > declared * (1 + 1e-9) + 1e-300:
        raise ValueError(f"sequence has defect {delta:.6g} > declared delta {declared:.6g}")
    return seq, delta


def shadow_two_sided(cocycle: LinearCocycle, tri: TrichotomyData, pert: Perturbation, y,
                     tol: float = 1e-12, kind: SeqSpaceKind | None = None, norm: str = "max",
                     gnorm=None, x0=None, max_iter: int = 1000, slack: float = 1e-6,
                     gk: GreenKernel | None = None) -> ShadowResult:
    """Find the exact orbit shadowing the pseudotrajectory ``y``.

    ``y`` is a :class:`Pseudotrajectory` or a bare :class:`WindowSequence`
    on the cocycle window.  Iteration starts at ``x0`` (default zero
    correction) and stops once the step falls below ``tol (1 - q)``, which
    puts the iterate within ``tol`` of the fixed point.
    """
    if kind is None:
        kind = y.kind if isinstance(y, Pseudotrajectory) else LInfty()
    gk = gk or GreenKernel(cocycle, tri, norm=norm)
    g = resolve_gnorm(gk, kind, gnorm)
    K = shadowing_constant(gk, pert.c, kind, g)
    q = pert.c * g
    seq, delta = _as_pseudo(y, cocycle, pert, kind, gk.norm)
    if (seq.n_min, seq.n_max) != (cocycle.n_min, cocycle.n_max):
        raise ValueError("pseudotrajectory must cover the cocycle window exactly")
    D = defect(cocycle, pert, seq).values
    base = np.vstack([np.zeros((1, cocycle.d)), -D])
    V, its, ratios, floor = _contract(gk, seq.values, base, pert, kind, q, tol, x0, max_iter, slack)
    x = WindowSequence(seq.n_min, seq.values + V)
    return ShadowResult(
        x=x, correction_norm=norm_b(kind, V, gk.norm), iterations=its,
        contraction_estimate=max(ratios, default=0.0), certified_bound=K * delta,
        residual=orbit_residual(cocycle, pert, x, gk.norm), delta=delta, K=K, gnorm=g, q=q,
        kind=kind, ratios=ratios, noise_floor=floor)


def uniqueness_check(cocycle: LinearCocycle, tri: TrichotomyData, pert: Perturbation, y,
                     x1: WindowSequence, x2: WindowSequence, epsilon: float, tol: float = 1e-8,
                     kind: SeqSpaceKind = LInfty(), norm: str = "max", gnorm=None) -> bool:
    """Whether two orbits that both shadow ``y`` within ``epsilon`` coincide.

    Under a dichotomy and small gain they must; ``False`` flags inputs that
    violate the hypotheses (for example ``x1`` not being an orbit).
    """
    require_dichotomy(tri, "uniqueness of shadows")
    gk = GreenKernel(cocycle, tri, norm=norm)
    shadowing_constant(gk, pert.c, kind, gnorm)
    seq = y.y if isinstance(y, Pseudotrajectory) else y
    for x in (x1, x2):
        if orbit_residual(cocycle, pert, x, norm) > tol:
            return False
        if norm_b(kind, x - seq, norm) > epsilon * (1 + 1e-12):
            return False
    return norm_b(kind, x1 - x2, norm) <= tol


def random_pseudotrajectory(cocycle: LinearCocycle, pert: Perturbation, delta: float,
                            kind: SeqSpaceKind = LInfty(), rng=None, norm: str = "max",
                            smooth: bool = False) -> Pseudotrajectory:
    """Bounded random sequence rescaled so that its defect norm is (just below) ``delta``."""
    rng = np.random.default_rng(rng)
    W, d = cocycle.width, cocycle.d
    R = rng.uniform(-1.0, 1.0, (W, d))
    if smooth:
        R = np.cumsum(R, axis=0) / np.sqrt(np.arange(1, W + 1))[:, None]
    s = 1.0
    for _ in range(60):
        y = WindowSequence(cocycle.n_min, s * R)
        dn = norm_b(kind, defect(cocycle, pert, y), norm)
        if dn <= delta and dn >= delta * (1 - 1e-6):
            break
        if dn == 0:
            break
        s *= (delta / dn) * (1 - 1e-9)
    while norm_b(kind, defect(cocycle, pert, y), norm) > delta:
        s *= 1 - 1e-6
        y = WindowSequence(cocycle.n_min, s * R)
    return measure(cocycle, pert, y, kind, norm)


# -- one-sided dynamics ----------------------------------------------------

def default_pad(P0: np.ndarray) -> np.ndarray:
    """Hyperbolic pad with stable space ``range P0`` (rate 1/2) and unstable ``Ker P0`` (rate 2)."""
    eye = np.eye(P0.shape[0])
    return 0.5 * P0 + 2.0 * (eye - P0)


def check_pad(pad: np.ndarray, P0: np.ndarray, tol: float = 1e-8) -> float:
    """Validate the pad against ``P0``; returns its hyperbolic rate."""
    Ps, rate = spectral_split(pad)
    eye = np.eye(pad.shape[0])
    unstable = eye - Ps
    kerP0 = eye - P0
    if np.linalg.matrix_rank(unstable, tol) != np.linalg.matrix_rank(kerP0, tol):
        raise HyperbolicityError("unstable dimension of the pad differs from dim Ker P0")
    if np.max(np.abs(P0 @ unstable), initial=0.0) > tol * max(1.0, np.max(np.abs(unstable))):
        raise HyperbolicityError("unstable subspace of the pad is not Ker P0")
    return rate


def extend_one_sided(cocycle: LinearCocycle, tri: TrichotomyData, pad=None,
                     n_pad: int | None = None, tol: float = 1e-12, norm: str = "max"):
    """Extend a one-sided dichotomic system on ``[n0, n_max]`` to ``[n0 - n_pad, n_max]``.

    ``A_m = pad`` left of ``n0``.  Projections there are transported with the
    pad, ``P_m = pad^{-1} P_{m+1} pad`` (up to rounding), which keeps the
    commutation axiom and equals the constant spectral projection whenever
    ``P_{n0}`` is one.  ``C`` is refitted on the extended window.
    """
    require_dichotomy(tri, "one-sided extension")
    n0 = cocycle.n_min
    P0 = tri.P(1, n0)
    pad = default_pad(P0) if pad is None else np.atleast_2d(np.asarray(pad, dtype=float))
    rate = check_pad(pad, P0)
    lam = min(tri.lam, rate)
    if n_pad is None:
        n_pad = max(1, math.ceil(math.log(1.0 / tol) / lam))
    pinv = np.linalg.inv(pad)
    # P0 and the pad's spectral projection Ps share the kernel, so
    # E = P0 - Ps maps the stable space into the unstable one and its
    # transport decays.  Re-projecting each step stops rounding in the
    # other blocks from growing like ||pad|| ||pad^-1|| per step.
    Ps, _ = spectral_split(pad)
    Pu = np.eye(pad.shape[0]) - Ps
    E = P0 - Ps
    left = [P0]
    for _ in range(n_pad):
        E = Pu @ (pinv @ E @ pad) @ Ps
        left.append(Ps + E)
    P1 = np.concatenate([np.array(left[:0:-1]), tri.projections[:, 0]])
    mats = np.concatenate([np.broadcast_to(pad, (n_pad,) + pad.shape), cocycle.matrices])
    ext = LinearCocycle(n0 - n_pad, mats)
    ext_tri = TrichotomyData.dichotomy(P1, ext.n_min, ext.n_max, 1.0, lam, origin=n0)
    C = fit_constants(ext, ext_tri, lam, norm=norm)
    return ext, ext_tri.with_constants(C=C)


def extend_pseudotrajectory(y: WindowSequence, pad: np.ndarray, n_pad: int) -> WindowSequence:
    """Backward pad orbit through ``y_{n0}`` glued to ``y``: ``y_hat_n = pad^{n - n0} y_{n0}``."""
    pinv = np.linalg.inv(pad)
    left = [y.values[0]]
    for _ in range(n_pad):
        left.append(pinv @ left[-1])
    vals = np.concatenate([np.array(left[:0:-1]).reshape(n_pad, -1), y.values])
    return WindowSequence(y.n_min - n_pad, vals)


def shadow_one_sided(cocycle: LinearCocycle, tri: TrichotomyData, pert: Perturbation, y,
                     pad=None, tol: float = 1e-12, kind: SeqSpaceKind | None = None,
                     norm: str = "max", gnorm=None, n_pad: int | None = None,
                     max_iter: int = 1000, slack: float = 1e-6) -> ShadowResult:
    """Shadow a pseudotrajectory of the one-sided system on ``[n0, n_max]``.

    The system is extended to the left by a hyperbolic pad with zero
    perturbation; the pseudotrajectory is extended by the backward pad orbit
    through ``y_{n0}``, whose defect vanishes identically.  That part of the
    defect is inserted as an exact zero instead of being recomputed from
    exponentially large pad values.
    """
    if kind is None:
        kind = y.kind if isinstance(y, Pseudotrajectory) else LInfty()
    ext, ext_tri = extend_one_sided(cocycle, tri, pad, n_pad, tol, norm)
    n_pad = cocycle.n_min - ext.n_min
    gk = GreenKernel(ext, ext_tri, norm=norm)
    g = resolve_gnorm(gk, kind, gnorm)
    K = shadowing_constant(gk, pert.c, kind, g)
    q = pert.c * g
    seq, delta = _as_pseudo(y, cocycle, pert, kind, norm)
    if (seq.n_min, seq.n_max) != (cocycle.n_min, cocycle.n_max):
        raise ValueError("pseudotrajectory must cover the one-sided window exactly")
    d = cocycle.d
    D = defect(cocycle, pert, seq).values
    base = np.vstack([np.zeros((n_pad + 1, d)), -D])
    Y = np.vstack([np.zeros((n_pad, d)), seq.values])
    ext_pert = pert.supported_on(cocycle.n_min, cocycle.n_max)
    V, its, ratios, floor = _contract(gk, Y, base, ext_pert, kind, q, tol, None, max_iter, slack)
    Vr = V[n_pad:]
    x = WindowSequence(seq.n_min, seq.values + Vr)
    return ShadowResult(
        x=x, correction_norm=norm_b(kind, Vr, norm), iterations=its,
        contraction_estimate=max(ratios, default=0.0), certified_bound=K * delta,
        residual=orbit_residual(cocycle, pert, x, norm), delta=delta, K=K, gnorm=g, q=q,
        kind=kind, ratios=ratios, noise_floor=floor)
