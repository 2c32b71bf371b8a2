"""Two applications of shadowing: Hyers-Ulam certificates and Grobman-Hartman conjugacies."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DichotomyRequired, HyperbolicityError, InversionFailure, SmallGainViolated
from .green import GreenKernel, apply_green, exact_section_norm
from .linsys import LinearCocycle, TrichotomyData, fit_constants, require_dichotomy, spectral_split
from .seqspace import LInfty, WindowSequence, matrix_norm
from .shadow import Perturbation, ShadowResult, shadow_one_sided, shadow_two_sided, zero_perturbation


# -- Hyers-Ulam stability of x_{n+2} = a_n x_{n+1} + b_n x_n ----------------

@dataclass(frozen=True)
class Recurrence:
    """Coefficients ``a_n, b_n`` for ``n >= 0``, each a scalar or a 1-D array."""

    a: object
    b: object

    def __post_init__(self):
        for name in ("a", "b"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.ndim > 1:
                raise ValueError(f"coefficient {name} must be a scalar or a 1-D sequence")
            object.__setattr__(self, name, v)

    @property
    def is_constant(self) -> bool:
        return self.a.ndim == 0 and self.b.ndim == 0

    def coefficients(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        out = []
        for v, name in ((self.a, "a"), (self.b, "b")):
            if v.ndim == 0:
                out.append(np.full(count, float(v)))
            elif v.size < count:
                raise ValueError(f"coefficient {name} has {v.size} entries, {count} needed")
            else:
                out.append(v[:count])
        return out[0], out[1]


def companion_lift(rec: Recurrence, transitions: int) -> LinearCocycle:
    """``A_n = [[0, 1], [b_n, a_n]]`` for ``n = 0 .. transitions - 1``."""
    a, b = rec.coefficients(transitions)
    mats = np.zeros((transitions, 2, 2))
    mats[:, 0, 1] = 1.0
    mats[:, 1, 0] = b
    mats[:, 1, 1] = a
    return LinearCocycle(0, mats)


def lift_dichotomy(rec: Recurrence, n_max: int) -> TrichotomyData:
    """Spectral dichotomy data for a constant-coefficient lift on ``[0, n_max]``."""
    if not rec.is_constant:
        raise DichotomyRequired("variable coefficients: supply dichotomy data for the lift")
    A = companion_lift(rec, 1).A(0)
    try:
        P, rate = spectral_split(A)
    except HyperbolicityError as exc:
        raise DichotomyRequired(f"companion matrix is not hyperbolic: {exc}") from exc
    cocycle = LinearCocycle.constant(A, 0, n_max)
    tri = TrichotomyData.dichotomy(P, 0, n_max, 1.0, rate)
    return tri.with_constants(C=fit_constants(cocycle, tri, rate))


@dataclass
class HyersUlamResult:
    x: np.ndarray
    delta: float
    gnorm: float
    epsilon: float
    deviation: float
    recurrence_residual: float
    shadow: ShadowResult = field(repr=False)

    def certificate(self) -> dict:
        return {
            "delta_measured": self.delta,
            "gnorm": self.gnorm,
            "epsilon": self.epsilon,
            "sup_deviation": self.deviation,
            "recurrence_residual": self.recurrence_residual,
            "iterations": self.shadow.iterations,
        }


def recurrence_residual(rec: Recurrence, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    a, b = rec.coefficients(x.size - 2)
    return x[2:] - a * x[1:-1] - b * x[:-2]


def hyers_ulam_solve(rec: Recurrence, w, tri: TrichotomyData | None = None, pad=None,
                     tol: float = 1e-12) -> HyersUlamResult:
    """Exact solution ``x`` of the recurrence close to the approximate solution ``w``.

    ``w`` holds ``w_0 .. w_{L-1}``.  The lifted states ``z_n = (w_n, w_{n+1})``
    form a pseudotrajectory of the companion cocycle in the max norm; its
    one-sided shadow gives ``x`` with ``sup |x_n - w_n| <= ||G|| delta``.
    """
    w = np.asarray(w.values if isinstance(w, WindowSequence) else w, dtype=float).ravel()
    if w.size < 3:
        raise ValueError("need at least three terms")
    n_max = w.size - 2
    cocycle = companion_lift(rec, n_max)
    if tri is None:
        tri = lift_dichotomy(rec, n_max)
    require_dichotomy(tri, "Hyers-Ulam certificate")
    z = WindowSequence(0, np.column_stack([w[:-1], w[1:]]))
    res = shadow_one_sided(cocycle, tri, zero_perturbation(), z, pad=pad, tol=tol,
                           kind=LInfty(), norm="max", gnorm="exact")
    x = np.concatenate([res.x.values[:, 0], res.x.values[-1:, 1]])
    return HyersUlamResult(
        x=x, delta=res.delta, gnorm=res.gnorm, epsilon=res.gnorm * res.delta,
        deviation=float(np.max(np.abs(x - w))),
        recurrence_residual=float(np.max(np.abs(recurrence_residual(rec, x)))), shadow=res)


# -- Grobman-Hartman conjugacy ---------------------------------------------

@dataclass
class ConjugacyFamily:
    """Conjugacies ``h_m`` between ``G_m = A_m + g_m`` and ``A_m``.

    ``g`` must satisfy ``sup ||g_n|| <= delta`` and carry a Lipschitz
    constant ``c`` with ``c ||G|| < 1`` and ``c sup ||A_n^{-1}|| < 1``.
    Each evaluation at index ``m`` uses the window ``[m - margin, m + margin]``
    of the cocycle, sized so truncation moves the result by less than ``tol``.
    """

    cocycle: LinearCocycle
    tri: TrichotomyData
    g: Perturbation
    delta: float
    tol: float = 1e-10
    _kernels: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        require_dichotomy(self.tri, "conjugacy construction")
        if not self.delta >= 0:
            raise ValueError("delta must be >= 0")
        self._inverses = np.linalg.inv(self.cocycle.matrices)
        self.inverse_norm = max(matrix_norm(B) for B in self._inverses)
        self.inversion_rate = self.g.c * self.inverse_norm
        if self.inversion_rate >= 1:
            raise InversionFailure(
                f"c * sup||A_n^-1|| = {self.inversion_rate:.6g} >= 1; G_n cannot be inverted by iteration")
        C, lam = self.tri.C, self.tri.lam
        # gnorm is bounded by the analytic value; use it to size the window once
        q_an = self.g.c * 2 * C * (1 + math.exp(-lam)) / (1 - math.exp(-lam))
        q_bound = min(q_an, 0.5) if q_an < 1 else 0.5
        arg = 4 * C * max(self.delta, 1e-300) / ((1 - math.exp(-lam)) * (1 - q_bound) * self.tol)
        self.margin = max(1, math.ceil(math.log(max(arg, 1.0)) / lam) + 1)
        lo, hi = self.window(self._centre())
        self.gnorm = exact_section_norm(self._kernel(lo, hi), LInfty())
        self.q = self.g.c * self.gnorm
        if self.q >= 1:
            raise SmallGainViolated(self.g.c, self.gnorm)
        if q_an >= 1 and self.q > 0.5:
            raise SmallGainViolated(self.g.c, self.gnorm / 0.5)
        self.K = self.gnorm / (1 - self.q)
        self.epsilon = self.K * self.delta

    def _centre(self) -> int:
        return (self.cocycle.n_min + self.cocycle.n_max) // 2

    def window(self, m: int) -> tuple[int, int]:
        lo, hi = m - self.margin, m + self.margin
        if lo < self.cocycle.n_min or hi > self.cocycle.n_max:
            raise ValueError(f"index {m} needs window [{lo}, {hi}], outside the cocycle window "
                             f"[{self.cocycle.n_min}, {self.cocycle.n_max}]")
        return lo, hi

    def _kernel(self, lo: int, hi: int) -> GreenKernel:
        key = (lo, hi)
        if key not in self._kernels:
            self._kernels[key] = GreenKernel(self.cocycle.restrict(lo, hi), self.tri.restrict(lo, hi))
        return self._kernels[key]

    def G(self, n: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.cocycle.A(n) @ x + self.g(n, x)

    def G_inverse(self, n: int, w, max_iter: int = 500) -> np.ndarray:
        """Solve ``A_n v + g_n(v) = w`` by ``v <- A_n^{-1}(w - g_n(v))``."""
        w = np.asarray(w, dtype=float)
        Binv = self._inverses[n - self.cocycle.n_min]
        v = Binv @ w
        r = self.inversion_rate
        scale = max(1.0, float(np.max(np.abs(v))))
        for _ in range(max_iter):
            vn = Binv @ (w - self.g(n, v))
            step = float(np.max(np.abs(vn - v)))
            v = vn
            if step <= self.tol * (1 - r) or step <= 16 * np.finfo(float).eps * scale:
                return v
        raise InversionFailure(f"inverse of G_{n} did not converge in {max_iter} iterations")

    def nonlinear_orbit(self, m: int, y) -> WindowSequence:
        lo, hi = self.window(m)
        Y = np.zeros((hi - lo + 1, self.cocycle.d))
        Y[m - lo] = y
        for n in range(m, hi):
            Y[n + 1 - lo] = self.G(n, Y[n - lo])
        for n in range(m - 1, lo - 1, -1):
            Y[n - lo] = self.G_inverse(n, Y[n + 1 - lo])
        return WindowSequence(lo, Y)

    def linear_orbit(self, m: int, x) -> WindowSequence:
        lo, hi = self.window(m)
        X = np.zeros((hi - lo + 1, self.cocycle.d))
        X[m - lo] = x
        for n in range(m, hi):
            X[n + 1 - lo] = self.cocycle.A(n) @ X[n - lo]
        for n in range(m - 1, lo - 1, -1):
            X[n - lo] = np.linalg.solve(self.cocycle.A(n), X[n + 1 - lo])
        return WindowSequence(lo, X)


def gh_forward(conj: ConjugacyFamily, m: int, y) -> np.ndarray:
    """``h_m(y)``: value at ``m`` of the linear orbit shadowing the nonlinear orbit through ``y``.

    The nonlinear orbit has linear defect exactly ``g_n(y_n)``, so the
    correction is one application of the Green operator to that defect.
    """
    y = np.asarray(y, dtype=float)
    Y = conj.nonlinear_orbit(m, y)
    lo, hi = Y.n_min, Y.n_max
    D = conj.g.evaluate(np.arange(lo, hi), Y.values[:-1])
    V = apply_green(conj._kernel(lo, hi), WindowSequence(lo + 1, -D))
    return y + V[m]


def gh_inverse(conj: ConjugacyFamily, m: int, x, return_result: bool = False):
    """``h_m^{-1}(x)``: value at ``m`` of the nonlinear orbit shadowing the linear orbit through ``x``."""
    X = conj.linear_orbit(m, np.asarray(x, dtype=float))
    lo, hi = X.n_min, X.n_max
    gk = conj._kernel(lo, hi)
    res = shadow_two_sided(gk.cocycle, gk.tri, conj.g, X, tol=conj.tol, kind=LInfty(),
                           gnorm=conj.gnorm, gk=gk)
    out = res.x[m].copy()
    return (out, res) if return_result else out
