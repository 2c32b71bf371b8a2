"""Green kernel and the bounded solution operator of x_{n+1} - A_n x_n = y_{n+1}."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linsys import (LinearCocycle, TrichotomyData, backward_projected, check_compatible,
                     forward_projected, require_dichotomy, restricted_inverses)
from .seqspace import SeqSpaceKind, WindowSequence, LInfty, matrix_norm, norm_b, vector_norms


def analytic_bound(C: float, lam: float) -> float:
    """Operator-norm bound ``2C (1 + e^-lam) / (1 - e^-lam)`` valid on every admissible space."""
    q = math.exp(-lam)
    return 2.0 * C * (1.0 + q) / (1.0 - q)


@dataclass
class GreenKernel:
    """Green kernel of a trichotomic cocycle on its window.

    Blocks are built on first use and then reused; the cache is a pure memo.
    The third projection family is anchored at ``tri.origin``, clamped into
    the window when the window does not contain it.
    """

    cocycle: LinearCocycle
    tri: TrichotomyData
    norm: str = "max"
    _blocks: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        check_compatible(self.cocycle, self.tri)

    @property
    def n_min(self):
        return self.cocycle.n_min

    @property
    def n_max(self):
        return self.cocycle.n_max

    @property
    def d(self):
        return self.cocycle.d

    @property
    def width(self):
        return self.cocycle.width

    @property
    def origin(self) -> int:
        return min(max(self.tri.origin, self.n_min), self.n_max)

    @property
    def analytic_norm(self) -> float:
        return analytic_bound(self.tri.C, self.tri.lam)

    def blocks(self) -> np.ndarray:
        """All blocks as an array ``K[a, b] = G(n_min + a, n_min + b)``."""
        if self._blocks is None:
            self._blocks = self._build()
        return self._blocks

    def _build(self) -> np.ndarray:
        cyc, tri = self.cocycle, self.tri
        lo, W, d = cyc.n_min, cyc.width, cyc.d
        P = tri.projections
        eye = np.eye(d)
        binv = restricted_inverses(cyc, tri)
        fwd_neg, bwd_neg = P[:, 0], eye - P[:, 0]
        fwd_pos, bwd_pos = eye - P[:, 1], P[:, 1]
        K = np.zeros((W, W, d, d))
        for b in range(W):
            m = lo + b
            if m <= self.origin:
                fwd, bwd = fwd_neg, bwd_neg
            else:
                fwd, bwd = fwd_pos, bwd_pos
            K[b:, b] = forward_projected(cyc, fwd, m)
            if b > 0:
                K[b - 1::-1, b] = -backward_projected(cyc, binv, bwd, m)[1:]
        K.setflags(write=False)
        return K

    def kernel(self, n: int, m: int) -> np.ndarray:
        for k in (n, m):
            if not self.n_min <= k <= self.n_max:
                raise IndexError(f"index {k} outside window [{self.n_min}, {self.n_max}]")
        return self.blocks()[n - self.n_min, m - self.n_min]

    def matrix(self) -> np.ndarray:
        """Finite section of G as a ``(W d) x (W d)`` matrix acting on flattened sequences."""
        K = self.blocks()
        W, d = self.width, self.d
        return K.transpose(0, 2, 1, 3).reshape(W * d, W * d)


def apply_green(gk: GreenKernel, y: WindowSequence) -> WindowSequence:
    """``(G y)_n = sum_m G(n, m) y_m`` over the kernel window.

    ``y`` may live on a sub-window; it is zero-extended.  The result solves
    ``x_{n+1} - A_n x_n = y_{n+1}`` at every ``n`` of the window.
    """
    if y.d != gk.d:
        raise ValueError(f"dimension mismatch: kernel d={gk.d}, sequence d={y.d}")
    yv = y.embed(gk.n_min, gk.n_max).values
    x = np.einsum("abij,bj->ai", gk.blocks(), yv)
    return WindowSequence(gk.n_min, x)


def ae_residual(cocycle: LinearCocycle, x: WindowSequence, y: WindowSequence,
                norm: str = "max") -> np.ndarray:
    """Per-index residual ``||x_{n+1} - A_n x_n - y_{n+1}||`` for ``n`` in ``[n_min, n_max-1]``."""
    xv = x.embed(cocycle.n_min, cocycle.n_max).values
    yv = y.embed(cocycle.n_min, cocycle.n_max).values
    r = xv[1:] - np.einsum("nij,nj->ni", cocycle.matrices, xv[:-1]) - yv[1:]
    return vector_norms(r, norm)


def certified_margin(gk: GreenKernel, ynorm: float, tol: float) -> int:
    """Distance from the window edges beyond which truncation changes G y by less than ``tol``."""
    if ynorm == 0:
        return 0
    C, lam = gk.tri.C, gk.tri.lam
    q = math.exp(-lam)
    k = math.log(max(2.0 * C * ynorm / ((1.0 - q) * tol), 1.0)) / lam
    return int(math.ceil(k))


def check_kernel_bound(gk: GreenKernel) -> float:
    """Largest ratio ``||G(n, m)|| / (2 C e^{-lam |m - n|})`` over the window."""
    K = gk.blocks()
    W = gk.width
    a = np.arange(W)
    gap = np.abs(a[:, None] - a[None, :])
    norms = np.array([[matrix_norm(K[i, j], gk.norm) for j in range(W)] for i in range(W)])
    return float(np.max(norms / (2.0 * gk.tri.C * np.exp(-gk.tri.lam * gap))))


def exact_section_norm(gk: GreenKernel, kind: SeqSpaceKind) -> float | None:
    """Exact norm of the finite section when it has a closed form, else ``None``.

    sup-type spaces with the max state norm reduce to the max absolute row
    sum; l^2 with the euclidean state norm reduces to the spectral norm.
    """
    M = gk.matrix()
    if kind.is_sup and gk.norm == "max":
        return float(np.max(np.sum(np.abs(M), axis=1)))
    if kind.variant == "lp" and kind.p == 2 and gk.norm == "euclidean":
        return float(np.linalg.norm(M, 2))
    return None


def green_norm_estimate(gk: GreenKernel, kind: SeqSpaceKind = LInfty(), trials: int = 16,
                        rng=None) -> tuple[float, float]:
    """Lower and upper bounds for ``||G||`` on the chosen space.

    The upper bound is the analytic one.  The lower bound is the best ratio
    ``||G y|| / ||y||`` over random inputs, inputs sign-aligned with the rows
    of the finite section, and the top singular vector.  When the finite
    section has a closed-form norm the aligned inputs attain it exactly.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng)
    M = gk.matrix()
    W, d = gk.width, gk.d

    def ratio(v):
        den = norm_b(kind, v.reshape(W, d), gk.norm)
        if den == 0:
            return 0.0
        return norm_b(kind, (M @ v).reshape(W, d), gk.norm) / den

    best = 0.0
    rowsum = np.sum(np.abs(M), axis=1)
    for i in np.argsort(rowsum)[::-1][:max(1, trials)]:
        best = max(best, ratio(np.sign(M[i]) + (M[i] == 0) * 0.0))
    for _ in range(trials):
        best = max(best, ratio(rng.standard_normal(W * d)))
        best = max(best, ratio(rng.choice([-1.0, 1.0], W * d)))
    _, _, vt = np.linalg.svd(M)
    best = max(best, ratio(vt[0]))
    return best, gk.analytic_norm


def unique_bounded_solution_check(gk: GreenKernel, y: WindowSequence, x: WindowSequence,
                                  tol: float = 1e-8, kind: SeqSpaceKind = LInfty()) -> bool:
    """Whether ``x`` is the bounded solution ``G y`` (only meaningful under a dichotomy)."""
    require_dichotomy(gk.tri, "unique bounded solution check")
    yn = max(norm_b(kind, y, gk.norm), 1.0)
    res = ae_residual(gk.cocycle, x, y, gk.norm)
    if np.max(res) > tol * yn:
        return False
    gy = apply_green(gk, y)
    return norm_b(kind, x.embed(gk.n_min, gk.n_max) - gy, gk.norm) <= tol * yn
