"""Nonautonomous linear systems x_{n+1} = A_n x_n on a finite window.

Holds the cocycle, the trichotomy projections ``(P1, P2, P3)_n`` with their
constants ``(C, lam)``, the forward/backward transition maps and the
numerical check of the trichotomy axioms.

Backward maps are only ever formed on ``Ker P1`` and always as a product of
one-step restricted inverses: inverting a long forward product directly
would square the conditioning at every step.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import DichotomyRequired, HyperbolicityError, SingularRestriction
from .seqspace import matrix_norm

EPS = np.finfo(float).eps
COND_LIMIT = 1.0 / math.sqrt(EPS)
DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class LinearCocycle:
    """Matrices ``A_n`` for ``n`` in ``[n_min, n_max - 1]``.

    The state window is ``[n_min, n_max]``; there is one matrix fewer than
    there are states.
    """

    n_min: int
    matrices: np.ndarray = field(repr=False)
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        M = np.array(self.matrices, dtype=float)
        if M.ndim != 3 or M.shape[0] < 1 or M.shape[1] != M.shape[2]:
            raise ValueError("matrices must have shape (count, d, d) with count >= 1")
        if not np.all(np.isfinite(M)):
            raise ValueError("cocycle matrices must be finite")
        M.setflags(write=False)
        object.__setattr__(self, "n_min", int(self.n_min))
        object.__setattr__(self, "matrices", M)

    @classmethod
    def constant(cls, A, n_min: int, n_max: int) -> "LinearCocycle":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return cls(n_min, np.broadcast_to(A, (n_max - n_min,) + A.shape))

    @classmethod
    def from_function(cls, fn, n_min: int, n_max: int) -> "LinearCocycle":
        return cls(n_min, np.array([np.atleast_2d(fn(n)) for n in range(n_min, n_max)], dtype=float))

    @property
    def n_max(self) -> int:
        return self.n_min + self.matrices.shape[0]

    @property
    def d(self) -> int:
        return self.matrices.shape[1]

    @property
    def width(self) -> int:
        """Number of states in the window."""
        return self.matrices.shape[0] + 1

    def A(self, n: int) -> np.ndarray:
        if not self.n_min <= n < self.n_max:
            raise IndexError(f"A_{n} not defined on [{self.n_min}, {self.n_max - 1}]")
        return self.matrices[n - self.n_min]

    def product(self, m: int, n: int) -> np.ndarray:
        """Forward product ``A_{m-1} ... A_n`` for ``m >= n`` (identity if equal)."""
        if m < n:
            raise ValueError("forward product needs m >= n")
        self._check_index(m)
        self._check_index(n)
        key = (m, n)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        P = np.eye(self.d)
        for k in range(n, m):
            P = self.matrices[k - self.n_min] @ P
        P.setflags(write=False)
        self._cache[key] = P
        return P

    def restrict(self, lo: int, hi: int) -> "LinearCocycle":
        self._check_index(lo)
        self._check_index(hi)
        return LinearCocycle(lo, self.matrices[lo - self.n_min: hi - self.n_min])

    def _check_index(self, n):
        if not self.n_min <= n <= self.n_max:
            raise IndexError(f"index {n} outside window [{self.n_min}, {self.n_max}]")


@dataclass(frozen=True)
class TrichotomyData:
    """Projection triples on ``[n_min, n_max]`` plus constants ``C`` and ``lam``.

    ``projections`` has shape ``(width, 3, d, d)``.  ``origin`` is the index
    the third family decays away from (0 in the two-sided theory).
    """

    n_min: int
    projections: np.ndarray = field(repr=False)
    C: float
    lam: float
    origin: int = 0

    def __post_init__(self):
        P = np.array(self.projections, dtype=float)
        if P.ndim != 4 or P.shape[1] != 3 or P.shape[2] != P.shape[3]:
            raise ValueError("projections must have shape (width, 3, d, d)")
        if not self.C > 0 or not self.lam > 0:
            raise ValueError("trichotomy constants C and lambda must be positive")
        P.setflags(write=False)
        object.__setattr__(self, "n_min", int(self.n_min))
        object.__setattr__(self, "projections", P)
        object.__setattr__(self, "C", float(self.C))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "origin", int(self.origin))

    @classmethod
    def dichotomy(cls, P1, n_min: int, n_max: int, C: float, lam: float, origin: int = 0):
        """Dichotomy data from stable projections (one matrix, or one per index)."""
        P1 = np.asarray(P1, dtype=float)
        width = n_max - n_min + 1
        if P1.ndim == 2:
            P1 = np.broadcast_to(P1, (width,) + P1.shape)
        if P1.shape[0] != width:
            raise ValueError("need one projection per index of the window")
        eye = np.eye(P1.shape[-1])
        P = np.stack([P1, eye - P1, np.zeros_like(P1)], axis=1)
        return cls(n_min, P, C, lam, origin)

    @classmethod
    def constant(cls, triple, n_min: int, n_max: int, C: float, lam: float, origin: int = 0):
        triple = np.asarray(triple, dtype=float)
        width = n_max - n_min + 1
        return cls(n_min, np.broadcast_to(triple, (width,) + triple.shape), C, lam, origin)

    @property
    def n_max(self) -> int:
        return self.n_min + self.projections.shape[0] - 1

    @property
    def d(self) -> int:
        return self.projections.shape[-1]

    def P(self, i: int, n: int) -> np.ndarray:
        """Projection ``P^i_n`` with ``i`` in {1, 2, 3}."""
        return self.projections[n - self.n_min, i - 1]

    def is_dichotomy(self, tol: float = DEFAULT_TOL) -> bool:
        return bool(np.max(np.abs(self.projections[:, 2]), initial=0.0) <= tol)

    def with_constants(self, C=None, lam=None) -> "TrichotomyData":
        return TrichotomyData(self.n_min, self.projections, self.C if C is None else C,
                              self.lam if lam is None else lam, self.origin)

    def restrict(self, lo: int, hi: int) -> "TrichotomyData":
        return TrichotomyData(lo, self.projections[lo - self.n_min: hi - self.n_min + 1],
                              self.C, self.lam, self.origin)


def check_compatible(cocycle: LinearCocycle, tri: TrichotomyData):
    if (cocycle.n_min, cocycle.n_max, cocycle.d) != (tri.n_min, tri.n_max, tri.d):
        raise ValueError(
            f"cocycle window [{cocycle.n_min}, {cocycle.n_max}] (d={cocycle.d}) does not match "
            f"projection window [{tri.n_min}, {tri.n_max}] (d={tri.d})")


def _range_basis(Q: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    U, s, _ = np.linalg.svd(Q)
    r = int(np.sum(s > rtol * max(1.0, s[0] if s.size else 0.0)))
    return U[:, :r]


def restricted_inverse(A: np.ndarray, P1_here: np.ndarray, P1_next: np.ndarray):
    """One-step inverse of ``A : Ker P1_here -> Ker P1_next``.

    Returns ``(B, cond)`` where ``B`` inverts the restriction on
    ``Ker P1_next`` and annihilates ``range(P1_next)``.  Raises
    :class:`SingularRestriction` when the restriction is not invertible.
    """
    d = A.shape[0]
    eye = np.eye(d)
    V = _range_basis(eye - P1_here)
    r = V.shape[1]
    r_next = _range_basis(eye - P1_next).shape[1]
    if r != r_next:
        raise SingularRestriction(f"dim Ker P1 changes from {r} to {r_next} across one step")
    if r == 0:
        return np.zeros((d, d)), 1.0
    M = A @ V
    s = np.linalg.svd(M, compute_uv=False)
    cond = math.inf if s[-1] == 0 else float(s[0] / s[-1])
    if cond > COND_LIMIT:
        raise SingularRestriction(f"restriction to Ker P1 has condition number {cond:.3g}")
    return V @ np.linalg.pinv(M) @ (eye - P1_next), cond


def restricted_inverses(cocycle: LinearCocycle, tri: TrichotomyData) -> np.ndarray:
    """Stack of one-step backward maps ``B_k`` for every ``k`` in the cocycle window."""
    check_compatible(cocycle, tri)
    out = np.empty_like(cocycle.matrices)
    for k in range(cocycle.n_min, cocycle.n_max):
        out[k - cocycle.n_min], _ = restricted_inverse(cocycle.A(k), tri.P(1, k), tri.P(1, k + 1))
    return out


def transition(cocycle: LinearCocycle, tri: TrichotomyData, m: int, n: int) -> np.ndarray:
    """Transition map from index ``n`` to index ``m``.

    For ``m >= n`` this is the forward product.  For ``m < n`` it is the
    inverse of the forward map restricted to ``Ker P1_m``, returned as a
    matrix that acts on ``Ker P1_n`` and kills ``range(P1_n)``.
    """
    if m >= n:
        return cocycle.product(m, n)
    check_compatible(cocycle, tri)
    X = np.eye(cocycle.d)
    for k in range(n - 1, m - 1, -1):
        B, _ = restricted_inverse(cocycle.A(k), tri.P(1, k), tri.P(1, k + 1))
        X = B @ X
    return X


def forward_projected(cocycle: LinearCocycle, proj: np.ndarray, m: int) -> np.ndarray:
    """``A(n, m) Pi_m`` for ``n = m .. n_max``, re-projecting with ``Pi_n`` each step.

    ``proj`` is a per-index stack of invariant projections.  The re-projection
    is a no-op in exact arithmetic and stops rounding error from leaking into
    complementary (growing) directions.
    """
    lo = cocycle.n_min
    out = np.empty((cocycle.n_max - m + 1, cocycle.d, cocycle.d))
    X = proj[m - lo].copy()
    out[0] = X
    for j, n in enumerate(range(m, cocycle.n_max), start=1):
        X = proj[n + 1 - lo] @ (cocycle.matrices[n - lo] @ X)
        out[j] = X
    return out


def backward_projected(cocycle: LinearCocycle, binv: np.ndarray, proj: np.ndarray, m: int) -> np.ndarray:
    """``A(n, m) Pi_m`` for ``n = m, m-1, .. n_min`` using the backward steps ``binv``.

    ``Pi`` must project into ``Ker P1``.  Row ``j`` of the result is index ``m - j``.
    """
    lo = cocycle.n_min
    out = np.empty((m - lo + 1, cocycle.d, cocycle.d))
    X = proj[m - lo].copy()
    out[0] = X
    for j, n in enumerate(range(m - 1, lo - 1, -1), start=1):
        X = proj[n - lo] @ (binv[n - lo] @ X)
        out[j] = X
    return out


@dataclass
class VerificationReport:
    mode: str
    max_violation: float
    max_abs_violation: float
    worst_pair: tuple
    fitted_C: float
    passes: bool
    tolerance: float
    violations: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "passes": self.passes,
            "tolerance": self.tolerance,
            "max_violation": self.max_violation,
            "max_abs_violation": self.max_abs_violation,
            "worst_pair": {"m": self.worst_pair[0], "n": self.worst_pair[1], "axiom": self.worst_pair[2]},
            "fitted_C": self.fitted_C,
            "violations_by_axiom": dict(self.violations),
            "violated_axioms": sorted(k for k, v in self.violations.items() if v > self.tolerance),
            "notes": list(self.notes),
        }


class _Tracker:
    def __init__(self):
        self.rel = 0.0
        self.abs = 0.0
        self.worst = (None, None, None)
        self.by_axiom = {}

    def add(self, rel, absv, m, n, axiom):
        self.by_axiom[axiom] = max(self.by_axiom.get(axiom, 0.0), rel)
        if rel > self.rel or self.worst[2] is None and rel >= self.rel:
            self.rel, self.worst = rel, (m, n, axiom)
        self.abs = max(self.abs, absv)


def _check_algebra(cocycle, tri, norm, tr: _Tracker):
    d = tri.d
    eye = np.eye(d)
    for n in range(tri.n_min, tri.n_max + 1):
        Ps = [tri.P(i, n) for i in (1, 2, 3)]
        r = matrix_norm(Ps[0] + Ps[1] + Ps[2] - eye, norm)
        tr.add(r, r, n, n, "1:partition")
        for i in range(3):
            scale = max(1.0, matrix_norm(Ps[i], norm) ** 2)
            r = matrix_norm(Ps[i] @ Ps[i] - Ps[i], norm)
            tr.add(r / scale, r, n, n, "0:idempotent")
            for j in range(3):
                if i != j:
                    r = matrix_norm(Ps[i] @ Ps[j], norm)
                    scale = max(1.0, matrix_norm(Ps[i], norm) * matrix_norm(Ps[j], norm))
                    tr.add(r / scale, r, n, n, "2:annihilation")
    for n in range(cocycle.n_min, cocycle.n_max):
        A = cocycle.A(n)
        for i in (1, 2, 3):
            r = matrix_norm(tri.P(i, n + 1) @ A - A @ tri.P(i, n), norm)
            scale = max(1.0, matrix_norm(A, norm) * max(matrix_norm(tri.P(i, n), norm),
                                                      matrix_norm(tri.P(i, n + 1), norm)))
            tr.add(r / scale, r, n + 1, n, "3:commutation")
        try:
            _, cond = restricted_inverse(A, tri.P(1, n), tri.P(1, n + 1))
            tr.add(0.0, 0.0, n + 1, n, "4:invertibility")
        except SingularRestriction:
            tr.add(math.inf, math.inf, n + 1, n, "4:invertibility")


def _literal_norms(cocycle, tri, norm):
    """Yield ``(m, n, axiom, ||A(m,n) P^i_n||, gap)`` for every pair in the literal axioms."""
    lo, hi = cocycle.n_min, cocycle.n_max
    binv = restricted_inverses(cocycle, tri)
    P = tri.projections
    for i, axiom in ((0, "5"), (2, "7a")):
        proj = P[:, i]
        for n in range(lo, hi + 1):
            blocks = forward_projected(cocycle, proj, n)
            for j, X in enumerate(blocks):
                yield n + j, n, axiom, matrix_norm(X, norm), j
    for i, axiom in ((1, "6"), (2, "7b")):
        proj = P[:, i]
        for n in range(lo, hi + 1):
            blocks = backward_projected(cocycle, binv, proj, n)
            for j, X in enumerate(blocks):
                yield n - j, n, axiom, matrix_norm(X, norm), j


def _kernel_norms(cocycle, tri, norm):
    from .green import GreenKernel

    gk = GreenKernel(cocycle, tri, norm=norm)
    blocks = gk.blocks()
    lo = cocycle.n_min
    W = blocks.shape[0]
    for a in range(W):
        for b in range(W):
            yield lo + a, lo + b, "kernel", matrix_norm(blocks[a, b], norm), abs(a - b)


def verify_trichotomy(cocycle: LinearCocycle, tri: TrichotomyData, mode: str = "kernel",
                      tol: float = DEFAULT_TOL, norm: str = "max") -> VerificationReport:
    """Check the trichotomy axioms over every pair of window indices.

    ``mode="literal"`` tests the decay estimates exactly as stated for all
    pairs, including the third family in both time directions across the
    origin.  ``mode="kernel"`` instead tests the Green-kernel decay
    ``||G(n, m)|| <= 2 C e^{-lam |m - n|}``, which is what the shadowing
    machinery consumes.  Both modes check the algebraic axioms 1-4.
    """
    if mode not in ("literal", "kernel"):
        raise ValueError(f"mode must be 'literal' or 'kernel', got {mode!r}")
    check_compatible(cocycle, tri)
    tr = _Tracker()
    notes = []
    _check_algebra(cocycle, tri, norm, tr)
    if tr.by_axiom.get("4:invertibility", 0.0) == math.inf:
        notes.append("restricted inverse is singular somewhere; decay estimates skipped")
        fitted = math.inf
    else:
        factor = 1.0 if mode == "literal" else 2.0
        gen = _literal_norms if mode == "literal" else _kernel_norms
        fitted = 0.0
        for m, n, axiom, val, gap in gen(cocycle, tri, norm):
            w = math.exp(-tri.lam * gap)
            bound = factor * tri.C * w
            fitted = max(fitted, val / (factor * w))
            excess = max(0.0, val - bound)
            tr.add(excess / bound, excess, m, n, axiom)
    if mode == "literal" and not tri.is_dichotomy():
        notes.append("literal third-family estimates are applied across the origin; "
                     "kernel mode is the certification used by the solvers")
    passes = tr.rel <= tol
    return VerificationReport(mode, tr.rel, tr.abs, tr.worst, fitted, bool(passes), tol,
                              tr.by_axiom, notes)


def fit_constants(cocycle: LinearCocycle, tri: TrichotomyData, lam: float,
                  mode: str = "literal", norm: str = "max") -> float:
    """Smallest ``C`` for which the decay estimates hold with rate ``lam`` on the window.

    Only the projections of ``tri`` are used; its own constants are ignored.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    check_compatible(cocycle, tri)
    factor = 1.0 if mode == "literal" else 2.0
    gen = {"literal": _literal_norms, "kernel": _kernel_norms}[mode]
    C = 0.0
    for _, _, _, val, gap in gen(cocycle, tri, norm):
        C = max(C, val * math.exp(lam * gap) / factor)
    return C


def spectral_split(A, margin: float = 1e-9):
    """Projection onto the stable subspace of a hyperbolic matrix along the unstable one.

    Returns ``(P_stable, rate)`` where ``rate`` is the smallest gap
    ``|log |mu||`` over the eigenvalues.  Raises :class:`HyperbolicityError`
    if an eigenvalue lies within ``margin`` of the unit circle.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    mu = np.linalg.eigvals(A)
    mods = np.abs(mu)
    if np.any(mods == 0):
        raise HyperbolicityError("matrix is singular")
    if np.any(np.abs(mods - 1.0) <= margin):
        raise HyperbolicityError(f"eigenvalue on the unit circle: moduli {np.sort(mods)}")
    d = A.shape[0]
    ks = int(np.sum(mods < 1.0))
    if ks == 0:
        return np.zeros((d, d)), float(np.min(np.log(mods)))
    if ks == d:
        return np.eye(d), float(np.min(-np.log(mods)))
    _, Qs, _ = scipy.linalg.schur(A, sort="iuc")
    _, Qu, _ = scipy.linalg.schur(A, sort="ouc")
    V = np.hstack([Qs[:, :ks], Qu[:, : d - ks]])
    Vinv = np.linalg.inv(V)
    P = V[:, :ks] @ Vinv[:ks]
    return P, float(np.min(np.abs(np.log(mods))))


def constant_dichotomy(A, n_min: int, n_max: int, lam: float | None = None,
                       norm: str = "max") -> tuple[LinearCocycle, TrichotomyData]:
    """Cocycle and fitted dichotomy data for an autonomous hyperbolic system."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    P, rate = spectral_split(A)
    lam = rate if lam is None else lam
    cocycle = LinearCocycle.constant(A, n_min, n_max)
    tri = TrichotomyData.dichotomy(P, n_min, n_max, 1.0, lam)
    C = fit_constants(cocycle, tri, lam, norm=norm)
    return cocycle, tri.with_constants(C=max(C, 1e-300))


def require_dichotomy(tri: TrichotomyData, what: str):
    if not tri.is_dichotomy():
        raise DichotomyRequired(f"{what} requires a dichotomy (P3 = 0)")


# -- structured-text I/O -------------------------------------------------

def _expand(spec, n_min: int, count: int, name: str):
    """Expand a list / {"constant": X} / {"piecewise": [...]} spec to ``count`` entries."""
    if isinstance(spec, dict):
        if set(spec) == {"constant"}:
            return [spec["constant"]] * count
        if set(spec) == {"piecewise"}:
            out = [None] * count
            for piece in spec["piecewise"]:
                extra = set(piece) - {"from", "to", "value"}
                if extra:
                    raise ValueError(f"{name}: unknown piecewise keys {sorted(extra)}")
                a = piece.get("from", n_min)
                b = piece.get("to", n_min + count - 1)
                for n in range(max(a, n_min), min(b, n_min + count - 1) + 1):
                    out[n - n_min] = piece["value"]
            if any(v is None for v in out):
                raise ValueError(f"{name}: piecewise specification leaves indices uncovered")
            return out
        raise ValueError(f"{name}: expected a list, {{'constant': ...}} or {{'piecewise': [...]}}")
    if len(spec) != count:
        raise ValueError(f"{name}: expected {count} entries, got {len(spec)}")
    return list(spec)


SYSTEM_KEYS = {"d", "n_min", "n_max", "matrices", "projections", "C", "lambda", "origin"}


def system_from_dict(data: dict):
    """Build ``(cocycle, tri_or_None)`` from a parsed system description."""
    extra = set(data) - SYSTEM_KEYS
    if extra:
        raise ValueError(f"unknown system keys: {sorted(extra)}")
    d, lo, hi = int(data["d"]), int(data["n_min"]), int(data["n_max"])
    if hi <= lo:
        raise ValueError("system window needs n_max > n_min")
    mats = np.array(_expand(data["matrices"], lo, hi - lo, "matrices"), dtype=float)
    mats = mats.reshape(hi - lo, d, d)
    cocycle = LinearCocycle(lo, mats)
    if "projections" not in data:
        return cocycle, None
    raw = _expand(data["projections"], lo, hi - lo + 1, "projections")
    triples = []
    for entry in raw:
        e = np.array(entry, dtype=float).reshape(-1, d, d)
        if e.shape[0] == 2:
            e = np.concatenate([e, np.zeros((1, d, d))])
        if e.shape[0] != 3:
            raise ValueError("each projection entry needs 2 (dichotomy) or 3 matrices")
        triples.append(e)
    tri = TrichotomyData(lo, np.array(triples), float(data["C"]), float(data["lambda"]),
                         int(data.get("origin", 0)))
    return cocycle, tri


def system_to_dict(cocycle: LinearCocycle, tri: TrichotomyData | None = None) -> dict:
    out = {"d": cocycle.d, "n_min": cocycle.n_min, "n_max": cocycle.n_max,
           "matrices": cocycle.matrices.tolist()}
    if tri is not None:
        out.update(projections=tri.projections.tolist(), C=tri.C, **{"lambda": tri.lam},
                   origin=tri.origin)
    return out


def load_system(path):
    return system_from_dict(json.loads(Path(path).read_text()))
