"""Finite-section tests for bounded solvability of w_{n+1} - A_n w_n = z_{n+1}.

A cocycle whose inhomogeneous equation has bounded solutions for every
bounded right-hand side admits an exponential trichotomy (two-sided,
invertible case) or a dichotomy (one-sided, inputs with z_0 = 0).  On a
finite window the best one can do is compare min-norm solutions across two
window widths; the verdicts below are heuristic certificates, not proofs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoSolution
from .linsys import LinearCocycle
from .seqspace import LInfty, SeqSpaceKind, WindowSequence, norm_b

NULL_RTOL = 1e-6
RATIO_THRESHOLD = 1.25


@dataclass(frozen=True)
class FiniteSection:
    """The map ``(w_n) -> (w_{n+1} - A_n w_n)`` on ``[lo, hi]`` as a ``(W d) x ((W+1) d)`` matrix."""

    cocycle: LinearCocycle
    lo: int
    hi: int

    def __post_init__(self):
        if not (self.cocycle.n_min <= self.lo < self.hi <= self.cocycle.n_max):
            raise ValueError(f"section [{self.lo}, {self.hi}] not inside the cocycle window")

    @property
    def transitions(self) -> int:
        return self.hi - self.lo

    def matrix(self) -> np.ndarray:
        W, d = self.transitions, self.cocycle.d
        L = np.zeros((W * d, (W + 1) * d))
        for k in range(W):
            r = slice(k * d, (k + 1) * d)
            L[r, k * d:(k + 1) * d] = -self.cocycle.A(self.lo + k)
            L[r, (k + 1) * d:(k + 2) * d] = np.eye(d)
        return L

    def apply(self, w: WindowSequence) -> WindowSequence:
        v = w.restrict(self.lo, self.hi).values.ravel()
        return WindowSequence(self.lo + 1, (self.matrix() @ v).reshape(self.transitions, -1))


def solve_min_norm(section: FiniteSection, z: WindowSequence, tol: float = 1e-9) -> WindowSequence:
    """Minimum-euclidean-norm ``w`` on ``[lo, hi]`` with ``w_{n+1} - A_n w_n = z_{n+1}``.

    ``z`` lives on ``[lo + 1, hi]`` (shorter windows are zero-extended).
    """
    d = section.cocycle.d
    zv = z.embed(section.lo + 1, section.hi).values.ravel()
    L = section.matrix()
    w, *_ = np.linalg.lstsq(L, zv, rcond=None)
    res = np.linalg.norm(L @ w - zv)
    if res > tol * max(1.0, np.linalg.norm(zv)):
        raise NoSolution(f"finite section is inconsistent: residual {res:.3g}")
    return WindowSequence(section.lo, w.reshape(-1, d))


@dataclass
class DetectionReport:
    admissible: bool
    norm_estimate: float
    kernel_dimension: int
    verdict: str
    ratio: float
    boundary: str
    widths: tuple
    estimates: list
    trial_norms: list = field(default_factory=list)
    invertible: bool = True
    smallest_singular_values: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "admissible": self.admissible,
            "verdict": self.verdict,
            "norm_estimate": self.norm_estimate,
            "kernel_dimension": self.kernel_dimension,
            "growth_ratio": self.ratio,
            "boundary": self.boundary,
            "widths": list(self.widths),
            "estimates": list(self.estimates),
            "trial_norms": [list(t) for t in self.trial_norms],
            "invertible": self.invertible,
            "smallest_singular_values": list(self.smallest_singular_values),
            "notes": list(self.notes),
        }


def _windows(cocycle: LinearCocycle, widths, boundary):
    out = []
    for w in widths:
        if w > cocycle.width - 1:
            raise ValueError(f"width {w} exceeds the {cocycle.width - 1} transitions available")
        if boundary == "zero_at_origin":
            out.append((cocycle.n_min, cocycle.n_min + w))
        else:
            mid = (cocycle.n_min + cocycle.n_max) // 2
            lo = max(cocycle.n_min, mid - w // 2)
            lo = min(lo, cocycle.n_max - w)
            out.append((lo, lo + w))
    return out


def _sup_estimate(P: np.ndarray, d: int, kind, norm, trials, rng):
    """Largest ``||P z|| / ||z||`` over random and sign-aligned unit inputs."""
    n_in = P.shape[1]
    vals = []

    def ratio(z):
        den = norm_b(kind, z.reshape(-1, d), norm)
        return norm_b(kind, (P @ z).reshape(-1, d), norm) / den if den > 0 else 0.0

    for _ in range(trials):
        vals.append(ratio(rng.uniform(-1.0, 1.0, n_in)))
        vals.append(ratio(rng.choice([-1.0, 1.0], n_in)))
    rowsum = np.sum(np.abs(P), axis=1)
    for i in np.argsort(rowsum)[::-1][:max(1, trials)]:
        s = np.sign(P[i])
        s[s == 0] = 1.0
        vals.append(ratio(s))
    return max(vals), vals


def _nullity(section: FiniteSection, boundary: str, penalty: float, rtol: float):
    L = section.matrix()
    d = section.cocycle.d
    n_cols = L.shape[1]
    rows = [L]
    if boundary == "free":
        left = np.zeros((d, n_cols))
        left[:, :d] = penalty * np.eye(d)
        rows.append(left)
    right = np.zeros((d, n_cols))
    right[:, -d:] = penalty * np.eye(d)
    rows.append(right)
    s = np.linalg.svd(np.vstack(rows), compute_uv=False)
    return int(np.sum(s < rtol * s[0])), s[-min(len(s), 2 * d):].tolist()


def admissibility_probe(cocycle: LinearCocycle, kind: SeqSpaceKind = LInfty(), trials: int = 32,
                        boundary: str = "free", widths=(40, 80), rng=None,
                        ratio_threshold: float = RATIO_THRESHOLD, null_rtol: float = NULL_RTOL,
                        penalty: float = 1.0, norm: str = "max") -> DetectionReport:
    """Empirical bounded-solvability test on two window widths.

    ``boundary="free"`` uses windows centred in the cocycle window (two-sided
    criterion).  ``boundary="zero_at_origin"`` anchors the windows at
    ``n_min`` and leaves ``w_{n_min}`` free, which is the one-sided criterion
    for inputs vanishing at the origin.
    """
    if not kind.is_sup:
        raise ValueError("admissibility probing is defined for sup-type spaces only")
    if boundary not in ("free", "zero_at_origin"):
        raise ValueError(f"boundary must be 'free' or 'zero_at_origin', got {boundary!r}")
    rng = np.random.default_rng(rng)
    widths = tuple(sorted(widths))
    sv = np.linalg.svd(cocycle.matrices, compute_uv=False)
    invertible = bool(np.all(sv[:, -1] > 1e-12 * np.maximum(sv[:, 0], 1e-300)))
    if not invertible:
        return DetectionReport(False, math.nan, 0, "neither", math.nan, boundary, widths, [],
                               invertible=False,
                               notes=["noninvertible A_n: detection not attempted"])
    estimates, trial_norms = [], []
    sections = [FiniteSection(cocycle, lo, hi) for lo, hi in _windows(cocycle, widths, boundary)]
    for sec in sections:
        P = np.linalg.pinv(sec.matrix())
        est, vals = _sup_estimate(P, cocycle.d, kind, norm, trials, rng)
        estimates.append(est)
        trial_norms.append(vals)
    ratio = estimates[-1] / estimates[0] if estimates[0] > 0 else math.inf
    admissible = bool(ratio < ratio_threshold)
    nullity, tail = _nullity(sections[-1], boundary, penalty, null_rtol)
    if not admissible:
        verdict = "neither"
    elif boundary == "zero_at_origin" or nullity == 0:
        verdict = "dichotomy-like"
    else:
        verdict = "trichotomy-like"
    notes = ["heuristic finite-section certificate, not a proof"]
    if boundary == "zero_at_origin":
        notes.append("one-sided: kernel_dimension counts forward-decaying solutions (stable rank)")
    return DetectionReport(admissible, estimates[-1], nullity, verdict, ratio, boundary, widths,
                           estimates, trial_norms, True, tail, notes)
