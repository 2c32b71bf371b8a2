"""Admissible sequence-space norms on windowed vector sequences.

A :class:`WindowSequence` stores one vector per integer index in a window
``[n_min, n_max]``.  Norms follow the usual two-level recipe: take the state
norm of every entry, then measure the resulting scalar sequence in l^inf,
c_0 or l^p.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

VECTOR_NORMS = ("max", "euclidean")


@dataclass(frozen=True)
class SeqSpaceKind:
    """Which admissible sequence space to measure in.

    ``variant`` is one of ``"linf"``, ``"lp"`` or ``"c0"``.  ``c0`` shares the
    sup formula with ``linf``; on a finite window the two coincide.
    """

    variant: str = "linf"
    p: float = math.inf

    def __post_init__(self):
        if self.variant not in ("linf", "lp", "c0"):
            raise ValueError(f"unknown sequence space variant {self.variant!r}")
        if self.variant == "lp":
            if not (self.p >= 1) or math.isinf(self.p):
                raise ValueError(f"l^p requires finite p >= 1, got {self.p}")

    @property
    def is_sup(self) -> bool:
        return self.variant in ("linf", "c0")

    def __str__(self):
        return f"Lp({self.p:g})" if self.variant == "lp" else {"linf": "LInfty", "c0": "C0"}[self.variant]


def LInfty() -> SeqSpaceKind:
    return SeqSpaceKind("linf")


def C0() -> SeqSpaceKind:
    return SeqSpaceKind("c0")


def Lp(p: float) -> SeqSpaceKind:
    return SeqSpaceKind("lp", float(p))


def parse_kind(text: str) -> SeqSpaceKind:
    """Parse ``"linf"``, ``"c0"``, ``"lp:2"`` or ``"l2"`` style names."""
    t = text.strip().lower()
    if t in ("linf", "linfty", "l_inf", "inf"):
        return LInfty()
    if t == "c0":
        return C0()
    if t.startswith("lp:"):
        return Lp(float(t[3:]))
    if t.startswith("lp(") and t.endswith(")"):
        return Lp(float(t[3:-1]))
    if t.startswith("l") and t[1:].replace(".", "", 1).isdigit():
        return Lp(float(t[1:]))
    raise ValueError(f"cannot parse sequence space kind {text!r}")


@dataclass(frozen=True)
class WindowSequence:
    """Vector-valued sequence on the integer window ``[n_min, n_max]``.

    ``values`` has shape ``(n_max - n_min + 1, d)``.  Scalar sequences use
    ``d = 1``; a 1-D array passed in is promoted to that shape.
    """

    n_min: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("WindowSequence needs a non-empty (length, d) array")
        if not np.all(np.isfinite(v)):
            raise ValueError("WindowSequence values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "n_min", int(self.n_min))
        object.__setattr__(self, "values", v)

    @property
    def n_max(self) -> int:
        return self.n_min + self.values.shape[0] - 1

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.values.shape[0]

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.n_min, self.n_max + 1)

    def __getitem__(self, n: int) -> np.ndarray:
        if not self.n_min <= n <= self.n_max:
            raise IndexError(f"index {n} outside window [{self.n_min}, {self.n_max}]")
        return self.values[n - self.n_min]

    def shifted(self, offset: int) -> "WindowSequence":
        return WindowSequence(self.n_min + offset, self.values)

    def restrict(self, lo: int, hi: int) -> "WindowSequence":
        if lo < self.n_min or hi > self.n_max or lo > hi:
            raise IndexError(f"[{lo}, {hi}] not inside [{self.n_min}, {self.n_max}]")
        return WindowSequence(lo, self.values[lo - self.n_min: hi - self.n_min + 1])

    def embed(self, lo: int, hi: int) -> "WindowSequence":
        """Zero-extend (or restrict) to the window ``[lo, hi]``."""
        out = np.zeros((hi - lo + 1, self.d))
        a, b = max(lo, self.n_min), min(hi, self.n_max)
        if a <= b:
            out[a - lo: b - lo + 1] = self.values[a - self.n_min: b - self.n_min + 1]
        return WindowSequence(lo, out)

    def __add__(self, other):
        _check_aligned(self, other)
        return WindowSequence(self.n_min, self.values + other.values)

    def __sub__(self, other):
        _check_aligned(self, other)
        return WindowSequence(self.n_min, self.values - other.values)

    def __mul__(self, scalar):
        return WindowSequence(self.n_min, float(scalar) * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return WindowSequence(self.n_min, -self.values)


def _check_aligned(a: WindowSequence, b: WindowSequence):
    if a.n_min != b.n_min or a.values.shape != b.values.shape:
        raise ValueError("sequences live on different windows or dimensions")


def zeros(n_min: int, n_max: int, d: int) -> WindowSequence:
    return WindowSequence(n_min, np.zeros((n_max - n_min + 1, d)))


def vector_norms(values: np.ndarray, vector_norm: str = "max") -> np.ndarray:
    """State norm of every row of ``values``."""
    if vector_norm == "max":
        return np.max(np.abs(values), axis=-1)
    if vector_norm == "euclidean":
        return np.sqrt(np.sum(values * values, axis=-1))
    raise ValueError(f"vector_norm must be one of {VECTOR_NORMS}, got {vector_norm!r}")


def matrix_norm(M: np.ndarray, vector_norm: str = "max") -> float:
    """Operator norm induced by the state norm (max row sum, or spectral)."""
    M = np.asarray(M, dtype=float)
    if vector_norm == "max":
        return float(np.max(np.sum(np.abs(M), axis=-1)))
    if vector_norm == "euclidean":
        return float(np.linalg.norm(M, 2))
    raise ValueError(f"vector_norm must be one of {VECTOR_NORMS}, got {vector_norm!r}")


def scalar_norm(kind: SeqSpaceKind, s) -> float:
    s = np.abs(np.asarray(s, dtype=float).ravel())
    if s.size == 0:
        raise ValueError("norm of an empty window")
    top = float(np.max(s))
    if kind.is_sup or top == 0.0:
        return top
    # scale by the largest entry so powers neither underflow nor overflow
    return top * float(np.sum((s / top) ** kind.p) ** (1.0 / kind.p))


def norm_b(kind: SeqSpaceKind, s, vector_norm: str = "max") -> float:
    """Sequence-space norm ``|| (||x_n||)_n ||_B`` of a window sequence.

    ``s`` may be a :class:`WindowSequence` or a raw ``(length, d)`` array.
    """
    vals = s.values if isinstance(s, WindowSequence) else np.atleast_2d(np.asarray(s, dtype=float))
    if vals.size == 0:
        raise ValueError("norm of an empty window")
    return scalar_norm(kind, vector_norms(vals, vector_norm))


def exp_convolution(s: WindowSequence, lam: float, direction: str = "causal") -> WindowSequence:
    """Exponentially weighted one-sided sums of a scalar sequence.

    causal:      ``s1_n = sum_{m>=0} e^{-lam m} s_{n-m}``
    anticausal:  ``s2_n = sum_{m>=1} e^{-lam m} s_{n+m}``

    Indices outside the window count as zero.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if s.d != 1:
        raise ValueError("exp_convolution acts on scalar sequences (d = 1)")
    x = s.values[:, 0]
    q = math.exp(-lam)
    out = np.empty_like(x)
    if direction == "causal":
        acc = 0.0
        for i in range(len(x)):
            acc = x[i] + q * acc
            out[i] = acc
    elif direction == "anticausal":
        acc = 0.0
        for i in range(len(x) - 1, -1, -1):
            out[i] = q * acc
            acc = x[i] + q * acc
    else:
        raise ValueError(f"direction must be 'causal' or 'anticausal', got {direction!r}")
    return WindowSequence(s.n_min, out)


def convolution_bound(lam: float, direction: str = "causal") -> float:
    """Operator-norm bound of :func:`exp_convolution` on any admissible space."""
    q = math.exp(-lam)
    return 1.0 / (1.0 - q) if direction == "causal" else q / (1.0 - q)


def tail_bound(C: float, lam: float, distance: int) -> float:
    """Size of a tail ``sum_{k>distance} C e^{-lam k}``; used to size windows."""
    return C * math.exp(-lam * (distance + 1)) / (1.0 - math.exp(-lam))


def margin_for(C: float, lam: float, tol: float) -> int:
    """Smallest distance whose tail bound falls below ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    k = math.ceil(math.log(max(C / ((1.0 - math.exp(-lam)) * tol), 1.0)) / lam)
    return max(int(k), 0)


def write_csv(seq: WindowSequence, path, index_name: str = "n"):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([index_name] + [f"x_{i + 1}" for i in range(seq.d)])
        for n, row in zip(seq.indices, seq.values):
            w.writerow([int(n)] + [format(float(v), ".17g") for v in row])


def read_csv(path) -> WindowSequence:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0].strip() != "n":
        raise ValueError(f"{path}: header row starting with 'n' required")
    body = [r for r in rows[1:] if r]
    if not body:
        raise ValueError(f"{path}: no data rows")
    idx = np.array([int(r[0]) for r in body])
    if np.any(np.diff(idx) != 1):
        raise ValueError(f"{path}: indices must be consecutive integers")
    vals = np.array([[float(v) for v in r[1:]] for r in body])
    return WindowSequence(int(idx[0]), vals)
