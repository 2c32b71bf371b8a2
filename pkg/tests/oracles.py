"""Reference computations that share no code with the package."""
import math

import numpy as np

LN2 = math.log(2.0)


def diag_green_matrix(n_min, n_max):
    """Green kernel of diag(1/2, 2) with P1 = diag(1, 0), written out by hand."""
    W = n_max - n_min + 1
    M = np.zeros((2 * W, 2 * W))
    for a in range(W):
        for b in range(W):
            if a >= b:
                M[2 * a, 2 * b] = 0.5 ** (a - b)
            else:
                M[2 * a + 1, 2 * b + 1] = -(0.5 ** (b - a))
    return M


def tent_kernel(n, m):
    """Case table for A_n = 1/2 (n >= 0), 2 (n < 0) with the whole line in the third family."""
    if 0 < m <= n:
        return 2.0 ** (-(n - m))
    if n < m <= 0:
        return -(2.0 ** (-(m - n)))
    return 0.0


def sup_norm_by_vertices(M, d):
    """Sup/max operator norm: evaluate M on the sign vertex aligned with each row."""
    best = 0.0
    for row in M:
        v = np.where(row >= 0, 1.0, -1.0)
        best = max(best, float(np.max(np.abs(M @ v))))
    return best


def bounded_solution(matrices, P1, y):
    """Window solution of x_{n+1} - A_n x_n = y_{n+1} selected by dichotomy boundary rows.

    P1 x at the left end equals P1 y there; (I - P1) x vanishes at the right
    end.  Solved as one dense least-squares problem.
    """
    T, d, _ = matrices.shape
    W = T + 1
    rows, rhs = [], []
    for k in range(T):
        r = np.zeros((d, W * d))
        r[:, k * d:(k + 1) * d] = -matrices[k]
        r[:, (k + 1) * d:(k + 2) * d] = np.eye(d)
        rows.append(r)
        rhs.append(y[k + 1])
    left = np.zeros((d, W * d))
    left[:, :d] = P1[0]
    rows.append(left)
    rhs.append(P1[0] @ y[0])
    right = np.zeros((d, W * d))
    right[:, -d:] = np.eye(d) - P1[-1]
    rows.append(right)
    rhs.append(np.zeros(d))
    x, *_ = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)
    return x.reshape(W, d)


def causal_sum(s, lam):
    """Direct double loop for sum_{m >= 0} e^{-lam m} s_{n-m}."""
    out = np.zeros(len(s))
    for n in range(len(s)):
        out[n] = sum(math.exp(-lam * m) * s[n - m] for m in range(n + 1))
    return out


def anticausal_sum(s, lam):
    out = np.zeros(len(s))
    for n in range(len(s)):
        out[n] = sum(math.exp(-lam * m) * s[n + m] for m in range(1, len(s) - n))
    return out
