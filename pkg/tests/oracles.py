"""Independent reference implementations used only by the tests.

Nothing here imports package internals; each oracle recomputes its quantity
the slow, obvious way.
"""

from __future__ import annotations

import decimal
from fractions import Fraction

import numpy as np


def auc_pairs(y, s) -> float:
    """Probability a random positive outscores a random negative, ties = 1/2."""
    pos = [v for v, t in zip(s, y) if t == 1]
    neg = [v for v, t in zip(s, y) if t == 0]
    wins = Fraction(0)
    for a in pos:
        for b in neg:
            if a > b:
                wins += 1
            elif a == b:
                wins += Fraction(1, 2)
    return float(wins / (len(pos) * len(neg)))


def vif_lstsq(X: np.ndarray, j: int) -> float:
    """VIF of column j via an intercept-augmented least-squares fit (numpy.linalg.lstsq)."""
    y = X[:, j]
    A = np.column_stack([np.ones(len(X)), np.delete(X, j, axis=1)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / sst
    return float("inf") if r2 >= 1.0 - 1e-12 else 1.0 / (1.0 - r2)


def corr_two_pass(a: np.ndarray, b: np.ndarray) -> float:
    ma = sum(a) / len(a)
    mb = sum(b) / len(b)
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    return cov / (va * vb) ** 0.5


def knn_scan(points: np.ndarray, q: int, k: int, pool=None) -> list[int]:
    pool = range(len(points)) if pool is None else sorted(set(int(i) for i in pool))
    cand = [(float(((points[i] - points[q]) ** 2).sum()), i) for i in pool if i != q]
    cand.sort()
    return [i for _, i in cand[:k]]


def on_some_segment(p: np.ndarray, endpoints: np.ndarray, tol: float = 1e-9) -> bool:
    """True when p = a + lam (b - a) for some pair of rows a, b and lam in [0, 1]."""
    for i in range(len(endpoints)):
        a = endpoints[i]
        for j in range(len(endpoints)):
            if i == j:
                continue
            d = endpoints[j] - a
            nn = float(d @ d)
            lam = 0.0 if nn == 0 else float((p - a) @ d) / nn
            if -tol <= lam <= 1 + tol and np.max(np.abs(a + lam * d - p)) <= tol:
                return True
    return False


def logistic_loss(y: float, f: float) -> float:
    return float(np.logaddexp(0.0, f) - y * f)


def finite_diff(fn, x: float, h: float = 1e-5) -> tuple[float, float]:
    """Central first and second differences."""
    g = (fn(x + h) - fn(x - h)) / (2 * h)
    hh = (fn(x + h) - 2 * fn(x) + fn(x - h)) / (h * h)
    return g, hh


def logistic_fd_decimal(y: float, f: float, h: str = "1e-6") -> tuple[float, float]:
    """Central differences of the logistic loss evaluated with 50 significant digits.

    Float64 second differences lose about eps/h**2 to cancellation; carrying the
    loss in extended precision leaves only the O(h**2) truncation term.
    """
    with decimal.localcontext() as ctx:
        ctx.prec = 50
        yd, fd, hd = decimal.Decimal(y), decimal.Decimal(f), decimal.Decimal(h)

        def loss(z):
            return (1 + z.exp()).ln() - yd * z

        up, mid, down = loss(fd + hd), loss(fd), loss(fd - hd)
        return float((up - down) / (2 * hd)), float((up - 2 * mid + down) / (hd * hd))


def gini_best_split(x: np.ndarray, y: np.ndarray):
    """Exhaustive single-feature Gini split: (threshold, weighted child impurity)."""
    vals = np.unique(x)
    best = (None, np.inf)
    for lo, hi in zip(vals[:-1], vals[1:]):
        t = (lo + hi) / 2
        left, right = y[x <= t], y[x > t]
        imp = 0.0
        for part in (left, right):
            _, c = np.unique(part, return_counts=True)
            p = c / len(part)
            imp += len(part) * (1 - (p**2).sum())
        if imp < best[1] - 1e-12:
            best = (t, imp)
    return best


def auc_pairs_exact(y, s) -> Fraction:
    """Pair-counting AUC as an exact fraction, vectorised over all pairs."""
    y = np.asarray(y)
    s = np.asarray(s, dtype=np.float64)
    pos, neg = s[y == 1], s[y == 0]
    greater = int((pos[:, None] > neg[None, :]).sum())
    equal = int((pos[:, None] == neg[None, :]).sum())
    return Fraction(2 * greater + equal, 2 * len(pos) * len(neg))
