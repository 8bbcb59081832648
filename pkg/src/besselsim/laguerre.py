"""Bidiagonal random-matrix model and tridiagonal eigensolver.

L is lower bidiagonal with independent entries whose squares are Gamma
variates at rate beta/2: diagonal shapes (beta/2)(a+n), ..., (beta/2)(a+1)
top to bottom, subdiagonal shapes (beta/2)(n-1), ..., (beta/2).  The
eigenvalues of L L^T then follow the ensemble density

    prod_{i<j} |l_i - l_j|^beta * prod_k l_k^{(beta/2)(a+1)-1} e^{-(beta/2) l_k}

(validated exactly at n=1 and by 2-d quadrature at n=2, which freezes the
parametrization).  Smallest eigenvalues come from Sturm-sequence bisection
on the symmetric tridiagonal L L^T; the hard-edge rescaling multiplies the
k smallest by n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .riccati import ModelParams


@dataclass
class BidiagonalMatrix:
    n: int
    diag: np.ndarray
    sub: np.ndarray

    def tridiagonal(self) -> tuple[np.ndarray, np.ndarray]:
        """(diagonal, offdiagonal) of the symmetric tridiagonal L L^T."""
        alpha = self.diag * self.diag
        if self.n > 1:
            alpha[1:] += self.sub * self.sub
        off = self.diag[:-1] * self.sub
        return alpha, off

    def dense(self) -> np.ndarray:
        m = np.diag(self.diag)
        for i in range(self.n - 1):
            m[i + 1, i] = self.sub[i]
        return m


@dataclass
class SpectrumSample:
    eigenvalues: np.ndarray
    n: int
    beta: float
    a: float


def sample_bidiagonal(n: int, params: ModelParams, rng_seed: int) -> BidiagonalMatrix:
    """Draw one bidiagonal factor; deterministic in rng_seed."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    beta, a = params.beta, params.a
    rng = np.random.default_rng(rng_seed)
    shape_diag = 0.5 * beta * (a + np.arange(n, 0, -1))
    shape_sub = 0.5 * beta * np.arange(n - 1, 0, -1)
    diag = np.sqrt(rng.gamma(shape_diag, 2.0 / beta))
    sub = np.sqrt(rng.gamma(shape_sub, 2.0 / beta)) if n > 1 else np.empty(0)
    return BidiagonalMatrix(n=n, diag=diag, sub=sub)


@nb.njit(cache=True)
def sturm_count(alpha, off2, sigma, pivmin):
    """Number of eigenvalues of the tridiagonal below sigma (Sturm/LDL^T)."""
    cnt = 0
    d = alpha[0] - sigma
    if abs(d) < pivmin:
        d = -pivmin
    if d < 0.0:
        cnt += 1
    for i in range(1, alpha.shape[0]):
        d = alpha[i] - sigma - off2[i - 1] / d
        if abs(d) < pivmin:
            d = -pivmin
        if d < 0.0:
            cnt += 1
    return cnt


@nb.njit(cache=True)
def _sturm_smallest(alpha, off, k, rel_tol):
    n = alpha.shape[0]
    off2 = off * off
    tnorm = abs(alpha[0])
    for i in range(n):
        s = abs(alpha[i])
        if i > 0:
            s += abs(off[i - 1])
        if i < n - 1:
            s += abs(off[i])
        if s > tnorm:
            tnorm = s
    pivmin = max(1e-290 * tnorm, 1e-300)
    gu = tnorm * (1.0 + 1e-12) + pivmin
    out = np.empty(k)
    for j in range(k):
        lo = 0.0
        hi = gu
        while hi - lo > rel_tol * max(abs(lo), abs(hi)) + pivmin:
            mid = 0.5 * (lo + hi)
            if sturm_count(alpha, off2, mid, pivmin) > j:
                hi = mid
            else:
                lo = mid
        out[j] = 0.5 * (lo + hi)
    return out


def smallest_eigenvalues(matrix: BidiagonalMatrix, k: int) -> np.ndarray:
    """k smallest eigenvalues of L L^T to relative accuracy 1e-10, increasing."""
    if not 1 <= k <= matrix.n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={matrix.n}")
    alpha, off = matrix.tridiagonal()
    return _sturm_smallest(alpha, off, k, 1e-11)


def spectrum_sample(n: int, params: ModelParams, rng_seed: int, k: int | None = None) -> SpectrumSample:
    """Sample a matrix and solve for its k smallest eigenvalues."""
    m = sample_bidiagonal(n, params, rng_seed)
    eig = smallest_eigenvalues(m, n if k is None else k)
    return SpectrumSample(eigenvalues=eig, n=n, beta=params.beta, a=params.a)


def hard_edge_rescale(sample: SpectrumSample, k: int) -> np.ndarray:
    """Hard-edge scaling: n times the k smallest eigenvalues."""
    if not 1 <= k <= sample.eigenvalues.size:
        raise ValueError(f"need 1 <= k <= {sample.eigenvalues.size}, got {k}")
    return sample.n * sample.eigenvalues[:k]


def log_density_unnormalized(points, params: ModelParams) -> float:
    """Log of the unnormalized ensemble density at an eigenvalue tuple.

    beta*sum_{i<j} ln|l_i-l_j| + sum_k[((beta/2)(a+1)-1) ln l_k - beta*l_k/2];
    coincident points return -inf.
    """
    pts = np.asarray(points, dtype=float)
    if np.any(pts <= 0.0):
        raise ValueError("all points must be positive")
    beta, a = params.beta, params.a
    total = float(np.sum((0.5 * beta * (a + 1.0) - 1.0) * np.log(pts) - 0.5 * beta * pts))
    n = pts.size
    for i in range(n):
        for j in range(i + 1, n):
            gap = abs(pts[i] - pts[j])
            if gap == 0.0:
                return -math.inf
            total += beta * math.log(gap)
    return total


def mp_density(x):
    """Global spectral density (1/(2 pi x)) sqrt(x(4-x)) on (0, 4], else 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = (x > 0) & (x <= 4)
    out[m] = np.sqrt(x[m] * (4.0 - x[m])) / (2.0 * np.pi * x[m])
    return out if out.ndim else float(out)


def mp_cdf(x):
    """Closed-form distribution function of the global law."""
    x = np.asarray(x, dtype=float)
    xc = np.clip(x, 0.0, 4.0)
    u = np.arcsin(0.5 * np.sqrt(xc))
    out = (2.0 * u + np.sin(2.0 * u)) / np.pi
    return out if out.ndim else float(out)
