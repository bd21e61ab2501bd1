"""Spectral filtering with the kernel h(x) = gamma / (gamma + x).

Two routes are provided: exact filtering through a precomputed
eigendecomposition, and a K-term Chebyshev expansion evaluated with
sparse mat-vecs only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh


class SpectralError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


def _dense(L) -> np.ndarray:
    return L.toarray() if sp.issparse(L) else np.asarray(L, dtype=float)


def eigendecompose(L, sym_tol: float = 1e-10) -> SpectralDecomposition:
    """Full symmetric eigendecomposition of a Laplacian.

    Eigenvalues are ascending. Each eigenvector is sign-normalized so that
    its largest-magnitude entry is positive, which makes results
    reproducible across calls.
    """
    A = _dense(L)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise SpectralError(f"expected a square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if np.abs(A - A.T).max(initial=0.0) > sym_tol * scale:
        raise SpectralError("matrix is not symmetric")
    try:
        lam, U = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"eigendecomposition did not converge: {exc}") from exc
    order = np.argsort(lam, kind="stable")
    lam, U = lam[order], U[:, order]
    pivot = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivot, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U = U * signs
    return SpectralDecomposition(lam, U)


def filter_response(gamma: float, lam: np.ndarray) -> np.ndarray:
    return gamma / (gamma + lam)


def filter_response_dgamma(gamma: float, lam: np.ndarray) -> np.ndarray:
    return lam / (gamma + lam) ** 2


def _check_gamma(gamma):
    if not np.isfinite(gamma) or gamma <= 0:
        raise SpectralError(f"gamma must be positive, got {gamma}")


def spectral_apply(decomp: SpectralDecomposition, response: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply ``U diag(response) U^T`` to ``x`` (vector or column batch)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != decomp.n:
        raise SpectralError(f"signal length {x.shape[0]} does not match graph size {decomp.n}")
    U = decomp.eigenvectors
    coef = U.T @ x
    if coef.ndim == 2:
        coef = coef * response[:, None]
    else:
        coef = coef * response
    return U @ coef


def apply_filter_evd(decomp: SpectralDecomposition, gamma: float, x) -> np.ndarray:
    """Exact ``(I + L / gamma)^{-1} x`` via the eigendecomposition."""
    _check_gamma(gamma)
    return spectral_apply(decomp, filter_response(gamma, decomp.eigenvalues), x)


def estimate_lambda_max(L, iters: int = 100, tol: float = 1e-6, safety: float = 1.01,
                        seed: int = 0, dense_max: int = 1000) -> float:
    """Upper bound on the largest eigenvalue of a PSD Laplacian.

    Graphs with at most ``dense_max`` nodes use a dense symmetric
    eigensolve, so the result does not depend on node order beyond
    roundoff; larger graphs use Lanczos (falling back to power iteration
    with ``iters`` and ``tol`` if it does not converge). The estimate is
    scaled by ``safety`` and clamped to the bound ``2 * max degree``. The
    zero matrix returns 1.0.
    """
    L = sp.csr_matrix(L)
    deg = L.diagonal()
    bound = 2.0 * float(deg.max(initial=0.0))
    if bound <= 0 or L.nnz == 0:
        return 1.0
    n = L.shape[0]
    if n <= dense_max:
        est = float(np.linalg.eigvalsh(L.toarray())[-1])
    else:
        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            est = float(eigsh(L, k=1, which="LA", v0=v0, tol=1e-10,
                              return_eigenvectors=False)[0])
        except ArpackNoConvergence:
            est = _power_lambda_max(L, v0, iters, tol)
    return float(min(max(est, 0.0) * safety, bound)) or bound


def _power_lambda_max(L, v, iters: int, tol: float) -> float:
    v = v / np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = L @ v
        new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        v = w / nw
        if abs(new - est) <= tol * max(abs(new), 1e-300):
            return new
        est = new
    return est


@dataclass(frozen=True, eq=False)
class ChebFilter:
    """Chebyshev expansion of h on [0, lambda_max], c0/2 convention.

    ``dcoeffs`` expand dh/dgamma with the same quadrature; since the fit is
    linear in the kernel they are the exact gamma-derivative of ``coeffs``.
    """

    coeffs: np.ndarray
    lambda_max: float
    gamma: float
    dcoeffs: Optional[np.ndarray] = None

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    def evaluate(self, x, coeffs: Optional[np.ndarray] = None) -> np.ndarray:
        """Evaluate the polynomial at scalar points in [0, lambda_max]."""
        c = self.coeffs if coeffs is None else coeffs
        t = 2.0 * np.asarray(x, dtype=float) / self.lambda_max - 1.0
        return np.polynomial.chebyshev.chebval(t, np.concatenate([[c[0] / 2.0], c[1:]]))


def default_quadrature(K: int) -> int:
    return max(K + 1, 64)


def cheb_coefficients(func: Callable[[np.ndarray], np.ndarray], lambda_max: float,
                      K: int, Q: Optional[int] = None) -> np.ndarray:
    """Gauss-Chebyshev quadrature coefficients c_0..c_K of ``func`` on [0, lambda_max]."""
    Q = default_quadrature(K) if Q is None else int(Q)
    theta = np.pi * (np.arange(Q) + 0.5) / Q
    nodes = 0.5 * lambda_max * (np.cos(theta) + 1.0)
    fv = func(nodes)
    basis = np.cos(np.outer(np.arange(K + 1), theta))
    return (2.0 / Q) * (basis @ fv)


def cheb_fit(gamma: float, lambda_max: float, K: int = 10, Q: Optional[int] = None) -> ChebFilter:
    _check_gamma(gamma)
    K = int(K)
    if K < 1:
        raise SpectralError(f"polynomial order K must be >= 1, got {K}")
    Q = default_quadrature(K) if Q is None else int(Q)
    if Q < K + 1:
        raise SpectralError(f"quadrature points Q={Q} must be >= K+1={K + 1}")
    if not lambda_max > 0:
        raise SpectralError(f"lambda_max must be positive, got {lambda_max}")
    c = cheb_coefficients(lambda x: filter_response(gamma, x), lambda_max, K, Q)
    dc = cheb_coefficients(lambda x: filter_response_dgamma(gamma, x), lambda_max, K, Q)
    return ChebFilter(c, float(lambda_max), float(gamma), dc)


def cheb_apply(L, f: ChebFilter, x, coeffs: Optional[np.ndarray] = None) -> np.ndarray:
    """Evaluate ``p(L) x`` by the three-term recurrence on ``2L/lambda_max - I``.

    ``coeffs`` overrides ``f.coeffs`` (used for the derivative expansion).
    """
    c = f.coeffs if coeffs is None else coeffs
    x = np.asarray(x, dtype=float)
    if x.shape[0] != L.shape[0]:
        raise SpectralError(f"signal length {x.shape[0]} does not match graph size {L.shape[0]}")
    a = 2.0 / f.lambda_max

    def shifted(v):
        return a * (L @ v) - v

    t_prev = x
    out = 0.5 * c[0] * t_prev
    if c.shape[0] == 1:
        return out
    t_cur = shifted(x)
    out = out + c[1] * t_cur
    for k in range(2, c.shape[0]):
        t_next = 2.0 * shifted(t_cur) - t_prev
        out = out + c[k] * t_next
        t_prev, t_cur = t_cur, t_next
    return out
