"""Per-graph operator cache shared by the denoiser, restorer and baselines."""

from __future__ import annotations

import threading
from functools import cached_property

import numpy as np

from .graph import Graph, graph_operators
from .spectral import (
    ChebFilter,
    SpectralDecomposition,
    apply_filter_evd,
    cheb_apply,
    cheb_fit,
    eigendecompose,
    estimate_lambda_max,
    filter_response_dgamma,
    spectral_apply,
)

EVD = "evd"
CHEB = "cheb"


class GraphContext:
    """Laplacian, incidence operator and lazily computed spectral data.

    The eigendecomposition and lambda_max estimate are computed on first
    use and then reused; both are read-only afterwards.
    """

    def __init__(self, graph: Graph, decomposition: SpectralDecomposition | None = None,
                 lambda_max: float | None = None):
        self.graph = graph
        self.L, self.M = graph_operators(graph)
        self.MT = self.M.T.tocsr()
        self._lock = threading.Lock()
        if decomposition is not None:
            self.__dict__["decomposition"] = decomposition
        if lambda_max is not None:
            self.__dict__["lambda_max"] = float(lambda_max)

    @property
    def n(self) -> int:
        return self.graph.n_nodes

    @cached_property
    def decomposition(self) -> SpectralDecomposition:
        with self._lock:
            return eigendecompose(self.L)

    @cached_property
    def lambda_max(self) -> float:
        return estimate_lambda_max(self.L)

    def cheb(self, gamma: float, K: int) -> ChebFilter:
        return cheb_fit(gamma, self.lambda_max, K)

    def lowpass(self, gamma: float, x: np.ndarray, accel: str, K: int | None = None,
                cheb: ChebFilter | None = None) -> np.ndarray:
        """``(I + L/gamma)^{-1} x`` exactly (evd) or by its Chebyshev surrogate."""
        if accel == EVD:
            return apply_filter_evd(self.decomposition, gamma, x)
        if cheb is None:
            cheb = self.cheb(gamma, K)
        return cheb_apply(self.L, cheb, x)

    def lowpass_dgamma(self, gamma: float, x: np.ndarray, accel: str, K: int | None = None,
                       cheb: ChebFilter | None = None) -> np.ndarray:
        """Derivative of :meth:`lowpass` with respect to gamma, applied to ``x``."""
        if accel == EVD:
            d = self.decomposition
            return spectral_apply(d, filter_response_dgamma(gamma, d.eigenvalues), x)
        if cheb is None:
            cheb = self.cheb(gamma, K)
        return cheb_apply(self.L, cheb, x, coeffs=cheb.dcoeffs)
