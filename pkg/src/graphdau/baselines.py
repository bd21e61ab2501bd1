"""Fixed-parameter classical comparators and their grid search."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .context import EVD, GraphContext
from .denoiser import EN, DauParams, graphdau_forward
from .restorer import DegradationOp, ParamError, pnp_loop
from .spectral import SpectralDecomposition, spectral_apply

HEAT = "heat-diffusion"
ADMM = "admm-fixed"
PNP = "pnp-fixed"
BANDLIMITED = "bandlimited"
KINDS = (HEAT, ADMM, PNP, BANDLIMITED)

# log-spaced lattices used when no grid is configured
DEFAULT_GRIDS = {
    HEAT: {"tau": np.geomspace(0.01, 10, 15).tolist()},
    ADMM: {
        "gamma": np.geomspace(0.05, 20, 10).tolist(),
        "lambda1": np.geomspace(0.001, 1, 8).tolist(),
        "lambda2": np.geomspace(0.001, 1, 8).tolist(),
    },
    PNP: {"rho": np.geomspace(0.05, 20, 10).tolist(), "tau": np.geomspace(0.01, 10, 15).tolist()},
    BANDLIMITED: {"bandwidth_frac": [0.1]},
}


def heat_diffusion(y, tau: float, decomp: SpectralDecomposition) -> np.ndarray:
    """``U diag(exp(-tau * lambda)) U^T y``."""
    if not tau > 0:
        raise ParamError(f"tau must be positive, got {tau}")
    return spectral_apply(decomp, np.exp(-tau * decomp.eigenvalues), y)


def admm_dau_params(gamma: float, lambda1: float, lambda2: float, iters: int = 10,
                    accel: str = EVD, K: Optional[int] = None) -> DauParams:
    """GraphDAU parameters equivalent to ADMM with constant (gamma, lambda1, lambda2)."""
    if not gamma > 0 or lambda1 < 0 or lambda2 < 0:
        raise ParamError("admm-fixed needs gamma > 0 and nonnegative lambdas")
    if iters < 1:
        raise ParamError("iters must be >= 1")
    return DauParams(EN, accel, np.full(iters, gamma), np.full(iters, gamma * lambda1),
                     np.full(iters, 1.0 / (1.0 + lambda2 * gamma)), K)


def admm_fixed(y, gamma: float, lambda1: float, lambda2: float, iters: int, ctx: GraphContext,
               accel: str = EVD, K: Optional[int] = None) -> np.ndarray:
    """Classical ADMM smoother; runs the GraphDAU forward with constant layers."""
    return graphdau_forward(admm_dau_params(gamma, lambda1, lambda2, iters, accel, K), y, ctx)[0]


def pnp_fixed(y, H: DegradationOp, rho: float, tau: float, iters: int, ctx: GraphContext) -> np.ndarray:
    """PnP-ADMM with constant rho and a heat-diffusion denoiser."""
    if iters < 1:
        raise ParamError("iters must be >= 1")
    decomp = ctx.decomposition
    return pnp_loop(y, H, np.full(iters, float(rho)), lambda p, w: heat_diffusion(w, tau, decomp))


def bandlimited_interp(y, mask: DegradationOp, B: int, decomp: SpectralDecomposition) -> np.ndarray:
    """Least-squares fit on the first ``B`` eigenvectors using observed rows only."""
    y = np.asarray(y, dtype=float)
    n = decomp.n
    B = int(B)
    if not 1 <= B <= n:
        raise ParamError(f"bandwidth must be in [1, {n}], got {B}")
    UB = decomp.eigenvectors[:, :B]
    h = np.ones(n) if mask.mask is None else mask.mask
    if y.ndim == 1:
        obs = h > 0
        if not obs.any():
            raise ParamError("bandlimited recovery needs at least one observed node")
        c = np.linalg.lstsq(UB[obs], y[obs], rcond=None)[0]
        return UB @ c
    hm = np.broadcast_to(h if h.ndim == 2 else h[:, None], y.shape)
    return np.column_stack([
        bandlimited_interp(y[:, j], DegradationOp(hm[:, j]), B, decomp) for j in range(y.shape[1])
    ])


@dataclass
class BaselineSpec:
    kind: str
    hyper: dict = field(default_factory=dict)
    iters: int = 10

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParamError(f"unknown baseline kind {self.kind!r}")
        if self.iters < 1:
            raise ParamError("iters must be >= 1")
        for k, v in self.hyper.items():
            if k in ("lambda1", "lambda2"):
                if v < 0:
                    raise ParamError(f"{k} must be nonnegative")
            elif not v > 0:
                raise ParamError(f"{k} must be positive")

    def run(self, y, H: DegradationOp, ctx: GraphContext) -> np.ndarray:
        hp = self.hyper
        if self.kind == HEAT:
            return heat_diffusion(y, hp["tau"], ctx.decomposition)
        if self.kind == ADMM:
            return admm_fixed(y, hp["gamma"], hp["lambda1"], hp["lambda2"], self.iters, ctx)
        if self.kind == PNP:
            return pnp_fixed(y, H, hp["rho"], hp["tau"], self.iters, ctx)
        B = int(hp["B"]) if "B" in hp else max(1, int(round(hp.get("bandwidth_frac", 0.1) * ctx.n)))
        return bandlimited_interp(y, H, B, ctx.decomposition)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "iters": self.iters, "hyper": dict(self.hyper)}


def default_iters(kind: str) -> int:
    return {ADMM: 10, PNP: 8}.get(kind, 1)


def lattice(grid: dict) -> list[dict]:
    """Cartesian product of a ``{name: [values]}`` grid in row-major order."""
    names = list(grid)
    return [dict(zip(names, vals)) for vals in itertools.product(*(grid[n] for n in names))]


def grid_search(template: BaselineSpec, grid: dict, samples, dataset):
    """Exhaustive search for the lowest mean validation RMSE.

    Ties keep the earliest lattice point. Returns ``(best_spec, best_rmse,
    table)`` where ``table`` lists ``(hyper, rmse)`` for every point.
    """
    from .training import mean_rmse, predict

    points = lattice(grid)
    if not points:
        raise ParamError("empty grid")
    if not samples:
        raise ParamError("empty validation set")
    best, best_rmse, table = None, math.inf, []
    for hp in points:
        spec = BaselineSpec(template.kind, {**template.hyper, **hp}, template.iters)
        err = mean_rmse(predict(spec.run, samples, dataset), samples)[0]
        table.append((hp, err))
        if err < best_rmse:
            best, best_rmse = spec, err
    if best is None:  # every point gave NaN
        best = BaselineSpec(template.kind, {**template.hyper, **points[0]}, template.iters)
    return best, best_rmse, table
