"""Unrolled Plug-and-Play ADMM restoration with a nested GraphDAU (NestDAU)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .context import GraphContext
from .denoiser import DauParams, ParamError, graphdau_forward

DEFAULT_RHO = 1.0


@dataclass(frozen=True, eq=False)
class DegradationOp:
    """Identity or binary diagonal degradation ``H``.

    ``mask`` is ``None`` for the identity. Otherwise it holds 0/1 per node,
    either as a vector or as an (N, B) array matching a signal batch.
    """

    mask: Optional[np.ndarray] = None

    @classmethod
    def identity(cls) -> "DegradationOp":
        return cls(None)

    @classmethod
    def from_mask(cls, mask) -> "DegradationOp":
        m = np.asarray(mask, dtype=float)
        if not np.all((m == 0) | (m == 1)):
            raise ParamError("mask entries must be 0 or 1")
        return cls(m)

    @property
    def kind(self) -> str:
        return "identity" if self.mask is None else "diagonal-mask"

    def diag(self, n: int) -> np.ndarray | float:
        if self.mask is None:
            return 1.0
        if self.mask.shape[0] != n:
            raise ParamError(f"mask length {self.mask.shape[0]} does not match signal length {n}")
        return self.mask

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x if self.mask is None else self.mask * x


@dataclass
class NestParams:
    rho: np.ndarray
    denoisers: list = field(default_factory=list)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float).copy()
        self.validate()

    @property
    def P(self) -> int:
        return self.rho.shape[0]

    def validate(self) -> None:
        if self.rho.ndim != 1:
            raise ParamError("rho must be a 1-D array")
        if len(self.denoisers) != self.P:
            raise ParamError(f"need one denoiser per outer layer: P={self.P}, got {len(self.denoisers)}")
        if np.any(~np.isfinite(self.rho)) or np.any(self.rho <= 0):
            raise ParamError("rho must be positive and finite")
        for d in self.denoisers:
            if not isinstance(d, DauParams):
                raise ParamError("denoisers must be DauParams")
            d.validate()

    @classmethod
    def init(cls, variant: str = "tv", accel: str = "evd", L: int = 10, K: Optional[int] = 10,
             P: int = 8, rho: float = DEFAULT_RHO, **dau_kwargs) -> "NestParams":
        return cls(np.full(P, rho), [DauParams.init(variant, accel, L, K, **dau_kwargs) for _ in range(P)])

    @property
    def variant(self) -> str:
        return self.denoisers[0].variant if self.denoisers else "tv"

    @property
    def accel(self) -> str:
        return self.denoisers[0].accel if self.denoisers else "evd"

    def copy(self) -> "NestParams":
        return NestParams(self.rho, [d.copy() for d in self.denoisers])

    def arrays(self) -> list[np.ndarray]:
        out = [self.rho]
        for d in self.denoisers:
            out.extend(d.arrays())
        return out

    def to_dict(self) -> dict:
        return {"P": self.P, "rho": self.rho.tolist(), "denoisers": [d.to_dict() for d in self.denoisers]}

    @classmethod
    def from_dict(cls, d: dict) -> "NestParams":
        for key in ("P", "rho", "denoisers"):
            if key not in d:
                raise ParamError(f"parameter JSON missing field {key!r}")
        if not isinstance(d["rho"], list) or len(d["rho"]) != d["P"]:
            raise ParamError(f"field 'rho' must be a list of length P={d['P']}")
        if not isinstance(d["denoisers"], list) or len(d["denoisers"]) != d["P"]:
            raise ParamError(f"field 'denoisers' must be a list of length P={d['P']}")
        dens = []
        for p, dd in enumerate(d["denoisers"]):
            try:
                dens.append(DauParams.from_dict(dd))
            except ParamError as exc:
                raise ParamError(f"denoisers[{p}]: {exc}") from None
        return cls(d["rho"], dens)


def params_from_dict(d: dict):
    """Load either parameter bundle from its JSON dict."""
    if not isinstance(d, dict):
        raise ParamError("parameter JSON must be an object")
    if "denoisers" in d or "rho" in d:
        return NestParams.from_dict(d)
    return DauParams.from_dict(d)


def inverse_step(H: DegradationOp, rho: float, y, s, t) -> np.ndarray:
    """Data-fidelity solve for a diagonal ``H``: ``(h*y + rho*(s-t)) / (h + rho)``."""
    if not rho > 0:
        raise ParamError(f"rho must be positive, got {rho}")
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if not (y.shape == s.shape == t.shape):
        raise ParamError(f"shape mismatch: y {y.shape}, s {s.shape}, t {t.shape}")
    h = H.diag(y.shape[0])
    return (h * y + rho * (s - t)) / (h + rho)


@dataclass
class NestTrace:
    y: np.ndarray
    H: DegradationOp
    s: list = field(default_factory=list)
    t: list = field(default_factory=list)
    x: list = field(default_factory=list)
    inner: list = field(default_factory=list)


def pnp_loop(y, H: DegradationOp, rhos, denoise: Callable[[int, np.ndarray], np.ndarray],
             trace: Optional[NestTrace] = None) -> np.ndarray:
    """Shared PnP-ADMM recursion; ``denoise(p, w)`` is the layer-p denoiser.

    Starts from ``s = y, t = 0``; with no layers the observation is returned.
    """
    y = np.asarray(y, dtype=float)
    s = y
    t = np.zeros_like(y)
    x = y
    for p, rho in enumerate(rhos):
        x = inverse_step(H, float(rho), y, s, t)
        w = x + t
        s_new = denoise(p, w)
        if trace is not None:
            trace.s.append(s)
            trace.t.append(t)
            trace.x.append(x)
        t = w - s_new
        s = s_new
    return x


def nestdau_forward(params: NestParams, y, H: DegradationOp, ctx: GraphContext, capture: bool = False):
    """NestDAU restoration; returns ``(x_out, trace)``."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] != ctx.n:
        raise ParamError(f"signal length {y.shape[0]} does not match graph size {ctx.n}")
    trace = NestTrace(y=y, H=H) if capture else None

    def denoise(p, w):
        out, inner = graphdau_forward(params.denoisers[p], w, ctx, capture=capture)
        if capture:
            trace.inner.append(inner)
        return out

    x = pnp_loop(y, H, params.rho, denoise, trace)
    return x, trace
