"""Unrolled ADMM graph signal denoiser (GraphDAU)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .context import CHEB, EVD, GraphContext

TV = "tv"
EN = "en"

DEFAULT_GAMMA = 1.0
DEFAULT_BETA = 0.1
DEFAULT_ALPHA = 0.9


class ParamError(ValueError):
    pass


@dataclass
class DauParams:
    """Per-layer trainable parameters of one GraphDAU.

    ``gamma`` is the ADMM step size, ``beta`` the soft threshold
    (step size times the l1 weight) and ``alpha`` the elastic-net shrink
    factor ``1 / (1 + lambda2 * gamma)``; ``alpha`` exists only for EN.
    """

    variant: str
    accel: str
    gamma: np.ndarray
    beta: np.ndarray
    alpha: Optional[np.ndarray] = None
    K: Optional[int] = None

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float).copy()
        self.beta = np.asarray(self.beta, dtype=float).copy()
        if self.alpha is not None:
            self.alpha = np.asarray(self.alpha, dtype=float).copy()
        self.validate()

    @property
    def L(self) -> int:
        return self.gamma.shape[0]

    def validate(self) -> None:
        if self.variant not in (TV, EN):
            raise ParamError(f"variant must be 'tv' or 'en', got {self.variant!r}")
        if self.accel not in (EVD, CHEB):
            raise ParamError(f"accel must be 'evd' or 'cheb', got {self.accel!r}")
        if self.accel == CHEB and (self.K is None or int(self.K) < 1):
            raise ParamError("cheb acceleration needs a polynomial order K >= 1")
        n = self.gamma.shape[0]
        if self.gamma.ndim != 1 or self.beta.shape != (n,):
            raise ParamError("gamma and beta must be 1-D arrays of equal length L")
        if self.variant == EN:
            if self.alpha is None or self.alpha.shape != (n,):
                raise ParamError("EN variant needs alpha of length L")
            if np.any(self.alpha <= 0) or np.any(self.alpha > 1):
                raise ParamError("alpha must lie in (0, 1]")
        elif self.alpha is not None:
            raise ParamError("TV variant takes no alpha")
        if np.any(~np.isfinite(self.gamma)) or np.any(self.gamma <= 0):
            raise ParamError("gamma must be positive and finite")
        if np.any(~np.isfinite(self.beta)) or np.any(self.beta < 0):
            raise ParamError("beta must be nonnegative and finite")

    @classmethod
    def init(cls, variant: str = TV, accel: str = EVD, L: int = 10, K: Optional[int] = 10,
             gamma: float = DEFAULT_GAMMA, beta: float = DEFAULT_BETA,
             alpha: float = DEFAULT_ALPHA) -> "DauParams":
        return cls(
            variant,
            accel,
            np.full(L, gamma),
            np.full(L, beta),
            np.full(L, alpha) if variant == EN else None,
            K if accel == CHEB else None,
        )

    def copy(self) -> "DauParams":
        return DauParams(self.variant, self.accel, self.gamma, self.beta, self.alpha, self.K)

    # flat-vector view used by the optimizer and finite-difference checks
    def arrays(self) -> list[np.ndarray]:
        return [self.gamma, self.beta] + ([self.alpha] if self.variant == EN else [])

    def to_dict(self) -> dict:
        d = {"variant": self.variant, "accel": self.accel, "L": self.L}
        if self.accel == CHEB:
            d["K"] = int(self.K)
        d["gamma"] = self.gamma.tolist()
        d["beta"] = self.beta.tolist()
        if self.variant == EN:
            d["alpha"] = self.alpha.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DauParams":
        for key in ("variant", "accel", "L", "gamma", "beta"):
            if key not in d:
                raise ParamError(f"parameter JSON missing field {key!r}")
        L = d["L"]
        if not isinstance(L, int) or L < 0:
            raise ParamError(f"field 'L' must be a nonnegative integer, got {L!r}")
        for key in ("gamma", "beta", "alpha"):
            if key in d and (not isinstance(d[key], list) or len(d[key]) != L):
                raise ParamError(f"field {key!r} must be a list of length L={L}")
        if d["variant"] == EN and "alpha" not in d:
            raise ParamError("parameter JSON missing field 'alpha' (required for variant 'en')")
        if d["accel"] == CHEB and "K" not in d:
            raise ParamError("parameter JSON missing field 'K' (required for accel 'cheb')")
        try:
            return cls(d["variant"], d["accel"], d["gamma"], d["beta"], d.get("alpha"), d.get("K"))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ParamError):
                raise
            raise ParamError(f"invalid parameter values: {exc}") from exc


def param_count(params) -> int:
    """Number of trainable scalars: 2L / 3L for GraphDAU, (2L+1)P / (3L+1)P for NestDAU."""
    if isinstance(params, DauParams):
        return sum(a.shape[0] for a in params.arrays())
    return int(params.rho.shape[0]) + sum(param_count(d) for d in params.denoisers)


def soft_threshold(x, tau: float) -> np.ndarray:
    if tau < 0:
        raise ParamError(f"threshold must be nonnegative, got {tau}")
    x = np.asarray(x, dtype=float)
    # same bits as sgn(x) * max(|x| - tau, 0), in two passes
    out = np.clip(x, -tau, tau)
    np.subtract(x, out, out=out)
    return out


@dataclass
class LayerTrace:
    """Intermediates cached by a capturing forward pass, one entry per layer."""

    y: np.ndarray
    y_tilde: list = field(default_factory=list)
    x: list = field(default_factory=list)
    v_tilde: list = field(default_factory=list)
    v: list = field(default_factory=list)
    u: list = field(default_factory=list)
    # v, u hold the layer inputs v^(l), u^(l); the last entries are v^(L), u^(L)
    cheb: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.x)


def graphdau_forward(params: DauParams, y, ctx: GraphContext, capture: bool = False):
    """Run the L unrolled ADMM layers on ``y``.

    ``y`` may be a length-N vector or an (N, B) batch of columns sharing the
    graph. Returns ``(x_out, trace)`` where ``trace`` is ``None`` unless
    ``capture`` is set.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[0] != ctx.n:
        raise ParamError(f"signal length {y.shape[0]} does not match graph size {ctx.n}")
    M, MT = ctx.M, ctx.MT
    edge_shape = (M.shape[0],) + y.shape[1:]
    v = np.zeros(edge_shape)
    u = np.zeros(edge_shape)
    x = y
    trace = LayerTrace(y=y) if capture else None
    en = params.variant == EN
    for ell in range(params.L):
        g = float(params.gamma[ell])
        y_tilde = y + (MT @ (v - u)) / g
        cheb = ctx.cheb(g, params.K) if params.accel == CHEB else None
        x = ctx.lowpass(g, y_tilde, params.accel, params.K, cheb=cheb)
        v_tilde = M @ x
        v_tilde += u
        v_new = soft_threshold(v_tilde, float(params.beta[ell]))
        if en:
            v_new *= params.alpha[ell]
        if capture:
            trace.v.append(v)
            trace.u.append(u)
            trace.y_tilde.append(y_tilde)
            trace.x.append(x)
            trace.v_tilde.append(v_tilde)
            trace.cheb.append(cheb)
        u = v_tilde - v_new
        v = v_new
    if capture:
        trace.v.append(v)
        trace.u.append(u)
    return x, trace
