"""Reverse-mode gradients through the unrolled GraphDAU and NestDAU iterations.

Both backward passes consume the trace recorded by a capturing forward
pass and return parameter gradients plus the gradient with respect to the
input signal, so a GraphDAU can sit inside NestDAU's denoising step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .context import GraphContext
from .denoiser import EN, DauParams, LayerTrace, ParamError
from .restorer import NestParams, NestTrace


@dataclass
class GradBundle:
    d_gamma: Optional[np.ndarray] = None
    d_beta: Optional[np.ndarray] = None
    d_alpha: Optional[np.ndarray] = None
    d_rho: Optional[np.ndarray] = None
    denoisers: list = field(default_factory=list)

    def arrays(self) -> list[np.ndarray]:
        """Flatten in the same order as ``DauParams.arrays`` / ``NestParams.arrays``."""
        if self.d_rho is not None:
            out = [self.d_rho]
            for d in self.denoisers:
                out.extend(d.arrays())
            return out
        return [self.d_gamma, self.d_beta] + ([self.d_alpha] if self.d_alpha is not None else [])

    def flat(self) -> np.ndarray:
        arrs = self.arrays()
        return np.concatenate(arrs) if arrs else np.zeros(0)


def graphdau_backward(params: DauParams, trace: LayerTrace, ctx: GraphContext, upstream):
    """Backpropagate ``upstream = dLoss/dx_out`` through a GraphDAU forward.

    Returns ``(grads, d_input)``. For batched traces the parameter
    gradients are summed over columns.
    """
    if trace is None or len(trace) != params.L:
        raise ParamError("trace does not match params (was the forward run with capture=True?)")
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != trace.y.shape:
        raise ParamError(f"upstream shape {upstream.shape} does not match signal shape {trace.y.shape}")
    M, MT = ctx.M, ctx.MT
    nL = params.L
    d_gamma = np.zeros(nL)
    d_beta = np.zeros(nL)
    d_alpha = np.zeros(nL) if params.variant == EN else None
    gy = np.zeros_like(upstream)
    if nL == 0:
        return GradBundle(d_gamma, d_beta, d_alpha), upstream.copy()

    edge_shape = trace.v_tilde[0].shape
    gv = np.zeros(edge_shape)
    gu = np.zeros(edge_shape)
    for ell in range(nL - 1, -1, -1):
        g = float(params.gamma[ell])
        beta = float(params.beta[ell])
        z = trace.v_tilde[ell]
        # u_next = z - v_next
        gz = gu.copy()
        g_vnext = gv - gu
        active = np.abs(z) > beta  # kink |z| == beta gets derivative 0
        if params.variant == EN:
            shrunk = np.sign(z) * np.maximum(np.abs(z) - beta, 0.0)
            d_alpha[ell] = np.sum(g_vnext * shrunk)
            g_s = params.alpha[ell] * g_vnext
        else:
            g_s = g_vnext
        d_beta[ell] = -np.sum(g_s * np.sign(z) * active)
        gz += g_s * active
        # z = M x + u
        gx = MT @ gz
        if ell == nL - 1:
            gx = gx + upstream
        g_uprev = gz
        # x = F_gamma(y_tilde), F symmetric
        cheb = trace.cheb[ell]
        g_yt = ctx.lowpass(g, gx, params.accel, params.K, cheb=cheb)
        d_gamma[ell] = np.sum(gx * ctx.lowpass_dgamma(g, trace.y_tilde[ell], params.accel, params.K, cheb=cheb))
        # y_tilde = y + M^T (v - u) / gamma
        gy += g_yt
        Mg = M @ g_yt
        a = trace.v[ell] - trace.u[ell]
        d_gamma[ell] -= np.sum(Mg * a) / g**2
        ga = Mg / g
        gv = ga
        gu = g_uprev - ga
    return GradBundle(d_gamma, d_beta, d_alpha), gy


def nestdau_backward(params: NestParams, trace: NestTrace, ctx: GraphContext, upstream):
    """Backpropagate through NestDAU; returns ``(grads, d_input)``."""
    if trace is None or len(trace.x) != params.P or len(trace.inner) != params.P:
        raise ParamError("nested trace does not match params (was the forward run with capture=True?)")
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != trace.y.shape:
        raise ParamError(f"upstream shape {upstream.shape} does not match signal shape {trace.y.shape}")
    P = params.P
    y = trace.y
    h = trace.H.diag(y.shape[0])
    d_rho = np.zeros(P)
    inner_grads: list = [None] * P
    gy = np.zeros_like(upstream)
    gs = np.zeros_like(upstream)
    gt = np.zeros_like(upstream)
    for p in range(P - 1, -1, -1):
        rho = float(params.rho[p])
        # t_next = w - s_next
        gw = gt.copy()
        g_snext = gs - gt
        inner_grads[p], d_in = graphdau_backward(params.denoisers[p], trace.inner[p], ctx, g_snext)
        gw += d_in
        # w = x + t
        gx = gw + upstream if p == P - 1 else gw
        gt_prev = gw
        # x = (h y + rho (s - t)) / (h + rho)
        s, t = trace.s[p], trace.t[p]
        denom = h + rho
        gy += gx * h / denom
        gs_prev = gx * rho / denom
        gt_prev = gt_prev - gs_prev
        d_rho[p] = np.sum(gx * ((s - t) * h - h * y) / denom**2)
        gs, gt = gs_prev, gt_prev
    gy += gs  # s^(0) = y
    if P == 0:
        gy = upstream.copy()
    return GradBundle(d_rho=d_rho, denoisers=inner_grads), gy
