"""Randomized invariant suites (hypothesis, at least 100 cases each)."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from graphdau.baselines import HEAT, PNP, BaselineSpec, grid_search, heat_diffusion, lattice
from graphdau.context import CHEB, EVD, GraphContext
from graphdau.data import Dataset, Sample, contiguous_splits
from graphdau.denoiser import EN, TV, DauParams, graphdau_forward, soft_threshold
from graphdau.gradients import GradBundle
from graphdau.graph import graph_operators, relabel
from graphdau.restorer import DegradationOp, NestParams, nestdau_forward
from graphdau.spectral import apply_filter_evd, cheb_apply, cheb_fit, eigendecompose
from graphdau.training import OptimState, mean_rmse, optimizer_step, predict

from conftest import random_graphs

CASES = settings(max_examples=100, deadline=None)

seeds = st.integers(0, 2**31 - 1)
gammas = st.floats(0.05, 20.0)
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def dau_params(variant, accel, L, rng, K=20):
    return DauParams(variant, accel, rng.uniform(0.2, 4.0, L), rng.uniform(0.0, 0.6, L),
                     rng.uniform(0.3, 1.0, L) if variant == EN else None, K if accel == CHEB else None)


class TestIncidenceAndLaplacian:
    @CASES
    @given(random_graphs(max_nodes=15))
    def test_incidence_gram_is_laplacian(self, g):
        L, M = graph_operators(g)
        assert np.abs((M.T @ M - L).toarray()).max(initial=0.0) <= 1e-12

    @CASES
    @given(random_graphs(max_nodes=15), seeds)
    def test_quadratic_form_and_total_variation(self, g, seed):
        L, M = graph_operators(g)
        x = np.random.default_rng(seed).normal(size=g.n_nodes)
        quad = sum(w * (x[i] - x[j]) ** 2 for i, j, w in g.edges)
        tv = sum(np.sqrt(w) * abs(x[i] - x[j]) for i, j, w in g.edges)
        assert x @ (L @ x) >= -1e-9
        assert abs(x @ (L @ x) - quad) <= 1e-9 * max(1.0, quad)
        assert abs(np.abs(M @ x).sum() - tv) <= 1e-9 * max(1.0, tv)

    @CASES
    @given(random_graphs(max_nodes=12), seeds)
    def test_relabel_is_permutation_similarity(self, g, seed):
        perm = np.random.default_rng(seed).permutation(g.n_nodes)
        P = np.zeros((g.n_nodes, g.n_nodes))
        P[perm, np.arange(g.n_nodes)] = 1.0
        L = graph_operators(g)[0].toarray()
        np.testing.assert_allclose(graph_operators(relabel(g, perm))[0].toarray(), P @ L @ P.T, atol=1e-14)


class TestSoftThresholdAlgebra:
    @CASES
    @given(st.lists(finite, min_size=1, max_size=30), st.floats(0, 100))
    def test_definition_and_shrinkage(self, xs, tau):
        x = np.array(xs)
        out = soft_threshold(x, tau)
        np.testing.assert_array_equal(out, np.sign(x) * np.maximum(np.abs(x) - tau, 0.0))
        assert np.all(np.abs(out) <= np.abs(x))
        assert np.all(out * x >= 0)

    @CASES
    @given(st.lists(finite, min_size=1, max_size=30), st.floats(0, 100))
    def test_odd_symmetry(self, xs, tau):
        x = np.array(xs)
        np.testing.assert_array_equal(soft_threshold(-x, tau), -soft_threshold(x, tau))

    @CASES
    @given(st.lists(finite, min_size=1, max_size=30), st.floats(0, 50), st.floats(0, 50))
    def test_semigroup(self, xs, a, b):
        x = np.array(xs)
        np.testing.assert_allclose(soft_threshold(soft_threshold(x, a), b), soft_threshold(x, a + b),
                                   atol=1e-12 * max(1.0, np.abs(x).max()))

    @CASES
    @given(st.lists(st.tuples(finite, finite), min_size=1, max_size=30), st.floats(0, 100))
    def test_nonexpansive(self, pairs, tau):
        x, y = np.array(pairs).T
        assert np.all(np.abs(soft_threshold(x, tau) - soft_threshold(y, tau)) <= np.abs(x - y) + 1e-12)

    @CASES
    @given(st.lists(finite, min_size=1, max_size=30), st.floats(0, 100))
    def test_prox_residual_is_clip(self, xs, tau):
        # x - S_tau(x) is the projection onto the l-infinity ball of radius tau
        x = np.array(xs)
        np.testing.assert_allclose(x - soft_threshold(x, tau), np.clip(x, -tau, tau), atol=1e-12)


class TestFilters:
    @CASES
    @given(random_graphs(max_nodes=20, connected=True), gammas, seeds)
    def test_evd_matches_dense_solve(self, g, gamma, seed):
        L = graph_operators(g)[0].toarray()
        x = np.random.default_rng(seed).normal(size=g.n_nodes)
        z = np.linalg.solve(np.eye(g.n_nodes) + L / gamma, x)
        out = apply_filter_evd(eigendecompose(L), gamma, x)
        assert np.abs(out - z).max() <= 1e-8 * np.abs(z).max()

    @CASES
    @given(random_graphs(max_nodes=15), gammas, seeds, st.sampled_from([EVD, CHEB]))
    def test_linear_symmetric_contractive(self, g, gamma, seed, accel):
        ctx = GraphContext(g)
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=(2, g.n_nodes))
        a, b = rng.normal(size=2)
        f = (lambda v: ctx.lowpass(gamma, v, accel, 20))
        np.testing.assert_allclose(f(a * x + b * y), a * f(x) + b * f(y), atol=1e-9)
        assert abs(f(x) @ y - x @ f(y)) <= 1e-8
        if accel == EVD:
            assert np.linalg.norm(f(x)) <= (1 + 1e-6) * np.linalg.norm(x)

    @CASES
    @given(random_graphs(max_nodes=15, connected=True), gammas, st.floats(-10, 10))
    def test_dc_preserved(self, g, gamma, c):
        ctx = GraphContext(g)
        x = np.full(g.n_nodes, c)
        np.testing.assert_allclose(apply_filter_evd(ctx.decomposition, gamma, x), x, atol=1e-9)
        # the Chebyshev path is exact on constants up to its fit error at lambda = 0
        f = cheb_fit(gamma, ctx.lambda_max, 30)
        err0 = abs(float(f.evaluate(0.0)) - 1.0)
        np.testing.assert_allclose(cheb_apply(ctx.L, f, x), x, atol=err0 * abs(c) + 1e-9)

    @CASES
    @given(random_graphs(max_nodes=15), st.floats(0.001, 5.0), seeds)
    def test_heat_diffusion_linear_symmetric_contractive(self, g, tau, seed):
        d = eigendecompose(graph_operators(g)[0])
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=(2, g.n_nodes))
        np.testing.assert_allclose(heat_diffusion(2 * x - y, tau, d), 2 * heat_diffusion(x, tau, d) - heat_diffusion(y, tau, d), atol=1e-9)
        assert abs(heat_diffusion(x, tau, d) @ y - x @ heat_diffusion(y, tau, d)) <= 1e-8
        assert np.linalg.norm(heat_diffusion(x, tau, d)) <= np.linalg.norm(x) * (1 + 1e-12)


class TestEquivariance:
    @CASES
    @given(random_graphs(min_nodes=3, max_nodes=15), seeds, st.sampled_from([TV, EN]),
           st.sampled_from([EVD, CHEB]))
    def test_graphdau_permutation_equivariant(self, g, seed, variant, accel):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(g.n_nodes)
        y = rng.normal(size=g.n_nodes)
        p = dau_params(variant, accel, 3, rng)
        out = graphdau_forward(p, y, GraphContext(g))[0]
        # node i of g becomes node perm[i]
        y_perm = np.empty_like(y)
        y_perm[perm] = y
        out_perm = graphdau_forward(p, y_perm, GraphContext(relabel(g, perm)))[0]
        np.testing.assert_allclose(out_perm[perm], out, atol=1e-9)

    @CASES
    @given(random_graphs(min_nodes=3, max_nodes=12), seeds)
    def test_nestdau_permutation_equivariant(self, g, seed):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(g.n_nodes)
        mask = (rng.random(g.n_nodes) < 0.6).astype(float)
        y = mask * rng.normal(size=g.n_nodes)
        p = NestParams(rng.uniform(0.2, 3.0, 2), [dau_params(EN, EVD, 2, rng) for _ in range(2)])
        out = nestdau_forward(p, y, DegradationOp(mask), GraphContext(g))[0]
        y_perm, m_perm = np.empty_like(y), np.empty_like(mask)
        y_perm[perm], m_perm[perm] = y, mask
        out_perm = nestdau_forward(p, y_perm, DegradationOp(m_perm), GraphContext(relabel(g, perm)))[0]
        np.testing.assert_allclose(out_perm[perm], out, atol=1e-9)

    @CASES
    @given(random_graphs(max_nodes=15, connected=True), seeds, st.floats(-5, 5), st.sampled_from([TV, EN]))
    def test_graphdau_dc_fixed_point(self, g, seed, c, variant):
        p = dau_params(variant, EVD, 4, np.random.default_rng(seed))
        y = np.full(g.n_nodes, c)
        np.testing.assert_allclose(graphdau_forward(p, y, GraphContext(g))[0], y, atol=1e-9)


class TestProjection:
    @CASES
    @given(seeds, st.sampled_from([TV, EN]), st.booleans(), st.floats(1e-4, 5.0))
    def test_parameters_stay_feasible(self, seed, variant, nested, lr):
        rng = np.random.default_rng(seed)
        if nested:
            p = NestParams(rng.uniform(1e-6, 2.0, 2), [dau_params(variant, EVD, 2, rng) for _ in range(2)])
        else:
            p = dau_params(variant, EVD, 3, rng)
        st_ = OptimState(lr=lr)
        for _ in range(3):
            scale = 10.0 ** rng.uniform(-3, 3)
            arrays = [scale * rng.normal(size=a.shape) for a in p.arrays()]
            if nested:
                dens, k = [], 1
                for d in p.denoisers:
                    m = len(d.arrays())
                    dens.append(GradBundle(*arrays[k:k + 2], arrays[k + 2] if m == 3 else None))
                    k += m
                grads = GradBundle(d_rho=arrays[0], denoisers=dens)
            else:
                grads = GradBundle(*arrays[:2], arrays[2] if len(arrays) == 3 else None)
            optimizer_step(st_, p, grads)
            p.validate()


def planted_dataset(seed, n_samples=3):
    rng = np.random.default_rng(seed)
    from graphdau.graph import sensor_graph

    g = sensor_graph(12, k=3, seed=seed % 1000)
    samples = []
    for _ in range(n_samples):
        clean = rng.normal(size=12)
        samples.append(Sample("g0", clean, clean + rng.normal(0, 0.5, 12)))
    return Dataset({"g0": g}, samples, contiguous_splits((0, n_samples, 0)))


class TestGridSearchExhaustive:
    @CASES
    @given(seeds, st.lists(st.floats(0.001, 10.0), min_size=1, max_size=5),
           st.lists(st.floats(0.01, 10.0), min_size=1, max_size=3), st.sampled_from([HEAT, PNP]))
    def test_never_worse_than_any_point(self, seed, taus, rhos, kind):
        ds = planted_dataset(seed)
        valid = ds.split("valid")
        grid = {"tau": taus} if kind == HEAT else {"rho": rhos, "tau": taus}
        spec, best, table = grid_search(BaselineSpec(kind, iters=2), grid, valid, ds)
        assert len(table) == len(lattice(grid))
        for hp, _ in table:
            err = mean_rmse(predict(BaselineSpec(kind, hp, 2).run, valid, ds), valid)[0]
            assert best <= err
        # the winner is the first lattice point attaining the minimum
        first = next(hp for hp, e in table if e == best)
        assert spec.hyper == first
