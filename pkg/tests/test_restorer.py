import json

import numpy as np
import pytest

from graphdau.context import EVD, GraphContext
from graphdau.denoiser import EN, TV, DauParams, ParamError, graphdau_forward
from graphdau.graph import build_graph, sensor_graph
from graphdau.restorer import DegradationOp, NestParams, inverse_step, nestdau_forward, params_from_dict


class TestDegradationOp:
    def test_identity(self):
        H = DegradationOp.identity()
        assert H.kind == "identity"
        x = np.arange(4.0)
        np.testing.assert_array_equal(H.apply(x), x)

    def test_mask_idempotent(self):
        H = DegradationOp.from_mask([1, 0, 1, 0])
        assert H.kind == "diagonal-mask"
        x = np.arange(1.0, 5.0)
        np.testing.assert_array_equal(H.apply(H.apply(x)), H.apply(x))
        np.testing.assert_array_equal(H.apply(x), [1.0, 0.0, 3.0, 0.0])

    def test_non_binary_rejected(self):
        with pytest.raises(ParamError):
            DegradationOp.from_mask([1.0, 0.5])

    def test_length_mismatch(self):
        with pytest.raises(ParamError):
            DegradationOp.from_mask([1, 0]).diag(3)


class TestInverseStep:
    def test_masked_node_drops_observation(self):
        H = DegradationOp.from_mask([0.0, 1.0])
        x = inverse_step(H, 0.7, np.array([9.0, 9.0]), np.array([2.0, 2.0]), np.array([0.5, 0.5]))
        assert x[0] == pytest.approx(1.5)

    def test_small_rho_returns_observation(self):
        y = np.array([2.0, -1.0])
        x = inverse_step(DegradationOp.identity(), 1e-12, y, np.zeros(2), np.ones(2))
        np.testing.assert_allclose(x, y, atol=1e-10)

    def test_arithmetic(self):
        x = inverse_step(DegradationOp.identity(), 1.0, np.array([2.0]), np.zeros(1), np.zeros(1))
        assert x[0] == 1.0

    def test_invalid_rho(self):
        with pytest.raises(ParamError):
            inverse_step(DegradationOp.identity(), 0.0, np.zeros(1), np.zeros(1), np.zeros(1))

    def test_shape_mismatch(self):
        with pytest.raises(ParamError):
            inverse_step(DegradationOp.identity(), 1.0, np.zeros(2), np.zeros(3), np.zeros(2))


class TestNestParams:
    def test_init(self):
        p = NestParams.init(EN, EVD, L=3, P=4)
        assert p.P == 4 and len(p.denoisers) == 4
        np.testing.assert_array_equal(p.rho, [1.0] * 4)
        assert all(d.L == 3 and d.variant == EN for d in p.denoisers)

    def test_json_round_trip(self):
        p = NestParams.init(EN, "cheb", L=2, K=7, P=3)
        p.rho[:] = [0.5, 1.5, 2.5]
        q = params_from_dict(json.loads(json.dumps(p.to_dict())))
        assert isinstance(q, NestParams)
        for a, b in zip(p.arrays(), q.arrays()):
            np.testing.assert_array_equal(a, b)

    def test_dispatch_graphdau(self):
        assert isinstance(params_from_dict(DauParams.init().to_dict()), DauParams)

    def test_malformed_names_field(self):
        d = NestParams.init(TV, EVD, L=2, P=2).to_dict()
        del d["denoisers"][1]["beta"]
        with pytest.raises(ParamError, match=r"denoisers\[1\].*beta"):
            NestParams.from_dict(d)

    def test_rho_length_mismatch(self):
        d = NestParams.init(TV, EVD, L=2, P=2).to_dict()
        d["rho"] = [1.0]
        with pytest.raises(ParamError, match="rho"):
            NestParams.from_dict(d)

    def test_nonpositive_rho(self):
        with pytest.raises(ParamError):
            NestParams([0.0], [DauParams.init(L=1)])

    def test_denoiser_count(self):
        with pytest.raises(ParamError):
            NestParams([1.0, 1.0], [DauParams.init(L=1)])


class TestNestdauForward:
    def test_edgeless_identity_H(self):
        ctx = GraphContext(build_graph(4, []))
        y = np.array([1.0, 2.0, -3.0, 0.5])
        out, _ = nestdau_forward(NestParams.init(EN, EVD, L=3, P=3), y, DegradationOp.identity(), ctx)
        np.testing.assert_allclose(out, y, atol=1e-15)

    def test_zero_layers_returns_observation(self):
        ctx = GraphContext(sensor_graph(10, seed=0))
        y = np.random.default_rng(0).normal(size=10)
        out, _ = nestdau_forward(NestParams(np.zeros(0), []), y, DegradationOp.identity(), ctx)
        np.testing.assert_array_equal(out, y)

    @pytest.mark.parametrize("rho", [1e-3, 1.0, 1e3])
    def test_single_layer_returns_observation(self, rho):
        # s0 = y, t0 = 0 make the first data-fidelity step return y for any rho
        ctx = GraphContext(sensor_graph(30, seed=1))
        y = np.random.default_rng(1).normal(size=30)
        p = NestParams.init(TV, EVD, L=4, P=1, rho=rho)
        np.testing.assert_allclose(nestdau_forward(p, y, DegradationOp.identity(), ctx)[0], y, atol=1e-14)

    def test_large_rho_limit_of_two_layers(self):
        # rho_1 -> inf gives x2 -> s1 - t1 = 2 D0(y) - y
        ctx = GraphContext(sensor_graph(30, seed=1))
        y = np.random.default_rng(1).normal(size=30)
        den = DauParams.init(TV, EVD, L=4)
        ref = 2 * graphdau_forward(den, y, ctx)[0] - y
        gaps = []
        for rho in (1.0, 10.0, 100.0):
            p = NestParams([1.0, rho], [den.copy(), den.copy()])
            gaps.append(np.linalg.norm(nestdau_forward(p, y, DegradationOp.identity(), ctx)[0] - ref))
        assert gaps[0] > gaps[1] > gaps[2]
        # the residual is exactly (y - a) / (1 + rho) with a = 2 D0(y) - y
        for rho, gap in zip((1.0, 10.0, 100.0), gaps):
            assert gap == pytest.approx(np.linalg.norm(y - ref) / (1 + rho), rel=1e-10)

    def test_small_rho_anchors_observed_nodes(self):
        ctx = GraphContext(sensor_graph(30, seed=2))
        rng = np.random.default_rng(2)
        mask = (rng.random(30) < 0.6).astype(float)
        y = mask * rng.normal(size=30)
        p = NestParams.init(TV, EVD, L=3, P=1, rho=1e-3)
        _, tr = nestdau_forward(p, y, DegradationOp.from_mask(mask), ctx, capture=True)
        obs = mask == 1
        assert np.abs(tr.x[0][obs] - y[obs]).max() < 1e-2

    def test_trace_structure(self):
        ctx = GraphContext(sensor_graph(15, seed=3))
        p = NestParams.init(TV, EVD, L=2, P=3)
        _, tr = nestdau_forward(p, np.zeros(15), DegradationOp.identity(), ctx, capture=True)
        assert len(tr.x) == len(tr.s) == len(tr.t) == len(tr.inner) == 3
        assert all(len(inner) == 2 for inner in tr.inner)

    def test_batch_with_per_column_masks(self):
        ctx = GraphContext(sensor_graph(20, seed=4))
        rng = np.random.default_rng(4)
        masks = (rng.random((20, 3)) < 0.5).astype(float)
        Y = masks * rng.normal(size=(20, 3))
        p = NestParams.init(EN, EVD, L=2, P=2)
        out = nestdau_forward(p, Y, DegradationOp(masks), ctx)[0]
        for j in range(3):
            col = nestdau_forward(p, Y[:, j], DegradationOp(masks[:, j]), ctx)[0]
            np.testing.assert_allclose(out[:, j], col, atol=1e-13)

    def test_all_masked_ignores_underlying_signal(self):
        # observations are H z, so an all-zero mask hides z entirely
        ctx = GraphContext(sensor_graph(12, seed=5))
        p = NestParams.init(TV, EVD, L=2, P=2)
        H = DegradationOp.from_mask(np.zeros(12))
        a = nestdau_forward(p, H.apply(np.zeros(12)), H, ctx)[0]
        b = nestdau_forward(p, H.apply(np.full(12, 7.0)), H, ctx)[0]
        np.testing.assert_array_equal(a, b)
