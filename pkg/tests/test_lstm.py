import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import direction_dicts, random_direction, random_image, random_model, random_precision
from oracles import ctc_collapse, real_lstm_direction, sigmoid
from qbilstm.errors import BatchNormFoldError, DimensionError
from qbilstm.lstm import (
    BatchNormParams,
    LstmDirectionParams,
    LstmState,
    NetworkModel,
    OutputLayerParams,
    bilstm_forward,
    fold_batchnorm,
    greedy_decode,
    infer,
    interleaved_forward,
    kernel_quantizers,
    lstm_cell_step,
    output_layer,
    pack_direction,
    prepare,
)
from qbilstm.quant import (
    PrecisionConfig,
    binarize_activation,
    cell_spec,
    make_signed_spec,
    make_unsigned_spec,
    quantize,
)


def zero_direction(H, I):
    return LstmDirectionParams.from_packed(np.zeros((4 * H, I)), np.zeros((4 * H, H)), np.zeros(4 * H))


def on_grid(values, spec):
    return all(spec.contains(float(v)) for v in np.ravel(values))


class TestCellStep:
    def test_zero_weights_give_zero_output(self, rng):
        p = zero_direction(3, 2)
        state, y = lstm_cell_step(p, rng.uniform(0, 1, 2), LstmState.zeros(3), PrecisionConfig(4, 4, 4))
        assert np.all(y == 0) and np.all(state.y == 0) and np.all(state.c == 0)

    def test_forget_gate_preserves_state(self):
        prec = PrecisionConfig(8, 8, 8)
        W = np.zeros((4, 1))
        R = np.zeros((4, 1))
        b = np.array([0.0, -1.0, 5.0, 0.0])  # node, input, forget, output
        p = LstmDirectionParams.from_packed(W, R, b)
        v = 2.5
        state, _ = lstm_cell_step(p, [0.0], LstmState(np.zeros(1), np.array([v])), prec)
        b_f = quantize(5.0, make_signed_spec(8))  # bias clipped to the weight grid
        forget = quantize(sigmoid(b_f), make_unsigned_spec(8))
        assert state.c[0] == quantize(forget * v, cell_spec(8))
        assert state.c[0] == pytest.approx(forget * v, abs=2 ** -5)

    @pytest.mark.parametrize("H", [1, 4])
    def test_high_precision_matches_real_reference(self, H):
        rng = np.random.default_rng(H)
        I, C = 3, 10
        p = random_direction(rng, H, I)
        X = random_image(rng, C, I)
        ref = np.array(real_lstm_direction(*direction_dicts(p), X.tolist()))
        prec = PrecisionConfig.uniform(16)
        state = LstmState.zeros(H)
        for t in range(C):
            state, y = lstm_cell_step(p, X[t], state, prec)
            assert np.max(np.abs(y - ref[t])) <= 2 ** -8

    def test_output_grids(self, rng):
        H, I = 4, 3
        p = random_direction(rng, H, I)
        prec = PrecisionConfig.parse("2/3/4/5")
        state = LstmState.zeros(H)
        for x in random_image(rng, 6, I):
            state, y = lstm_cell_step(p, x, state, prec)
            assert on_grid(y, make_signed_spec(3))
            assert on_grid(state.y, make_signed_spec(5))
            assert on_grid(state.c, cell_spec(8))

    def test_rq_aq_separation(self, rng):
        H, I = 5, 3
        p = random_direction(rng, H, I)
        X = random_image(rng, 8, I)
        split = PrecisionConfig.parse("1/2/1/1")
        state = LstmState.zeros(H)
        for x in X:
            state, y = lstm_cell_step(p, x, state, split)
            assert set(np.unique(state.y)) <= {-1.0, 1.0}
            assert on_grid(y, make_signed_spec(2))
        same = PrecisionConfig.parse("1/2/1")
        state = LstmState.zeros(H)
        for x in X:
            state, y = lstm_cell_step(p, x, state, same)
            np.testing.assert_array_equal(state.y, y)

    def test_recurrent_path_uses_rq_only(self, rng):
        # changing AQ must not change the recurrent trajectory when RQ is pinned
        H, I = 4, 2
        p = random_direction(rng, H, I)
        X = random_image(rng, 6, I)
        traj = []
        for aq in (2, 5):
            state = LstmState.zeros(H)
            ys = []
            for x in X:
                state, _ = lstm_cell_step(p, x, state, PrecisionConfig(3, aq, 4, RQ=3))
                ys.append(state.y.copy())
            traj.append(np.array(ys))
        np.testing.assert_array_equal(traj[0], traj[1])

    def test_shape_errors(self):
        p = zero_direction(2, 3)
        with pytest.raises(DimensionError):
            lstm_cell_step(p, np.zeros(2), LstmState.zeros(2), PrecisionConfig(2, 2, 2))
        with pytest.raises(DimensionError):
            lstm_cell_step(p, np.zeros(3), LstmState.zeros(3), PrecisionConfig(2, 2, 2))


def test_gate_and_node_ranges():
    prec = PrecisionConfig(2, 2, 2)
    qp = kernel_quantizers(prec).reshape(5, 4)
    gate, node, cell = qp[0], qp[1], qp[2]
    f = int(gate[1])
    assert gate[2] * 2.0 ** -f == 0.0 and gate[3] * 2.0 ** -f == 1 - 2.0 ** -f
    f = int(node[1])
    assert node[2] * 2.0 ** -f == -1.0 and node[3] * 2.0 ** -f == 1 - 2.0 ** -f
    assert cell[2] * 2.0 ** -cell[1] == -8.0 and cell[3] * 2.0 ** -cell[1] == 7.9375


def test_params_shape_validation(rng):
    with pytest.raises(DimensionError):
        LstmDirectionParams.from_packed(np.zeros((8, 3)), np.zeros((8, 3)), np.zeros(8))


def test_packing_is_idempotent(rng):
    p = random_direction(rng, 4, 3)
    for wq in (1, 2, 5):
        q = p.quantized(wq)
        again = pack_direction(q, wq)
        first = pack_direction(p, wq)
        np.testing.assert_array_equal(again.W, first.W)
        assert again.scale == first.scale
    q1 = p.quantized(1)
    assert set(np.unique(q1.W_I)) <= {-1 / math.sqrt(7), 1 / math.sqrt(7)}


def naive_quantized_direction(params, X, prec, reverse=False):
    """Scalar re-implementation: quantize each weight, run each cell with Python floats."""
    H, I = params.H, params.I
    gates = ("I", "i", "f", "o")
    if prec.WQ == 1:
        s = 1 / math.sqrt(H + I)
        wq = lambda v: 1.0 if v >= 0 else -1.0  # noqa: E731
    else:
        s = 1.0
        spec = make_signed_spec(prec.WQ)
        wq = lambda v: quantize(v, spec)  # noqa: E731
    W = {g: [[wq(v) for v in row] for row in getattr(params, f"W_{g}")] for g in gates}
    R = {g: [[wq(v) for v in row] for row in getattr(params, f"R_{g}")] for g in gates}
    b = {g: [wq(v) for v in getattr(params, f"b_{g}")] for g in gates}
    gate_q = make_unsigned_spec(prec.cell_bits)
    node_q = make_signed_spec(prec.cell_bits)
    c_q = cell_spec(prec.cell_bits)
    in_q = make_unsigned_spec(prec.IQ)

    def act(v, bits):
        return binarize_activation(v) if bits == 1 else quantize(v, make_signed_spec(bits))

    y = [0.0] * H
    c = [0.0] * H
    out = [None] * len(X)
    order = range(len(X) - 1, -1, -1) if reverse else range(len(X))
    for t in order:
        x = [quantize(v, in_q) for v in X[t]]
        new_y, new_c, y_out = [], [], []
        for j in range(H):
            pre = {}
            for g in gates:
                acc = 0.0
                for m in range(I):
                    acc += W[g][j][m] * x[m]
                for m in range(H):
                    acc += R[g][j][m] * y[m]
                pre[g] = (acc + b[g][j]) * s
            node = quantize(math.tanh(pre["I"]), node_q)
            ig, fg, og = (quantize(sigmoid(pre[g]), gate_q) for g in ("i", "f", "o"))
            cj = quantize(ig * node + fg * c[j], c_q)
            yraw = og * quantize(math.tanh(cj), node_q)
            new_c.append(cj)
            new_y.append(act(yraw, prec.RQ))
            y_out.append(act(yraw, prec.AQ))
        y, c = new_y, new_c
        out[t] = y_out
    return np.array(out)


class TestBilstm:
    def test_single_column(self, rng):
        m = random_model(rng, 3, 2)
        prec = PrecisionConfig(4, 4, 4)
        X = random_image(rng, 1, 2)
        feats = bilstm_forward(m, X, prec)
        _, fw = lstm_cell_step(m.forward, X[0], LstmState.zeros(3), prec)
        _, bw = lstm_cell_step(m.backward, X[0], LstmState.zeros(3), prec)
        assert feats.shape == (1, 6)
        np.testing.assert_array_equal(feats[0], np.concatenate([fw, bw]))

    def test_palindrome_symmetry(self, rng):
        H, I = 2, 3
        d = random_direction(rng, H, I)
        m = NetworkModel(d, d, OutputLayerParams(np.zeros((2, 2 * H)), np.zeros(2)), ["_", "a"])
        half = random_image(rng, 3, I)
        X = np.vstack([half, half[::-1]])
        feats = bilstm_forward(m, X, PrecisionConfig(4, 4, 4))
        C = len(X)
        for t in range(C):
            np.testing.assert_array_equal(feats[t, :H], feats[C - 1 - t, H:])

    @pytest.mark.parametrize("prec", ["1/1/1", "1/2/1/1", "2/2/2", "4/4/8", "8/3/2/6"])
    def test_matches_naive_two_pass(self, prec):
        rng = np.random.default_rng(99)
        m = random_model(rng, 3, 2)
        X = random_image(rng, 4, 2)
        pc = PrecisionConfig.parse(prec)
        fw = naive_quantized_direction(m.forward, X, pc)
        bw = naive_quantized_direction(m.backward, X, pc, reverse=True)
        np.testing.assert_array_equal(bilstm_forward(m, X, pc), np.hstack([fw, bw]))

    def test_empty_and_mismatch(self, rng):
        m = random_model(rng, 3, 2)
        assert bilstm_forward(m, np.zeros((0, 2)), PrecisionConfig(2, 2, 2)).shape == (0, 6)
        with pytest.raises(DimensionError):
            bilstm_forward(m, np.zeros((4, 3)), PrecisionConfig(2, 2, 2))

    def test_precision_convergence(self):
        rng = np.random.default_rng(2024)
        H, I, C = 4, 4, 12
        m = random_model(rng, H, I)
        X = random_image(rng, C, I)
        ref = np.hstack([
            np.array(real_lstm_direction(*direction_dicts(m.forward), X.tolist())),
            np.array(real_lstm_direction(*direction_dicts(m.backward), X.tolist(), reverse=True)),
        ])
        devs = [np.max(np.abs(bilstm_forward(m, X, PrecisionConfig.uniform(k)) - ref)) for k in (4, 8, 12, 16)]
        assert all(a > b for a, b in zip(devs, devs[1:])), devs
        assert devs[-1] <= 2 ** -8


class TestInterleaved:
    def test_availability_c4(self, rng):
        m = random_model(rng, 2, 2)
        r = interleaved_forward(m, random_image(rng, 4, 2), PrecisionConfig(2, 2, 2))
        # round n runs fw(n-1) then bw(4-n); column t is complete at max(t+1, 4-t)
        assert r.availability.tolist() == [4, 3, 3, 4]
        assert r.steps == 8
        assert r.schedule == (("fw", 0), ("bw", 3), ("fw", 1), ("bw", 2),
                              ("fw", 2), ("bw", 1), ("fw", 3), ("bw", 0))

    def test_availability_c2(self, rng):
        m = random_model(rng, 2, 2)
        r = interleaved_forward(m, random_image(rng, 2, 2), PrecisionConfig(2, 2, 2))
        assert r.availability.tolist() == [2, 2]
        assert r.steps == 4

    def test_first_available_column_is_middle(self, rng):
        m = random_model(rng, 2, 2)
        for C in (5, 6, 9):
            r = interleaved_forward(m, random_image(rng, C, 2), PrecisionConfig(2, 2, 2))
            first = set(np.flatnonzero(r.availability == r.availability.min()))
            assert first <= {C // 2 - 1, C // 2, (C - 1) // 2}
            assert r.availability.min() == C // 2 + 1

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), H=st.integers(1, 8), I=st.integers(1, 8), C=st.integers(0, 16))
    def test_equivalent_to_bilstm(self, seed, H, I, C):
        rng = np.random.default_rng(seed)
        m = random_model(rng, H, I)
        prec = random_precision(rng)
        X = random_image(rng, C, I)
        np.testing.assert_array_equal(interleaved_forward(m, X, prec).features, bilstm_forward(m, X, prec))


class TestBatchNormFold:
    def test_identity(self, rng):
        w, b = rng.normal(size=(3, 4)), rng.normal(size=3)
        bn = BatchNormParams(np.ones(4), np.zeros(4), np.zeros(4), np.ones(4), 0.0)
        out = fold_batchnorm(w, b, bn, weight_bits=None)
        np.testing.assert_array_equal(out.weights, w)
        np.testing.assert_array_equal(out.bias, b)

    def test_unit_gain(self, rng):
        w, b = rng.normal(size=(3, 4)), rng.normal(size=3)
        bn = BatchNormParams(np.full(4, 2.0), np.zeros(4), np.zeros(4), np.full(4, 3.0), 1.0)
        np.testing.assert_array_equal(fold_batchnorm(w, b, bn, weight_bits=None).weights, w)

    def test_random_equivalence(self, rng):
        for _ in range(20):
            K, F = 3, 6
            w, b = rng.normal(size=(K, F)), rng.normal(size=K)
            bn = BatchNormParams(rng.uniform(0.5, 2, F), rng.normal(size=F), rng.normal(size=F),
                                 rng.uniform(0.1, 2, F), 1e-5)
            z = rng.normal(size=F)
            out = fold_batchnorm(w, b, bn, weight_bits=None)
            np.testing.assert_allclose(out.weights @ z + out.bias, w @ bn.apply(z) + b, atol=1e-12, rtol=0)

    def test_quantized_by_default(self, rng):
        w, b = rng.normal(size=(3, 4)), rng.normal(size=3)
        bn = BatchNormParams(np.ones(4), np.zeros(4), np.zeros(4), np.ones(4), 0.0)
        out = fold_batchnorm(w, b, bn)
        assert on_grid(out.weights, make_signed_spec(8))

    def test_bad_variance(self):
        bn = BatchNormParams(np.ones(2), np.zeros(2), np.zeros(2), np.array([1.0, -1.0]), 0.5)
        with pytest.raises(BatchNormFoldError):
            fold_batchnorm(np.ones((1, 2)), np.zeros(1), bn)


class TestOutputLayer:
    def test_zero_weights(self, rng):
        out = OutputLayerParams(np.zeros((3, 4)), [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(output_layer(rng.normal(size=(5, 4)), out), np.tile([1.0, 2.0, 3.0], (5, 1)))

    def test_projection(self):
        out = OutputLayerParams([[1.0, 0.0]], [0.0])
        np.testing.assert_array_equal(output_layer([[0.25, -0.5], [0.75, 0.1]], out), [[0.25], [0.75]])

    def test_against_dot_products(self, rng):
        spec = make_signed_spec(8)
        W = np.vectorize(lambda v: quantize(v, spec))(rng.uniform(-1, 1, (4, 6)))
        out = OutputLayerParams(W, rng.normal(size=4))
        Z = np.vectorize(lambda v: quantize(v, make_signed_spec(4)))(rng.uniform(-1, 1, (5, 6)))
        expected = [[sum(W[k][j] * Z[t][j] for j in range(6)) + out.bias[k] for k in range(4)] for t in range(5)]
        np.testing.assert_array_equal(output_layer(Z, out), expected)

    def test_width_mismatch(self):
        with pytest.raises(DimensionError):
            output_layer(np.zeros((2, 3)), OutputLayerParams(np.zeros((1, 4)), [0.0]))


class TestGreedyDecode:
    alphabet = ("<blank>", "a", "b")

    @staticmethod
    def onehot(labels, K=3):
        z = np.zeros((len(labels), K))
        z[np.arange(len(labels)), labels] = 1.0
        return z

    @pytest.mark.parametrize("labels, text", [([1, 1, 0, 2], "ab"), ([0, 0, 0], ""), ([1, 0, 1], "aa"),
                                              ([2, 2, 2], "b"), ([1, 2, 1], "aba")])
    def test_cases(self, labels, text):
        assert greedy_decode(self.onehot(labels), self.alphabet) == text

    def test_empty(self):
        assert greedy_decode(np.zeros((0, 3)), self.alphabet) == ""

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(0, 2), max_size=20))
    def test_matches_collapse_oracle(self, labels):
        expected = "".join(self.alphabet[k] for k in ctc_collapse(labels, 0))
        assert greedy_decode(self.onehot(labels), self.alphabet) == expected


class TestInfer:
    def test_zero_model_at_most_one_symbol(self, rng):
        H, I = 3, 2
        m = NetworkModel(zero_direction(H, I), zero_direction(H, I),
                         OutputLayerParams(np.zeros((3, 2 * H)), [0.0, 0.3, 0.1]), ["_", "a", "b"])
        assert infer(m, random_image(rng, 7, I), PrecisionConfig(2, 2, 2)) == "a"

    def test_single_column(self, rng):
        m = random_model(rng, 3, 2)
        assert len(infer(m, random_image(rng, 1, 2), PrecisionConfig(4, 4, 4))) <= 1

    def test_composition(self, rng):
        m = random_model(rng, 4, 3, K=4)
        X = random_image(rng, 9, 3)
        prec = PrecisionConfig.parse("2/3/4/2")
        net = prepare(m, prec)
        logits = np.array([[sum(net.output.weights[k][j] * f for j, f in enumerate(row)) + net.output.bias[k]
                            for k in range(4)] for row in bilstm_forward(m, X, prec)])
        labels = list(np.argmax(logits, axis=1))
        expected = "".join(m.alphabet[k] for k in ctc_collapse(labels, 0))
        assert infer(m, X, prec) == expected

    def test_prepare_cache_and_mismatch(self, rng):
        m = random_model(rng, 2, 2)
        p = PrecisionConfig(2, 2, 2)
        net = prepare(m, p)
        assert prepare(m, p) is net
        assert prepare(net) is net
        with pytest.raises(ValueError):
            prepare(net, PrecisionConfig(3, 3, 3))


def test_argmax_invariance(rng):
    z = rng.normal(scale=5, size=(1000, 82))
    soft = np.exp(z - z.max(axis=1, keepdims=True))
    soft /= soft.sum(axis=1, keepdims=True)
    np.testing.assert_array_equal(np.argmax(z, axis=1), np.argmax(soft, axis=1))
