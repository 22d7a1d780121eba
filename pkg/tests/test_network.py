import numpy as np
import pytest

from demandcast.network import (
    EvaluationError,
    LayerSpec,
    Network,
    Topology,
    Wiring,
    checkpoint_dict,
    forward,
    forward_batch,
    gradient,
    init_weights,
    jacobian,
    load_checkpoint,
    loss_and_gradient,
    network_from_checkpoint,
    pack_theta,
    param_count,
    residuals_and_jacobian,
    save_checkpoint,
    unpack_theta,
    wiring_for,
    _forward_all,
    _propagate_back,
    _assemble_gradient,
)


def rel_err(a, b):
    denom = np.maximum.reduce([np.ones_like(a), np.abs(a), np.abs(b)])
    return np.abs(a - b) / denom


def fd_gradient(net, X, Y, h=1e-5):
    g = np.zeros_like(net.theta)
    for i in range(len(net.theta)):
        tp, tm = net.theta.copy(), net.theta.copy()
        tp[i] += h
        tm[i] -= h
        lp, _ = loss_and_gradient(net.wiring, tp, X, Y)
        lm, _ = loss_and_gradient(net.wiring, tm, X, Y)
        g[i] = (lp - lm) / (2 * h)
    return g


# --- parameter counting ------------------------------------------------------------


def test_param_count_mlp_7_4_1():
    # layout enumeration by hand: 7*4 weights + 4 biases + 4*1 + 1
    assert param_count(Topology("MLP", 7, (4,))) == 7 * 4 + 4 + 4 * 1 + 1 == 37


def test_param_count_cfmlp_7_4_1():
    # cascade: output also reads the raw input
    assert param_count(Topology("CFMLP", 7, (4,))) == (7 * 4 + 4) + ((7 + 4) * 1 + 1) == 44


def test_param_count_mlp_1_1_1():
    assert param_count(Topology("MLP", 1, (1,))) == 4


@pytest.mark.parametrize("scheme", ["MLP", "CFMLP"])
@pytest.mark.parametrize("hidden", [(3,), (5, 2)])
def test_param_count_matches_enumeration(scheme, hidden):
    top = Topology(scheme, 7, hidden)
    sizes = (7,) + hidden + (1,)
    total = 0
    for k in range(1, len(sizes)):
        fan_in = sum(sizes[:k]) if scheme == "CFMLP" else sizes[k - 1]
        total += sizes[k] * fan_in + sizes[k]
    assert param_count(top) == total
    assert len(init_weights(top, 0).theta) == total


def test_topology_validation():
    with pytest.raises(ValueError):
        Topology("MLP", 7, ())
    with pytest.raises(ValueError):
        Topology("MLP", 7, (1, 2, 3))
    with pytest.raises(ValueError):
        Topology("GRU", 7, (4,))
    with pytest.raises(ValueError):
        Topology("MLP", 7, (0,))


# --- initialization ----------------------------------------------------------------


def test_init_deterministic():
    top = Topology("CFMLP", 7, (4, 2))
    a = init_weights(top, 123)
    b = init_weights(top, 123)
    np.testing.assert_array_equal(a.theta, b.theta)
    c = init_weights(top, 124)
    assert not np.array_equal(a.theta, c.theta)


def test_init_biases_zero():
    top = Topology("MLP", 7, (4,))
    net = init_weights(top, 5)
    for weights, bias in unpack_theta(net.wiring, net.theta):
        assert np.all(bias == 0.0)
        assert all(np.any(w != 0.0) for w in weights.values())


def test_init_uniform_bound_first_layer():
    # 7 -> 4 layer: |w| <= sqrt(6 / (7 + 4)) over ~11k draws
    top = Topology("MLP", 7, (4,))
    bound = np.sqrt(6.0 / 11.0)
    draws = []
    for seed in range(400):
        net = init_weights(top, seed)
        weights, _ = unpack_theta(net.wiring, net.theta)[0]
        draws.append(weights[0].ravel())
    draws = np.concatenate(draws)
    assert len(draws) >= 10_000
    assert np.max(np.abs(draws)) <= bound


# --- forward -----------------------------------------------------------------------


def test_forward_zero_theta_outputs_zero(rng):
    for scheme in ("MLP", "CFMLP"):
        top = Topology(scheme, 7, (4, 2))
        net = init_weights(top, 0).with_theta(np.zeros(param_count(top)))
        for _ in range(5):
            y, _ = forward(net, rng.normal(size=7))
            assert y == 0.0


def test_forward_hand_evaluated_tanh():
    top = Topology("MLP", 1, (1,))
    net = init_weights(top, 0).with_theta(np.array([1.0, 0.0, 1.0, 0.0]))
    y, trace = forward(net, [0.5])
    assert y == pytest.approx(np.tanh(0.5), abs=1e-12)
    assert y == pytest.approx(0.462117, abs=1e-6)
    assert trace.activations[0][0] == np.tanh(0.5)


def test_forward_rejects_bad_input():
    net = init_weights(Topology("MLP", 3, (2,)), 0)
    with pytest.raises(ValueError):
        forward(net, [1.0, 2.0])
    with pytest.raises(EvaluationError):
        forward(net, [1.0, np.nan, 3.0])


def test_forward_deterministic_bitwise(rng):
    net = init_weights(Topology("CFMLP", 5, (4,)), 8)
    x = rng.normal(size=5)
    a, _ = forward(net, x)
    b, _ = forward(net, x)
    assert a == b


def zero_skip_weights(net: Network) -> Network:
    """Zero every cascade block that is not the plain chain (source != k-1)."""
    structured = unpack_theta(net.wiring, net.theta)
    for k, (weights, _) in enumerate(structured, start=1):
        for src in list(weights):
            if src != k - 1:
                weights[src] = np.zeros_like(weights[src])
    return net.with_theta(pack_theta(net.wiring, structured))


def mlp_from_cfmlp_chain(cf: Network) -> Network:
    """Copy the chain blocks of a CFMLP into the matching plain MLP."""
    top = cf.topology
    mlp_top = Topology("MLP", top.input_dim, top.hidden_sizes, top.output_dim)
    mlp = init_weights(mlp_top, 0)
    cf_struct = unpack_theta(cf.wiring, cf.theta)
    mlp_struct = unpack_theta(mlp.wiring, mlp.theta)
    out = []
    for k, ((cf_w, cf_b), _) in enumerate(zip(cf_struct, mlp_struct), start=1):
        out.append(({k - 1: cf_w[k - 1]}, cf_b))
    return mlp.with_theta(pack_theta(mlp.wiring, out))


@pytest.mark.parametrize("hidden", [(4,), (5, 3)])
def test_cfmlp_with_zeroed_skips_equals_mlp(rng, hidden):
    top = Topology("CFMLP", 7, hidden)
    cf = zero_skip_weights(init_weights(top, 21))
    mlp = mlp_from_cfmlp_chain(cf)
    X = rng.normal(size=(1000, 7))
    delta = np.abs(forward_batch(cf, X) - forward_batch(mlp, X))
    assert delta.max() <= 1e-12


# --- gradient ----------------------------------------------------------------------


def test_gradient_zero_at_perfect_fit(rng):
    net = init_weights(Topology("MLP", 3, (4,)), 2)
    X = rng.normal(size=(10, 3))
    Y = forward_batch(net, X)[:, 0]
    loss, grad = gradient(net, (X, Y))
    assert loss == 0.0
    np.testing.assert_array_equal(grad, np.zeros_like(grad))


def test_gradient_quadratic_scaling(rng):
    net = init_weights(Topology("CFMLP", 3, (4,)), 3)
    X = rng.normal(size=(12, 3))
    y = rng.normal(size=12)
    y_hat = forward_batch(net, X)[:, 0]
    loss1, _ = gradient(net, (X, y))
    loss4, _ = gradient(net, (X, 2 * y - y_hat))
    assert loss4 == pytest.approx(4 * loss1, rel=1e-12)


@pytest.mark.parametrize("scheme", ["MLP", "CFMLP"])
@pytest.mark.parametrize("hidden", [(4,), (6, 3)])
def test_gradient_matches_central_differences(rng, scheme, hidden):
    top = Topology(scheme, 5, hidden)
    net = init_weights(top, 17)
    X = rng.normal(size=(8, 5))
    Y = rng.normal(size=8)
    _, grad = gradient(net, (X, Y))
    fd = fd_gradient(net, X, Y[:, None])
    assert rel_err(grad, fd).max() <= 1e-6


def test_gradient_accepts_list_of_pairs(rng):
    net = init_weights(Topology("MLP", 2, (3,)), 4)
    pairs = [(rng.normal(size=2), float(rng.normal())) for _ in range(6)]
    loss_pairs, grad_pairs = gradient(net, pairs)
    X = np.array([p[0] for p in pairs])
    Y = np.array([p[1] for p in pairs])
    loss_arr, grad_arr = gradient(net, (X, Y))
    assert loss_pairs == loss_arr
    np.testing.assert_array_equal(grad_pairs, grad_arr)


def test_gradient_from_stored_trace_matches_recomputation(rng):
    net = init_weights(Topology("CFMLP", 4, (3, 2)), 9)
    X = rng.normal(size=(7, 4))
    Y = rng.normal(size=(7, 1))
    _, acts = _forward_all(net.wiring, net.theta, X)
    G = _propagate_back(net.wiring, net.theta, acts, acts[-1] - Y)
    reused = _assemble_gradient(net.wiring, acts, G)
    _, recomputed = gradient(net, (X, Y[:, 0]))
    np.testing.assert_array_equal(reused, recomputed)


# --- jacobian ----------------------------------------------------------------------


def test_jacobian_transpose_times_residuals_is_gradient(rng):
    for scheme, hidden in (("MLP", (4,)), ("CFMLP", (5, 2))):
        net = init_weights(Topology(scheme, 5, hidden), 31)
        X = rng.normal(size=(9, 5))
        Y = rng.normal(size=9)
        J = jacobian(net, (X, Y))
        r = Y - forward_batch(net, X)[:, 0]
        _, grad = gradient(net, (X, Y))
        assert np.abs(J.T @ r - grad).max() <= 1e-10


def test_jacobian_single_linear_unit():
    wiring = Wiring(input_dim=1, layers=(LayerSpec(1, (0,), "linear"),))
    theta = np.array([0.5, 0.0])  # w, b
    r, J = residuals_and_jacobian(wiring, theta, np.array([[2.0]]), np.array([[7.0]]))
    assert r[0] == 7.0 - 1.0
    assert J[0, 0] == -2.0  # d(y - w*x)/dw = -x
    assert J[0, 1] == -1.0


def test_jacobian_rows_match_residual_differences(rng):
    net = init_weights(Topology("CFMLP", 3, (4,)), 12)
    X = rng.normal(size=(6, 3))
    Y = rng.normal(size=(6, 1))
    _, J = residuals_and_jacobian(net.wiring, net.theta, X, Y)
    h = 1e-5
    fd = np.zeros_like(J)
    for i in range(len(net.theta)):
        tp, tm = net.theta.copy(), net.theta.copy()
        tp[i] += h
        tm[i] -= h
        rp, _ = residuals_and_jacobian(net.wiring, tp, X, Y)
        rm, _ = residuals_and_jacobian(net.wiring, tm, X, Y)
        fd[:, i] = (rp - rm) / (2 * h)
    assert rel_err(J, fd).max() <= 1e-6


def test_multi_output_jacobian_identity(rng):
    # autoencoder-shaped wiring: gradient must equal J^T r for N*out residuals
    wiring = Wiring(
        input_dim=4,
        layers=(LayerSpec(2, (0,), "tanh"), LayerSpec(4, (1,), "linear")),
    )
    theta = rng.normal(size=wiring.param_count) * 0.4
    X = rng.normal(size=(6, 4))
    r, J = residuals_and_jacobian(wiring, theta, X, X)
    _, grad = loss_and_gradient(wiring, theta, X, X)
    assert np.abs(J.T @ r - grad).max() <= 1e-10


# --- flatten / checkpoints -----------------------------------------------------------


def test_pack_unpack_round_trip(rng):
    net = init_weights(Topology("CFMLP", 6, (5, 3)), 77)
    again = pack_theta(net.wiring, unpack_theta(net.wiring, net.theta))
    np.testing.assert_array_equal(again, net.theta)
    X = rng.normal(size=(4, 6))
    np.testing.assert_array_equal(
        forward_batch(net, X), forward_batch(net.with_theta(again), X)
    )


def test_checkpoint_round_trip_bit_exact(tmp_path, rng):
    net = init_weights(Topology("CFMLP", 7, (4, 2)), 55)
    # make parameters "ugly" so formatting is actually exercised
    net = net.with_theta(net.theta * np.pi)
    path = tmp_path / "model.ckpt"
    save_checkpoint(net, path)
    loaded = load_checkpoint(path)
    np.testing.assert_array_equal(loaded.theta, net.theta)
    assert loaded.topology == net.topology
    x = rng.normal(size=7)
    assert forward(loaded, x)[0] == forward(net, x)[0]


def test_checkpoint_dict_rejects_other_formats():
    net = init_weights(Topology("MLP", 2, (2,)), 0)
    d = checkpoint_dict(net)
    d["format"] = "something-else"
    with pytest.raises(ValueError):
        network_from_checkpoint(d)


def test_network_theta_validation():
    top = Topology("MLP", 2, (2,))
    wiring = wiring_for(top)
    with pytest.raises(ValueError):
        Network(wiring=wiring, theta=np.zeros(3))
    with pytest.raises(ValueError):
        Network(wiring=wiring, theta=np.full(wiring.param_count, np.nan))
