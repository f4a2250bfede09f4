import numpy as np
import pytest

from harvestgov.nets import PARAM_KEYS, Adam, PolicyNetwork

from conftest import finite_difference_grads


def small_net(seed=0, input_dim=6, heads=(4,), hidden=10):
    return PolicyNetwork(input_dim, heads, hidden_width=hidden, rng=np.random.default_rng(seed))


def random_batch(net, seed, batch=16, spread=1.0):
    rng = np.random.default_rng(seed)
    obs = rng.normal(size=(batch, net.input_dim))
    actions = np.stack(
        [rng.integers(0, h, size=batch) for h in net.head_sizes], axis=1
    )
    old = PolicyNetwork(
        net.input_dim, net.head_sizes, hidden_width=net.hidden_width,
        rng=np.random.default_rng(seed + 1),
    )
    old.params["w_pi"] *= spread
    logp_old, _ = old.log_prob(obs, actions)
    adv = rng.normal(size=batch)
    rets = rng.normal(size=batch)
    return obs, actions, logp_old, adv, rets


class TestForward:
    def test_zero_weights_give_uniform_distribution(self):
        net = small_net()
        for k in net.params:
            net.params[k][:] = 0.0
        probs, values = net.forward(np.random.default_rng(0).normal(size=(5, 6)))
        assert np.allclose(probs[0], 0.25)
        assert np.allclose(values, 0.0)

    def test_softmax_rows_sum_to_one(self, rng):
        net = small_net(3, heads=(5, 3))
        x = rng.normal(size=(40, 6)) * 5
        probs, _ = net.forward(x)
        for pk in probs:
            assert np.allclose(pk.sum(axis=1), 1.0, atol=1e-12)
            assert (pk >= 0).all()

    def test_deterministic_given_params_and_input(self, rng):
        net = small_net(4)
        x = rng.normal(size=(7, 6))
        p1, v1 = net.forward(x)
        p2, v2 = net.forward(x)
        assert all(np.array_equal(a, b) for a, b in zip(p1, p2))
        assert np.array_equal(v1, v2)

    def test_dimension_mismatch_rejected(self):
        net = small_net()
        with pytest.raises(ValueError):
            net.forward(np.zeros((3, 9)))

    def test_finite_logits_on_finite_input(self, rng):
        net = small_net(5)
        x = rng.normal(size=(10, 6)) * 1e3
        probs, values = net.forward(x)
        assert all(np.isfinite(pk).all() for pk in probs)
        assert np.isfinite(values).all()


class TestSampling:
    def test_sample_reproducible(self, rng):
        net = small_net(6)
        x = rng.normal(size=(30, 6))
        a1, lp1, v1 = net.sample(x, np.random.default_rng(5))
        a2, lp2, v2 = net.sample(x, np.random.default_rng(5))
        assert np.array_equal(a1, a2)
        assert np.array_equal(lp1, lp2)

    def test_sample_logp_matches_log_prob(self, rng):
        net = small_net(7, heads=(4, 3))
        x = rng.normal(size=(25, 6))
        actions, logp, _ = net.sample(x, np.random.default_rng(1))
        logp2, _ = net.log_prob(x, actions)
        assert np.allclose(logp, logp2, atol=1e-12)

    def test_identical_observations_share_distribution(self, rng):
        # parameter sharing: identity enters only through the observation
        net = small_net(8)
        row = rng.normal(size=6)
        probs, _ = net.forward(np.stack([row, row]))
        assert np.array_equal(probs[0][0], probs[0][1])


class TestGradients:
    def test_log_prob_gradient_matches_finite_differences(self):
        # distribution-level check at the documented step size
        for seed in range(3):
            net = small_net(seed, heads=(5,))
            rng = np.random.default_rng(seed + 100)
            obs = rng.normal(size=(12, 6))
            actions = rng.integers(0, 5, size=(12, 1))
            _, grads = net.grad_log_prob(obs, actions)
            theta = net.get_flat()

            def f(vec):
                net.set_flat(vec)
                lp, _ = net.log_prob(obs, actions)
                return lp.mean()

            fd = finite_difference_grads(f, theta, h=1e-3)
            net.set_flat(theta)
            ana = np.concatenate([grads[k].ravel() for k in PARAM_KEYS])
            rel = np.linalg.norm(ana - fd) / max(np.linalg.norm(ana), np.linalg.norm(fd))
            assert rel < 1e-4

    def test_loss_gradient_matches_finite_differences_per_tensor(self):
        for seed, spread in [(0, 1.0), (1, 120.0), (2, 40.0)]:
            net = small_net(seed, heads=(4, 3), hidden=12)
            if spread > 1:
                net.params["w_pi"] *= spread
            obs, actions, logp_old, adv, rets = random_batch(net, seed + 50, spread=spread)
            kw = dict(clip=0.2, value_coef=0.5, entropy_coef=0.01)
            _, grads, _ = net.loss_and_grads(obs, actions, logp_old, adv, rets, **kw)
            theta = net.get_flat()

            def f(vec):
                net.set_flat(vec)
                return net.loss_and_grads(obs, actions, logp_old, adv, rets, **kw)[0]

            fd_flat = finite_difference_grads(f, theta, h=1e-6)
            net.set_flat(theta)
            pos = 0
            for k in PARAM_KEYS:
                p = net.params[k]
                fd = fd_flat[pos : pos + p.size].reshape(p.shape)
                pos += p.size
                denom = max(np.linalg.norm(grads[k]), np.linalg.norm(fd), 1e-12)
                assert np.linalg.norm(grads[k] - fd) / denom < 1e-4, k

    def test_diagnostics_report_clipping(self):
        net = small_net(0)
        net.params["w_pi"] *= 150
        obs, actions, logp_old, adv, rets = random_batch(net, 9, spread=150.0)
        _, _, diag = net.loss_and_grads(
            obs, actions, logp_old, adv, rets, clip=0.2, value_coef=0.5, entropy_coef=0.01
        )
        assert 0 < diag["clip_fraction"] <= 1
        assert np.isfinite(diag["approx_kl"])


class TestAdam:
    def test_zero_lr_leaves_params_bit_identical(self, rng):
        net = small_net(1)
        opt = Adam(net.params)
        before = {k: v.copy() for k, v in net.params.items()}
        grads = {k: rng.normal(size=v.shape) for k, v in net.params.items()}
        opt.step(net.params, grads, lr=0.0)
        for k in net.params:
            assert np.array_equal(net.params[k], before[k])

    def test_step_moves_against_gradient(self):
        params = {"w": np.array([1.0])}
        opt = Adam(params)
        opt.step(params, {"w": np.array([2.0])}, lr=0.1)
        assert params["w"][0] < 1.0

    def test_flat_round_trip(self):
        net = small_net(2)
        theta = net.get_flat()
        net.set_flat(theta * 0 + 1.5)
        assert np.allclose(net.get_flat(), 1.5)
        net.set_flat(theta)
        assert np.array_equal(net.get_flat(), theta)
