"""Policy math checked against a straight-line reimplementation and central
finite differences."""

import numpy as np
import pytest

from bldc import seqpolicy, worldgen
from bldc.errors import UsageError
from bldc.experts import demonstrate
from bldc.rng import SplitMix64
from bldc.seqpolicy import (ArchSpec, LOG_EPS, act, forward, forward_batch,
                            grad_nll, init_params, load_checkpoint, nll_loss,
                            save_checkpoint, zero_hidden)


def tiny_arch(encoder="conv"):
    return ArchSpec(obs_channels=4, height=5, width=5, action_count=4,
                    hidden_size=8, encoder=encoder, conv_filters=(4, 8),
                    embed_size=16)


def random_obs(arch, seed):
    rng = SplitMix64(seed)
    return (rng.fill_uniform(arch.obs_channels * arch.height * arch.width)
            .reshape(arch.obs_channels, arch.height, arch.width) > 0.5).astype(np.float64)


def make_trajectory(arch, length, seed):
    """Synthetic trajectory container with random 0/1 observations."""

    class Stub:
        pass

    rng = SplitMix64(seed)
    stub = Stub()
    stub.observations = np.stack([random_obs(arch, seed * 101 + i)
                                  for i in range(length)])
    stub.actions = np.array([rng.randrange(arch.action_count)
                             for _ in range(length)], dtype=np.int64)
    stub.steps = length
    return stub


# -- reference reimplementation (scalar, loop-based) ---------------------------


def ref_forward_sequence(params, arch, observations, actions):
    """Straight-line scalar reimplementation of the full forward pass and
    summed NLL. Shares nothing with the library code path."""
    views = {}
    off = 0
    for name, shape in arch.param_layout():
        n = int(np.prod(shape))
        views[name] = params[off:off + n].reshape(shape)
        off += n

    def conv(x, w, b):
        cin, h, wd = x.shape
        f = w.shape[0]
        ho, wo = (h - 1) // 2 + 1, (wd - 1) // 2 + 1
        padded = np.zeros((cin, h + 2, wd + 2))
        padded[:, 1:-1, 1:-1] = x
        out = np.zeros((f, ho, wo))
        for k in range(f):
            for i in range(ho):
                for j in range(wo):
                    patch = padded[:, 2 * i:2 * i + 3, 2 * j:2 * j + 3]
                    out[k, i, j] = np.sum(patch * w[k]) + b[k]
        return np.tanh(out)

    def sigmoid(x):
        return 1.0 / (1.0 + np.exp(-x))

    h = np.zeros(arch.hidden_size)
    total = 0.0
    dists = []
    for t in range(len(actions)):
        x = observations[t]
        if arch.encoder == "conv":
            a1 = conv(x, views["conv1_w"], views["conv1_b"])
            a2 = conv(a1, views["conv2_w"], views["conv2_b"])
            flat = a2.reshape(-1)
        else:
            flat = x.reshape(-1)
        emb = np.tanh(views["embed_w"] @ flat + views["embed_b"])
        hs = arch.hidden_size
        gx = views["gru_wx"] @ emb + views["gru_b"]
        gh = views["gru_wh"] @ h
        z = sigmoid(gx[:hs] + gh[:hs])
        r = sigmoid(gx[hs:2 * hs] + gh[hs:2 * hs])
        c = np.tanh(gx[2 * hs:] + r * gh[2 * hs:])
        h = z * h + (1.0 - z) * c
        logits = views["head_w"] @ h + views["head_b"]
        e = np.exp(logits - logits.max())
        p = e / e.sum()
        dists.append(p)
        total += -np.log(max(p[actions[t]], 1e-12))
    return total, dists


# -- init ----------------------------------------------------------------------


def test_init_deterministic():
    arch = tiny_arch()
    assert np.array_equal(init_params(arch, 7), init_params(arch, 7))
    assert not np.array_equal(init_params(arch, 7), init_params(arch, 8))


def test_init_bounded_and_finite():
    arch = tiny_arch()
    params = init_params(arch, 0)
    assert np.all(np.isfinite(params))
    assert np.max(np.abs(params)) < 1.0 + 1e-12
    assert params.shape == (arch.parameter_count,)


# -- forward -------------------------------------------------------------------


def test_zero_params_uniform_distribution():
    arch = tiny_arch()
    params = np.zeros(arch.parameter_count)
    dist, hidden = forward(params, arch, random_obs(arch, 1), zero_hidden(arch))
    assert np.allclose(dist, 0.25)
    assert np.array_equal(hidden, np.zeros(arch.hidden_size))


def test_distribution_normalized():
    arch = tiny_arch()
    params = init_params(arch, 3)
    hidden = zero_hidden(arch)
    for i in range(5):
        dist, hidden = forward(params, arch, random_obs(arch, i), hidden)
        assert abs(dist.sum() - 1.0) < 1e-9
        assert np.all(dist >= 0)


def test_forward_matches_reference_reimplementation():
    for encoder in ("conv", "flat"):
        arch = tiny_arch(encoder)
        params = init_params(arch, 0)
        traj = make_trajectory(arch, 6, seed=11)
        ref_total, ref_dists = ref_forward_sequence(params, arch,
                                                    traj.observations,
                                                    traj.actions)
        report = nll_loss(params, arch, [traj])
        assert abs(report.total - ref_total) < 1e-10 * max(1.0, abs(ref_total))
        hidden = zero_hidden(arch)
        for t in range(traj.steps):
            dist, hidden = forward(params, arch, traj.observations[t], hidden)
            assert np.max(np.abs(dist - ref_dists[t])) < 1e-12


def test_forward_batch_matches_single():
    arch = tiny_arch()
    params = init_params(arch, 5)
    obs = np.stack([random_obs(arch, i) for i in range(3)])
    hidden = np.stack([zero_hidden(arch) for _ in range(3)])
    dists, new_hidden = forward_batch(params, arch, obs, hidden)
    for i in range(3):
        d, h = forward(params, arch, obs[i], hidden[i])
        assert np.allclose(dists[i], d, atol=1e-14)
        assert np.allclose(new_hidden[i], h, atol=1e-14)


def test_forward_shape_checks():
    arch = tiny_arch()
    params = init_params(arch, 0)
    with pytest.raises(UsageError):
        forward(params, arch, np.zeros((4, 7, 7)), zero_hidden(arch))
    with pytest.raises(UsageError):
        forward(params, arch, random_obs(arch, 0), np.zeros(9))


# -- loss ----------------------------------------------------------------------


def test_uniform_policy_loss_is_length_log_a():
    arch = tiny_arch()
    params = np.zeros(arch.parameter_count)
    traj = make_trajectory(arch, 7, seed=2)
    report = nll_loss(params, arch, [traj])
    assert abs(report.total - 7 * np.log(4)) < 1e-12
    assert report.steps == 7


def test_loss_clamped_and_flagged():
    arch = tiny_arch()
    params = init_params(arch, 1)
    # saturate the head bias so one action has probability ~1
    off = 0
    layout = dict(arch.param_layout())
    for name, shape in arch.param_layout():
        if name == "head_b":
            params[off:off + int(np.prod(shape))] = [1000.0, -1000.0, -1000.0, -1000.0]
        off += int(np.prod(shape))
    traj = make_trajectory(arch, 4, seed=3)
    traj.actions = np.array([1, 1, 1, 1])  # probability ~0 actions
    report = nll_loss(params, arch, [traj])
    assert report.saturated_steps == 4
    assert abs(report.total - 4 * (-LOG_EPS)) < 1e-6
    # gradient stays finite and zero where clamped
    grad, _ = grad_nll(params, arch, [traj])
    assert np.all(np.isfinite(grad))


def test_loss_near_zero_for_matching_policy():
    arch = tiny_arch()
    params = init_params(arch, 1)
    off = 0
    for name, shape in arch.param_layout():
        if name == "head_b":
            params[off:off + int(np.prod(shape))] = [1000.0, -1000.0, -1000.0, -1000.0]
        off += int(np.prod(shape))
    traj = make_trajectory(arch, 4, seed=3)
    traj.actions = np.zeros(4, dtype=np.int64)
    report = nll_loss(params, arch, [traj])
    assert report.total < 1e-6


# -- gradients -----------------------------------------------------------------


def fd_gradient(params, arch, trajs, coords, h=1e-5):
    out = {}
    for c in coords:
        plus = params.copy()
        plus[c] += h
        minus = params.copy()
        minus[c] -= h
        out[c] = (nll_loss(plus, arch, trajs).total
                  - nll_loss(minus, arch, trajs).total) / (2 * h)
    return out


@pytest.mark.parametrize("encoder", ["conv", "flat"])
def test_gradient_matches_finite_differences(encoder):
    arch = tiny_arch(encoder)
    params = init_params(arch, 0)
    trajs = [make_trajectory(arch, 6, seed=21)]
    grad, _ = grad_nll(params, arch, trajs)
    rng = SplitMix64(40)
    coords = [rng.randrange(arch.parameter_count) for _ in range(30)]
    fd = fd_gradient(params, arch, trajs, coords)
    for c, v in fd.items():
        denom = max(abs(v), abs(grad[c]), 1e-8)
        assert abs(grad[c] - v) / denom <= 1e-4, (c, grad[c], v)


def test_gradient_deterministic():
    arch = tiny_arch()
    params = init_params(arch, 2)
    trajs = [make_trajectory(arch, 5, seed=5), make_trajectory(arch, 3, seed=6)]
    g1, _ = grad_nll(params, arch, trajs)
    g2, _ = grad_nll(params, arch, trajs)
    assert np.array_equal(g1, g2)


def test_gradient_batch_equals_sum_of_singles():
    arch = tiny_arch()
    params = init_params(arch, 4)
    t1 = make_trajectory(arch, 5, seed=8)
    t2 = make_trajectory(arch, 2, seed=9)
    g_batch, rep = grad_nll(params, arch, [t1, t2])
    g1, r1 = grad_nll(params, arch, [t1])
    g2, r2 = grad_nll(params, arch, [t2])
    assert abs(rep.total - r1.total - r2.total) < 1e-10
    assert np.max(np.abs(g_batch - g1 - g2)) < 1e-10


def test_descent_direction():
    arch = tiny_arch()
    for seed in range(20):
        params = init_params(arch, seed)
        trajs = [make_trajectory(arch, 4, seed=100 + seed)]
        grad, before = grad_nll(params, arch, trajs)
        after = nll_loss(params - 1e-3 * grad, arch, trajs)
        assert after.total < before.total


# -- action selection ----------------------------------------------------------


def test_argmax_tie_break_lowest_index():
    arch = tiny_arch()
    params = np.zeros(arch.parameter_count)
    action, _ = act(params, arch, random_obs(arch, 0), zero_hidden(arch))
    assert action == 0


def test_sample_frequencies_match_distribution():
    arch = tiny_arch()
    params = init_params(arch, 11)
    obs = random_obs(arch, 1)
    dist, _ = forward(params, arch, obs, zero_hidden(arch))
    rng = SplitMix64(123)
    counts = np.zeros(4)
    n = 100_000
    for _ in range(n):
        a, _ = act(params, arch, obs, zero_hidden(arch), mode="sample", rng=rng)
        counts[a] += 1
    freq = counts / n
    sigma = np.sqrt(dist * (1 - dist) / n)
    assert np.all(np.abs(freq - dist) <= 3 * sigma + 1e-9)


# -- checkpoints -----------------------------------------------------------------


def test_checkpoint_roundtrip(tmp_path):
    arch = tiny_arch()
    params = init_params(arch, 6)
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, arch, params)
    arch2, params2 = load_checkpoint(path)
    assert arch2 == arch
    assert np.array_equal(params2, params)
