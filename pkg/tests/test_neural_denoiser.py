import numpy as np
import pytest

from udslab.core.errors import DivergenceError
from udslab.modules.gmm_oracle import AnalyticDenoiser, Condition
from udslab.modules.neural_denoiser import (
    WEIGHT_FILE_MAGIC,
    NeuralDenoiser,
    epsilon_rms,
    init_net,
    load_net,
    loss_and_grad,
    predict,
    save_net,
    time_embedding,
    train,
)


@pytest.fixture
def net():
    rng = np.random.default_rng(0)
    net = init_net(2, ["src", "tgt"], 1000, rng, hidden=6, cond_dim=3)
    net.set_flat_parameters(0.4 * rng.standard_normal(net.flat_parameters().size))
    return net


def _batch(seed=1, size=5):
    rng = np.random.default_rng(seed)
    return (
        rng.standard_normal((size, 2)),
        rng.integers(1, 1001, size=size),
        rng.integers(0, 3, size=size),
        rng.standard_normal((size, 2)),
    )


def test_gradient_matches_finite_differences(net):
    x_t, times, rows, eps = _batch()
    _, grad = loss_and_grad(net, x_t, times, rows, eps)
    flat = net.flat_parameters()
    h = 1e-6
    for index in np.random.default_rng(2).choice(flat.size, size=40, replace=False):
        shifted = flat.copy()
        shifted[index] += h
        net.set_flat_parameters(shifted)
        upper, _ = loss_and_grad(net, x_t, times, rows, eps)
        shifted[index] -= 2.0 * h
        net.set_flat_parameters(shifted)
        lower, _ = loss_and_grad(net, x_t, times, rows, eps)
        net.set_flat_parameters(flat)
        numeric = (upper - lower) / (2.0 * h)
        assert abs(numeric - grad[index]) <= 1e-4 * max(1.0, abs(numeric))


def test_initial_net_predicts_zero():
    net = init_net(2, ["a"], 1000, np.random.default_rng(0))
    np.testing.assert_array_equal(predict(net, np.ones(2), 10, Condition.prompt("a")), np.zeros(2))


def test_time_embedding_shape(net):
    emb = time_embedding(net, np.array([0, 500, 1000]))
    assert emb.shape == (3, net.time_dim)
    np.testing.assert_array_equal(emb[0, : net.freqs.size], np.zeros(net.freqs.size))


def test_predict_single_and_batch(net):
    batch = np.array([[0.1, 0.2], [-1.0, 3.0]])
    cond = Condition.prompt("tgt")
    out = predict(net, batch, 300, cond)
    np.testing.assert_allclose(out[1], predict(net, batch[1], 300, cond), atol=1e-14)
    with pytest.raises(ValueError):
        predict(net, np.zeros(3), 300, cond)
    with pytest.raises(ValueError):
        predict(net, np.zeros(2), 1001, cond)


def test_condition_rows(net):
    assert net.condition_index(Condition.unconditional()) == 0
    assert net.condition_index(Condition.prompt("tgt")) == 2
    assert net.condition_index(Condition.negative("tgt")) == 2
    with pytest.raises(ValueError):
        net.condition_index(Condition.prompt("other"))


def test_save_load_roundtrip(net, tmp_path):
    path = tmp_path / "net.bin"
    assert save_net(net, path)
    assert path.read_bytes().startswith(WEIGHT_FILE_MAGIC)
    loaded = load_net(path)
    assert loaded.prompt_ids == ["src", "tgt"]
    assert (loaded.dim, loaded.T, loaded.hidden, loaded.cond_dim) == (2, 1000, 6, 3)
    np.testing.assert_array_equal(loaded.flat_parameters(), net.flat_parameters())
    x = np.array([0.3, -0.4])
    np.testing.assert_array_equal(
        NeuralDenoiser(loaded).predict(x, 77, Condition.prompt("src")),
        NeuralDenoiser(net).predict(x, 77, Condition.prompt("src")),
    )


def test_load_rejects_corrupt_files(net, tmp_path):
    path = tmp_path / "net.bin"
    save_net(net, path)
    data = path.read_bytes()

    bad_magic = tmp_path / "magic.bin"
    bad_magic.write_bytes(b"NOTANET\x00" + data[8:])
    with pytest.raises(ValueError, match="keine UDSNET1"):
        load_net(bad_magic)

    truncated = tmp_path / "short.bin"
    truncated.write_bytes(data[:-8])
    with pytest.raises(ValueError, match="erwartet"):
        load_net(truncated)

    header_only = tmp_path / "header.bin"
    header_only.write_bytes(data[:20])
    with pytest.raises(ValueError, match="unvollständig"):
        load_net(header_only)

    poisoned = tmp_path / "nan.bin"
    poisoned.write_bytes(data[:-8] + np.array([np.nan], dtype="<f8").tobytes())
    with pytest.raises(ValueError, match="nicht-endliche"):
        load_net(poisoned)


def test_short_training_reduces_loss(registry, sched):
    net = init_net(2, registry.prompt_ids, sched.T, np.random.default_rng(0), hidden=32, cond_dim=4)
    losses = train(net, registry, sched, steps=300, batch=64, lr=5e-3, rng=np.random.default_rng(1))
    assert len(losses) == 300
    assert np.mean(losses[-30:]) < np.mean(losses[:30])


def test_training_is_seeded(registry, sched):
    nets = [init_net(2, registry.prompt_ids, sched.T, np.random.default_rng(0), hidden=8, cond_dim=2) for _ in range(2)]
    for net in nets:
        train(net, registry, sched, steps=5, batch=16, lr=1e-3, rng=np.random.default_rng(4))
    np.testing.assert_array_equal(nets[0].flat_parameters(), nets[1].flat_parameters())


def test_training_divergence_is_reported(registry, sched):
    net = init_net(2, registry.prompt_ids, sched.T, np.random.default_rng(0), hidden=8, cond_dim=2)
    with pytest.raises(DivergenceError):
        train(net, registry, sched, steps=50, batch=16, lr=100.0, rng=np.random.default_rng(0))


def test_training_validates_arguments(registry, sched):
    net = init_net(2, ["src"], sched.T, np.random.default_rng(0), hidden=4, cond_dim=2)
    with pytest.raises(ValueError, match="kennt"):
        train(net, registry, sched, steps=1, batch=4, lr=1e-3, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        train(net, registry, sched, steps=1, batch=4, lr=1e-3, rng=np.random.default_rng(0), dropout=1.5)


def test_epsilon_rms_is_zero_against_itself(registry, sched):
    analytic = AnalyticDenoiser(registry, sched)
    assert epsilon_rms(analytic, analytic, registry, sched, np.random.default_rng(0), n_samples=4) == 0.0
    untrained = NeuralDenoiser(init_net(2, registry.prompt_ids, sched.T, np.random.default_rng(0)))
    assert epsilon_rms(untrained, analytic, registry, sched, np.random.default_rng(0), n_samples=4) > 0.1
