import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metricprior.dataset import gen_synthetic_family
from metricprior.errors import NumericalError, ValidationError
from metricprior.model import load_checkpoint
from metricprior.trainer import (
    AdamState,
    TrainConfig,
    adam_step,
    farthest_point_indices,
    format_config,
    parse_config,
    train,
)

TINY = dict(latent_dim=8, point_layers=(16, 32), head_layers=(16,), decoder_layers=(32,), checkpoint_every=0)


@pytest.fixture(scope="module")
def two_shapes():
    return gen_synthetic_family(1, 2, resolution=4, seed=0)


@pytest.fixture(scope="module")
def family4():
    return gen_synthetic_family(2, 2, resolution=4, seed=0, isometry_ratio=None)


def test_adam_zero_gradient():
    p = {"w": np.array([1.0, -2.0])}
    new, _ = adam_step(p, {"w": np.zeros(2)}, AdamState(), 0.1)
    np.testing.assert_array_equal(new["w"], p["w"])


def test_adam_first_step_is_lr():
    p = {"w": np.zeros(3)}
    new, state = adam_step(p, {"w": np.array([2.0, -0.5, 7.0])}, AdamState(), 0.01)
    np.testing.assert_allclose(new["w"], [-0.01, 0.01, -0.01], rtol=1e-6)
    assert state.step == 1


def test_adam_quadratic_bowl():
    p = {"x": np.array([1.0, -2.0, 0.5])}
    state = AdamState()
    for _ in range(2000):
        p, state = adam_step(p, {"x": 2 * p["x"]}, state, 1e-2)
    assert np.linalg.norm(p["x"]) < 1e-3


def test_adam_shape_mismatch():
    with pytest.raises(ValidationError):
        adam_step({"x": np.zeros(2)}, {"x": np.zeros(3)}, AdamState(), 0.1)


def test_config_round_trip():
    cfg = TrainConfig(learning_rate=3e-4, point_layers=(8, 8), stochastic=False)
    assert parse_config(format_config(cfg)) == cfg


def test_config_comments_and_errors():
    cfg = parse_config("# run\nlearning_rate = 0.5  # fast\n\nmode = recon_only\n")
    assert cfg.learning_rate == 0.5 and cfg.mode == "recon_only"
    with pytest.raises(ValidationError, match="unknown key"):
        parse_config("lerning_rate = 1")
    with pytest.raises(ValidationError):
        parse_config("total_iters = many")
    with pytest.raises(ValidationError):
        parse_config("just a line")


def test_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValidationError):
        TrainConfig(warmup_iters=10, total_iters=10)
    with pytest.raises(ValidationError):
        TrainConfig(mode="other")


def test_farthest_points():
    X = np.array([[0.0, 0, 0], [1, 0, 0], [10, 0, 0], [5, 0, 0]])
    np.testing.assert_array_equal(farthest_point_indices(X, 3), [0, 2, 3])
    assert farthest_point_indices(X, 10).size == 4


def test_recon_drops_90_percent(two_shapes):
    cfg = TrainConfig(learning_rate=1e-3, warmup_iters=500, total_iters=1000, batch_any=1, batch_iso=1,
                      batch_non_iso=0, **TINY)
    res = train(two_shapes, cfg)
    recon = [b.recon for _, b in res.trace]
    assert recon[-1] <= 0.1 * recon[0]


def test_warmup_boundary(family4, tmp_path):
    cfg = TrainConfig(learning_rate=1e-3, warmup_iters=5, total_iters=8, batch_any=1, batch_iso=1,
                      batch_non_iso=1, **TINY)
    res = train(family4, cfg, tmp_path)
    first = next(it for it, b in res.trace if b.interp_geo > 0)
    assert first == 6
    assert all(b.interp_local == b.disent_int == b.disent_ext == 0 for it, b in res.trace if it <= 5)
    rows = (tmp_path / "trace.csv").read_text().splitlines()
    assert rows[0] == "iteration,recon,interp_geo,interp_local,disent_int,disent_ext,kl,total"
    assert len(rows) == 9
    assert parse_config((tmp_path / "train.cfg").read_text()) == cfg


def test_same_seed_same_checkpoint(family4, tmp_path):
    cfg = TrainConfig(learning_rate=1e-3, warmup_iters=3, total_iters=6, landmarks=10, **TINY)
    train(family4, cfg, tmp_path / "a")
    train(family4, cfg, tmp_path / "b")
    assert (tmp_path / "a" / "checkpoint.ckpt").read_bytes() == (tmp_path / "b" / "checkpoint.ckpt").read_bytes()
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_recon_only_mode_never_adds_pair_terms(family4):
    cfg = TrainConfig(learning_rate=1e-3, warmup_iters=2, total_iters=5, mode="recon_only", **TINY)
    res = train(family4, cfg)
    assert all(b.interp_geo == 0 and b.disent_ext == 0 for _, b in res.trace)


def test_divergence_saves_last_good(family4, tmp_path):
    cfg = TrainConfig(learning_rate=1e30, warmup_iters=1, total_iters=50, **TINY)
    with pytest.raises(NumericalError):
        train(family4, cfg, tmp_path)
    params = load_checkpoint(tmp_path / "last_good.ckpt")
    assert params.all_finite()


def test_wrong_vertex_count(family4, two_shapes):
    from metricprior.model import init_params

    cfg = TrainConfig(total_iters=2, warmup_iters=1, **TINY)
    other = init_params(cfg.model_config(10), 0)
    with pytest.raises(ValidationError):
        train(family4, cfg, init=other)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-4, 1e-1))
def test_adam_moves_against_gradient(seed, lr):
    g = np.random.default_rng(seed).standard_normal(5)
    new, _ = adam_step({"p": np.zeros(5)}, {"p": g}, AdamState(), lr)
    assert np.all(new["p"] * g <= 0)
