import math

import numpy as np
import pytest

import fisale


def test_metric_examples():
    u = np.array([[3.0], [4.0]])
    assert fisale.relative_l2(u, u) == 0.0
    assert fisale.relative_l2(u, np.zeros_like(u)) == 1.0
    assert fisale.rmse_metric(np.array([[1.0, 1.0]]), np.zeros((1, 2))) == pytest.approx(math.sqrt(2))


def test_softmax_sums():
    x = np.random.default_rng(0).normal(size=(5, 7)) * 50
    assert np.allclose(fisale.softmax(x, 1).sum(axis=1), 1.0)
    assert np.allclose(fisale.softmax(x, 0).sum(axis=0), 1.0)


def test_linear_attention_matches_dense():
    rng = np.random.default_rng(1)
    q, k, v = (rng.normal(size=(n, 6)) for n in (9, 11, 11))
    dense = fisale.attention_logits(q, k) @ v / 6
    assert np.allclose(fisale.linear_attention(q, k, v), dense, atol=1e-12)


def test_knn_matches_brute_force():
    pts = np.random.default_rng(2).uniform(-1, 1, size=(40, 2))
    got = fisale.knn_edges(pts, 4)
    d = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d, np.inf)
    expect = np.argsort(d, axis=1, kind="stable")[:, :4]
    assert (got == expect).all()


def test_regular_grid():
    g = fisale.seed_regular_grid([2, 3])
    assert g.shape == (6, 2)
    assert g.min() == -3.5 and g.max() == 3.5


def test_piston_energy_drift():
    p = fisale.PistonParams()
    p.steps = 200
    run = fisale.run_piston(p)
    e = np.array(run["energy"])
    assert len(e) == 201
    assert np.abs(e - e[0]).max() / e[0] < 0.01
    assert fisale.damped_oscillator(0.1, 1.0, 4.0, 0.0, 0.0) == pytest.approx(0.1)


def test_cylinder_flow_top():
    u, v, p = fisale.cylinder_flow(1.0, 0.5, 1.0, 0.0, 0.0, 0.5)
    assert u == pytest.approx(2.0)
    assert abs(v) < 1e-14


def test_trajectory_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    frame = {
        "fluid": (rng.normal(size=(4, 2)), rng.normal(size=(4, 2))),
        "solid": (rng.normal(size=(2, 2)), rng.normal(size=(2, 1))),
        "interface": (rng.normal(size=(3, 2)), rng.normal(size=(3, 3))),
    }
    path = tmp_path / "t.fsl"
    fisale.write_trajectory(path, [frame, frame])
    back = fisale.read_trajectory(path)
    assert len(back) == 2
    for name in ("fluid", "solid", "interface"):
        for a, b in zip(frame[name], back[1][name]):
            assert np.array_equal(a.astype(np.float32), b.astype(np.float32))
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(fisale.FormatError):
        fisale.read_trajectory(path)


def test_model_predict_shapes():
    cfg = fisale.ModelConfig.tiny()
    model = fisale.Model(cfg, fluid_channels=2, solid_channels=1, seed=0)
    rng = np.random.default_rng(4)
    state = {
        "fluid": (rng.normal(size=(12, 2)), rng.normal(size=(12, 2))),
        "solid": (rng.normal(size=(6, 2)), rng.normal(size=(6, 1))),
        "interface": (rng.normal(size=(4, 2)), rng.normal(size=(4, 3))),
    }
    out = model.predict(state)
    for name in ("fluid", "solid", "interface"):
        assert out[name][0].shape == state[name][0].shape
        assert out[name][1].shape == state[name][1].shape
    assert model.parameter_count() > 0
    assert fisale.ModelConfig.parse(cfg.to_text()).to_text() == cfg.to_text()


def test_grad_check_simple_variant():
    cfg = fisale.ModelConfig.tiny()
    cfg.processor = "simple_attention"
    report = fisale.grad_check(cfg, seed=0, tol=1e-4)
    assert report["passed"], report


def test_train_evaluate_rollout(tmp_path):
    data = tmp_path / "data"
    splits = fisale.generate_piston_dataset(data, trajectories=3, seed=1, steps=20, save_every=2)
    assert len(splits["train"]) == 2
    config = "d = 2\nH = 2\nL = 1\nM = 4x4,2x2\nD = 8,8\nk = 3\nstride = 1\nbatch = 4\nmax_steps = 3\n"
    ckpt = tmp_path / "m.ckpt"
    result = fisale.train(data, config, ckpt)
    assert result["steps"] == 3
    assert all(math.isfinite(x) for x in result["losses"])
    report = fisale.evaluate(data, ckpt, "test")
    assert math.isfinite(report["mean"])
    ro = fisale.rollout(data, ckpt, splits["test"][0], 5)
    assert len(ro["step_mean"]) == 5
    model = fisale.Model.load(ckpt)
    assert model.config.levels == 1
