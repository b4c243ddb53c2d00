import math
import os

import numpy as np
import pytest

import ratlab

TINY = """
[experiment]
name = py_tiny
seeds = 0, 1

[dataset]
labeled_per_class = 5
unlabeled_per_class = 10
validation_per_class = 10
test_per_class = 20

[method]
name = rat

[training]
iterations = 10
hidden = 8
"""


def log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def test_rampup_endpoints():
    assert ratlab.rampup_value(2.0, 100, 0) == pytest.approx(2.0 * math.exp(-5.0), rel=1e-12)
    assert ratlab.rampup_value(2.0, 100, 100) == 2.0
    assert ratlab.rampup_value(2.0, 0, 0) == 2.0


def test_moons_split_sizes():
    d = ratlab.make_moons(seed=3)
    assert d["x_labeled"].shape == (20, 2)
    assert d["x_unlabeled"].shape == (60, 2)
    assert d["x_test"].shape == (2000, 2)
    assert sorted(set(d["y_labeled"].tolist())) == [0, 1]


def test_linear_softmax_matches_numpy():
    rng = np.random.default_rng(0)
    w, b, x = rng.normal(size=(3, 4)), rng.normal(size=4), rng.normal(size=(5, 3))
    model = ratlab.LinearSoftmax(w, b)
    np.testing.assert_allclose(model.predict_log_proba(x), log_softmax(x @ w + b), atol=1e-12)


def test_noise_transform_adds_params_and_normalizes():
    rng = np.random.default_rng(1)
    t = ratlab.Transform.noise(3, 0.5)
    x, p = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    np.testing.assert_array_equal(t.apply(p, x), x + p)
    np.testing.assert_allclose(t.norms(t.normalize(p, 0.5)), 0.5, atol=1e-12)
    np.testing.assert_array_equal(t.apply(t.identity(4), x), x)


def test_affine_norm_is_largest_singular_value():
    rng = np.random.default_rng(2)
    t = ratlab.Transform.affine(1, 6, 6, 0.6)
    for _ in range(20):
        phi = rng.normal(size=(1, 6))
        sigma = np.linalg.svd(phi.reshape(2, 3), compute_uv=False)[0]
        assert t.norms(phi)[0] == pytest.approx(sigma, rel=1e-12)


def test_noise_only_rat_equals_vat_bit_for_bit():
    model = ratlab.Mlp(2, 16, 2, seed=4)
    x = np.random.default_rng(4).normal(size=(8, 2))
    r_vat = ratlab.vadv_perturbation(model, x, 0.3, seed=9)
    (r_rat,) = ratlab.tadv_params(model, x, [ratlab.Transform.noise(2, 0.3)], seed=9)
    np.testing.assert_array_equal(r_vat, r_rat)
    np.testing.assert_allclose(np.linalg.norm(r_vat, axis=1), 0.3, rtol=1e-12)


def test_adversarial_params_have_ramped_norms():
    model = ratlab.Mlp(2, 16, 2, seed=5)
    x = np.random.default_rng(5).normal(size=(6, 2))
    chain = [ratlab.Transform.moons_rotation(10.0), ratlab.Transform.noise(2, 0.3)]
    params = ratlab.tadv_params(model, x, chain, seed=1, horizon=100, t=50)
    for spec, p in zip(chain, params):
        np.testing.assert_allclose(spec.norms(p), ratlab.rampup_value(spec.epsilon, 100, 50), rtol=1e-9)
    assert ratlab.lds_t(model, x, chain, params) >= 0.0


def test_gcn_and_zca_postconditions():
    rng = np.random.default_rng(6)
    g = ratlab.gcn(3.0 + 2.0 * rng.normal(size=(50, 64)))
    np.testing.assert_allclose(g.mean(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(g.std(axis=1), 1.0, atol=1e-9)
    x = rng.normal(size=(4000, 64))
    mean, whitening = ratlab.zca_fit(x, 1e-5)
    cov = np.cov(ratlab.zca_apply(mean, whitening, x), rowvar=False, bias=True)
    assert np.abs(cov - np.diag(np.diag(cov))).max() <= 1e-6


def test_tensor_file_round_trip(tmp_path):
    a, b = np.arange(6.0).reshape(2, 3), np.array([1.5, -2.0])
    path = str(tmp_path / "t.ratt")
    ratlab.save_tensors(path, [a, b])
    out = ratlab.load_tensors(path)
    np.testing.assert_array_equal(out[0], a)
    np.testing.assert_array_equal(out[1], b)


def test_run_experiment_is_deterministic_and_reloadable():
    first = ratlab.run_experiment(TINY)
    second = ratlab.run_experiment(TINY)
    assert first["failed"] == 0
    assert [t["test_err"] for t in first["trials"]] == [t["test_err"] for t in second["trials"]]
    d = ratlab.make_moons(seed=0, labeled_per_class=5, unlabeled_per_class=10,
                          validation_per_class=10, test_per_class=20)
    model = ratlab.Mlp.from_parameters(first["trials"][0]["params"])
    assert model.input_dim == 2 and model.num_classes == 2
    assert 0.0 <= ratlab.evaluate(model, d["x_test"], d["y_test"].tolist()) <= 1.0


def test_config_errors_are_reported():
    with pytest.raises(ratlab.ConfigError, match="unknown key 'method.lamda'"):
        ratlab.normalized_config("[method]\nname = rat\nlamda = 1\n")
    assert "lambda = 0.3" in ratlab.normalized_config("[method]\nname = rat\n")


@pytest.mark.skipif("RATLAB_CONFIG_DIR" not in os.environ, reason="config dir not provided")
def test_shipped_config_loads_from_path():
    path = os.path.join(os.environ["RATLAB_CONFIG_DIR"], "moons_rat.cfg")
    text = open(path).read()
    assert "name = moons_rat" in ratlab.normalized_config(text)
