import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import constant_mlp, random_mlp
from pertdetect.attacks import (AttackBudget, CwConfig, bim, craft_corpus, cw_l2, fgsm, pgd,
                                run_attack)
from pertdetect.classifier import Layer, MlpModel, TrainConfig, predict, train_mlp
from pertdetect.harness.data import SynthSpec, synth_dataset


@pytest.fixture(scope="module")
def desk():
    ds = synth_dataset(SynthSpec(per_class=150, seed=5))
    model = train_mlp(ds.images, ds.labels, TrainConfig(epochs=15, seed=5))
    return model, ds


def _check(result, x, eps):
    adv = result.adversarial
    assert np.max(np.abs(adv - x)) <= eps + 1e-12
    assert adv.min() >= 0 and adv.max() <= 1
    d = adv - x
    assert abs(result.l2_distortion - np.linalg.norm(d)) <= 1e-12
    assert abs(result.linf_distortion - np.max(np.abs(d))) <= 1e-12
    assert result.success == (result.adv_label != result.clean_label)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.5))
def test_ball_containment(seed, eps):
    rng = np.random.default_rng(seed)
    model = random_mlp(rng)
    x = rng.random(6)
    label = int(rng.integers(3))
    budget = AttackBudget(eps, eps / 3, 5)
    for r in (fgsm(model, x, label, eps), bim(model, x, label, budget),
              pgd(model, x, label, budget, True, rng)):
        _check(r, x, eps)
        assert r.success == (int(predict(model, r.adversarial)) != int(predict(model, x)))


def test_zero_epsilon_is_identity(rng):
    model = random_mlp(rng)
    x = rng.random(6)
    r = fgsm(model, x, 0, 0.0)
    assert np.array_equal(r.adversarial, x) and not r.success


def test_logistic_closed_form():
    w = np.array([0.7, -1.3, 0.2])
    model = MlpModel([Layer(np.vstack([np.zeros(3), w]), np.array([0.0, 0.1]), "identity")])
    x = np.array([0.5, 0.5, 0.5])
    eps = 0.05
    # d CE / dx = (p1 - [label == 1]) * w, so the sign flips with the label
    np.testing.assert_array_equal(fgsm(model, x, 0, eps).adversarial, x + eps * np.sign(w))
    np.testing.assert_array_equal(fgsm(model, x, 1, eps).adversarial, x - eps * np.sign(w))


def test_zero_gradient_is_flagged():
    model = constant_mlp(4)
    x = np.full(4, 0.5)
    r = fgsm(model, x, 0, 0.1)
    assert r.degenerate and not r.success and np.array_equal(r.adversarial, x)
    assert bim(model, x, 0, AttackBudget(0.1, 0.05, 3)).degenerate


def test_bim_single_step_is_fgsm(rng):
    model = random_mlp(rng)
    x = rng.random(6)
    a = bim(model, x, 1, AttackBudget(0.1, 0.1, 1))
    b = fgsm(model, x, 1, 0.1)
    assert np.array_equal(a.adversarial, b.adversarial)


def test_pgd_without_random_start_is_bim(rng):
    model = random_mlp(rng)
    x = rng.random(6)
    budget = AttackBudget(0.2, 0.05, 7)
    assert np.array_equal(pgd(model, x, 2, budget, random_start=False).adversarial,
                          bim(model, x, 2, budget).adversarial)


def test_pgd_seeded_and_feasible_near_boundary(rng):
    model = random_mlp(rng)
    x = np.array([0.0, 1.0, 0.02, 0.98, 0.5, 0.0])
    budget = AttackBudget(0.3, 0.1, 4)
    a = pgd(model, x, 0, budget, True, np.random.default_rng(9))
    b = pgd(model, x, 0, budget, True, np.random.default_rng(9))
    assert np.array_equal(a.adversarial, b.adversarial)
    _check(a, x, 0.3)
    with pytest.raises(ValueError):
        pgd(model, x, 0, budget, True, None)


@pytest.mark.parametrize("eps,step,iters", [(0.0, 0.0, 1), (0.1, 0.2, 1), (0.1, 0.05, 0)])
def test_budget_validation(eps, step, iters):
    with pytest.raises(ValueError):
        AttackBudget(eps, step, iters)


def test_cw_on_constant_classifier_fails():
    r = cw_l2(constant_mlp(4), np.full(4, 0.5), 0, CwConfig(rounds=3, iterations=10))
    assert not r.success and np.array_equal(r.adversarial, np.full(4, 0.5))


def test_cw_stops_after_first_round_when_c_min_succeeds():
    # a boundary right next to x: the first round at c_min already succeeds
    W = np.array([[1.0, 0.0], [0.0, 0.0]])
    model = MlpModel([Layer(W, np.array([0.0, 0.499]), "identity")])
    x = np.array([0.5, 0.5])
    one = cw_l2(model, x, 0, CwConfig(rounds=1, iterations=50, c_min=1.0))
    many = cw_l2(model, x, 0, CwConfig(rounds=6, iterations=50, c_min=1.0))
    assert one.success
    assert np.array_equal(one.adversarial, many.adversarial)


def test_cw_validation():
    with pytest.raises(ValueError):
        cw_l2(constant_mlp(2), np.zeros(2), 0, CwConfig(c_min=0.0))
    with pytest.raises(ValueError):
        cw_l2(constant_mlp(2), np.zeros(2), 0, CwConfig(rounds=0))


def test_cw_has_smaller_l2_than_fgsm(desk):
    model, ds = desk
    X, y = ds.images[:40], ds.labels[:40]
    cw_l2_, fg_l2 = [], []
    for x, label in zip(X, y):
        f = fgsm(model, x, int(label), 0.1)
        if f.success:
            fg_l2.append(f.l2_distortion)
        c = cw_l2(model, x, int(label), CwConfig(rounds=4, iterations=60))
        if c.success:
            cw_l2_.append(c.l2_distortion)
    assert fg_l2 and cw_l2_
    assert np.median(cw_l2_) <= np.median(fg_l2)


def test_iterative_attack_dominates_one_step(desk):
    model, ds = desk
    X, y = ds.images[:200], ds.labels[:200]
    one = craft_corpus(model, X, y, "fgsm", 0.1)
    it = craft_corpus(model, X, y, "bim", 0.1, step_size=0.025, iterations=10)
    assert it.success.mean() >= one.success.mean()


def test_corpus_skips_misclassified_and_is_seeded(desk):
    model, ds = desk
    X, y = ds.images[:30], ds.labels[:30].copy()
    y[0] = (predict(model, X[0]) + 1) % 4
    a = craft_corpus(model, X, y, "pgd", 0.1, seed=3)
    b = craft_corpus(model, X, y, "pgd", 0.1, seed=3)
    assert 0 not in a.source_index
    assert np.array_equal(a.images, b.images)


def test_unknown_attack(rng):
    with pytest.raises(ValueError):
        run_attack("deepfool", random_mlp(rng), np.zeros(6), 0)


def test_pgd_success_nondecreasing_in_iterations(desk):
    model, ds = desk
    X, y = ds.images[:200], ds.labels[:200]
    one = craft_corpus(model, X, y, "pgd", 0.1, step_size=0.025, iterations=1, seed=8)
    ten = craft_corpus(model, X, y, "pgd", 0.1, step_size=0.025, iterations=10, seed=8)
    assert 100 * ten.success.mean() >= 100 * one.success.mean() - 2
