import numpy as np
import pytest

from conftest import random_mlp
from schedule_oracle import BORDERLINE, numeric_violations, validator_violations
from pertdetect.apert import (TRACE_FIELDS, ApertConfig, ProbeOracle, ScheduleError, StepSchedule,
                              TrainState, apert_test, cost, lagrange_step, load_thresholds,
                              save_thresholds, spsa_step, train_apert, validate_schedule,
                              write_trace)
from pertdetect.detect import DetectionOutcome, SrtConfig, StopReason, srt
from pertdetect.spectral import fit_pca

CLEAN = DetectionOutcome(False, 3, StopReason.BELOW_A)
FLAGGED = DetectionOutcome(True, 2, StopReason.ABOVE_B)

# boxes wide enough to hold the quadratic's optimum (0.2, 3) in linear coordinates
QUADRATIC_CFG = ApertConfig(A_min=1e-12, A_max=0.49, B_min=0.51, B_max=100.0, coordinates="linear",
                            schedule=StepSchedule(a0=0.2, delta0=0.5))


def test_default_schedule_is_valid():
    assert validate_schedule(StepSchedule()) == []
    assert validate_schedule(StepSchedule(ea=0.7, ed=1.0, edelta=0.1)) == []


def test_schedule_violations_are_named():
    v = validate_schedule(StepSchedule(ea=0.7, edelta=0.5))
    assert len(v) == 1 and "a(t)^2/delta(t)^2" in v[0]
    v = validate_schedule(StepSchedule(ed=0.6, ea=0.7))
    assert len(v) == 1 and "d(t)/a(t) -> 0" in v[0]
    assert len(validate_schedule(StepSchedule(ea=1.2, ed=0.4, edelta=0.0))) >= 4


def test_schedule_rejects_nonpositive_coefficients():
    with pytest.raises(ValueError):
        validate_schedule(StepSchedule(a0=0.0))


def test_config_validate_raises_schedule_error():
    with pytest.raises(ScheduleError) as err:
        ApertConfig(schedule=StepSchedule(edelta=0.5)).validate()
    assert err.value.violations
    with pytest.raises(ValueError):
        ApertConfig(A_max=1e-2, B_min=1e-3).validate()


def test_spsa_equal_costs_leave_thresholds_alone():
    cfg = ApertConfig()
    state = TrainState(1e-10, 0.5, 10.0, 10.0)
    A, B, c1, c2, _ = spsa_step(state, lambda a, b: 7.0, cfg, np.random.default_rng(0))
    assert (A, B) == pytest.approx((1e-10, 0.5), rel=1e-12)
    assert c1 == c2


def test_spsa_update_direction():
    # cost grows with A, so c' > c'' exactly when b1 = +1, and A must then decrease
    cfg = QUADRATIC_CFG
    for seed in range(8):
        state = TrainState(0.3, 2.0, 0.0, 0.0)
        rng = np.random.default_rng(seed)
        b1 = np.random.default_rng(seed).choice([-1.0, 1.0], size=2)[0]
        A, _, c1, c2, _ = spsa_step(state, lambda a, b: a, cfg, rng)
        if b1 > 0:
            assert c1 > c2 and A < 0.3
        else:
            assert c1 < c2 and A < 0.3  # descent either way on a monotone cost


def test_spsa_perturbed_pairs_stay_ordered():
    cfg = QUADRATIC_CFG
    seen = []

    def evaluate(a, b):
        seen.append((a, b))
        return 0.0

    state = TrainState(0.45, 0.52, 0.0, 0.0)
    spsa_step(state, evaluate, cfg, np.random.default_rng(1))
    assert all(0 < a < b <= cfg.B_max for a, b in seen)


def _quadratic_run(seed, steps=5000):
    cfg = QUADRATIC_CFG
    rng = np.random.default_rng(seed)
    noise = np.random.default_rng(seed + 1000)
    state = TrainState(0.01, 1.0, 0.0, 0.0)
    for t in range(steps):
        state.t = t
        f = lambda a, b: (a - 0.2) ** 2 + (b - 3.0) ** 2 + 0.01 * noise.standard_normal()  # noqa: E731
        state.A, state.B, *_ = spsa_step(state, f, cfg, rng)
        if abs(state.A - 0.2) < 0.05 and abs(state.B - 3.0) < 0.05:
            return t + 1
    return None


def test_spsa_converges_on_quadratic():
    hits = [_quadratic_run(s) for s in range(10)]
    assert sum(h is not None for h in hits) >= 9


def test_lagrange_examples():
    cfg = ApertConfig(alpha=0.05, beta=0.05)
    d = cfg.schedule.d
    s = lagrange_step(TrainState(1e-10, 0.5, 10.0, 10.0), CLEAN, False, cfg)
    assert s.lambda1 == pytest.approx(10.0 - 0.05 * d(1)) and s.lambda2 == 10.0 and s.n_clean == 1
    s = lagrange_step(TrainState(1e-10, 0.5, 10.0, 10.0), CLEAN, True, cfg)
    assert s.lambda2 == pytest.approx(10.0 + 0.95 * d(1)) and s.lambda1 == 10.0 and s.n_adv == 1
    s = lagrange_step(TrainState(1e-10, 0.5, 0.0, 0.0), CLEAN, False, cfg)
    assert s.lambda1 == 0.0


def test_cost():
    assert cost(CLEAN, False, 5.0, 7.0) == 3
    assert cost(FLAGGED, False, 5.0, 7.0) == 2 + 5.0
    assert cost(CLEAN, True, 5.0, 7.0) == 3 + 7.0
    assert cost(FLAGGED, True, 5.0, 7.0) == 2


class StubOracle:
    """Flags clean images at a fixed rate regardless of thresholds."""

    def __init__(self, rate):
        self.rate = rate

    def prepare(self, x, seed):
        flag = np.random.default_rng(seed).random() < self.rate
        out = FLAGGED if flag else CLEAN
        return lambda A, B: out


def _slope(values):
    t = np.arange(len(values))
    return np.polyfit(t, values, 1)[0]


def test_lambda1_rises_when_false_alarms_exceed_alpha():
    cfg = ApertConfig(theta=0.0, n_max=1000, alpha=0.05)
    res = train_apert(np.zeros((5, 4)), np.zeros((0, 4)), cfg, StubOracle(0.3), seed=0)
    lam = [r["lambda1"] for r in res.trace]
    assert _slope(lam) > 0
    assert all(r["lambda2"] == cfg.lambda0 for r in res.trace)


def test_lambda1_falls_when_false_alarms_below_alpha():
    cfg = ApertConfig(theta=0.0, n_max=1000, alpha=0.2, lambda0=0.5)
    res = train_apert(np.zeros((5, 4)), np.zeros((0, 4)), cfg, StubOracle(0.01), seed=0)
    lam = np.array([r["lambda1"] for r in res.trace])
    assert _slope(lam) < 0 or np.all(lam == 0)


def test_lambda1_nondecreasing_on_false_alarm_with_alpha_zero():
    cfg = ApertConfig(theta=0.0, n_max=1000, alpha=1e-9)
    res = train_apert(np.zeros((5, 4)), np.zeros((0, 4)), cfg, StubOracle(0.2), seed=3)
    prev = cfg.lambda0
    for r in res.trace:
        if r["fa"]:
            assert r["lambda1"] >= prev
        prev = r["lambda1"]
    assert _slope([r["lambda1"] for r in res.trace]) > 0


def _probe_setup(seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((60, 6))
    return random_mlp(rng), fit_pca(X), X


def test_train_apert_invariants_and_determinism():
    model, basis, X = _probe_setup()
    cfg = ApertConfig(n_max=120, T=10, C=3, sigma=0.3)
    oracle = ProbeOracle(model, basis, cfg)
    a = train_apert(X[:30], X[30:], cfg, oracle, seed=4)
    b = train_apert(X[:30], X[30:], cfg, oracle, seed=4)
    assert a.trace == b.trace
    lam1, lam2 = cfg.lambda0, cfg.lambda0
    for r in a.trace:
        assert cfg.A_min <= r["A"] <= cfg.A_max and cfg.B_min <= r["B"] <= cfg.B_max
        assert r["lambda1"] >= 0 and r["lambda2"] >= 0
        # asynchronous: at most one multiplier moves per iteration
        assert (r["lambda1"] == lam1) or (r["lambda2"] == lam2)
        lam1, lam2 = r["lambda1"], r["lambda2"]
    assert a.trace[0]["t"] == 1 and len(a.trace) == 120


def test_theta_zero_never_touches_lambda2():
    model, basis, X = _probe_setup(1)
    cfg = ApertConfig(n_max=50, T=5, C=3, sigma=0.3, theta=0.0)
    res = train_apert(X, np.zeros((0, 6)), cfg, ProbeOracle(model, basis, cfg), seed=0)
    assert all(r["lambda2"] == cfg.lambda0 and r["miss"] == 0 for r in res.trace)


def test_schedule_violation_aborts_before_iteration():
    class Exploding:
        def prepare(self, x, seed):
            raise AssertionError("should not be reached")

    cfg = ApertConfig(schedule=StepSchedule(ed=0.6))
    with pytest.raises(ScheduleError):
        train_apert(np.zeros((2, 4)), np.zeros((2, 4)), cfg, Exploding())


def test_common_random_numbers_in_probe_oracle():
    model, basis, X = _probe_setup(2)
    cfg = ApertConfig(T=10, C=3, sigma=0.3)
    test = ProbeOracle(model, basis, cfg).prepare(X[0], (0, 5))
    assert test(1e-6, 0.4) == test(1e-6, 0.4)


def test_apert_test_is_srt_with_q():
    model, basis, X = _probe_setup(3)
    cfg = ApertConfig(T=10, C=3, sigma=0.5)
    for i, x in enumerate(X[:20]):
        a = apert_test(model, basis, x, 1e-8, 0.5, cfg, np.random.default_rng(i))
        b = srt(model, basis, x, SrtConfig(1e-8, 0.5, 10, 3, 0.5, Q=True), np.random.default_rng(i))
        assert a == b


def test_trace_and_threshold_files(tmp_path):
    model, basis, X = _probe_setup(4)
    cfg = ApertConfig(n_max=10, T=5, C=3, sigma=0.3)
    res = train_apert(X[:30], X[30:], cfg, ProbeOracle(model, basis, cfg), seed=1)
    write_trace(res.trace, tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == ",".join(TRACE_FIELDS) and len(lines) == 11
    save_thresholds(tmp_path / "th.txt", res, cfg, 1, {"note": "x"})
    th = load_thresholds(tmp_path / "th.txt")
    assert th["A"] == res.A and th["B"] == res.B and th["T"] == 5 and th["seed"] == 1
    (tmp_path / "bad.txt").write_text("A = 1\nB = 0.5\n")
    with pytest.raises(ValueError):
        load_thresholds(tmp_path / "bad.txt")


@pytest.mark.parametrize("exps", BORDERLINE)
def test_validator_agrees_with_partial_sums(exps):
    ea, ed, edelta = exps
    s = StepSchedule(ea=ea, ed=ed, edelta=edelta)
    assert validator_violations(validate_schedule(s)) == numeric_violations(s)
