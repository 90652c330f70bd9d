"""Threshold learning for the adaptive detector (APERT).

The thresholds (A, B) follow SPSA on the fast timescale; the constraint
prices (lambda1, lambda2) follow projected stochastic approximation on the
slow timescale, updating only on clean or only on adversarial images.
"""

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .classifier import Classifier
from .detect import (DetectionOutcome, SrtConfig, probe, srt, srt_from_probe)
from .spectral import SpectralBasis

logger = logging.getLogger(__name__)


class ScheduleError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("step-size schedule violates: " + "; ".join(self.violations))


@dataclass(frozen=True)
class StepSchedule:
    """Power-law step sizes a(t) = a0/(t+1)^ea, d(n) = d0/(n+1)^ed, delta(t) = delta0/(t+1)^edelta."""

    a0: float = 0.2
    d0: float = 1.0
    delta0: float = 0.5
    ea: float = 0.7
    ed: float = 1.0
    edelta: float = 0.1

    def a(self, t):
        return self.a0 / (t + 1) ** self.ea

    def d(self, n):
        return self.d0 / (n + 1) ** self.ed

    def delta(self, t):
        return self.delta0 / (t + 1) ** self.edelta


def validate_schedule(s: StepSchedule) -> list[str]:
    """Names of every violated step-size condition (empty list means OK).

    Exact on the power-law family: sum t^-e diverges iff e <= 1.
    """
    if min(s.a0, s.d0, s.delta0) <= 0:
        raise ValueError(f"schedule coefficients must be positive: a0={s.a0}, d0={s.d0}, delta0={s.delta0}")
    out = []
    if not s.ea <= 1:
        out.append(f"sum a(t) = inf requires ea <= 1 (ea={s.ea})")
    if not s.ed <= 1:
        out.append(f"sum d(t) = inf requires ed <= 1 (ed={s.ed})")
    if not s.ea > 0.5:
        out.append(f"sum a(t)^2 < inf requires ea > 0.5 (ea={s.ea})")
    if not s.ed > 0.5:
        out.append(f"sum d(t)^2 < inf requires ed > 0.5 (ed={s.ed})")
    if not s.edelta > 0:
        out.append(f"delta(t) -> 0 requires edelta > 0 (edelta={s.edelta})")
    if not 2 * (s.ea - s.edelta) > 1:
        out.append(f"sum a(t)^2/delta(t)^2 < inf requires 2(ea - edelta) > 1 "
                   f"(2({s.ea} - {s.edelta}) = {2 * (s.ea - s.edelta):.4g})")
    if not s.ed > s.ea:
        out.append(f"d(t)/a(t) -> 0 requires ed > ea (ed={s.ed}, ea={s.ea})")
    return out


@dataclass(frozen=True)
class ApertConfig:
    alpha: float = 0.05
    beta: float = 0.3
    theta: float = 50.0
    T: int = 25
    C: int = 16
    sigma: float = 0.4
    p: float = 2.0
    q_clamp: float = 1e-6
    A_min: float = 1e-12
    A_max: float = 1e-4
    B_min: float = 1e-3
    B_max: float = 100.0
    A0: float = 1e-10
    B0: float = 0.5
    lambda0: float = 10.0
    n_max: int = 2000
    # "linear" perturbs (A, B) directly; "log" runs SPSA on (log A, log B)
    coordinates: str = "log"
    schedule: StepSchedule = field(default_factory=StepSchedule)

    def validate(self):
        problems = []
        if not 0 < self.alpha < 1:
            problems.append(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0 < self.beta < 1:
            problems.append(f"beta must be in (0, 1), got {self.beta}")
        if not 0 <= self.theta <= 100:
            problems.append(f"theta must be in [0, 100], got {self.theta}")
        if not 0 < self.A_min < self.A_max < self.B_min < self.B_max:
            problems.append("boxes must satisfy 0 < A_min < A_max < B_min < B_max")
        if not 0 < self.A0 < self.B0:
            problems.append(f"initial thresholds must satisfy 0 < A0 < B0 (A0={self.A0}, B0={self.B0})")
        if self.lambda0 < 0:
            problems.append("initial multipliers must be >= 0")
        if self.coordinates not in ("linear", "log"):
            problems.append(f"coordinates must be 'linear' or 'log', got {self.coordinates!r}")
        if self.n_max < 0:
            problems.append("n_max must be >= 0")
        if problems:
            raise ValueError("; ".join(problems))
        violations = validate_schedule(self.schedule)
        if violations:
            raise ScheduleError(violations)

    def srt_config(self, A: float, B: float, Q: bool = False) -> SrtConfig:
        return SrtConfig(A=A, B=B, T=self.T, C=self.C, sigma=self.sigma, Q=Q,
                         p=self.p, q_clamp=self.q_clamp)


@dataclass
class TrainState:
    A: float
    B: float
    lambda1: float
    lambda2: float
    n_clean: int = 0
    n_adv: int = 0
    t: int = 0


# Given thresholds (A, B), run the Q = 0 threshold test on the current image.
# Every call for the same image must read the same noise stream.
ThresholdTest = Callable[[float, float], DetectionOutcome]


class SrtOracle(Protocol):
    def prepare(self, x: np.ndarray, seed) -> ThresholdTest: ...


@dataclass
class ProbeOracle:
    """Threshold tests backed by one :func:`~pertdetect.detect.probe` run per image."""

    model: Classifier
    basis: SpectralBasis
    cfg: ApertConfig

    def prepare(self, x, seed) -> ThresholdTest:
        run = probe(self.model, self.basis, x, self.cfg.T, self.cfg.C, self.cfg.sigma,
                    np.random.default_rng(seed))
        return lambda A, B: srt_from_probe(run, self.cfg.srt_config(A, B, Q=False))


def cost(outcome: DetectionOutcome, is_adversarial: bool, lambda1: float, lambda2: float) -> float:
    false_alarm = outcome.adversarial and not is_adversarial
    miss = is_adversarial and not outcome.adversarial
    return outcome.n_used + lambda1 * false_alarm + lambda2 * miss


def _ordered_delta(a, b, delta, lower, upper, max_halvings=200):
    # shrink delta until lower < a' < b' <= upper for both perturbed pairs
    for _ in range(max_halvings):
        if a - delta > lower and a + delta < b - delta and b + delta <= upper:
            return delta
        delta /= 2
    raise FloatingPointError(f"cannot order perturbed thresholds around ({a}, {b})")


def spsa_step(state: TrainState, evaluate: Callable[[float, float], float], cfg: ApertConfig,
              rng: np.random.Generator):
    """One SPSA update of (A, B). ``evaluate(A, B)`` returns the sampled cost.

    With ``cfg.coordinates == "log"`` the perturbation, gradient step and
    projection act on (log A, log B) instead of (A, B).
    Returns the new (A, B), the two cost samples and the delta actually used.
    """
    if cfg.coordinates == "log":
        to, back, lower, upper = np.log, np.exp, -np.inf, np.log(cfg.B_max)
    elif cfg.coordinates == "linear":
        to, back, lower, upper = float, float, 0.0, cfg.B_max
    else:
        raise ValueError(f"unknown threshold coordinates {cfg.coordinates!r}")
    t = state.t
    b1, b2 = rng.choice([-1.0, 1.0], size=2)
    u, v = to(state.A), to(state.B)
    delta = _ordered_delta(u, v, cfg.schedule.delta(t), lower, upper)
    c_plus = evaluate(back(u + delta * b1), back(v + delta * b2))
    c_minus = evaluate(back(u - delta * b1), back(v - delta * b2))
    a = cfg.schedule.a(t)
    diff = c_plus - c_minus
    u = np.clip(u - a * diff / (2 * b1 * delta), to(cfg.A_min), to(cfg.A_max))
    v = np.clip(v - a * diff / (2 * b2 * delta), to(cfg.B_min), to(cfg.B_max))
    return float(back(u)), float(back(v)), c_plus, c_minus, delta


def lagrange_step(state: TrainState, outcome: DetectionOutcome, is_adversarial: bool,
                  cfg: ApertConfig) -> TrainState:
    """Asynchronous projected update of the one multiplier matching the image's class.

    Increments the matching counter first, so the step size is d(n) with n >= 1.
    """
    d = cfg.schedule.d
    if is_adversarial:
        state.n_adv += 1
        miss = not outcome.adversarial
        state.lambda2 = max(0.0, state.lambda2 + d(state.n_adv) * (miss - cfg.beta))
    else:
        state.n_clean += 1
        false_alarm = outcome.adversarial
        state.lambda1 = max(0.0, state.lambda1 + d(state.n_clean) * (false_alarm - cfg.alpha))
    return state


TRACE_FIELDS = ["t", "A", "B", "lambda1", "lambda2", "c_prime", "c_dprime", "fa", "miss", "n_used"]


@dataclass
class TrainResult:
    A: float
    B: float
    lambda1: float
    lambda2: float
    trace: list = field(default_factory=list)


def train_apert(clean, adversarial, cfg: ApertConfig, oracle: SrtOracle, seed: int = 0) -> TrainResult:
    """Learn (A*, B*) and (lambda1*, lambda2*) over ``cfg.n_max`` sampled images.

    Each iteration draws an adversarial image with probability theta/100 (else
    clean) uniformly from the given pools, evaluates the Q = 0 threshold test at
    the two SPSA-perturbed threshold pairs and again at the updated pair, all on
    one noise stream, and records a trace row.
    """
    cfg.validate()
    clean = np.asarray(clean, dtype=np.float64)
    adversarial = np.asarray(adversarial, dtype=np.float64)
    if cfg.theta < 100 and len(clean) == 0:
        raise ValueError("clean pool is empty")
    if cfg.theta > 0 and len(adversarial) == 0:
        raise ValueError("adversarial pool is empty but theta > 0")

    ss = np.random.SeedSequence(seed)
    mix_rng, sign_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    state = TrainState(cfg.A0, cfg.B0, cfg.lambda0, cfg.lambda0)
    trace = []
    for t in range(cfg.n_max):
        state.t = t
        is_adv = bool(mix_rng.random() < cfg.theta / 100)
        pool = adversarial if is_adv else clean
        x = pool[mix_rng.integers(len(pool))]
        test = oracle.prepare(x, (seed, t))

        lam1, lam2 = state.lambda1, state.lambda2
        A, B, c1, c2, _ = spsa_step(
            state, lambda a, b: cost(test(a, b), is_adv, lam1, lam2), cfg, sign_rng)
        state.A, state.B = A, B
        outcome = test(A, B)
        lagrange_step(state, outcome, is_adv, cfg)
        state.t = t + 1
        trace.append({
            "t": t + 1, "A": state.A, "B": state.B, "lambda1": state.lambda1,
            "lambda2": state.lambda2, "c_prime": c1, "c_dprime": c2,
            "fa": int(outcome.adversarial and not is_adv),
            "miss": int(is_adv and not outcome.adversarial), "n_used": outcome.n_used,
        })
    logger.info("train_apert: A*=%.4g B*=%.4g lambda1=%.4g lambda2=%.4g",
                state.A, state.B, state.lambda1, state.lambda2)
    return TrainResult(state.A, state.B, state.lambda1, state.lambda2, trace)


def apert_test(model: Classifier, basis: SpectralBasis, x, A: float, B: float, cfg: ApertConfig,
               rng: np.random.Generator) -> DetectionOutcome:
    """Test phase: the sequential ratio test with category-change exit at (A, B)."""
    return srt(model, basis, x, cfg.srt_config(A, B, Q=True), rng)


def write_trace(trace, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(TRACE_FIELDS)
        for row in trace:
            wr.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in TRACE_FIELDS])


THRESHOLD_KEYS = ["A", "B", "lambda1", "lambda2", "C", "sigma", "T", "p", "seed"]


def save_thresholds(path, result: TrainResult, cfg: ApertConfig, seed: int, extra: dict | None = None):
    values = {"A": result.A, "B": result.B, "lambda1": result.lambda1, "lambda2": result.lambda2,
              "C": cfg.C, "sigma": cfg.sigma, "T": cfg.T, "p": cfg.p, "seed": seed}
    with open(path, "w") as fh:
        for k in THRESHOLD_KEYS:
            v = values[k]
            fh.write(f"{k} = {repr(float(v)) if isinstance(v, float) else v}\n")
        for k, v in (extra or {}).items():
            fh.write(f"{k} = {v}\n")


def load_thresholds(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k] = v
    missing = [k for k in THRESHOLD_KEYS if k not in out]
    if missing:
        raise ValueError(f"{path}: missing keys {missing}")
    parsed = {k: float(out[k]) for k in ("A", "B", "lambda1", "lambda2", "sigma", "p")}
    parsed.update({k: int(out[k]) for k in ("C", "T", "seed")})
    if not 0 < parsed["A"] < parsed["B"]:
        raise ValueError(f"{path}: thresholds must satisfy 0 < A < B")
    return parsed
