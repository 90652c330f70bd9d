"""PERT and the sequential ratio test (SRT).

Both detectors perturb the least significant PCA coefficients of the test
image, reconstruct, and query the classifier. PERT flags the image as soon as
the predicted category changes; SRT accumulates the ratio
prod q_j / prod (1 - q_j) and stops when it leaves (A, B).
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .classifier import Classifier
from .spectral import SpectralBasis, perturb_least_significant, project, reconstruct


class StopReason(str, Enum):
    CATEGORY_CHANGE = "category_change"
    BELOW_A = "below_A"
    ABOVE_B = "above_B"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class DetectionOutcome:
    adversarial: bool
    n_used: int
    stop_reason: StopReason
    q_trace: tuple = ()

    def __post_init__(self):
        positive = self.stop_reason in (StopReason.CATEGORY_CHANGE, StopReason.ABOVE_B)
        if positive != self.adversarial:
            raise ValueError(f"stop reason {self.stop_reason.value} inconsistent with "
                             f"adversarial={self.adversarial}")


@dataclass(frozen=True)
class PertConfig:
    T: int = 25
    C: int = 16
    sigma: float = 0.4

    def validate(self, M: int | None = None):
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.C < 1 or (M is not None and self.C > M):
            raise ValueError(f"C must be in [1, {M}], got {self.C}")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be finite and positive, got {self.sigma}")


@dataclass(frozen=True)
class SrtConfig:
    A: float = 1e-10
    B: float = 0.5
    T: int = 25
    C: int = 16
    sigma: float = 0.4
    Q: bool = True
    p: float = 2.0
    q_clamp: float = 1e-6

    def validate(self, M: int | None = None):
        PertConfig(self.T, self.C, self.sigma).validate(M)
        if not (0 < self.A < self.B):
            raise ValueError(f"thresholds must satisfy 0 < A < B, got A={self.A}, B={self.B}")
        if not self.p >= 1:
            raise ValueError(f"norm order p must be >= 1, got {self.p}")
        if not 0 < self.q_clamp < 0.5:
            raise ValueError(f"q_clamp must be in (0, 0.5), got {self.q_clamp}")


def q_statistic(y, y_perturbed, p: float = 2.0, q_clamp: float = 1e-6):
    """Clamped ||y - y'||_p / K. Vectorized over leading axes of ``y_perturbed``."""
    y = np.asarray(y, dtype=np.float64)
    yp = np.asarray(y_perturbed, dtype=np.float64)
    if y.shape[-1] != yp.shape[-1]:
        raise ValueError(f"belief vectors differ in length: {y.shape[-1]} vs {yp.shape[-1]}")
    if p < 1:
        raise ValueError(f"norm order p must be >= 1, got {p}")
    K = y.shape[-1]
    q = np.linalg.norm(yp - y, ord=p, axis=-1) / K
    return np.clip(q, q_clamp, 1.0 - q_clamp)


@dataclass(frozen=True)
class ProbeRun:
    """Classifier responses to T perturbations of one image (one noise stream).

    Every threshold test on the same image and seed reads from the same probe
    run, which is what makes SPSA's paired evaluations use common random numbers.
    """

    belief: np.ndarray
    perturbed_beliefs: np.ndarray
    label: int
    changed: np.ndarray = field(repr=False)

    @property
    def T(self) -> int:
        return len(self.perturbed_beliefs)

    def q(self, p: float = 2.0, q_clamp: float = 1e-6) -> np.ndarray:
        return q_statistic(self.belief, self.perturbed_beliefs, p, q_clamp)


def probe(model: Classifier, basis: SpectralBasis, x, T: int, C: int, sigma: float,
          rng: np.random.Generator) -> ProbeRun:
    """Query the classifier on T fresh perturbations of ``x``'s coefficients.

    Each perturbation is drawn from the original coefficients (never compounded).
    The T samples are evaluated in one batch; sequential detectors then read them
    in order, so results equal a one-at-a-time loop on the same stream.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (basis.dim,):
        raise ValueError(f"image has shape {x.shape}, basis dimension is {basis.dim}")
    coeffs = project(x, basis)
    perturbed = reconstruct(perturb_least_significant(coeffs, C, sigma, rng, size=T), basis)
    beliefs = model.predict_proba(np.vstack([x[None, :], perturbed]))
    labels = np.argmax(beliefs, axis=1)
    return ProbeRun(beliefs[0], beliefs[1:], int(labels[0]), labels[1:] != labels[0])


def pert_from_probe(run: ProbeRun) -> DetectionOutcome:
    # q values are recorded for inspection only; PERT decides on label changes
    q = run.q()
    hits = np.flatnonzero(run.changed)
    if len(hits):
        n = int(hits[0]) + 1
        return DetectionOutcome(True, n, StopReason.CATEGORY_CHANGE, tuple(q[:n].tolist()))
    return DetectionOutcome(False, run.T, StopReason.BUDGET_EXHAUSTED, tuple(q.tolist()))


def pert_detect(model: Classifier, basis: SpectralBasis, x, cfg: PertConfig,
                rng: np.random.Generator) -> DetectionOutcome:
    cfg.validate(basis.dim)
    return pert_from_probe(probe(model, basis, x, cfg.T, cfg.C, cfg.sigma, rng))


def ratio_test(q, changed, A: float, B: float, Q: bool, T: int | None = None) -> DetectionOutcome:
    """Run the two-threshold stopping rule over a precomputed q sequence.

    The running ratio is accumulated in the log domain. A ratio exactly equal to
    a threshold keeps sampling.
    """
    q = np.asarray(q, dtype=np.float64)
    T = len(q) if T is None else T
    if T > len(q):
        raise ValueError(f"budget T={T} exceeds the {len(q)} available samples")
    log_a, log_b = np.log(A), np.log(B)
    log_r = 0.0
    for j in range(T):
        log_r += np.log(q[j]) - np.log1p(-q[j])
        if Q and changed[j]:
            decision = (True, StopReason.CATEGORY_CHANGE)
        elif log_r < log_a:
            decision = (False, StopReason.BELOW_A)
        elif log_r > log_b:
            decision = (True, StopReason.ABOVE_B)
        else:
            continue
        return DetectionOutcome(decision[0], j + 1, decision[1], tuple(q[:j + 1].tolist()))
    return DetectionOutcome(False, T, StopReason.BUDGET_EXHAUSTED, tuple(q[:T].tolist()))


def srt_from_probe(run: ProbeRun, cfg: SrtConfig) -> DetectionOutcome:
    return ratio_test(run.q(cfg.p, cfg.q_clamp), run.changed, cfg.A, cfg.B, cfg.Q, cfg.T)


def srt(model: Classifier, basis: SpectralBasis, x, cfg: SrtConfig,
        rng: np.random.Generator) -> DetectionOutcome:
    cfg.validate(basis.dim)
    return srt_from_probe(probe(model, basis, x, cfg.T, cfg.C, cfg.sigma, rng), cfg)
