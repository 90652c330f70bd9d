"""Per-image detector runs aggregated into false-alarm / detection tables."""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..apert import ApertConfig
from ..classifier import Classifier
from ..detect import (DetectionOutcome, PertConfig, ProbeRun, SrtConfig, pert_from_probe, probe,
                      srt_from_probe)
from ..spectral import SpectralBasis

# (image, seed) -> outcome; the seed fully determines the perturbation noise
Detector = Callable[[np.ndarray, tuple], DetectionOutcome]

CLEAN_TAG, ADV_TAG = 0, 1


def image_seed(seed: int, tag: int, index: int) -> tuple:
    """Per-image noise seed; independent of T, Q and thresholds so runs nest."""
    return (int(seed), int(tag), int(index))


class ProbeCache:
    """Memoizes probe runs by (image, seed, T, C, sigma) so threshold sweeps reuse them."""

    def __init__(self, model: Classifier, basis: SpectralBasis):
        self.model = model
        self.basis = basis
        self._runs: dict = {}

    def get(self, x, seed, T, C, sigma) -> ProbeRun:
        x = np.asarray(x, dtype=np.float64)
        key = (x.tobytes(), seed, T, C, float(sigma))
        run = self._runs.get(key)
        if run is None:
            run = probe(self.model, self.basis, x, T, C, sigma, np.random.default_rng(seed))
            self._runs[key] = run
        return run


def pert_detector(model, basis, cfg: PertConfig, cache: ProbeCache | None = None) -> Detector:
    cfg.validate(basis.dim)
    cache = cache or ProbeCache(model, basis)
    return lambda x, seed: pert_from_probe(cache.get(x, seed, cfg.T, cfg.C, cfg.sigma))


def srt_detector(model, basis, cfg: SrtConfig, cache: ProbeCache | None = None) -> Detector:
    cfg.validate(basis.dim)
    cache = cache or ProbeCache(model, basis)
    return lambda x, seed: srt_from_probe(cache.get(x, seed, cfg.T, cfg.C, cfg.sigma), cfg)


def apert_detector(model, basis, A: float, B: float, cfg: ApertConfig,
                   cache: ProbeCache | None = None) -> Detector:
    return srt_detector(model, basis, cfg.srt_config(A, B, Q=True), cache)


@dataclass
class EvalRow:
    attack: str
    detector: str
    param: str
    T: int
    n_clean: int
    n_adv: int
    n_false_alarm: int
    n_detected: int
    mean_n_fa: float
    mean_n_det: float
    mean_n_miss: float
    mean_n_clean: float

    @property
    def n_missed(self) -> int:
        return self.n_adv - self.n_detected

    @property
    def false_alarm_pct(self) -> float:
        return 100.0 * self.n_false_alarm / self.n_clean if self.n_clean else math.nan

    @property
    def detection_pct(self) -> float:
        return 100.0 * self.n_detected / self.n_adv if self.n_adv else math.nan

    @property
    def missed_pct(self) -> float:
        return 100.0 * self.n_missed / self.n_adv if self.n_adv else math.nan

    @property
    def mean_n_all(self) -> float:
        """Mean perturbations over the pooled clean + adversarial images."""
        parts = [(self.n_false_alarm, self.mean_n_fa), (self.n_detected, self.mean_n_det),
                 (self.n_missed, self.mean_n_miss), (self.n_clean - self.n_false_alarm, self.mean_n_clean)]
        total = sum(k for k, _ in parts)
        return sum(k * m for k, m in parts if k) / total if total else math.nan


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    def add(self, row: EvalRow):
        self.rows.append(row)
        return row


def _mean(values) -> float:
    return float(np.mean(values)) if len(values) else math.nan


def summarize(clean_out: list[DetectionOutcome], adv_out: list[DetectionOutcome], T: int,
              attack: str = "", detector: str = "", param: str = "") -> EvalRow:
    fa = [o.n_used for o in clean_out if o.adversarial]
    ok = [o.n_used for o in clean_out if not o.adversarial]
    det = [o.n_used for o in adv_out if o.adversarial]
    miss = [o.n_used for o in adv_out if not o.adversarial]
    return EvalRow(attack, detector, param, T, len(clean_out), len(adv_out), len(fa), len(det),
                   _mean(fa), _mean(det), _mean(miss), _mean(ok))


def run_detector(detector: Detector, images, seed: int, tag: int) -> list[DetectionOutcome]:
    # in image-index order, so aggregation is deterministic
    return [detector(x, image_seed(seed, tag, i)) for i, x in enumerate(np.asarray(images))]


def evaluate_detector(detector: Detector, clean, adversarial, T: int, seed: int = 0,
                      attack: str = "", name: str = "", param: str = "") -> EvalRow:
    """False alarm on ``clean``, detection on ``adversarial`` (successful attacks only)."""
    clean = np.asarray(clean, dtype=np.float64)
    adversarial = np.asarray(adversarial, dtype=np.float64)
    if len(clean) == 0 or len(adversarial) == 0:
        raise ValueError("both the clean set and the adversarial corpus must be nonempty")
    return summarize(run_detector(detector, clean, seed, CLEAN_TAG),
                     run_detector(detector, adversarial, seed, ADV_TAG), T, attack, name, param)
