"""Desk-scale versions of the evaluation protocol: T sweep, matched-budget
comparison of PERT and APERT, and ROC curves."""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ..apert import ApertConfig, ProbeOracle, TrainResult, train_apert
from ..attacks import Corpus, craft_corpus
from ..classifier import MlpModel, TrainConfig, accuracy, train_mlp
from ..detect import PertConfig
from ..spectral import SpectralBasis, fit_pca
from .data import Dataset, SynthSpec, split, synth_dataset
from .metrics import (EvalReport, EvalRow, ProbeCache, apert_detector, evaluate_detector,
                      pert_detector, srt_detector)
from .roc import RocCurve, roc_sweep, threshold_scales

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeskConfig:
    data: SynthSpec = SynthSpec(n_classes=4, per_class=600, dims=(8, 8, 1))
    n_train: int = 2000
    n_test: int = 400
    train: TrainConfig = TrainConfig()
    attacks: tuple = ("fgsm", "pgd")
    epsilon: float = 0.1
    pgd_iterations: int = 10
    # training images attacked to build APERT's adversarial pool
    n_apert_pool: int = 800
    pert: PertConfig = PertConfig(T=25, C=16, sigma=0.4)
    apert: ApertConfig = field(default_factory=ApertConfig)
    seed: int = 0


@dataclass
class DeskSetup:
    cfg: DeskConfig
    train: Dataset
    test: Dataset
    model: MlpModel
    basis: SpectralBasis
    test_corpora: dict
    train_corpora: dict
    cache: ProbeCache

    @property
    def clean(self) -> np.ndarray:
        return self.test.images

    def adversarial(self, attack: str) -> np.ndarray:
        return self.test_corpora[attack].successful()


def build_desk(cfg: DeskConfig = DeskConfig()) -> DeskSetup:
    ds = synth_dataset(cfg.data)
    if cfg.n_train + cfg.n_test > len(ds):
        raise ValueError(f"dataset has {len(ds)} images, need {cfg.n_train + cfg.n_test}")
    train, rest = split(ds, cfg.n_train)
    test = rest.subset(slice(0, cfg.n_test))
    model = train_mlp(train.images, train.labels, cfg.train, n_classes=cfg.data.n_classes)
    logger.info("desk classifier: train acc %.4f, test acc %.4f",
                accuracy(model, train.images, train.labels), accuracy(model, test.images, test.labels))
    basis = fit_pca(train.images)
    test_corpora, train_corpora = {}, {}
    for k, attack in enumerate(cfg.attacks):
        test_corpora[attack] = craft_corpus(model, test.images, test.labels, attack, cfg.epsilon,
                                            iterations=cfg.pgd_iterations, seed=(cfg.seed, 1, k))
        pool = train.subset(slice(0, cfg.n_apert_pool))
        train_corpora[attack] = craft_corpus(model, pool.images, pool.labels, attack, cfg.epsilon,
                                             iterations=cfg.pgd_iterations, seed=(cfg.seed, 2, k))
    return DeskSetup(cfg, train, test, model, basis, test_corpora, train_corpora,
                     ProbeCache(model, basis))


def _apert_cfg(setup: DeskSetup) -> ApertConfig:
    p = setup.cfg.pert
    return replace(setup.cfg.apert, T=p.T, C=p.C, sigma=p.sigma)


def learn_thresholds(setup: DeskSetup, attack: str, seed: int | None = None) -> TrainResult:
    cfg = _apert_cfg(setup)
    corpus: Corpus = setup.train_corpora[attack]
    clean_pool = setup.train.images[corpus.source_index]
    seed = setup.cfg.seed if seed is None else seed
    return train_apert(clean_pool, corpus.successful(), cfg,
                       ProbeOracle(setup.model, setup.basis, cfg), seed=seed)


def t_sweep(setup: DeskSetup, Ts=(5, 10, 15, 20, 25)) -> EvalReport:
    """PERT detection / false alarm for each attack and budget T."""
    report = EvalReport()
    for attack in setup.cfg.attacks:
        for T in Ts:
            cfg = replace(setup.cfg.pert, T=T)
            det = pert_detector(setup.model, setup.basis, cfg, setup.cache)
            report.add(evaluate_detector(det, setup.clean, setup.adversarial(attack), T,
                                         setup.cfg.seed, attack, "pert", f"T={T}"))
    return report


def balanced_mean_samples(row: EvalRow) -> float:
    """Mean perturbations over a 50% clean / 50% adversarial mix."""
    clean = (row.n_false_alarm * np.nan_to_num(row.mean_n_fa)
             + (row.n_clean - row.n_false_alarm) * np.nan_to_num(row.mean_n_clean)) / row.n_clean
    adv = (row.n_detected * np.nan_to_num(row.mean_n_det)
           + row.n_missed * np.nan_to_num(row.mean_n_miss)) / row.n_adv
    return 0.5 * (clean + adv)


@dataclass
class MatchedComparison:
    attack: str
    pert: EvalRow
    apert: EvalRow
    scale: float
    thresholds: TrainResult

    @property
    def fa_gap(self) -> float:
        return abs(self.pert.false_alarm_pct - self.apert.false_alarm_pct)

    @property
    def sample_ratio(self) -> float:
        return balanced_mean_samples(self.apert) / balanced_mean_samples(self.pert)


def matched_comparison(setup: DeskSetup, attack: str, thresholds: TrainResult | None = None,
                       scales=None) -> MatchedComparison:
    """PERT at the configured T versus APERT (Q = 1) tuned to the closest false alarm.

    APERT's operating point is picked from a sweep of (A/s, B*s) around the learned
    thresholds; ties on the false-alarm gap go to the cheaper point.
    """
    pcfg = setup.cfg.pert
    clean, adv = setup.clean, setup.adversarial(attack)
    pert_row = evaluate_detector(pert_detector(setup.model, setup.basis, pcfg, setup.cache),
                                 clean, adv, pcfg.T, setup.cfg.seed, attack, "pert", f"T={pcfg.T}")
    res = thresholds or learn_thresholds(setup, attack)
    acfg = _apert_cfg(setup)
    scales = scales if scales is not None else [1.0] + threshold_scales(res.A, res.B)
    best = None
    for s in scales:
        det = apert_detector(setup.model, setup.basis, res.A / s, res.B * s, acfg, setup.cache)
        row = evaluate_detector(det, clean, adv, pcfg.T, setup.cfg.seed, attack, "apert", f"scale={s:.6g}")
        key = (abs(row.false_alarm_pct - pert_row.false_alarm_pct), balanced_mean_samples(row))
        if best is None or key < best[0]:
            best = (key, row, s)
    return MatchedComparison(attack, pert_row, best[1], best[2], res)


def roc_curves(setup: DeskSetup, attack: str, thresholds: TrainResult | None = None,
               sigmas=None) -> dict[str, RocCurve]:
    """PERT (sigma sweep at fixed T) and APERT with Q = 0 / Q = 1 (threshold-scale sweep)."""
    pcfg = setup.cfg.pert
    clean, adv = setup.clean, setup.adversarial(attack)
    seed = setup.cfg.seed
    sigmas = sigmas if sigmas is not None else list(np.geomspace(0.02, 4.0, 15))
    curves = {"pert": roc_sweep(
        "pert", lambda s: pert_detector(setup.model, setup.basis, replace(pcfg, sigma=float(s)), setup.cache),
        sigmas, clean, adv, pcfg.T, seed)}
    res = thresholds or learn_thresholds(setup, attack)
    acfg = _apert_cfg(setup)
    scales = threshold_scales(res.A, res.B)
    for Q in (False, True):
        name = f"apert_q{int(Q)}"
        curves[name] = roc_sweep(
            name,
            lambda s, Q=Q: srt_detector(setup.model, setup.basis,
                                        acfg.srt_config(res.A / s, res.B * s, Q=Q), setup.cache),
            scales, clean, adv, pcfg.T, seed)
    return curves
