"""Command-line pipeline: data -> classifier -> basis -> attacks -> thresholds -> detection."""

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from . import apert as apert_mod
from ._binio import FormatError
from .attacks import ATTACKS, craft_corpus
from .classifier import accuracy, load_model, save_model, train_mlp
from .config import ConfigError, RunConfig, config_hash, load_config, resolved_text
from .detect import SrtConfig
from .harness.data import (ingest_raw, load_corpus, load_images, save_corpus, save_dataset,
                           split, synth_dataset)
from .harness.metrics import (ADV_TAG, EvalReport, ProbeCache, apert_detector, evaluate_detector,
                              image_seed, pert_detector, srt_detector)
from .harness.report import emit_report
from .harness.roc import roc_sweep, threshold_scales
from .spectral import fit_pca, load_basis, save_basis

log = logging.getLogger("pertdetect")


class CliError(Exception):
    pass


def _write_meta(path, command: str, cfg: RunConfig):
    """Provenance sidecar: the command, the config hash and every resolved value."""
    with open(f"{path}.meta", "w") as fh:
        fh.write(f"command = {command}\nconfig_hash = {config_hash(cfg)}\n")
        fh.write(resolved_text(cfg))


def cmd_make_data(args, cfg: RunConfig):
    spec = replace(cfg.data, seed=cfg.stage_seed("data"))
    ds = synth_dataset(spec)
    n_train, n_test = cfg.split.n_train, cfg.split.n_test
    if n_train + n_test > len(ds):
        raise CliError(f"data.per_class * data.n_classes = {len(ds)} < split.n_train + split.n_test")
    train, rest = split(ds, n_train)
    test = rest.subset(slice(0, n_test))
    for ds_, img, lbl in ((train, args.train_images, args.train_labels),
                          (test, args.test_images, args.test_labels)):
        save_dataset(ds_, img, lbl)
        _write_meta(img, "make-data", cfg)
    log.info("wrote %d train / %d test images", len(train), len(test))


def cmd_train_classifier(args, cfg):
    ds = ingest_raw(args.images, label_path=args.labels, n_classes=cfg.data.n_classes)
    tcfg = replace(cfg.train, seed=cfg.stage_seed("train-classifier"))
    model = train_mlp(ds.images, ds.labels, tcfg, n_classes=cfg.data.n_classes)
    save_model(model, args.out)
    _write_meta(args.out, "train-classifier", cfg)
    log.info("training accuracy %.4f", accuracy(model, ds.images, ds.labels))


def cmd_fit_basis(args, cfg):
    images, _ = load_images(args.images)
    basis = fit_pca(images)
    save_basis(basis, args.out)
    _write_meta(args.out, "fit-basis", cfg)


def cmd_craft(args, cfg):
    if args.attack not in ATTACKS:
        raise CliError(f"unknown attack {args.attack!r}; choose from {', '.join(ATTACKS)}")
    model = load_model(args.model)
    ds = ingest_raw(args.images, label_path=args.labels, n_classes=model.n_classes)
    a = cfg.attack
    corpus = craft_corpus(model, ds.images, ds.labels, args.attack, a.epsilon, a.step_size,
                          a.iterations, seed=cfg.stage_seed(f"craft:{args.attack}"), cw=cfg.cw)
    save_corpus(corpus, ds.dims, args.out_images, args.out_meta)
    _write_meta(args.out_images, f"craft {args.attack}", cfg)
    log.info("%s: %d attacked, %d successful", args.attack, len(corpus.results), int(corpus.success.sum()))


def cmd_train_apert(args, cfg):
    acfg = cfg.apert_config()
    acfg.validate()  # schedule and box problems surface before any compute
    model = load_model(args.model)
    basis = load_basis(args.basis)
    clean_all, _ = load_images(args.clean_images)
    adv, rows, _ = load_corpus(args.corpus_images, args.corpus_meta, successful_only=False)
    idx = np.array([int(r["index"]) for r in rows], dtype=np.int64)
    if len(idx) and idx.max() >= len(clean_all):
        raise CliError("corpus metadata refers to images outside the clean set")
    ok = np.array([r["success"] == "1" for r in rows], dtype=bool)
    seed = cfg.stage_seed("train-apert")
    res = apert_mod.train_apert(clean_all[idx], adv[ok], acfg,
                                apert_mod.ProbeOracle(model, basis, acfg), seed=seed)
    apert_mod.save_thresholds(args.out, res, acfg, seed, {"config_hash": config_hash(cfg)})
    apert_mod.write_trace(res.trace, args.trace)
    _write_meta(args.trace, "train-apert", cfg)
    log.info("A*=%.6g B*=%.6g lambda1=%.6g lambda2=%.6g", res.A, res.B, res.lambda1, res.lambda2)


def _srt_from_thresholds(th: dict, cfg: RunConfig, Q: bool) -> SrtConfig:
    return SrtConfig(A=th["A"], B=th["B"], T=th["T"], C=th["C"], sigma=th["sigma"], Q=Q,
                     p=th["p"], q_clamp=cfg.apert.q_clamp)


def _detector(name: str, args, cfg: RunConfig, model, basis, cache):
    if name == "pert":
        return pert_detector(model, basis, cfg.pert, cache), cfg.pert.T
    if name == "srt":
        s = cfg.srt
        scfg = SrtConfig(A=s.A, B=s.B, T=cfg.pert.T, C=cfg.pert.C, sigma=cfg.pert.sigma, Q=s.Q,
                         p=s.p, q_clamp=s.q_clamp)
        return srt_detector(model, basis, scfg, cache), scfg.T
    if name == "apert":
        if not args.thresholds:
            raise CliError("detector 'apert' needs --thresholds")
        scfg = _srt_from_thresholds(apert_mod.load_thresholds(args.thresholds), cfg, Q=True)
        return srt_detector(model, basis, scfg, cache), scfg.T
    raise CliError(f"unknown detector {name!r}; choose pert, srt or apert")


def cmd_detect(args, cfg):
    model = load_model(args.model)
    basis = load_basis(args.basis)
    images, _ = load_images(args.images)
    name = args.detector or ("apert" if args.thresholds else "pert")
    det, _ = _detector(name, args, cfg, model, basis, ProbeCache(model, basis))
    seed = cfg.stage_seed("detect")
    lines = []
    for i, x in enumerate(images):
        o = det(x, image_seed(seed, ADV_TAG, i))
        lines.append(f"{i},{'adversarial' if o.adversarial else 'clean'},{o.n_used},{o.stop_reason.value}")
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        _write_meta(args.out, f"detect {name}", cfg)
    else:
        sys.stdout.write(text)


def _corpora(args):
    if len(args.corpus_images) != len(args.corpus_meta):
        raise CliError("--corpus-images and --corpus-meta must be given the same number of times")
    out = []
    for img, meta in zip(args.corpus_images, args.corpus_meta):
        adv, rows, _ = load_corpus(img, meta)
        if len(adv) == 0:
            raise CliError(f"corpus {img} has no successful adversarial images")
        out.append((rows[0]["attack"], adv))
    return out


def cmd_evaluate(args, cfg):
    model = load_model(args.model)
    basis = load_basis(args.basis)
    clean, _ = load_images(args.clean_images)
    cache = ProbeCache(model, basis)
    seed = cfg.stage_seed("evaluate")
    report = EvalReport()
    Ts = [int(t) for t in args.t_sweep.split(",")] if args.t_sweep else None
    for attack, adv in _corpora(args):
        for name in args.detector:
            if name == "pert" and Ts:
                for T in Ts:
                    c = replace(cfg, pert=replace(cfg.pert, T=T))
                    det, _ = _detector("pert", args, c, model, basis, cache)
                    report.add(evaluate_detector(det, clean, adv, T, seed, attack, "pert", f"T={T}"))
                continue
            det, T = _detector(name, args, cfg, model, basis, cache)
            report.add(evaluate_detector(det, clean, adv, T, seed, attack, name, f"T={T}"))
    emit_report(report, "csv", args.out)
    _write_meta(args.out, "evaluate", cfg)


def cmd_roc(args, cfg):
    model = load_model(args.model)
    basis = load_basis(args.basis)
    clean, _ = load_images(args.clean_images)
    th = apert_mod.load_thresholds(args.thresholds)
    cache = ProbeCache(model, basis)
    seed = cfg.stage_seed("roc")
    r = cfg.roc
    sigmas = [float(s) for s in np.geomspace(r.sigma_min, r.sigma_max, r.n_points)]
    scales = threshold_scales(th["A"], th["B"], r.decades_low, r.decades_high, r.n_points)
    curves = []
    for attack, adv in _corpora(args):
        T = cfg.pert.T
        curves.append(roc_sweep(
            f"{attack}:pert",
            lambda s: pert_detector(model, basis, replace(cfg.pert, sigma=s), cache),
            sigmas, clean, adv, T, seed))
        for Q in (False, True):
            base = _srt_from_thresholds(th, cfg, Q)
            curves.append(roc_sweep(
                f"{attack}:apert_q{int(Q)}",
                lambda s, base=base: srt_detector(model, basis, replace(base, A=base.A / s, B=base.B * s), cache),
                scales, clean, adv, base.T, seed))
    emit_report(curves, "csv", args.out_csv)
    _write_meta(args.out_csv, "roc", cfg)
    if args.out_svg:
        emit_report(curves, "svg", args.out_svg, title="ROC: PERT vs APERT")
    for c in curves:
        log.info("%s AUC %.4f", c.detector, c.auc)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file (defaults for anything omitted)")
    common.add_argument("--seed", type=int, help="override the global seed")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true")
    verbosity.add_argument("--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pertdetect", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("make-data", parents=[common], help="generate the synthetic desk dataset")
    s.add_argument("--train-images", required=True)
    s.add_argument("--train-labels", required=True)
    s.add_argument("--test-images", required=True)
    s.add_argument("--test-labels", required=True)
    s.set_defaults(func=cmd_make_data)

    s = sub.add_parser("train-classifier", parents=[common])
    s.add_argument("--images", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_classifier)

    s = sub.add_parser("fit-basis", parents=[common])
    s.add_argument("--images", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit_basis)

    s = sub.add_parser("craft", parents=[common])
    s.add_argument("--model", required=True)
    s.add_argument("--images", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--attack", required=True, help=", ".join(ATTACKS))
    s.add_argument("--out-images", required=True)
    s.add_argument("--out-meta", required=True)
    s.set_defaults(func=cmd_craft)

    s = sub.add_parser("train-apert", parents=[common])
    s.add_argument("--model", required=True)
    s.add_argument("--basis", required=True)
    s.add_argument("--clean-images", required=True, help="the clean set the corpus was crafted from")
    s.add_argument("--corpus-images", required=True)
    s.add_argument("--corpus-meta", required=True)
    s.add_argument("--out", required=True, help="learned thresholds (key = value)")
    s.add_argument("--trace", required=True, help="per-iteration trace CSV")
    s.set_defaults(func=cmd_train_apert)

    s = sub.add_parser("detect", parents=[common])
    s.add_argument("--model", required=True)
    s.add_argument("--basis", required=True)
    s.add_argument("--thresholds")
    s.add_argument("--images", required=True)
    s.add_argument("--detector", choices=["pert", "srt", "apert"],
                   help="default: apert when --thresholds is given, else pert")
    s.add_argument("--out", help="write verdict lines here instead of stdout")
    s.set_defaults(func=cmd_detect)

    for name, func in (("evaluate", cmd_evaluate), ("roc", cmd_roc)):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--model", required=True)
        s.add_argument("--basis", required=True)
        s.add_argument("--thresholds", required=name == "roc")
        s.add_argument("--clean-images", required=True)
        s.add_argument("--corpus-images", action="append", required=True)
        s.add_argument("--corpus-meta", action="append", required=True)
        if name == "evaluate":
            s.add_argument("--detector", action="append", choices=["pert", "srt", "apert"],
                           required=True)
            s.add_argument("--t-sweep", help="comma-separated T values for PERT rows, e.g. 5,10,15")
            s.add_argument("--out", required=True)
        else:
            s.add_argument("--out-csv", required=True)
            s.add_argument("--out-svg")
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        args.func(args, cfg)
    except apert_mod.ScheduleError as exc:
        print(f"pertdetect: error: schedule: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, FormatError, CliError, ValueError, OSError) as exc:
        print(f"pertdetect: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
