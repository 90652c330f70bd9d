"""ROC curves of PERT (sigma sweep) and APERT with Q = 0 / Q = 1 (threshold-scale sweep).

    python scripts/roc_figure.py OUT_PREFIX [--seed N] [--attack pgd]

Writes OUT_PREFIX.csv and OUT_PREFIX.svg.
"""

import argparse
import logging

from pertdetect.harness.data import SynthSpec
from pertdetect.harness.experiments import DeskConfig, build_desk, roc_curves
from pertdetect.harness.report import emit_report


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out_prefix")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--attack", default="pgd", choices=["fgsm", "pgd"])
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    setup = build_desk(DeskConfig(data=SynthSpec(seed=args.seed), seed=args.seed))
    curves = list(roc_curves(setup, args.attack).values())
    for c in curves:
        print(f"{c.detector:9} AUC {c.auc:.4f}")
    emit_report(curves, "csv", f"{args.out_prefix}.csv")
    emit_report(curves, "svg", f"{args.out_prefix}.svg", title=f"ROC on {args.attack.upper()} corpus")


if __name__ == "__main__":
    main()
