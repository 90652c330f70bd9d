"""Run the whole CLI pipeline on the synthetic desk dataset.

    python scripts/run_pipeline.py OUT_DIR [--config run.cfg] [--seed N]

Writes the dataset, classifier, PCA basis, FGSM/PGD corpora, learned APERT
thresholds with trace, verdicts, a T-sweep evaluation table and ROC curves.
"""

import argparse
import os
import sys

from pertdetect.cli import main as cli


def run_pipeline(out: str, config: str | None = None, seed: int | None = None,
                 attacks=("fgsm", "pgd")) -> list[str]:
    os.makedirs(out, exist_ok=True)
    p = lambda name: os.path.join(out, name)  # noqa: E731
    common = ["--quiet"]
    if config:
        common += ["--config", config]
    if seed is not None:
        common += ["--seed", str(seed)]

    steps = [
        ["make-data", "--train-images", p("train.pimg"), "--train-labels", p("train.plbl"),
         "--test-images", p("test.pimg"), "--test-labels", p("test.plbl")],
        ["train-classifier", "--images", p("train.pimg"), "--labels", p("train.plbl"),
         "--out", p("model.pmlp")],
        ["fit-basis", "--images", p("train.pimg"), "--out", p("basis.psb")],
    ]
    for a in attacks:
        steps.append(["craft", "--model", p("model.pmlp"), "--images", p("train.pimg"),
                      "--labels", p("train.plbl"), "--attack", a,
                      "--out-images", p(f"train_{a}.pimg"), "--out-meta", p(f"train_{a}.csv")])
        steps.append(["craft", "--model", p("model.pmlp"), "--images", p("test.pimg"),
                      "--labels", p("test.plbl"), "--attack", a,
                      "--out-images", p(f"test_{a}.pimg"), "--out-meta", p(f"test_{a}.csv")])
    a0 = attacks[-1]
    steps.append(["train-apert", "--model", p("model.pmlp"), "--basis", p("basis.psb"),
                  "--clean-images", p("train.pimg"), "--corpus-images", p(f"train_{a0}.pimg"),
                  "--corpus-meta", p(f"train_{a0}.csv"), "--out", p("thresholds.txt"),
                  "--trace", p("trace.csv")])
    models = ["--model", p("model.pmlp"), "--basis", p("basis.psb")]
    steps.append(["detect", *models, "--thresholds", p("thresholds.txt"), "--images",
                  p(f"test_{a0}.pimg"), "--detector", "apert", "--out", p("verdicts.txt")])
    corpora = []
    for a in attacks:
        corpora += ["--corpus-images", p(f"test_{a}.pimg"), "--corpus-meta", p(f"test_{a}.csv")]
    steps.append(["evaluate", *models, "--thresholds", p("thresholds.txt"), "--clean-images",
                  p("test.pimg"), *corpora, "--detector", "pert", "--detector", "apert",
                  "--t-sweep", "5,10,15,20,25", "--out", p("report.csv")])
    steps.append(["roc", *models, "--thresholds", p("thresholds.txt"), "--clean-images",
                  p("test.pimg"), *corpora, "--out-csv", p("roc.csv"), "--out-svg", p("roc.svg")])

    for step in steps:
        code = cli(step + common)
        if code != 0:
            raise RuntimeError(f"pipeline step {step[0]} failed with exit code {code}")
    return sorted(os.listdir(out))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out")
    ap.add_argument("--config")
    ap.add_argument("--seed", type=int)
    a = ap.parse_args()
    for name in run_pipeline(a.out, a.config, a.seed):
        print(name)
    sys.exit(0)
