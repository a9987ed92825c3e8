"""Sequential and adjusted p-values for the three-hypothesis worked example.

Prints one row per intersection with both methods at the interim and final
analyses, followed by the adjusted p-values and decisions.

Usage: python scripts/reproduce_example.py [--config configs/example1.json]
"""

import argparse
import time
from pathlib import Path

from adjseq import closed_test_report, load_config

DEFAULT = Path(__file__).resolve().parents[1] / "configs" / "example1.json"


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=str(DEFAULT))
    parser.add_argument("--alpha", type=float)
    args = parser.parse_args()
    cfg = load_config(args.config)
    alpha = args.alpha or cfg.alpha
    design, data = cfg.design, cfg.observed
    labels = design.hypotheses.labels

    reports = {}
    for method in ("bonferroni", "wpgsd"):
        for k in range(1, design.K + 1):
            start = time.perf_counter()
            reports[method, k] = closed_test_report(k, alpha, data, design, method)
            print(f"{method:>10} analysis {k}: {time.perf_counter() - start:.2f} s")
    print()

    cols = [(m, k) for k in range(1, design.K + 1) for m in ("bonferroni", "wpgsd")]
    header = ["subset"] + [f"{m[:4]}@{k}" for m, k in cols]
    print("  ".join(f"{h:>12}" for h in header))
    for sub in reports[cols[0]].subset_p:
        row = [design.hypotheses.subset_label(sub)] + [f"{reports[c].subset_p[sub]:.4f}" for c in cols]
        print("  ".join(f"{x:>12}" for x in row))
    print()
    for j, name in enumerate(labels):
        row = [f"adjusted {name}"] + [f"{reports[c].adjusted[j]:.4f}" for c in cols]
        print("  ".join(f"{x:>12}" for x in row))
    print()
    for c in cols:
        rej = ", ".join(labels[j] for j in sorted(reports[c].rejected)) or "none"
        print(f"{c[0]:>10} analysis {c[1]}: rejected {rej}")


if __name__ == "__main__":
    main()
