"""Plot one or more `mdiw sweep` CSVs as q against p.

    python scripts/plot_sweep.py d3.csv d2.csv -o sweep.png
"""

import argparse
import csv

import matplotlib.pyplot as plt


def load(path):
    ps, qs, errs = [], [], []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            if row["status"] != "ok":
                continue
            ps.append(float(row["p"]))
            qs.append(float(row["q_value"]))
            errs.append(float(row["q_std"]) if row["q_std"] else 0.0)
    return ps, qs, errs


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv", nargs="+")
    parser.add_argument("-o", "--out", help="image file; shows a window when absent")
    args = parser.parse_args()

    fig, ax = plt.subplots(figsize=(5, 4))
    for path in args.csv:
        ps, qs, errs = load(path)
        ax.errorbar(ps, qs, yerr=errs, marker="o", capsize=2, label=path)
    ax.set_xlabel("p")
    ax.set_ylabel("q")
    ax.legend()
    fig.tight_layout()
    if args.out:
        fig.savefig(args.out, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
