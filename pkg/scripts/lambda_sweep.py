"""Train one config over a range of lambda values and print the summary table.

    python3 scripts/lambda_sweep.py configs/toy1d_pc.ini --out runs/toy --lambdas 1,4,16,64
"""
import argparse
import csv
import sys
from pathlib import Path

from pclvm import cli


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--out", required=True)
    ap.add_argument("--lambdas", default="1,4,16,64")
    ap.add_argument("--mode", default=None)
    ap.add_argument("--threads", default="1")
    args = ap.parse_args(argv)
    cmd = ["train", "--config", args.config, "--out", args.out,
           "--lambda", args.lambdas, "--threads", args.threads]
    if args.mode:
        cmd += ["--mode", args.mode]
    code = cli.main(cmd)
    if code:
        return code
    with open(Path(args.out) / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    cols = [c for c in ("setting", "train_objective", "valid_auc", "valid_error",
                        "valid_negloglik_per_token") if c in rows[0]]
    print("  ".join("%-14s" % c for c in cols))
    for r in rows:
        print("  ".join("%-14s" % r[c][:14] for c in cols))
    return 0


if __name__ == "__main__":
    sys.exit(main())
