"""Render learned letter topics as 26x26 ASCII images.

    python3 scripts/vowels_topics.py results/run/lambda_100/params.txt --top 10
"""
import argparse

import numpy as np

from pclvm.data import GRID
from pclvm.serialize import read_params

SHADES = " .:-=+*#%@"


def render(row):
    img = row.reshape(GRID, GRID)
    img = img / img.max()
    idx = np.minimum((img * len(SHADES)).astype(int), len(SHADES) - 1)
    return ["".join(SHADES[i] for i in line) for line in idx]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("params")
    ap.add_argument("--top", type=int, default=None, help="only the topics with largest |eta|")
    args = ap.parse_args(argv)
    p = read_params(args.params)
    order = np.argsort(-np.abs(p.eta[:, 0]))
    if args.top:
        order = order[:args.top]
    for k in order:
        print("topic %d  eta=%+.3f" % (k, p.eta[k, 0]))
        print("\n".join(render(p.phi[k])))
        print()


if __name__ == "__main__":
    main()
