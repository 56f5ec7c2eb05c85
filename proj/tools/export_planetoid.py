#!/usr/bin/env python3
"""Convert a Planetoid split (ind.<name>.* pickles) into the fedgkc dataset layout.

    export_planetoid.py --raw path/to/planetoid/data --name cora --out data/cora

Writes meta.json, edges.txt, features.txt and labels.txt. Test rows are put
back in node-index order; test indices missing from the graph (citeseer) get
zero features and label 0, as in the usual loaders. Needs numpy and scipy.
"""

import argparse
import json
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def load(raw: Path, name: str, part: str):
    with open(raw / f"ind.{name}.{part}", "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--raw", type=Path, required=True, help="directory holding ind.<name>.* files")
    ap.add_argument("--name", default="cora")
    ap.add_argument("--out", type=Path, required=True)
    args = ap.parse_args()

    allx, ally, tx, ty, graph = (load(args.raw, args.name, p) for p in ("allx", "ally", "tx", "ty", "graph"))
    test_index = np.loadtxt(args.raw / f"ind.{args.name}.test.index", dtype=np.int64)
    test_sorted = np.sort(test_index)

    lo, hi = test_sorted[0], test_sorted[-1]
    if hi - lo + 1 != len(test_sorted):
        full_tx = sp.lil_matrix((hi - lo + 1, tx.shape[1]))
        full_tx[test_sorted - lo, :] = tx
        tx = full_tx
        full_ty = np.zeros((hi - lo + 1, ty.shape[1]))
        full_ty[test_sorted - lo, :] = ty
        ty = full_ty

    features = sp.vstack((allx, tx)).tolil()
    labels = np.vstack((ally, ty))
    features[test_index, :] = features[test_sorted, :]
    labels[test_index, :] = labels[test_sorted, :]
    features = features.toarray()
    y = labels.argmax(axis=1)

    n = features.shape[0]
    edges = set()
    for u, nbrs in graph.items():
        for v in nbrs:
            if u != v and u < n and v < n:
                edges.add((min(u, v), max(u, v)))

    args.out.mkdir(parents=True, exist_ok=True)
    meta = {"name": args.name, "n": int(n), "f": int(features.shape[1]), "C": int(labels.shape[1])}
    (args.out / "meta.json").write_text(json.dumps(meta) + "\n")
    with open(args.out / "edges.txt", "w") as fh:
        fh.writelines(f"{u} {v}\n" for u, v in sorted(edges))
    with open(args.out / "features.txt", "w") as fh:
        fh.writelines(" ".join(f"{x:.17g}" for x in row) + "\n" for row in features)
    with open(args.out / "labels.txt", "w") as fh:
        fh.writelines(f"{c}\n" for c in y)
    print(f"{args.name}: n={n} f={meta['f']} C={meta['C']} edges={len(edges)} -> {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
