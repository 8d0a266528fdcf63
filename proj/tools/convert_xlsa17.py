#!/usr/bin/env python3
"""Convert a proposed-split benchmark directory (res101.mat + att_splits.mat)
into a gzood bundle.

    python3 tools/convert_xlsa17.py data/xlsa17/data/AWA1 bundles/awa1

res101.mat holds `features` (2048 x n) and 1-based `labels`; att_splits.mat
holds `att` (attribute_dim x classes) and 1-based `trainval_loc`,
`test_seen_loc`, `test_unseen_loc`. Class ids and rows become 0-based. Seen
classes are those of trainval; unseen classes are those of test_unseen.

Requires numpy and scipy. This is a recipe, not part of the test suite.
"""

import argparse
from pathlib import Path

import numpy as np
from scipy.io import loadmat


def write(path, array, dtype):
    np.ascontiguousarray(array, dtype=dtype).tofile(path)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src", type=Path, help="directory with res101.mat and att_splits.mat")
    ap.add_argument("out", type=Path, help="bundle directory to create")
    args = ap.parse_args()

    res = loadmat(args.src / "res101.mat")
    splits = loadmat(args.src / "att_splits.mat")
    features = res["features"].T.astype(np.float32)
    labels = res["labels"].ravel().astype(np.int64) - 1
    attributes = splits["att"].T.astype(np.float32)
    train = splits["trainval_loc"].ravel().astype(np.int64) - 1
    test_seen = splits["test_seen_loc"].ravel().astype(np.int64) - 1
    test_unseen = splits["test_unseen_loc"].ravel().astype(np.int64) - 1
    seen = np.unique(labels[train])
    unseen = np.unique(labels[test_unseen])

    args.out.mkdir(parents=True, exist_ok=True)
    fp32, i64 = np.dtype("<f4"), np.dtype("<i8")
    arrays = {
        "features": ("features.f32", features, fp32),
        "labels": ("labels.i64", labels, i64),
        "attributes": ("attributes.f32", attributes, fp32),
        "seen_classes": ("seen_classes.i64", seen, i64),
        "unseen_classes": ("unseen_classes.i64", unseen, i64),
        "train_idx": ("train_idx.i64", train, i64),
        "test_seen_idx": ("test_seen_idx.i64", test_seen, i64),
        "test_unseen_idx": ("test_unseen_idx.i64", test_unseen, i64),
    }
    for name, array, dtype in arrays.values():
        write(args.out / name, array, dtype)

    manifest = {
        "format": "gzood-bundle",
        "version": 1,
        "dtype": "float32-le",
        "index_dtype": "int64-le",
        "num_samples": features.shape[0],
        "feature_dim": features.shape[1],
        "num_classes": attributes.shape[0],
        "attribute_dim": attributes.shape[1],
        "num_seen": len(seen),
        "num_unseen": len(unseen),
        "num_train": len(train),
        "num_test_seen": len(test_seen),
        "num_test_unseen": len(test_unseen),
    }
    manifest.update({key: file for key, (file, _, _) in arrays.items()})
    # Manifest last, as the library does.
    (args.out / "manifest.txt").write_text("".join(f"{k} = {v}\n" for k, v in manifest.items()))


if __name__ == "__main__":
    main()
