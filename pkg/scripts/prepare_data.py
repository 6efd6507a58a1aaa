#!/usr/bin/env python3
"""Rebuild the derived benchmark files in data/ from the raw sources in data/raw/.

The a1a pair (a1a, a1a.t) is shipped verbatim in the canonical LIBSVM
train/test split and needs no preparation.  The three other benchmarks are
derived here:

  australian_scale   Statlog Australian credit data (690 x 14), each column
                     linearly mapped to [-1, 1] (svm-scale convention: values
                     that map exactly to 0 are omitted from the sparse rows).
                     Raw source: data/raw/AusCredit.r (R source, SVMMaj 0.2.9.4,
                     row order identical to the UCI australian.dat file).
  breast-cancer_scale
                     Wisconsin original breast cancer data (683 x 10 after
                     dropping the 16 rows with missing values).  The sample ID
                     is dropped; the nine clinical features keep their original
                     column positions 2..10, each mapped from {1..10} to [-1,1].
                     Labels: 2 (benign) -> -1, 4 (malignant) -> +1.
                     Raw source: data/raw/breast-cancer-wisconsin.data (UCI).
  colon-cancer       Alon et al. colon tumour microarray (62 x 2000).  Each
                     instance (row) is standardised to zero mean and unit
                     variance across its 2000 expression values; this is the
                     preprocessing that reproduces the published benchmark
                     numbers for this dataset (identified empirically among
                     the standard candidates).  Labels: normal -> -1,
                     tumour -> +1.  Raw source: data/raw/colon_X.npy /
                     colon_Y.npy (extracted from the plsgenomics 1.5-3 Colon
                     dataset).

Run from the repository root:  python scripts/prepare_data.py
"""

import re
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
RAW = ROOT / "data" / "raw"
OUT = ROOT / "data"


def format_value(x):
    # svm-scale prints with %g-like trimming; 7 significant digits is enough
    # to round-trip the ranges used here.
    s = "%.7g" % x
    return s


def write_libsvm(path, X, y, skip_zero=True):
    lines = []
    for row, label in zip(X, y):
        parts = ["%+d" % label if label in (-1, 1) else str(label)]
        for j, v in enumerate(row, start=1):
            if skip_zero and v == 0.0:
                continue
            parts.append("%d:%s" % (j, format_value(v)))
        lines.append(" ".join(parts))
    path.write_text("\n".join(lines) + "\n")
    print("wrote %s (%d rows)" % (path, len(lines)))


def scale_columns(X):
    """svm-scale -l -1 -u 1: per-column affine map of [min, max] onto [-1, 1]."""
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    span = hi - lo
    span[span == 0.0] = 1.0
    return -1.0 + 2.0 * (X - lo) / span


def parse_auscredit(path):
    """Parse the SVMMaj AusCredit.r source into (X, y) with UCI row order."""
    text = path.read_text()
    cols = {}
    for name, body in re.findall(r"(X\d+)\s*=\s*(?:as\.logical\()?\(?c\((.*?)\)", text, re.S):
        vals = [float(v) for v in body.replace("\n", "").split(",") if v.strip()]
        cols[name] = np.array(vals)
    m = re.search(r"y\s*=\s*factor\(c\((.*?)\)\s*,\s*labels", text, re.S)
    codes = np.array([int(v) for v in m.group(1).replace("\n", "").split(",") if v.strip()])
    X = np.column_stack([cols["X%d" % i] for i in range(1, 15)])
    # factor levels: 1 = Accepted (UCI class 1), 2 = Rejected (UCI class 0)
    y = np.where(codes == 1, 1, -1)
    return X, y


def verify_against_openml_fixture(X_scaled, y):
    """The sklearn test tree ships the first 88 rows of the same file in
    sparse-ARFF form (OpenML dataset 292, taken from the LIBSVM site).
    Cross-check every value we can see there."""
    import gzip
    import sklearn.datasets.tests as st

    arff = (Path(st.__file__).parent / "data" / "openml" / "id_292"
            / "data-v1-dl-49822.arff.gz")
    if not arff.exists():
        print("fixture not found, skipping cross-check")
        return
    rows = []
    with gzip.open(arff, "rt") as fh:
        for line in fh:
            line = line.strip()
            if not line.startswith("{"):
                continue
            entries = [e.strip() for e in line.strip("{}").split(",")]
            row = {}
            for e in entries:
                idx, val = e.split()
                row[int(idx)] = float(val)
            rows.append(row)
    n_checked = 0
    for i, row in enumerate(rows):
        assert row.get(0, 0.0) == y[i], "label mismatch at row %d" % i
        for j in range(1, 15):
            have = X_scaled[i, j - 1]
            want = row.get(j, 0.0)
            assert abs(have - want) < 5e-7, (
                "value mismatch row %d col %d: %r vs %r" % (i, j, have, want))
            n_checked += 1
    print("australian_scale: %d rows x 14 cols verified against the OpenML 292 "
          "fixture (%d values)" % (len(rows), n_checked))


def build_australian():
    X, y = parse_auscredit(RAW / "AusCredit.r")
    assert X.shape == (690, 14)
    Xs = scale_columns(X)
    verify_against_openml_fixture(Xs, y)
    write_libsvm(OUT / "australian_scale", Xs, y)


def build_breast_cancer():
    rows = []
    for line in (RAW / "breast-cancer-wisconsin.data").read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        fields = line.split(",")
        if "?" in fields:
            continue
        rows.append([int(v) for v in fields])
    arr = np.array(rows)
    assert arr.shape == (683, 11), arr.shape
    feats = arr[:, 1:10].astype(float)          # nine clinical features, 1..10
    labels = np.where(arr[:, 10] == 4, 1, -1)   # 4 = malignant
    scaled = -1.0 + 2.0 * (feats - 1.0) / 9.0
    # keep the original column positions (features live at indices 2..10)
    X = np.zeros((arr.shape[0], 10))
    X[:, 1:] = scaled
    write_libsvm(OUT / "breast-cancer_scale", X, labels)


def build_colon():
    X = np.load(RAW / "colon_X.npy")
    y_raw = np.load(RAW / "colon_Y.npy")
    assert X.shape == (62, 2000)
    X = (X - X.mean(axis=1, keepdims=True)) / X.std(axis=1, keepdims=True)
    y = np.where(y_raw == 2, 1, -1)             # tumour coded 2 in the source
    write_libsvm(OUT / "colon-cancer", X, y, skip_zero=False)


if __name__ == "__main__":
    build_australian()
    build_breast_cancer()
    build_colon()
    sys.exit(0)
