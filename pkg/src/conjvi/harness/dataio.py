"""Dataset ingestion: sparse libsvm-format text files and train/test splits."""

from dataclasses import dataclass, field

import numpy as np

from .. import _streams


class DataError(ValueError):
    """Malformed data file or inconsistent split request."""


def read_libsvm(path, n_features=None):
    """Parse 'label idx:val ...' lines with 1-based indices.

    Missing entries are zero; labels may be -1/+1 or 0/1.  Duplicate indices
    within a line and malformed tokens are errors carrying the line number.
    Returns (X dense array, y in {0,1}).
    """
    rows = []
    labels = []
    max_index = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                label = float(parts[0])
            except ValueError:
                raise DataError("%s:%d: bad label %r" % (path, lineno, parts[0]))
            entries = {}
            for token in parts[1:]:
                try:
                    idx_s, val_s = token.split(":")
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise DataError("%s:%d: bad feature token %r"
                                    % (path, lineno, token))
                if idx < 1:
                    raise DataError("%s:%d: indices are 1-based, got %d"
                                    % (path, lineno, idx))
                if idx in entries:
                    raise DataError("%s:%d: duplicate index %d"
                                    % (path, lineno, idx))
                entries[idx] = val
            if entries:
                max_index = max(max_index, max(entries))
            rows.append(entries)
            labels.append(label)
    if not rows:
        raise DataError("%s: empty file" % path)
    d = n_features if n_features is not None else max_index
    X = np.zeros((len(rows), d))
    for r, entries in enumerate(rows):
        for idx, val in entries.items():
            if idx > d:
                raise DataError("%s: feature index %d exceeds n_features=%d"
                                % (path, idx, d))
            X[r, idx - 1] = val
    y = np.asarray(labels)
    values = set(np.unique(y).tolist())
    if values <= {0.0, 1.0}:
        y = y.astype(int)
    elif values <= {-1.0, 1.0}:
        y = (y > 0).astype(int)
    else:
        raise DataError("%s: labels must be -1/+1 or 0/1, got %r"
                        % (path, sorted(values)))
    return X, y


def write_libsvm(path, X, y):
    """Inverse of read_libsvm (zero entries omitted, labels +-1)."""
    X = np.asarray(X)
    lines = []
    for row, label in zip(X, y):
        parts = ["+1" if label == 1 else "-1"]
        parts += ["%d:%.17g" % (j + 1, v) for j, v in enumerate(row) if v != 0.0]
        lines.append(" ".join(parts))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class Dataset:
    """Feature matrix, {0,1} labels and a disjoint, covering train/test split."""

    X: np.ndarray
    y: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        both = np.concatenate([self.train_idx, self.test_idx])
        if len(set(both.tolist())) != len(self.y) or len(both) != len(self.y):
            raise DataError("split indices must be disjoint and covering")

    @property
    def X_train(self):
        return self.X[self.train_idx]

    @property
    def y_train(self):
        return self.y[self.train_idx]

    @property
    def X_test(self):
        return self.X[self.test_idx]

    @property
    def y_test(self):
        return self.y[self.test_idx]


def stratified_split(y, n_train, seed):
    """Seeded, class-stratified shuffle split with n_train training rows."""
    y = np.asarray(y)
    if not 0 < n_train < len(y):
        raise DataError("n_train=%d out of range for %d rows" % (n_train, len(y)))
    rng = _streams.substream(seed, _streams.SHUFFLE)
    train = []
    for cls in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == cls))
        k = int(round(n_train * idx.size / len(y)))
        train.extend(idx[:k].tolist())
    rng.shuffle(train)
    train = np.asarray(train[:n_train], dtype=int)
    mask = np.ones(len(y), dtype=bool)
    mask[train] = False
    return np.sort(train), np.flatnonzero(mask)


def load_dataset(data_path, test_split=None, n_features=None, seed=0,
                 standardize=False):
    """Build a Dataset from one file (seeded stratified split) or a canonical
    pre-split pair (data_path plus a companion data_path.t file) when
    test_split is omitted.

    test_split is a fraction in (0,1) (test share) or an integer training
    count, matching the published N_Train conventions.
    """
    import os

    companion = str(data_path) + ".t"
    if test_split is None and os.path.exists(companion):
        X1, y1 = read_libsvm(data_path, n_features)
        X2, y2 = read_libsvm(companion, n_features)
        d = max(X1.shape[1], X2.shape[1])
        X1 = _pad(X1, d)
        X2 = _pad(X2, d)
        X = np.vstack([X1, X2])
        y = np.concatenate([y1, y2])
        train_idx = np.arange(len(y1))
        test_idx = np.arange(len(y1), len(y))
    else:
        if test_split is None:
            raise DataError("test_split required when no companion test file "
                            "exists next to %s" % data_path)
        X, y = read_libsvm(data_path, n_features)
        if 0 < test_split < 1:
            n_train = int(round(len(y) * (1.0 - test_split)))
        else:
            n_train = int(test_split)
        train_idx, test_idx = stratified_split(y, n_train, seed)
    ds = Dataset(X, y, train_idx, test_idx)
    if standardize:
        mu = ds.X_train.mean(axis=0)
        sd = ds.X_train.std(axis=0)
        sd[sd == 0.0] = 1.0
        ds = Dataset((X - mu) / sd, y, train_idx, test_idx, standardized=True)
    return ds


def _pad(X, d):
    if X.shape[1] == d:
        return X
    out = np.zeros((X.shape[0], d))
    out[:, :X.shape[1]] = X
    return out
