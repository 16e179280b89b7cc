"""Dataset ingestion, whitening, and aggregated sample moments.

Real regressors are brought into the standardized frame (mean zero, identity
second-moment matrix) by full principal-component whitening, after which the
risk expansion needs only three scalar aggregates of the sample third/fourth
moment tensors:

    M2a = sum_{i,j,k} m[i,j,k]^2            m[i,j,k] = (1/n) sum_t x_ti x_tj x_tk
    M2b = sum_k ( sum_i m[i,i,k] )^2
    M1  = sum_{i,k} m[i,i,k,k]

All three collapse to O(n p^2 + n^2 p) work without forming the p^3/p^4
tensors:  M2a = (1/n^2) sum_{t,s} (x_t . x_s)^3 via the Gram matrix (chunked),
M2b = ||X' r / n||^2 and M1 = mean(r^2) with r_t = ||x_t||^2.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dataset",
    "StandardizedMatrix",
    "LoadOptions",
    "load_csv",
    "standardize",
    "sample_aggregates",
    "aggregates_brute_force",
]


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class LoadOptions:
    delimiter: str = ","
    header: bool = True
    missing_tokens: tuple = ("", "?", "NA", "nan")
    drop_columns: tuple = ()
    # "drop_rows": discard rows containing a missing token;
    # "drop_columns": discard columns containing one anywhere.
    missing_strategy: str = "drop_rows"
    correlation_threshold: float = 0.99


@dataclass(frozen=True)
class Dataset:
    column_names: tuple
    rows: np.ndarray  # (n, p) float64
    dropped_columns: tuple = ()
    dropped_row_count: int = 0
    flagged_pairs: tuple = ()  # ((name_i, name_j, corr), ...) above threshold

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]


def _flag_correlations(rows: np.ndarray, names, threshold: float):
    x = rows - rows.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = np.nan
    c = (x.T @ x) / rows.shape[0] / np.outer(sd, sd)
    flagged = []
    p = rows.shape[1]
    for i in range(p):
        for j in range(i + 1, p):
            if np.isfinite(c[i, j]) and abs(c[i, j]) > threshold:
                flagged.append((names[i], names[j], float(c[i, j])))
    return tuple(flagged)


def load_csv(path, options: LoadOptions = LoadOptions()) -> Dataset:
    """Read a rectangular numeric table, handling missing values per options."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=options.delimiter)
        raw = [row for row in reader if row]
    if not raw:
        raise DataError(f"{path}: empty file")
    if options.header:
        names = [c.strip().strip('"') for c in raw[0]]
        body = raw[1:]
    else:
        names = [f"x{i+1}" for i in range(len(raw[0]))]
        body = raw
    width = len(names)
    for lineno, row in enumerate(body, start=2 if options.header else 1):
        if len(row) != width:
            raise DataError(
                f"{path}: line {lineno}: expected {width} fields, found {len(row)}"
            )

    keep = [i for i, name in enumerate(names) if name not in set(options.drop_columns)]
    dropped = [names[i] for i in range(width) if i not in keep]
    missing = set(options.missing_tokens)

    def is_missing(tok: str) -> bool:
        return tok.strip() in missing

    if options.missing_strategy == "drop_columns":
        bad_cols = {
            i for row in body for i in keep if is_missing(row[i])
        }
        dropped += [names[i] for i in sorted(bad_cols)]
        keep = [i for i in keep if i not in bad_cols]
        kept_rows = body
        dropped_row_count = 0
    elif options.missing_strategy == "drop_rows":
        kept_rows = [row for row in body if not any(is_missing(row[i]) for i in keep)]
        dropped_row_count = len(body) - len(kept_rows)
    else:
        raise DataError(f"unknown missing_strategy {options.missing_strategy!r}")

    if not keep:
        raise DataError(f"{path}: no columns left after cleaning")
    if not kept_rows:
        raise DataError(f"{path}: no rows left after cleaning")

    data = np.empty((len(kept_rows), len(keep)))
    for r, row in enumerate(kept_rows):
        for c, i in enumerate(keep):
            tok = row[i].strip()
            try:
                data[r, c] = float(tok)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric value {tok!r} in column {names[i]!r}"
                ) from None
    if data.shape[0] <= data.shape[1]:
        raise DataError(
            f"{path}: need more rows than columns (n={data.shape[0]}, p={data.shape[1]})"
        )
    kept_names = tuple(names[i] for i in keep)
    return Dataset(
        column_names=kept_names,
        rows=data,
        dropped_columns=tuple(dropped),
        dropped_row_count=dropped_row_count,
        flagged_pairs=_flag_correlations(data, kept_names, options.correlation_threshold),
    )


@dataclass(frozen=True)
class StandardizedMatrix:
    """Whitened scores with the transform kept for audit.

    scores = (rows - center) @ transform, with sample mean zero and sample
    second-moment matrix the identity (divisor n throughout).
    """

    scores: np.ndarray
    transform: np.ndarray
    center: np.ndarray
    condition_number: float


def standardize(dataset: Dataset) -> StandardizedMatrix:
    """Full PCA whitening: rotate to principal axes, scale to unit variance."""
    x = dataset.rows
    center = x.mean(axis=0)
    xc = x - center
    cov = (xc.T @ xc) / dataset.n
    evals, evecs = np.linalg.eigh(cov)
    tiny = 1e-12 * max(float(evals.max()), 1e-300)
    if evals.min() <= tiny:
        null_dirs = [int(i) for i in np.flatnonzero(evals <= tiny)]
        names = [dataset.column_names[int(np.argmax(np.abs(evecs[:, i])))] for i in null_dirs]
        raise DataError(
            f"singular covariance: {len(null_dirs)} null direction(s), "
            f"dominated by columns {names}"
        )
    transform = evecs / np.sqrt(evals)
    scores = xc @ transform
    return StandardizedMatrix(
        scores=scores,
        transform=transform,
        center=center,
        condition_number=float(evals.max() / evals.min()),
    )


def sample_aggregates(std: StandardizedMatrix | np.ndarray, chunk: int = 1024) -> dict:
    """M2a, M2b, M1 of the (whitened) score matrix, divisor-n moments."""
    x = std.scores if isinstance(std, StandardizedMatrix) else np.asarray(std, dtype=float)
    n = x.shape[0]
    r = np.einsum("ti,ti->t", x, x)
    m1 = float(r @ r) / n
    s = (x.T @ r) / n
    m2b = float(s @ s)
    # M2a = (1/n^2) sum_{t,s} (x_t . x_s)^3, Gram matrix in row blocks
    acc = 0.0
    for start in range(0, n, chunk):
        g = x[start : start + chunk] @ x.T
        acc += float(np.einsum("ij,ij,ij->", g, g, g))
    m2a = acc / (n * n)
    return {"M2a": m2a, "M2b": m2b, "M1": m1}


def aggregates_brute_force(x: np.ndarray) -> dict:
    """Direct O(p^3)/O(p^4) tensor sums; the oracle for small p."""
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    m3 = np.einsum("ti,tj,tk->ijk", x, x, x) / n
    m4 = np.einsum("ti,tj,tk,tl->ijkl", x, x, x, x) / n
    m2a = float(np.sum(m3 * m3))
    m2b = float(sum(np.trace(m3[:, :, k]) ** 2 for k in range(p)))
    m1 = float(np.einsum("iikk->", m4))
    return {"M2a": m2a, "M2b": m2b, "M1": m1}
