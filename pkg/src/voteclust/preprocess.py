"""CSV ingestion and the measurement-ratio / sphering pipeline.

Sphering here means principal components of the *correlation* matrix with
each component rescaled to unit sample variance, so the output has zero
pairwise correlation and no dominant direction.  A plain rotation without
the rescaling is available via `unit_variance=False`.  All fitted
parameters (means, sds, eigenpairs) are kept so later cases can be
projected identically.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .core import CrispAssignment, Dataset, _fmt


class ParseError(ValueError):
    def __init__(self, line: int, column: int, detail: str):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {detail}")


class NonFiniteValue(ValueError):
    def __init__(self, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"non-finite value at line {line}, column {column}")


class DivisionByZero(ValueError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"zero denominator in row {row}")


class ConstantColumn(ValueError):
    def __init__(self, column: int):
        self.column = column
        super().__init__(f"column {column} is constant; correlation undefined")


@dataclass
class PreprocessSpec:
    """What to do to a raw feature matrix before clustering.

    Sphering subsumes standardization (the correlation matrix is
    scale-free), so `standardize` only matters when `sphere` is off.
    """

    ratio_column: int | None = None  # 0-based denominator column
    standardize: bool = False
    sphere: bool = False
    keep_components: int | None = None
    unit_variance: bool = True


def load_csv(
    path,
    delimiter: str = ",",
    header: bool = True,
    label_columns: str | None = None,
    exclude_columns: str | None = None,
) -> tuple[Dataset, CrispAssignment | None]:
    """Read a numeric CSV, optionally splitting off true-class columns.

    `label_columns` is a comma-separated list of column names whose joint
    values define the true classes (levels are numbered in sorted order).
    Without a header row, columns are addressed as "1", "2", ....  Row ids
    are the 1-based data-row numbers; error positions are physical file
    line and column numbers.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    if not rows or all(not r for r in rows):
        raise ParseError(1, 1, "empty file")

    first_line = 1
    if header:
        names = [c.strip() for c in rows[0]]
        body = rows[1:]
        first_line = 2
    else:
        names = [str(i + 1) for i in range(len(rows[0]))]
        body = rows
    if not body:
        raise ParseError(first_line, 1, "no data rows")

    wanted_labels = [c.strip() for c in label_columns.split(",")] if label_columns else []
    excluded = {c.strip() for c in exclude_columns.split(",")} if exclude_columns else set()
    for name in [*wanted_labels, *excluded]:
        if name not in names:
            raise ParseError(1, 1, f"no column named {name!r}")

    feature_cols = [
        j for j, name in enumerate(names) if name not in wanted_labels and name not in excluded
    ]
    if not feature_cols:
        raise ParseError(1, 1, "no feature columns left")
    label_cols = [names.index(name) for name in wanted_labels]

    values = np.empty((len(body), len(feature_cols)))
    label_tuples = []
    for i, row in enumerate(body):
        line = first_line + i
        if len(row) != len(names):
            raise ParseError(line, len(row) + 1, f"expected {len(names)} fields, got {len(row)}")
        for out_j, j in enumerate(feature_cols):
            cell = row[j].strip()
            try:
                x = float(cell)
            except ValueError:
                raise ParseError(line, j + 1, f"not a number: {cell!r}") from None
            if not np.isfinite(x):
                raise NonFiniteValue(line, j + 1)
            values[i, out_j] = x
        if label_cols:
            label_tuples.append(tuple(row[j].strip() for j in label_cols))

    data = Dataset(values, [str(i + 1) for i in range(len(body))])
    labels = None
    if label_cols:
        levels = sorted(set(label_tuples))
        code = {lev: c + 1 for c, lev in enumerate(levels)}
        labels = CrispAssignment(
            np.array([code[t] for t in label_tuples], dtype=np.int64), len(levels)
        )
    return data, labels


def write_csv(path, data: Dataset, column_names: list[str] | None = None) -> None:
    """Write a Dataset back out; floats survive a read round-trip exactly."""
    m = data.n_features
    names = column_names if column_names is not None else [f"v{j + 1}" for j in range(m)]
    if len(names) != m:
        raise ValueError("need one name per column")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        for row in data.values:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def ratio_transform(data: Dataset, denominator: int) -> Dataset:
    """Divide every other column by the denominator column, which is kept."""
    values = data.values
    if not 0 <= denominator < data.n_features:
        raise ValueError(f"no column {denominator}")
    denom = values[:, denominator]
    zero = np.flatnonzero(denom == 0.0)
    if zero.size:
        raise DivisionByZero(int(zero[0]) + 1)
    out = values / denom[:, None]
    out[:, denominator] = denom
    return Dataset(out, list(data.row_ids))


@dataclass
class SpheringParams:
    """Fitted sphering transform, reusable on prediction-time cases."""

    means: np.ndarray
    sds: np.ndarray
    eigenvalues: np.ndarray  # kept components, descending
    eigenvectors: np.ndarray  # columns, matching eigenvalues
    dropped: int
    unit_variance: bool

    def project(self, points: np.ndarray) -> np.ndarray:
        z = (np.asarray(points, dtype=float) - self.means) / self.sds
        y = z @ self.eigenvectors
        if self.unit_variance:
            y = y / np.sqrt(self.eigenvalues)
        return y

    def to_json(self) -> str:
        return json.dumps(
            {
                "means": self.means.tolist(),
                "sds": self.sds.tolist(),
                "eigenvalues": self.eigenvalues.tolist(),
                "eigenvectors": self.eigenvectors.tolist(),
                "dropped": self.dropped,
                "unit_variance": self.unit_variance,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SpheringParams":
        raw = json.loads(text)
        return cls(
            means=np.array(raw["means"]),
            sds=np.array(raw["sds"]),
            eigenvalues=np.array(raw["eigenvalues"]),
            eigenvectors=np.array(raw["eigenvectors"]),
            dropped=int(raw["dropped"]),
            unit_variance=bool(raw["unit_variance"]),
        )


def standardize(data: Dataset) -> Dataset:
    """Column z-scores (sample sd)."""
    sds = data.values.std(axis=0, ddof=1)
    flat = np.flatnonzero(sds == 0.0)
    if flat.size:
        raise ConstantColumn(int(flat[0]) + 1)
    return Dataset((data.values - data.values.mean(axis=0)) / sds, list(data.row_ids))


def sphere(
    data: Dataset, unit_variance: bool = True, keep_components: int | None = None
) -> tuple[Dataset, SpheringParams]:
    """Correlation-matrix principal components, strongest direction first.

    Eigenvalues below 1e-12 are dropped with a warning (rank deficiency);
    each eigenvector's sign is fixed so its largest-magnitude entry is
    positive.  With `unit_variance` the components are rescaled so the
    output's sample correlation and covariance are both the identity.
    """
    values = data.values
    means = values.mean(axis=0)
    sds = values.std(axis=0, ddof=1)
    flat = np.flatnonzero(sds == 0.0)
    if flat.size:
        raise ConstantColumn(int(flat[0]) + 1)
    z = (values - means) / sds
    corr = (z.T @ z) / (data.n_cases - 1)
    eigvals, eigvecs = np.linalg.eigh(corr)
    order = np.argsort(eigvals, kind="stable")[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]

    keep = eigvals >= 1e-12
    if not np.all(keep):
        warnings.warn(
            f"dropping {int((~keep).sum())} near-zero-variance component(s)",
            stacklevel=2,
        )
    eigvals, eigvecs = eigvals[keep], eigvecs[:, keep]
    if keep_components is not None:
        eigvals, eigvecs = eigvals[:keep_components], eigvecs[:, :keep_components]

    anchor = np.abs(eigvecs).argmax(axis=0)
    signs = np.sign(eigvecs[anchor, np.arange(eigvecs.shape[1])])
    eigvecs = eigvecs * signs

    params = SpheringParams(
        means=means,
        sds=sds,
        eigenvalues=eigvals,
        eigenvectors=eigvecs,
        dropped=int((~keep).sum()),
        unit_variance=unit_variance,
    )
    return Dataset(params.project(values), list(data.row_ids)), params


def apply_preprocess(
    data: Dataset, spec: PreprocessSpec
) -> tuple[Dataset, SpheringParams | None]:
    """Run the configured pipeline: ratio step, then sphering or z-scores."""
    out = data
    if spec.ratio_column is not None:
        out = ratio_transform(out, spec.ratio_column)
    if spec.sphere:
        return sphere(out, spec.unit_variance, spec.keep_components)
    if spec.standardize:
        return standardize(out), None
    return out, None
