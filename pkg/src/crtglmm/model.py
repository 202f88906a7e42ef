"""Domain types for clustered trial data and design-matrix construction.

A dataset holds one row per person with a cluster id, an outcome, a 0/1
treatment indicator, and named covariates tagged as person- or
cluster-level.  ``build_design`` turns a dataset plus a model
specification into the fixed-effect matrix ``X`` (columns ordered as
intercept, treatment, covariates in specification order) and the
cluster-indicator matrix ``Z`` used by the mixed-model engine, together
with per-column level tags that drive the degrees-of-freedom rules in
:mod:`crtglmm.inference`.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Family",
    "ClusteredDataset",
    "ModelSpec",
    "DesignMatrices",
    "build_design",
    "numerical_rank",
    "read_dataset_csv",
    "write_dataset_csv",
]


class Family(enum.Enum):
    """Outcome family with its canonical link.

    ``BERNOULLI_LOGIT`` expects outcomes in {0, 1}, ``POISSON_LOG``
    non-negative integers, ``GAUSSIAN_IDENTITY`` finite reals.  The
    Gaussian family exists for the linear-mixed-model ICC summary and
    for validating the Laplace engine (where it is exact).
    """

    BERNOULLI_LOGIT = "bernoulli-logit"
    POISSON_LOG = "poisson-log"
    GAUSSIAN_IDENTITY = "gaussian-identity"

    def validate_outcomes(self, y: np.ndarray) -> None:
        """Raise ``ValueError`` if ``y`` is not a legal outcome vector."""
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ValueError(f"{self.value} outcomes must be finite")
        if self is Family.BERNOULLI_LOGIT:
            if not np.all((y == 0.0) | (y == 1.0)):
                raise ValueError("bernoulli-logit outcomes must be 0 or 1")
        elif self is Family.POISSON_LOG:
            if np.any(y < 0) or np.any(y != np.floor(y)):
                raise ValueError(
                    "poisson-log outcomes must be non-negative integers"
                )


_LEVELS = ("person", "cluster")


@dataclass(frozen=True)
class ClusteredDataset:
    """Per-person rows of a parallel-group cluster-randomized trial.

    Stored columnar: ``cluster_ids`` (integer labels), ``y`` (outcome),
    ``treatment`` (0/1, constant within cluster) and a name -> column
    mapping of covariates.  ``covariate_levels`` tags each covariate as
    ``"person"`` or ``"cluster"``; cluster-tagged covariates must be
    constant within every cluster.
    """

    cluster_ids: np.ndarray
    y: np.ndarray
    treatment: np.ndarray
    covariates: dict[str, np.ndarray] = field(default_factory=dict)
    covariate_levels: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = np.asarray(self.cluster_ids)
        y = np.asarray(self.y, dtype=float)
        trt = np.asarray(self.treatment)
        n = ids.shape[0]
        if n == 0:
            raise ValueError("dataset is empty")
        if y.shape != (n,) or trt.shape != (n,):
            raise ValueError("cluster_ids, y and treatment must share length")
        if not np.all(np.isin(trt, (0, 1))):
            raise ValueError("treatment must be 0/1")
        covs = {k: np.asarray(v, dtype=float) for k, v in self.covariates.items()}
        for name, col in covs.items():
            if col.shape != (n,):
                raise ValueError(f"covariate {name!r} has wrong length")
        levels = dict(self.covariate_levels)
        for name in covs:
            levels.setdefault(name, "person")
        for name, lvl in levels.items():
            if name not in covs:
                raise ValueError(f"level tag for unknown covariate {name!r}")
            if lvl not in _LEVELS:
                raise ValueError(f"covariate level must be one of {_LEVELS}")
        # Constancy of treatment / cluster-tagged covariates within cluster.
        for label, col in [("treatment", trt.astype(float))] + [
            (name, covs[name]) for name, lvl in levels.items() if lvl == "cluster"
        ]:
            if _max_within_cluster_spread(ids, col) > 0.0:
                raise ValueError(f"{label!r} varies within a cluster")
        object.__setattr__(self, "cluster_ids", ids)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "treatment", np.asarray(trt, dtype=float))
        object.__setattr__(self, "covariates", covs)
        object.__setattr__(self, "covariate_levels", levels)

    @property
    def n_rows(self) -> int:
        return self.y.shape[0]

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return tuple(self.covariates)

    def cluster_labels(self) -> np.ndarray:
        """Distinct cluster labels in first-appearance order."""
        _, first = np.unique(self.cluster_ids, return_index=True)
        return self.cluster_ids[np.sort(first)]


@dataclass(frozen=True)
class ModelSpec:
    """Which fixed effects enter the fitted model, in column order."""

    family: Family
    include_intercept: bool = True
    include_treatment: bool = True
    adjusted_covariates: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        names = tuple(self.adjusted_covariates)
        if len(set(names)) != len(names):
            raise ValueError("adjusted_covariates contains duplicates")
        object.__setattr__(self, "adjusted_covariates", names)


@dataclass(frozen=True)
class DesignMatrices:
    """Fixed- and random-effect design matrices plus column metadata.

    ``X`` is N x p with columns ordered intercept, treatment, adjusted
    covariates; ``Z`` is the N x K one-hot cluster-indicator matrix.
    ``column_levels[j]`` is ``"intercept"``, ``"cluster"`` or
    ``"person"`` depending on whether column j of X varies within
    clusters; the tag drives the containment and between-within
    degrees-of-freedom rules.
    """

    X: np.ndarray
    Z: np.ndarray
    column_names: tuple[str, ...]
    column_levels: tuple[str, ...]
    cluster_index: np.ndarray  # row -> 0..K-1, parallel to Z's hot column
    cluster_sizes: np.ndarray

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    @property
    def n_clusters(self) -> int:
        return self.Z.shape[1]

    @property
    def n_params(self) -> int:
        return self.X.shape[1]

    @property
    def treatment_index(self) -> int:
        """Column index of the treatment effect in X."""
        return self.column_names.index("treatment")

    def drop_column(self, name: str) -> DesignMatrices:
        """Design with one fixed-effect column removed (for nested fits)."""
        j = self.column_names.index(name)
        keep = [k for k in range(self.X.shape[1]) if k != j]
        X = np.ascontiguousarray(self.X[:, keep])
        X.setflags(write=False)
        return DesignMatrices(
            X=X,
            Z=self.Z,
            column_names=tuple(n for k, n in enumerate(self.column_names) if k != j),
            column_levels=tuple(l for k, l in enumerate(self.column_levels) if k != j),
            cluster_index=self.cluster_index,
            cluster_sizes=self.cluster_sizes,
        )


def _max_within_cluster_spread(ids: np.ndarray, col: np.ndarray) -> float:
    """Largest within-cluster range (max - min) of ``col``."""
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    sorted_col = col[order]
    boundaries = np.flatnonzero(np.r_[True, sorted_ids[1:] != sorted_ids[:-1]])
    hi = np.maximum.reduceat(sorted_col, boundaries)
    lo = np.minimum.reduceat(sorted_col, boundaries)
    return float(np.max(hi - lo)) if hi.size else 0.0


def build_design(
    dataset: ClusteredDataset,
    spec: ModelSpec,
    *,
    level_tol: float = 0.0,
) -> DesignMatrices:
    """Assemble X, Z and column-level tags for a fitted model.

    Columns of X appear as intercept (if requested), treatment (if
    requested), then ``spec.adjusted_covariates`` in order.  A column is
    tagged ``"cluster"`` when its within-cluster spread is at most
    ``level_tol`` times the column scale (``level_tol=0`` demands exact
    constancy, which is what generated data satisfies; CSV-ingested data
    may carry float noise and should pass a small relative tolerance).

    Raises ``KeyError`` for unknown covariate names.
    """
    for name in spec.adjusted_covariates:
        if name not in dataset.covariates:
            raise KeyError(f"unknown covariate {name!r}")

    ids = dataset.cluster_ids
    labels, cluster_index = np.unique(ids, return_inverse=True)
    n = dataset.n_rows
    n_clusters = labels.shape[0]
    cluster_sizes = np.bincount(cluster_index, minlength=n_clusters)
    if np.any(cluster_sizes == 0):
        raise ValueError("cluster with zero rows")

    cols: list[np.ndarray] = []
    names: list[str] = []
    levels: list[str] = []
    if spec.include_intercept:
        cols.append(np.ones(n))
        names.append("intercept")
        levels.append("intercept")
    if spec.include_treatment:
        cols.append(dataset.treatment.astype(float))
        names.append("treatment")
        levels.append("cluster")
    for name in spec.adjusted_covariates:
        col = dataset.covariates[name]
        cols.append(col)
        names.append(name)
        spread = _max_within_cluster_spread(ids, col)
        scale = float(np.max(np.abs(col))) or 1.0
        levels.append("cluster" if spread <= level_tol * scale else "person")
    if not cols:
        raise ValueError("model has no fixed-effect columns")

    X = np.column_stack(cols)
    Z = np.zeros((n, n_clusters))
    Z[np.arange(n), cluster_index] = 1.0
    X.setflags(write=False)
    Z.setflags(write=False)
    cluster_index = cluster_index.astype(np.intp)
    cluster_index.setflags(write=False)
    cluster_sizes.setflags(write=False)
    return DesignMatrices(
        X=X,
        Z=Z,
        column_names=tuple(names),
        column_levels=tuple(levels),
        cluster_index=cluster_index,
        cluster_sizes=cluster_sizes,
    )


def numerical_rank(M: np.ndarray, tol: float | None = None) -> int:
    """Rank of ``M`` as the number of singular values above a threshold.

    The default threshold is ``max(M.shape) * eps * sigma_max``, the
    usual convention, which makes the result invariant under column
    permutation and under rescaling columns by nonzero constants.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if tol is None:
        tol = max(M.shape) * np.finfo(float).eps * float(s[0])
    return int(np.count_nonzero(s > tol))


# ---------------------------------------------------------------------------
# Dataset CSV interchange: header `cluster,treatment,y,<covariate names...>`,
# one row per person.  Level tags are inferred from within-cluster constancy
# at a small relative tolerance unless the caller overrides them.
# ---------------------------------------------------------------------------

CSV_LEVEL_TOL = 1e-12


def read_dataset_csv(
    path: str,
    *,
    level_overrides: dict[str, str] | None = None,
) -> ClusteredDataset:
    """Read a dataset from the ``cluster,treatment,y,...`` CSV format."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty CSV file") from None
        header = [h.strip() for h in header]
        if header[:3] != ["cluster", "treatment", "y"]:
            raise ValueError(
                "CSV header must start with 'cluster,treatment,y', got "
                f"{','.join(header[:3])!r}"
            )
        cov_names = header[3:]
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError("CSV has a header but no data rows")
    width = len(header)
    for k, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"CSV row {k + 2} has {len(row)} fields, expected {width}")
    try:
        data = np.array(rows, dtype=float)
    except ValueError as exc:
        raise ValueError(f"CSV contains a non-numeric field: {exc}") from None

    ids = data[:, 0].astype(np.int64)
    if np.any(data[:, 0] != ids):
        raise ValueError("cluster ids must be integers")
    treatment = data[:, 1]
    if not np.all(np.isin(treatment, (0.0, 1.0))):
        raise ValueError("treatment column must be 0/1")
    covariates = {name: data[:, 3 + j] for j, name in enumerate(cov_names)}

    levels: dict[str, str] = {}
    overrides = level_overrides or {}
    for name, col in covariates.items():
        if name in overrides:
            levels[name] = overrides[name]
            continue
        spread = _max_within_cluster_spread(ids, col)
        scale = float(np.max(np.abs(col))) or 1.0
        levels[name] = "cluster" if spread <= CSV_LEVEL_TOL * scale else "person"
        if levels[name] == "cluster" and spread > 0.0:
            # Snap near-constant columns so the dataset invariant holds.
            covariates[name] = _cluster_means(ids, col)

    return ClusteredDataset(
        cluster_ids=ids,
        y=data[:, 2],
        treatment=treatment,
        covariates=covariates,
        covariate_levels=levels,
    )


def _cluster_means(ids: np.ndarray, col: np.ndarray) -> np.ndarray:
    _, idx = np.unique(ids, return_inverse=True)
    sums = np.bincount(idx, weights=col)
    counts = np.bincount(idx)
    return (sums / counts)[idx]


def write_dataset_csv(dataset: ClusteredDataset, path: str) -> None:
    """Write a dataset in the CSV interchange format (full float precision)."""
    names = list(dataset.covariate_names)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster", "treatment", "y"] + names)
        for k in range(dataset.n_rows):
            row = [
                int(dataset.cluster_ids[k]),
                int(dataset.treatment[k]),
                repr(float(dataset.y[k])),
            ]
            row += [repr(float(dataset.covariates[n][k])) for n in names]
            writer.writerow(row)
