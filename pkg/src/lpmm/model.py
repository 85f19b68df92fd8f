"""PCA morphable model over flattened landmark vectors.

New landmark sets are generated as mean + sum_i p_i * e_i where the e_i are
orthonormal principal components of the training data and p is the
user-facing parameter vector, truncated to degree k.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FormatError
from .landmarks import (
    LandmarkDataset,
    LandmarkSet,
    NmeReport,
    dataset_fingerprint,
    nme,
)

MODEL_FORMAT = "lpmm-model"
MODEL_VERSION = 1

_ORTHO_TOL = 1e-8
_EIGENVALUE_CLAMP = -1e-12


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Morphable-model coefficients p in R^k (the rig controls)."""

    values: np.ndarray

    def __init__(self, values):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1:
            raise FormatError(f"parameter vector must be 1-D, got shape {arr.shape}", code="bad_param_shape")
        if arr.size < 1:
            raise DomainError("parameter vector must have degree >= 1", code="k_out_of_range")
        if not np.all(np.isfinite(arr)):
            raise FormatError("non-finite parameter value", code="nonfinite_parameter")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def k(self) -> int:
        return self.values.size

    @classmethod
    def zeros(cls, k: int) -> "ParamVector":
        return cls(np.zeros(k))


@dataclass(frozen=True, eq=False)
class LpmmModel:
    """Mean landmark vector, orthonormal component basis and eigenvalues."""

    mean: np.ndarray         # (2n,)
    basis: np.ndarray        # (2n, m), orthonormal columns
    eigenvalues: np.ndarray  # (m,), descending, >= 0
    n: int
    m: int
    dataset_fingerprint: str
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("mean", "basis", "eigenvalues"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.mean.shape != (2 * self.n,):
            raise FormatError("mean has wrong dimension", code="bad_model_shape")
        if self.basis.shape != (2 * self.n, self.m):
            raise FormatError("basis has wrong shape", code="bad_model_shape")
        if self.eigenvalues.shape != (self.m,):
            raise FormatError("eigenvalues have wrong length", code="bad_model_shape")
        gram = self.basis.T @ self.basis
        if np.max(np.abs(gram - np.eye(self.m))) > _ORTHO_TOL:
            raise FormatError("basis not orthonormal", code="basis_not_orthonormal")
        if np.any(np.diff(self.eigenvalues) > 0):
            raise FormatError("eigenvalues not sorted descending", code="bad_eigenvalues")
        if np.any(self.eigenvalues < _EIGENVALUE_CLAMP):
            raise FormatError("negative eigenvalue", code="bad_eigenvalues")

    @property
    def dim(self) -> int:
        return 2 * self.n

    def mean_landmarks(self) -> LandmarkSet:
        return LandmarkSet.from_vector(self.mean)


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    """Make each column's largest-magnitude entry positive (ties: lowest index)."""
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def build_lpmm(dataset: LandmarkDataset, m: int | None = None) -> LpmmModel:
    """Fit the morphable model by SVD of the centered data matrix.

    eigenvalue_i = singular_value_i^2 / (N - 1) (sample covariance).
    m defaults to min(2n, N-1); larger requests are clamped with a warning
    recorded on the model.
    """
    if not dataset.is_canonical():
        raise DomainError(
            "dataset contains pixel-space records; normalize before building",
            code="not_canonical",
        )
    X = dataset.matrix()
    N, dim = X.shape
    if N < 2:
        raise DomainError("need at least 2 samples to build a model", code="too_few_samples")
    m_max = min(dim, N - 1)
    warnings: list[str] = []
    if m is None:
        m_eff = m_max
    else:
        if m < 1:
            raise DomainError("m must be >= 1", code="k_out_of_range")
        m_eff = m
        if m > m_max:
            m_eff = m_max
            warnings.append(f"m={m} exceeds min(2n, N-1)={m_max}; clamped to {m_max}")

    mean = X.mean(axis=0)
    centered = X - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    eigenvalues = (svals[:m_eff] ** 2) / (N - 1)
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    basis = _fix_signs(vt[:m_eff].T)

    return LpmmModel(
        mean=mean,
        basis=basis,
        eigenvalues=eigenvalues,
        n=dataset.n,
        m=m_eff,
        dataset_fingerprint=dataset_fingerprint(dataset),
        warnings=tuple(warnings),
    )


def _check_degree(model: LpmmModel, k: int) -> None:
    if not 1 <= k <= model.m:
        raise DomainError(f"degree k={k} out of range [1, {model.m}]", code="k_out_of_range")


def reconstruct(model: LpmmModel, p: ParamVector) -> LandmarkSet:
    """Mean plus the weighted component sum; out-of-range coordinates are
    left as-is (edits may legally leave the unit frame)."""
    _check_degree(model, p.k)
    vec = model.mean + model.basis[:, : p.k] @ p.values
    return LandmarkSet.from_vector(vec)


def fit_params(model: LpmmModel, lms: LandmarkSet, k: int) -> ParamVector:
    """Least-squares optimal coefficients: first k entries of basis^T (L - mean)."""
    _check_degree(model, k)
    if lms.n != model.n:
        raise DomainError(f"landmark count {lms.n} does not match model n={model.n}", code="point_count")
    return ParamVector(model.basis[:, :k].T @ (lms.vector - model.mean))


def explained_variance(model: LpmmModel, k: int) -> float:
    """Fraction of total data variance captured by the first k components."""
    _check_degree(model, k)
    total = float(model.eigenvalues.sum())
    if total == 0.0:
        return 1.0
    return float(model.eigenvalues[:k].sum() / total)


def nme_sweep(model: LpmmModel, eval_dataset: LandmarkDataset, ks: list[int]) -> list[NmeReport]:
    """Reconstruction NME at each degree k; degenerate samples are skipped
    and counted per report."""
    if not ks:
        raise DomainError("ks must be non-empty", code="k_out_of_range")
    for k in ks:
        _check_degree(model, k)
    reports = []
    for k in ks:
        values = []
        skipped = 0
        for rec in eval_dataset:
            try:
                recon = reconstruct(model, fit_params(model, rec.landmarks, k))
                values.append(nme(recon, rec.landmarks))
            except DomainError:
                skipped += 1
        mean = float(np.mean(values)) if values else float("nan")
        reports.append(NmeReport(per_sample=tuple(values), mean=mean, k=k, skipped=skipped))
    return reports


def serialize_model(model: LpmmModel) -> bytes:
    obj = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n": model.n,
        "m": model.m,
        "mean": model.mean.tolist(),
        "eigenvalues": model.eigenvalues.tolist(),
        "basis": model.basis.T.tolist(),  # m columns, each 2n floats
        "dataset_fingerprint": model.dataset_fingerprint,
    }
    return json.dumps(obj).encode("utf-8")


def deserialize_model(data: bytes) -> LpmmModel:
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"model file is not valid JSON: {exc}", code="malformed_model") from exc
    if not isinstance(obj, dict) or obj.get("format") != MODEL_FORMAT:
        raise FormatError("not a model file", code="malformed_model")
    if obj.get("version") != MODEL_VERSION:
        raise FormatError(
            f"unsupported model version {obj.get('version')!r}", code="version_mismatch"
        )
    try:
        n = int(obj["n"])
        m = int(obj["m"])
        mean = np.asarray(obj["mean"], dtype=np.float64)
        eigenvalues = np.asarray(obj["eigenvalues"], dtype=np.float64)
        basis = np.asarray(obj["basis"], dtype=np.float64).T
        fingerprint = str(obj["dataset_fingerprint"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"model file missing or malformed field: {exc}", code="malformed_model") from exc
    try:
        return LpmmModel(
            mean=mean,
            basis=basis,
            eigenvalues=eigenvalues,
            n=n,
            m=m,
            dataset_fingerprint=fingerprint,
        )
    except FormatError:
        raise
    except Exception as exc:  # shape errors from numpy broadcasting
        raise FormatError(f"model file inconsistent: {exc}", code="malformed_model") from exc


def save_model(model: LpmmModel, path) -> None:
    with open(path, "wb") as f:
        f.write(serialize_model(model))


def load_model(path) -> LpmmModel:
    with open(path, "rb") as f:
        return deserialize_model(f.read())
