"""File formats: JSON-lines datasets with a JSON meta file, JSON configs and
reports, and CSV tables."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from mvopl.core import (
    Deterministic,
    DiagonalGaussian,
    IsotropicGaussian,
    KernelConfig,
    LoggedDataset,
    Policy,
    UniformBox,
    ValidationError,
)
from mvopl.estimators import EssMethod, EstimatorKind, EvaluationReport
from mvopl.learner import CrmConfig, LearnResult
from mvopl.simulation import CodConfig, CodResult, CoverageConfig, CoverageRow, ReductionRow

SCHEMA_VERSION = 1

COVERAGE_COLUMNS = ("kind", "method", "target_sigma", "n", "coverage", "mean_ci_width", "mean_ess")
REDUCTION_COLUMNS = ("kind", "method", "target_sigma", "n_star", "ratio_vs_clt")
CDF_COLUMNS = ("family", "d", "normalised_distance", "cdf")
# trailing column: the (1 - 2 eps)^d alternative, blank for the normal family
MASS_COLUMNS = (
    "family", "d", "epsilon", "empirical_fraction", "analytic_fraction", "complement_fraction"
)
NOT_REACHED = "not reached"


class DatasetFormatError(ValidationError):
    pass


# -- policies -------------------------------------------------------------------


def policy_to_dict(policy: Policy) -> dict:
    if isinstance(policy, IsotropicGaussian):
        return {"type": "isotropic_gaussian", "mean": list(policy.mean), "sigma": policy.sigma}
    if isinstance(policy, DiagonalGaussian):
        return {"type": "diagonal_gaussian", "mean": list(policy.mean), "sigmas": list(policy.sigmas)}
    if isinstance(policy, UniformBox):
        return {"type": "uniform_box", "low": list(policy.low), "high": list(policy.high)}
    if isinstance(policy, Deterministic):
        return {"type": "deterministic", "point": list(policy.point)}
    raise ValidationError(f"unknown policy {policy!r}")


def policy_from_dict(obj: Any) -> Policy:
    if not isinstance(obj, dict) or "type" not in obj:
        raise ValidationError("policy descriptor must be an object with a 'type' field")
    kind = obj["type"]
    try:
        if kind == "isotropic_gaussian":
            return IsotropicGaussian(obj["mean"], obj["sigma"])
        if kind == "diagonal_gaussian":
            return DiagonalGaussian(obj["mean"], obj["sigmas"])
        if kind == "uniform_box":
            return UniformBox(obj["low"], obj["high"])
        if kind == "deterministic":
            return Deterministic(obj["point"])
    except KeyError as exc:
        raise ValidationError(f"policy descriptor of type {kind!r} lacks field {exc}") from None
    except TypeError as exc:
        raise ValidationError(f"malformed {kind!r} policy descriptor: {exc}") from None
    raise ValidationError(f"unknown policy type {kind!r}")


# -- datasets -------------------------------------------------------------------


def _num(x: float) -> str:
    return format(float(x), ".17g")


def write_dataset(
    dataset: LoggedDataset, data_path, meta_path, created_by: str = "mvopl"
) -> None:
    """Write samples as JSON lines and the metadata as one JSON object."""
    lines = []
    for a, r, p in zip(dataset.actions, dataset.rewards, dataset.logging_density):
        action = ",".join(_num(x) for x in a)
        lines.append(f'{{"action":[{action}],"reward":{_num(r)},"logging_density":{_num(p)}}}\n')
    meta = {
        "schema_version": SCHEMA_VERSION,
        "d": dataset.d,
        "logging_policy": (
            policy_to_dict(dataset.logging_policy) if dataset.logging_policy is not None else None
        ),
        "created_by": created_by,
    }
    Path(data_path).write_text("".join(lines), encoding="utf-8")
    Path(meta_path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_meta(meta_path) -> dict:
    try:
        meta = json.loads(Path(meta_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{meta_path}: invalid JSON ({exc})") from None
    if not isinstance(meta, dict):
        raise DatasetFormatError(f"{meta_path}: meta must be a JSON object")
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise DatasetFormatError(
            f"{meta_path}: unknown schema_version {meta.get('schema_version')!r}"
        )
    d = meta.get("d")
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise DatasetFormatError(f"{meta_path}: 'd' must be a positive integer")
    return meta


def read_dataset(data_path, meta_path) -> LoggedDataset:
    """Parse and validate a dataset; format errors name the 1-based line."""
    meta = read_meta(meta_path)
    d = meta["d"]
    logging = meta.get("logging_policy")
    logging = policy_from_dict(logging) if logging is not None else None
    actions, rewards, density = [], [], []
    with open(data_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                action = [float(x) for x in obj["action"]]
                reward = float(obj["reward"])
                prop = float(obj["logging_density"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetFormatError(f"{data_path}: line {lineno}: malformed sample ({exc})") from None
            if len(action) != d:
                raise DatasetFormatError(
                    f"{data_path}: line {lineno}: action has {len(action)} entries, expected d={d}"
                )
            if not prop > 0 or not math.isfinite(prop):
                raise DatasetFormatError(
                    f"{data_path}: line {lineno}: logging_density must be positive, got {prop!r}"
                )
            if not (math.isfinite(reward) and all(math.isfinite(x) for x in action)):
                raise DatasetFormatError(f"{data_path}: line {lineno}: non-finite value")
            actions.append(action)
            rewards.append(reward)
            density.append(prop)
    try:
        return LoggedDataset(
            np.array(actions, dtype=np.float64).reshape(-1, d), rewards, density, logging, d
        )
    except ValidationError as exc:
        raise DatasetFormatError(f"{data_path}: {exc}") from None


# -- JSON helpers ---------------------------------------------------------------


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    return value


def write_json(path, obj) -> None:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_json_object(path) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return obj


def report_to_dict(report: EvaluationReport, kernel: Optional[KernelConfig] = None) -> dict:
    out = report.to_dict()
    out["kernel_sigma"] = list(kernel.bandwidth_sigmas) if kernel is not None else None
    return out


def learn_result_to_dict(result: LearnResult) -> dict:
    return {
        "mu": [float(x) for x in result.mu],
        "trajectory": [
            {"iteration": it, "objective": obj, "grad_norm": g} for it, obj, g in result.trajectory
        ],
        "final_report": result.final_report.to_dict(),
    }


# -- configs --------------------------------------------------------------------


def _take(obj: dict, allowed: Iterable[str], where: str) -> dict:
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ValidationError(f"{where}: unknown fields {sorted(unknown)}")
    return dict(obj)


def _seed(obj: dict, seed: Optional[int], where: str) -> int:
    value = obj.pop("master_seed", None)
    if seed is not None:
        value = seed
    if value is None:
        raise ValidationError(f"{where}: a master_seed is required (config or --seed)")
    if not isinstance(value, int) or isinstance(value, bool):
        raise ValidationError(f"{where}: master_seed must be an integer")
    return value


def coverage_config_from_dict(obj: dict, seed: Optional[int] = None) -> CoverageConfig:
    fields = ("master_seed", "d", "logging", "target_mean", "target_sigmas",
              "sample_sizes", "replications", "alpha", "kinds", "methods")
    params = _take(obj, fields, "coverage config")
    master = _seed(params, seed, "coverage config")
    if params.get("logging") is not None:
        params["logging"] = policy_from_dict(params["logging"])
    try:
        return CoverageConfig(master, **params)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"coverage config: {exc}") from None


def cod_config_from_dict(obj: dict, seed: Optional[int] = None) -> CodConfig:
    fields = ("master_seed", "dims", "n_samples", "normal_sigma", "epsilons", "cdf_max")
    params = _take(obj, fields, "cod config")
    master = _seed(params, seed, "cod config")
    try:
        return CodConfig(master, **params)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"cod config: {exc}") from None


def crm_config_from_dict(obj: dict, d: int) -> tuple[CrmConfig, Optional[np.ndarray]]:
    """Learner config plus optional ``init``; ``kernel_sigma`` is a scalar or d-list."""
    fields = ("kernel_sigma", "kind", "ess_method", "z", "step_size", "max_iters",
              "grad_tol", "fd_step", "init")
    params = _take(obj, fields, "learn config")
    if "kernel_sigma" not in params:
        raise ValidationError("learn config: kernel_sigma is required")
    sig = params.pop("kernel_sigma")
    kernel = KernelConfig.isotropic(sig, d) if np.isscalar(sig) else KernelConfig(sig)
    init = params.pop("init", None)
    if "ess_method" in params:
        params["method"] = params.pop("ess_method")
    try:
        config = CrmConfig(kernel=kernel, **params)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"learn config: {exc}") from None
    return config, (np.asarray(init, dtype=np.float64) if init is not None else None)


# -- CSV --------------------------------------------------------------------------


def _cell(value) -> str:
    if isinstance(value, (EstimatorKind, EssMethod)):
        return value.value
    if value is None:
        return NOT_REACHED
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def write_csv(path, columns: Sequence[str], rows: Iterable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(getattr(row, c)) for c in columns])


def write_coverage_csv(path, rows: Sequence[CoverageRow]) -> None:
    write_csv(path, COVERAGE_COLUMNS, rows)


def read_coverage_csv(path) -> list[CoverageRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(COVERAGE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing columns {sorted(missing)}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                rows.append(
                    CoverageRow(
                        kind=EstimatorKind(rec["kind"]),
                        method=EssMethod(rec["method"]),
                        target_sigma=float(rec["target_sigma"]),
                        n=int(rec["n"]),
                        coverage=float(rec["coverage"]),
                        mean_ci_width=float(rec["mean_ci_width"]),
                        mean_ess=float(rec["mean_ess"]),
                    )
                )
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from None
    return rows


def write_reduction_csv(path, rows: Sequence[ReductionRow]) -> None:
    write_csv(path, REDUCTION_COLUMNS, rows)


def write_cod_csvs(cdf_path, mass_path, result: CodResult) -> None:
    write_csv(cdf_path, CDF_COLUMNS, result.cdf)
    write_csv(mass_path, MASS_COLUMNS, result.mass)
