"""Experiment orchestration: configuration, synthetic data, execution, and
report emission.

Configs are strict JSON documents (unknown keys rejected with their path).
Reports carry a config echo plus all numeric results; replaying a report
re-runs its config and must reproduce the numeric payload byte for byte.
"""

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .metric import CSV_HEADER, LinearTaskSampler, PrivacyEstimate
from .rng import child_rng

ENV_SEED_VAR = "IMITATION_SEED"

COVARIANCE_KINDS = ("identity", "ar", "block-cross", "custom")
DISTRIBUTIONS = ("gaussian", "uniform-bounded")


class ConfigError(ValueError):
    """Configuration rejected; the message names the offending field path."""


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"{path}.{key}: missing required field")
    return obj[key]


def _reject_unknown(obj: dict, allowed, path: str):
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown field")


def _positive_int(value, path: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(f"{path}: must be a positive integer, got {value!r}")
    return value


@dataclass(frozen=True)
class CovarianceSpec:
    kind: str = "identity"
    rho: float = 0.0
    matrix: Optional[tuple] = None

    def build(self, p_a: int, p_b: int) -> np.ndarray:
        p = p_a + p_b
        if self.kind == "identity":
            return np.eye(p)
        if self.kind == "ar":
            idx = np.arange(p)
            return self.rho ** np.abs(idx[:, None] - idx[None, :])
        if self.kind == "block-cross":
            cov = np.eye(p)
            m = min(p_a, p_b)
            for i in range(m):
                cov[i, p_a + i] = self.rho
                cov[p_a + i, i] = self.rho
            return cov
        cov = np.asarray(self.matrix, dtype=float)
        if cov.shape != (p, p):
            raise ConfigError(
                f"dataset.covariance.matrix: must be {p}x{p}, got {cov.shape}"
            )
        return cov

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind in ("ar", "block-cross"):
            out["rho"] = self.rho
        if self.kind == "custom":
            out["matrix"] = [list(row) for row in self.matrix]
        return out


@dataclass(frozen=True)
class DatasetSpec:
    n: int
    p_a: int
    p_b: int
    covariance: CovarianceSpec = CovarianceSpec()
    noise_sigma: float = 0.0
    bound: float = 1.0
    distribution: str = "gaussian"

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p_a": self.p_a,
            "p_b": self.p_b,
            "covariance": self.covariance.to_dict(),
            "noise_sigma": self.noise_sigma,
            "bound": self.bound,
            "distribution": self.distribution,
        }


def _parse_covariance(obj, path: str) -> CovarianceSpec:
    if obj is None:
        return CovarianceSpec()
    _reject_unknown(obj, {"kind", "rho", "matrix"}, path)
    kind = obj.get("kind", "identity")
    if kind not in COVARIANCE_KINDS:
        raise ConfigError(f"{path}.kind: must be one of {COVARIANCE_KINDS}")
    rho = float(obj.get("rho", 0.0))
    matrix = obj.get("matrix")
    if kind == "custom" and matrix is None:
        raise ConfigError(f"{path}.matrix: required for custom covariance")
    if matrix is not None:
        matrix = tuple(tuple(float(v) for v in row) for row in matrix)
    return CovarianceSpec(kind=kind, rho=rho, matrix=matrix)


def _parse_dataset(obj, path: str) -> Optional[DatasetSpec]:
    if obj is None:
        return None
    _reject_unknown(
        obj,
        {"n", "p_a", "p_b", "covariance", "noise_sigma", "bound", "distribution"},
        path,
    )
    n = _positive_int(_require(obj, "n", path), f"{path}.n")
    p_a = _positive_int(_require(obj, "p_a", path), f"{path}.p_a")
    p_b = obj.get("p_b", 0)
    if not isinstance(p_b, int) or p_b < 0:
        raise ConfigError(f"{path}.p_b: must be a nonnegative integer")
    distribution = obj.get("distribution", "gaussian")
    if distribution not in DISTRIBUTIONS:
        raise ConfigError(f"{path}.distribution: must be one of {DISTRIBUTIONS}")
    bound = float(obj.get("bound", 1.0))
    if bound <= 0:
        raise ConfigError(f"{path}.bound: must be positive")
    noise_sigma = float(obj.get("noise_sigma", 0.0))
    if noise_sigma < 0:
        raise ConfigError(f"{path}.noise_sigma: must be nonnegative")
    spec = DatasetSpec(
        n=n,
        p_a=p_a,
        p_b=p_b,
        covariance=_parse_covariance(obj.get("covariance"), f"{path}.covariance"),
        noise_sigma=noise_sigma,
        bound=bound,
        distribution=distribution,
    )
    if distribution == "gaussian":
        cov = spec.covariance.build(p_a, p_b)
        if float(np.linalg.eigvalsh(cov)[0]) <= 1e-12:
            raise ConfigError(f"{path}.covariance: matrix is not positive definite")
    return spec


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    scenario: str
    seed: int
    loss: str = "scaled-l2"
    n_tasks: int = 16
    n_test: int = 32
    dataset: Optional[DatasetSpec] = None
    params: tuple = ()
    out_dir: Optional[str] = None

    def param_dict(self) -> dict:
        return {k: v for k, v in self.params}

    def to_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "scenario": self.scenario,
            "seed": self.seed,
            "loss": self.loss,
            "n_tasks": self.n_tasks,
            "n_test": self.n_test,
            "dataset": self.dataset.to_dict() if self.dataset else None,
            "params": self.param_dict(),
            "out_dir": self.out_dir,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return ExperimentConfig(
            experiment_id=self.experiment_id,
            scenario=self.scenario,
            seed=seed,
            loss=self.loss,
            n_tasks=self.n_tasks,
            n_test=self.n_test,
            dataset=self.dataset,
            params=self.params,
            out_dir=self.out_dir,
        )


_CONFIG_FIELDS = {
    "experiment_id", "scenario", "seed", "loss", "n_tasks", "n_test",
    "dataset", "params", "out_dir",
}


def _params_to_tuple(value):
    if isinstance(value, dict):
        return tuple(sorted((k, _params_to_tuple(v)) for k, v in value.items()))
    if isinstance(value, list):
        return tuple(_params_to_tuple(v) for v in value)
    return value


def _params_to_jsonable(value):
    if isinstance(value, tuple):
        if all(isinstance(v, tuple) and len(v) == 2 and isinstance(v[0], str) for v in value):
            return {k: _params_to_jsonable(v) for k, v in value}
        return [_params_to_jsonable(v) for v in value]
    return value


def parse_config(obj: dict, path: str = "config") -> ExperimentConfig:
    """Validate a raw JSON object into an ExperimentConfig.

    Unknown keys are rejected; error messages carry the field path.
    """
    from .scenarios import SCENARIOS  # deferred: scenarios import this module

    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: must be a JSON object")
    _reject_unknown(obj, _CONFIG_FIELDS, path)
    scenario = _require(obj, "scenario", path)
    if scenario not in SCENARIOS:
        raise ConfigError(
            f"{path}.scenario: unknown scenario {scenario!r}; "
            f"known: {', '.join(sorted(SCENARIOS))}"
        )
    seed = _require(obj, "seed", path)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"{path}.seed: must be a nonnegative integer")
    loss = obj.get("loss", "scaled-l2")
    if loss not in ("scaled-l2", "zero-one", "squared"):
        raise ConfigError(f"{path}.loss: unknown loss {loss!r}")
    n_tasks = _positive_int(obj.get("n_tasks", 16), f"{path}.n_tasks")
    n_test = _positive_int(obj.get("n_test", 32), f"{path}.n_test")
    params_obj = obj.get("params", {})
    if not isinstance(params_obj, dict):
        raise ConfigError(f"{path}.params: must be an object")
    allowed = SCENARIOS[scenario].allowed_params
    _reject_unknown(params_obj, allowed, f"{path}.params")
    out_dir = obj.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError(f"{path}.out_dir: must be a string")
    experiment_id = obj.get("experiment_id", scenario)
    if not isinstance(experiment_id, str) or not experiment_id:
        raise ConfigError(f"{path}.experiment_id: must be a nonempty string")
    return ExperimentConfig(
        experiment_id=experiment_id,
        scenario=scenario,
        seed=seed,
        loss=loss,
        n_tasks=n_tasks,
        n_test=n_test,
        dataset=_parse_dataset(obj.get("dataset"), f"{path}.dataset"),
        params=_params_to_tuple(params_obj),
        out_dir=out_dir,
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})")
    return parse_config(raw)


# ---------------------------------------------------------------------------
# Synthetic data


def synth_dataset(spec: DatasetSpec, seed: int):
    """Generate collated feature blocks (X_A, X_B) and a task sampler.

    Gaussian rows follow the declared joint covariance; the bounded-uniform
    distribution draws entries i.i.d. on [-bound, bound] for the DP
    experiments.  Tasks are linear in the concatenated features with the
    spec's noise level.
    """
    rng = child_rng(seed, "synth")
    p = spec.p_a + spec.p_b
    if spec.distribution == "uniform-bounded":
        joint = rng.uniform(-spec.bound, spec.bound, size=(spec.n, p))
    else:
        cov = spec.covariance.build(spec.p_a, spec.p_b)
        eigmin = float(np.linalg.eigvalsh(cov)[0])
        if eigmin <= 1e-12:
            raise ConfigError("dataset.covariance: matrix is not positive definite")
        L = np.linalg.cholesky(cov)
        joint = rng.normal(size=(spec.n, p)) @ L.T
    X_a = joint[:, : spec.p_a].copy()
    X_b = joint[:, spec.p_a :].copy()
    sampler = LinearTaskSampler(joint, beta_scale=1.0, noise_sigma=spec.noise_sigma)
    return X_a, X_b, sampler


# ---------------------------------------------------------------------------
# Reports


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: dict
    estimates: list
    assertions: list
    traces: dict
    wall_time_s: float

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def numeric_payload(self) -> dict:
        return {
            "records": self.records,
            "estimates": [e.to_dict() for e in self.estimates],
            "assertions": self.assertions,
        }

    def payload_bytes(self) -> bytes:
        return json.dumps(self.numeric_payload(), sort_keys=True,
                          separators=(",", ":")).encode()

    def to_dict(self) -> dict:
        import platform

        from . import __version__

        return {
            "experiment_id": self.config.experiment_id,
            "scenario": self.config.scenario,
            "config": self.config.to_dict(),
            "config_sha256": self.config.sha256(),
            "passed": self.passed,
            **self.numeric_payload(),
            "meta": {
                "wall_time_s": self.wall_time_s,
                "versions": {
                    "python": platform.python_version(),
                    "numpy": np.__version__,
                    "imitation_privacy": __version__,
                },
            },
        }

    def write(self, out_dir: str):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")
        with open(os.path.join(out_dir, "estimates.csv"), "w", encoding="utf-8") as fh:
            fh.write(CSV_HEADER + "\n")
            for est in self.estimates:
                fh.write(est.csv_row(self.config.experiment_id) + "\n")
        for name, trace in self.traces.items():
            with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
                fh.write(",".join(trace["header"]) + "\n")
                for row in trace["rows"]:
                    fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                                      for v in row) + "\n")


def effective_seed(config: ExperimentConfig, cli_seed: Optional[int] = None,
                   apply_env: bool = True) -> int:
    """Seed precedence: --seed flag, then IMITATION_SEED, then the config."""
    if cli_seed is not None:
        return cli_seed
    if apply_env:
        env = os.environ.get(ENV_SEED_VAR)
        if env is not None:
            try:
                return int(env)
            except ValueError:
                raise ConfigError(f"{ENV_SEED_VAR}: must be an integer, got {env!r}")
    return config.seed


def run_experiment(config: ExperimentConfig, jobs: int = 1,
                   cli_seed: Optional[int] = None,
                   apply_env: bool = True) -> ExperimentReport:
    """Execute the configured scenario deterministically under its seed.

    Writes report artifacts when the config names an output directory; the
    report's numeric payload depends only on the effective config.
    """
    from .scenarios import SCENARIOS

    if config.scenario not in SCENARIOS:
        raise ConfigError(f"config.scenario: unknown scenario {config.scenario!r}")
    seed = effective_seed(config, cli_seed, apply_env=apply_env)
    if seed != config.seed:
        config = config.with_seed(seed)
    scenario = SCENARIOS[config.scenario]
    started = time.perf_counter()
    result = scenario.run(config, jobs=jobs)
    wall = time.perf_counter() - started
    report = ExperimentReport(
        config=config,
        records=result.get("records", {}),
        estimates=result.get("estimates", []),
        assertions=result.get("assertions", []),
        traces=result.get("traces", {}),
        wall_time_s=wall,
    )
    if config.out_dir:
        report.write(config.out_dir)
    return report


def replay_report(report_path: str, jobs: int = 1):
    """Re-run a report's config echo and compare numeric payloads.

    Returns ``(matches, fresh_report)``; byte-identical payloads replay
    cleanly.
    """
    import dataclasses

    with open(report_path, "r", encoding="utf-8") as fh:
        stored = json.load(fh)
    config = dataclasses.replace(parse_config(stored["config"]), out_dir=None)
    fresh = run_experiment(config, jobs=jobs, apply_env=False)
    stored_payload = json.dumps(
        {
            "records": stored["records"],
            "estimates": stored["estimates"],
            "assertions": stored["assertions"],
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode()
    return stored_payload == fresh.payload_bytes(), fresh


def list_scenarios() -> list:
    """Alphabetical registry listing: name, description, config keys."""
    from .scenarios import SCENARIOS

    out = []
    for name in sorted(SCENARIOS):
        sc = SCENARIOS[name]
        out.append(
            {
                "name": name,
                "description": sc.description,
                "operations": list(sc.operations),
                "required_params": sorted(sc.allowed_params),
            }
        )
    return out
