"""Experiment orchestration: configs, metrics, cross-validation, persistence, timing."""

from __future__ import annotations

import copy
import itertools
import json
import logging
import shutil
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import jsonschema
import numpy as np

from . import datagen
from .datagen import Dataset, TimeGrid
from .deepkernel import DeepKernelArchitecture, DeepKernelParams
from .errors import IoError, SchemaError, VersionMismatch, ZeroNormTarget
from .greedy import DeepKernel, GreedyConfig, SurrogateModel, fit_greedy_detailed, predict
from .kernels import ScalarKernelSpec
from .numerics import SeededRng
from .training import LossHistory, TrainConfig, train_deep_kernel

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
PROBLEMS = ("f2", "f3", "f4", "ode_dt", "ode_ct", "breakthrough_synthetic")


# -- configuration ----------------------------------------------------------


@dataclass
class ArchitectureConfig:
    n_layers: int = 2
    width: int = 10
    n_centers: int = 50
    activation: dict = field(default_factory=lambda: {"family": "matern1", "epsilon": 1.0})
    outer: dict = field(default_factory=lambda: {"family": "matern1", "epsilon": 1.0})

    def build(self, d_in: int, out_dim: int, n_train: int) -> DeepKernelArchitecture:
        return DeepKernelArchitecture.build(
            self.n_layers,
            d_in,
            self.width,
            ScalarKernelSpec.from_dict(self.activation),
            ScalarKernelSpec.from_dict(self.outer),
            n_centers=min(self.n_centers, n_train),
            out_dim=out_dim,
        )


@dataclass
class ExperimentConfig:
    problem: str = "f2"
    system: str = "lotka_volterra"
    n_train: int = 1000
    n_test: int = 500
    seed: int = 0
    architecture: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    greedy: GreedyConfig = field(default_factory=GreedyConfig)
    cv: dict | None = None
    timing_runs: int = 5
    voxel_resolution: int = 30
    pca_rank: int = 6
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise SchemaError(f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        if self.n_train < 1 or self.n_test < 1 or self.timing_runs < 1:
            raise SchemaError("n_train, n_test and timing_runs must be positive")
        if self.cv is not None:
            folds = int(self.cv.get("folds", 5))
            if folds < 2:
                raise SchemaError("cv.folds must be at least 2")
            if not self.cv.get("grid"):
                raise SchemaError("cv.grid must be a nonempty mapping")

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        version = d.pop("format_version", FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise VersionMismatch(f"config format_version {version} != {FORMAT_VERSION}")
        validate_config(d)
        try:
            arch = ArchitectureConfig(**d.pop("architecture", {}))
            train = TrainConfig(**d.pop("train", {}))
            greedy = GreedyConfig(**d.pop("greedy", {}))
            return cls(architecture=arch, train=train, greedy=greedy, **d)
        except TypeError as exc:
            raise SchemaError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_overrides(self, overrides: dict[str, Any]) -> "ExperimentConfig":
        """Copy with dotted-key overrides applied, e.g. ``{"train.lr": 1e-3}``."""
        d = self.to_dict()
        for key, value in overrides.items():
            _set_dotted(d, key, value)
        return ExperimentConfig.from_dict(d)


def _set_dotted(d: dict, key: str, value) -> None:
    parts = key.split(".")
    node = d
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise SchemaError(f"unknown config key {key!r}")
        node = node[p]
    if parts[-1] not in node and not (parts[-1] == "cv" and len(parts) == 1):
        raise SchemaError(f"unknown config key {key!r}")
    node[parts[-1]] = value


def parse_override(text: str) -> tuple[str, Any]:
    """``key=value`` where value is parsed as JSON when possible."""
    if "=" not in text:
        raise SchemaError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ExperimentConfig",
    "type": "object",
    "required": ["problem"],
    "additionalProperties": False,
    "properties": {
        "format_version": {"const": FORMAT_VERSION},
        "problem": {"enum": list(PROBLEMS)},
        "system": {"enum": ["lotka_volterra", "brusselator"]},
        "n_train": {"type": "integer", "minimum": 1},
        "n_test": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "timing_runs": {"type": "integer", "minimum": 1},
        "voxel_resolution": {"type": "integer", "minimum": 4},
        "pca_rank": {"type": "integer", "minimum": 1},
        "architecture": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_layers": {"type": "integer", "minimum": 1},
                "width": {"type": "integer", "minimum": 1},
                "n_centers": {"type": "integer", "minimum": 1},
                "activation": {"$ref": "#/$defs/kernel"},
                "outer": {"$ref": "#/$defs/kernel"},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 2},
                "gamma_rippa": {"type": "number", "minimum": 0},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "adam_beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "adam_beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "adam_eps": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "greedy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_max": {"type": "integer", "minimum": 1},
                "f_tol": {"type": "number", "minimum": 0},
                "stability_tol": {"type": "number", "exclusiveMinimum": 0},
                "gamma": {"type": "number", "minimum": 0},
            },
        },
        "cv": {
            "type": ["object", "null"],
            "required": ["grid"],
            "properties": {
                "folds": {"type": "integer", "minimum": 2},
                "grid": {"type": "object", "minProperties": 1},
            },
        },
    },
    "$defs": {
        "kernel": {
            "type": "object",
            "required": ["family", "epsilon"],
            "properties": {
                "family": {"enum": ["gaussian", "matern1", "matern2"]},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
            },
        }
    },
}


MODEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ModelFile",
    "type": "object",
    "required": ["format_version", "kernel", "d_in", "out_dim", "gamma", "centers", "coefficients"],
    "properties": {
        "format_version": {"const": FORMAT_VERSION},
        "kernel": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["type", "spec"],
                    "properties": {"type": {"const": "shallow"}, "spec": {"$ref": "#/$defs/kernel"}},
                },
                {
                    "type": "object",
                    "required": ["type", "architecture", "params"],
                    "properties": {
                        "type": {"const": "deep"},
                        "architecture": {
                            "type": "object",
                            "required": ["n_layers", "dims", "n_centers", "activation", "outer"],
                            "properties": {
                                "n_layers": {"type": "integer", "minimum": 1},
                                "dims": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                                "n_centers": {"type": "integer", "minimum": 0},
                                "activation": {"$ref": "#/$defs/kernel"},
                                "outer": {"$ref": "#/$defs/kernel"},
                                "out_dim": {"type": "integer", "minimum": 1},
                            },
                        },
                        "params": {
                            "type": "object",
                            "required": ["W", "A", "Z1"],
                            "properties": {
                                "W": {"type": "array", "items": {"$ref": "#/$defs/matrix"}},
                                "A": {"type": "array", "items": {"$ref": "#/$defs/matrix"}},
                                "Z1": {"$ref": "#/$defs/matrix"},
                            },
                        },
                    },
                },
            ]
        },
        "d_in": {"type": "integer", "minimum": 1},
        "out_dim": {"type": "integer", "minimum": 1},
        "gamma": {"type": "number", "minimum": 0},
        "centers": {"$ref": "#/$defs/matrix"},
        "coefficients": {"$ref": "#/$defs/matrix"},
        "selected_indices": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    },
    "$defs": {
        "kernel": CONFIG_SCHEMA["$defs"]["kernel"],
        "matrix": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
    },
}


def validate_config(d: dict) -> None:
    try:
        jsonschema.validate({**d, "format_version": FORMAT_VERSION}, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"config: {exc.message} at {list(exc.absolute_path)}") from exc


# -- problem data -----------------------------------------------------------


@dataclass
class ProblemData:
    """Train/test datasets, one pair per surrogate (two for the ODE problems)."""

    train: list[Dataset]
    test: list[Dataset]
    groups: np.ndarray | None = None  # training-row group ids for fold splitting
    ode: dict | None = None  # mu_test, trajectories, mode for the two-equation error


def make_data(cfg: ExperimentConfig) -> ProblemData:
    rng = SeededRng(cfg.seed)
    if cfg.problem in datagen.MODEL_DIMS:
        tr = datagen.model_problem_dataset(cfg.problem, cfg.n_train, cfg.seed)
        te = datagen.model_problem_dataset(cfg.problem, cfg.n_test, int(rng.spawn(1).seed))
        return ProblemData([tr], [te])

    if cfg.problem in ("ode_dt", "ode_ct"):
        grid = TimeGrid.default()
        mu_train = datagen.parameter_grid(cfg.system, cfg.n_train)
        mu_test = datagen.parameter_samples(cfg.system, cfg.n_test, int(rng.spawn(1).seed))
        U_train = datagen.solve_many(cfg.system, mu_train, grid)
        U_test = datagen.solve_many(cfg.system, mu_test, grid)
        build = datagen.build_dt_dataset if cfg.problem == "ode_dt" else datagen.build_ct_dataset
        train = list(build(cfg.system, mu_train, grid, U_train))
        test = list(build(cfg.system, mu_test, grid, U_test))
        groups = None
        if cfg.problem == "ode_ct":
            groups = np.repeat(np.arange(mu_train.shape[0]), len(grid))
        mode = "dt" if cfg.problem == "ode_dt" else "ct"
        return ProblemData(train, test, groups, {"mu_test": mu_test, "U_test": U_test, "mode": mode, "grid": grid})

    geo, curves = datagen.synthetic_breakthrough_data(cfg.n_train + cfg.n_test, cfg.voxel_resolution, cfg.seed)
    pca = datagen.pca_feature_map(geo[: cfg.n_train], cfg.pca_rank)
    feats = pca.transform(geo)
    meta = {"generator": "breakthrough_synthetic", "seed": cfg.seed, "resolution": cfg.voxel_resolution}
    tr = Dataset(feats[: cfg.n_train], curves[: cfg.n_train], meta)
    te = Dataset(feats[cfg.n_train :], curves[cfg.n_train :], meta)
    return ProblemData([tr], [te])


# -- metrics ----------------------------------------------------------------

Predictor = Callable[[np.ndarray], np.ndarray]


def _as_predictor(model) -> Predictor:
    if isinstance(model, SurrogateModel):
        return lambda X: predict(model, X)
    if callable(model):
        return model
    raise TypeError(f"cannot predict with {type(model).__name__}")


def per_sample_relative_errors(model, data: Dataset) -> np.ndarray:
    if len(data) == 0:
        raise ValueError("empty test set")
    denom = np.sum(data.Y**2, axis=1)
    if np.any(denom == 0):
        raise ZeroNormTarget("test set contains a zero-norm target")
    S = np.asarray(_as_predictor(model)(data.X), dtype=float).reshape(data.Y.shape)
    return np.sum((S - data.Y) ** 2, axis=1) / denom


def relative_test_error(model, data: Dataset) -> float:
    """Mean over test points of ``||s(x) - y||^2 / ||y||^2``."""
    return float(np.mean(per_sample_relative_errors(model, data)))


def _ode_predictions(model, mu: np.ndarray, mode: str, grid: TimeGrid) -> np.ndarray:
    """Surrogate trajectories on the grid, shape ``(N_mu, len(grid))``."""
    f = _as_predictor(model)
    mu = np.atleast_2d(mu)
    if mode == "dt":
        return np.asarray(f(mu), dtype=float).reshape(mu.shape[0], len(grid))
    nt = len(grid)
    X = np.column_stack([np.tile(grid.t, mu.shape[0]), np.repeat(mu, nt, axis=0)])
    return np.asarray(f(X), dtype=float).reshape(mu.shape[0], nt)


def pode_per_sample_errors(models: Sequence, mu_test, U_test, mode: str = "dt", grid: TimeGrid | None = None) -> np.ndarray:
    """Per (parameter, equation) relative errors, shape ``(N_test, 2)``."""
    grid = grid or TimeGrid.default()
    if len(models) != 2:
        raise ValueError("need one surrogate per equation")
    out = np.empty((np.atleast_2d(mu_test).shape[0], 2))
    for j, model in enumerate(models):
        u = U_test[:, :, j]
        denom = np.sum(u**2, axis=1)
        if np.any(denom == 0):
            raise ZeroNormTarget("zero-norm reference trajectory")
        s = _ode_predictions(model, mu_test, mode, grid)
        out[:, j] = np.sum((u - s) ** 2, axis=1) / denom
    return out


def pode_relative_error(models: Sequence, mu_test, U_test, mode: str = "dt", grid: TimeGrid | None = None) -> float:
    """Relative error averaged over test parameters and both equations."""
    return float(np.mean(pode_per_sample_errors(models, mu_test, U_test, mode, grid)))


# -- fitting ----------------------------------------------------------------


@dataclass
class FitOutput:
    model: SurrogateModel
    loss_history: LossHistory
    residual_history: list[float]
    seconds: float


def fit_surrogate(cfg: ExperimentConfig, data: Dataset, seed: int | None = None) -> FitOutput:
    """Train the kernel (unless shallow) and run the greedy stage; timed together."""
    ac = cfg.architecture
    train_cfg = TrainConfig(**{**cfg.train.to_dict(), "seed": cfg.train.seed if seed is None else seed})
    train_cfg.batch_size = min(train_cfg.batch_size, len(data))
    t0 = time.perf_counter()
    if ac.n_layers == 1:
        kernel = ScalarKernelSpec.from_dict(ac.outer)
        history = LossHistory()
    else:
        arch = ac.build(data.d_in, data.d_out, len(data))
        params, history = train_deep_kernel(data, arch, train_cfg)
        kernel = DeepKernel(arch, params)
    res = fit_greedy_detailed(kernel, data.X, data.Y, cfg.greedy)
    return FitOutput(res.model, history, res.residual_history, time.perf_counter() - t0)


def kfold_indices(n: int, folds: int, seed: int, groups: np.ndarray | None = None) -> list[np.ndarray]:
    """Validation index sets of a seeded k-fold split (whole groups stay together)."""
    rng = SeededRng(seed)
    if groups is None:
        perm = rng.permutation(n)
        return [np.sort(part) for part in np.array_split(perm, folds)]
    uniq = np.unique(groups)
    parts = np.array_split(uniq[rng.permutation(uniq.size)], folds)
    return [np.flatnonzero(np.isin(groups, part)) for part in parts]


def _grid_combinations(grid: dict) -> list[dict]:
    keys = list(grid)
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]


def cross_validate(cfg: ExperimentConfig, data: ProblemData | None = None) -> tuple[dict, list[dict]]:
    """Pick the grid combination with the smallest mean validation error.

    Returns the chosen overrides and a log of ``{"overrides", "score"}`` rows.
    Ties resolve to the first-listed combination.
    """
    if not cfg.cv:
        raise SchemaError("config has no cv section")
    data = data or make_data(cfg)
    folds = int(cfg.cv.get("folds", 5))
    combos = _grid_combinations(cfg.cv["grid"])
    n = len(data.train[0])
    splits = kfold_indices(n, folds, cfg.seed, data.groups)
    scores = []
    for combo in combos:
        trial = cfg.with_overrides(combo)
        errs = []
        for val_idx in splits:
            train_idx = np.setdiff1d(np.arange(n), val_idx)
            assert np.intersect1d(train_idx, val_idx).size == 0
            for ds in data.train:
                fit = fit_surrogate(trial, ds.subset(train_idx))
                errs.append(relative_test_error(fit.model, ds.subset(val_idx)))
        score = float(np.mean(errs))
        scores.append({"overrides": combo, "score": score})
        log.info("cv %s -> %.4e", combo, score)
    best = int(np.argmin([s["score"] for s in scores]))
    return combos[best], scores


# -- persistence ------------------------------------------------------------


def kernel_to_dict(kernel) -> dict:
    if isinstance(kernel, ScalarKernelSpec):
        return {"type": "shallow", "spec": kernel.to_dict()}
    return {
        "type": "deep",
        "architecture": kernel.arch.to_dict(),
        "params": kernel.params.to_dict(),
    }


def kernel_from_dict(k: dict):
    if k["type"] == "shallow":
        return ScalarKernelSpec.from_dict(k["spec"])
    if k["type"] == "deep":
        arch = DeepKernelArchitecture.from_dict(k["architecture"])
        return DeepKernel(arch, DeepKernelParams.from_dict(k["params"], arch))
    raise SchemaError(f"unknown kernel type {k['type']!r}")


def model_to_dict(model: SurrogateModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kernel": kernel_to_dict(model.kernel),
        "d_in": model.d_in,
        "out_dim": model.out_dim,
        "gamma": model.gamma,
        "centers": model.centers.tolist(),
        "coefficients": model.coefficients.tolist(),
        "selected_indices": [int(i) for i in model.selected_indices],
    }


def model_from_dict(d: dict) -> SurrogateModel:
    if d.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(f"model format_version {d.get('format_version')!r} != {FORMAT_VERSION}")
    try:
        jsonschema.validate(d, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"model file: {exc.message}") from exc
    try:
        kernel = kernel_from_dict(d["kernel"])
        d_in, m = int(d["d_in"]), int(d["out_dim"])
        centers = np.asarray(d["centers"], dtype=float).reshape(-1, d_in)
        coeffs = np.asarray(d["coefficients"], dtype=float).reshape(-1, m)
        if centers.shape[0] != coeffs.shape[0]:
            raise SchemaError("centers and coefficients differ in length")
        return SurrogateModel(kernel, centers, coeffs, float(d["gamma"]), m, list(d.get("selected_indices", [])))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"malformed model file: {exc}") from exc


def save_model(model: SurrogateModel, path: str | Path) -> None:
    # floats are written with repr precision, so reloading is bit-exact
    try:
        Path(path).write_text(json.dumps(model_to_dict(model)))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_model(path: str | Path) -> SurrogateModel:
    try:
        d = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not JSON ({exc})") from exc
    return model_from_dict(d)


# -- experiment -------------------------------------------------------------


@dataclass
class ResultRecord:
    problem: str
    e_rel: float
    e_rel_p10: float
    e_rel_p90: float
    loss_history: list[float]
    residual_history: list[float]
    t_offline: float
    t_online: float
    selected_config: dict
    n_centers: list[int] = field(default_factory=list)
    per_model: list[dict] = field(default_factory=list)
    cv_scores: list[dict] = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ResultRecord":
        if d.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
            raise VersionMismatch("result format_version mismatch")
        return cls(**d)

    def deterministic_view(self) -> dict:
        """Everything except wall-clock timings."""
        d = self.to_dict()
        d.pop("t_offline")
        d.pop("t_online")
        return d


def history_csv(header: tuple[str, str], values: Sequence[float]) -> str:
    lines = [",".join(header)] + [f"{i},{v!r}" for i, v in enumerate(values, start=1)]
    return "\n".join(lines) + "\n"


def read_history_csv(text: str) -> list[float]:
    return [float(r.split(",")[1]) for r in text.strip().splitlines()[1:] if r]


def _online_seconds(model: SurrogateModel, X: np.ndarray) -> float:
    times = []
    for x in X:
        t0 = time.perf_counter()
        predict(model, x[None, :])
        times.append(time.perf_counter() - t0)
    return float(np.mean(times))


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, data: ProblemData | None = None) -> ResultRecord:
    """Generate data, optionally cross-validate, fit, evaluate and write outputs.

    The reported model comes from the base seed; the offline time is the mean
    over ``cfg.timing_runs`` fits with derived seeds (the first being the
    reported one).
    """
    out = Path(out_dir) if out_dir is not None else None
    created = False
    if out is not None and not out.exists():
        out.mkdir(parents=True)
        created = True
    try:
        record, models, files = _run(cfg, data)
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            for name, text in files.items():
                (out / name).write_text(text)
            names = ["model.json"] if len(models) == 1 else [f"model_eq{j + 1}.json" for j in range(len(models))]
            for name, model in zip(names, models):
                save_model(model, out / name)
            (out / "result.json").write_text(json.dumps(record.to_dict(), indent=2))
        return record
    except BaseException:
        if out is not None and created:
            shutil.rmtree(out, ignore_errors=True)
        raise


def _run(cfg: ExperimentConfig, data: ProblemData | None):
    data = data or make_data(cfg)
    cv_scores: list[dict] = []
    if cfg.cv:
        best, cv_scores = cross_validate(cfg, data)
        cfg = cfg.with_overrides(best)

    base = SeededRng(cfg.train.seed)
    run_seeds = [cfg.train.seed] + [int(base.spawn(r).seed) for r in range(1, cfg.timing_runs)]
    fits: list[FitOutput] = []
    offline = []
    for r, seed in enumerate(run_seeds):
        t = 0.0
        for ds in data.train:
            fit = fit_surrogate(cfg, ds, seed)
            t += fit.seconds
            if r == 0:
                fits.append(fit)
        offline.append(t)
    models = [f.model for f in fits]

    if data.ode is not None:
        per = pode_per_sample_errors(models, data.ode["mu_test"], data.ode["U_test"], data.ode["mode"], data.ode["grid"])
        per_sample = per.mean(axis=1)
        e_rel = float(np.mean(per))
    else:
        per_sample = per_sample_relative_errors(models[0], data.test[0])
        e_rel = float(np.mean(per_sample))

    t_online = float(np.mean([_online_seconds(m, ds.X[: min(len(ds), 1000)]) for m, ds in zip(models, data.test)]))
    record = ResultRecord(
        problem=cfg.problem,
        e_rel=e_rel,
        e_rel_p10=float(np.percentile(per_sample, 10)),
        e_rel_p90=float(np.percentile(per_sample, 90)),
        loss_history=list(fits[0].loss_history.epoch_losses),
        residual_history=list(fits[0].residual_history),
        t_offline=float(np.mean(offline)),
        t_online=t_online,
        selected_config=cfg.to_dict(),
        n_centers=[m.n_centers for m in models],
        per_model=[
            {"loss_history": f.loss_history.epoch_losses, "residual_history": f.residual_history}
            for f in fits
        ],
        cv_scores=cv_scores,
    )
    files = {
        "loss.csv": history_csv(("epoch", "mean_loss"), record.loss_history),
        "residuals.csv": history_csv(("iteration", "max_residual"), record.residual_history),
    }
    if len(fits) > 1:
        for j, f in enumerate(fits, start=1):
            files[f"loss_eq{j}.csv"] = history_csv(("epoch", "mean_loss"), f.loss_history.epoch_losses)
            files[f"residuals_eq{j}.csv"] = history_csv(("iteration", "max_residual"), f.residual_history)
    return record, models, files
