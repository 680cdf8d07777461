"""Experiment configuration, snapshot cache and the figure-data pipelines."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import construction as cons
from .mesh import TriMesh, build_benchmark_mesh
from .rom import ReducedModel, corrected_output, estimate, load_reduced_model, reduced_output
from .rom import save_reduced_model, solve_reduced_dual, solve_reduced_primal
from .solvers import AffineModel, build_affine_model, detailed_output, solve_primal
from .stochastics import KLField, DensityModel, kl_eigenpairs

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class CacheError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    mesh_h: float = 1.0 / 3.0
    T: float = 20.0
    K: int = 50
    dt: float | None = None
    kl_terms: int = 10
    kl_correlation_length: float = 2.0
    kl_mean: float = 10.0
    kl_quad_points: int = 2
    uniform_bound: float = math.sqrt(3.0)
    beta_lower: float = 0.1
    beta_upper: float = 10.0
    beta_alpha: float = 50.0
    beta_beta: float = 50.0
    alpha_bar: float = 1.0
    xi_in_ref: float = 0.1
    n_train: int = 100
    n_mc: int = 100
    n_max: int = 15
    tol: float | None = None
    seed_train: int = 20180101
    seed_mc: int = 20180202
    mode: str = "primal"
    weighting: str = "uniform"
    growth: str = "both"
    output_dir: str = "out"
    record_timing: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.K < 1:
            raise ConfigError("K must be a positive integer")
        if self.dt is None:
            self.dt = self.T / self.K
        elif abs(self.dt * self.K - self.T) > 1e-12:
            raise ConfigError(f"dt*K = {self.dt * self.K!r} does not equal T = {self.T!r}")
        if self.mode not in ("primal", "output"):
            raise ConfigError(f"mode must be 'primal' or 'output', got {self.mode!r}")
        if self.weighting not in ("uniform", "pdf"):
            raise ConfigError(f"weighting must be 'uniform' or 'pdf', got {self.weighting!r}")
        for name in ("n_train", "n_mc", "n_max", "kl_terms"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")

    @property
    def density(self) -> DensityModel:
        return DensityModel(
            self.kl_terms, self.uniform_bound, self.beta_lower, self.beta_upper,
            self.beta_alpha, self.beta_beta,
        )

    def snapshot_digest(self) -> str:
        keys = (
            "mesh_h", "T", "K", "kl_terms", "kl_correlation_length", "kl_mean",
            "kl_quad_points", "uniform_bound", "beta_lower", "beta_upper",
            "beta_alpha", "beta_beta", "seed_mc", "n_mc",
        )
        payload = json.dumps({k: repr(getattr(self, k)) for k in keys}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        data = dataclasses.asdict(self)
        if "T" in changes or "K" in changes:
            data["dt"] = None
        data.update(changes)
        return ExperimentConfig(**data)


PROFILES = {
    "desk": {},
    "paper": dict(mesh_h=1.0 / 6.0, T=20.0, K=100, n_train=500, n_mc=500, n_max=30),
}


def profile(name: str) -> ExperimentConfig:
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return ExperimentConfig(**PROFILES[name])


def _field_types() -> dict[str, type]:
    hints = {"mesh_h": float, "T": float, "dt": float, "tol": float}
    out = {}
    for f in dataclasses.fields(ExperimentConfig):
        default = f.default
        out[f.name] = hints.get(f.name, type(default))
    return out


def parse_value(key: str, text: str):
    types = _field_types()
    if key not in types:
        raise ConfigError(f"unknown key {key!r}")
    kind = types[key]
    text = text.strip()
    if text.lower() in ("none", "") and key in ("dt", "tol"):
        return None
    try:
        if kind is bool:
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if kind is int:
            return int(text)
        if kind is float:
            if text.startswith("sqrt(") and text.endswith(")"):
                return math.sqrt(float(Fraction(text[5:-1])))
            return float(Fraction(text))
        return text
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"invalid value {text!r} for {key} ({kind.__name__} expected)") from exc


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read a flat ``key = value`` file (``#`` comments) on top of ``base``."""
    data = dataclasses.asdict(base or ExperimentConfig())
    changed_time = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            try:
                data[key] = parse_value(key, value)
            except ConfigError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
            changed_time |= key in ("T", "K")
            if key == "dt":
                changed_time = False
    if changed_time and "dt" in data:
        data["dt"] = None
    try:
        return ExperimentConfig(**data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w", newline="\n") as fh:
        for k, v in dataclasses.asdict(config).items():
            fh.write(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n")


# --------------------------------------------------------------------------
# problem setup


@dataclass
class Problem:
    config: ExperimentConfig
    mesh: TriMesh
    kl: KLField
    model: AffineModel
    density: DensityModel

    def training_set(self) -> np.ndarray:
        rng = np.random.default_rng(self.config.seed_train)
        return self.density.sample_uniform(rng, self.config.n_train)

    def mc_samples(self) -> np.ndarray:
        rng = np.random.default_rng(self.config.seed_mc)
        return self.density.sample(rng, self.config.n_mc)


def build_problem(config: ExperimentConfig) -> Problem:
    mesh = build_benchmark_mesh(config.mesh_h)
    kl = kl_eigenpairs(
        mesh, config.kl_correlation_length, config.kl_terms, config.kl_mean, config.kl_quad_points
    )
    model = build_affine_model(mesh, kl, config.dt, config.K, config.alpha_bar, config.xi_in_ref)
    return Problem(config, mesh, kl, model, config.density)


@dataclass
class SnapshotCache:
    samples: np.ndarray
    primal: np.ndarray  # (M, K+1, n)
    outputs: np.ndarray
    digest: str
    seeds: dict = field(default_factory=dict)

    def nbytes_expected(self) -> int:
        M, Kp1, n = self.primal.shape
        return 8 * M * Kp1 * n

    def save(self, path) -> None:
        np.savez(
            path, samples=self.samples, primal=self.primal, outputs=self.outputs,
            digest=np.array(self.digest), seed_mc=np.array(self.seeds.get("seed_mc", -1)),
        )

    @classmethod
    def load(cls, path, digest: str | None = None) -> "SnapshotCache":
        with np.load(path) as data:
            found = str(data["digest"])
            if digest is not None and found != digest:
                raise CacheError(
                    f"{path}: snapshot digest {found[:12]} does not match configuration {digest[:12]}"
                )
            return cls(
                data["samples"], data["primal"], data["outputs"], found,
                {"seed_mc": int(data["seed_mc"])},
            )


def cache_path(config: ExperimentConfig) -> Path:
    return Path(config.output_dir) / f"snapshots-{config.snapshot_digest()[:16]}.npz"


def snapshot_cache_build(problem: Problem, path=None, reuse: bool = True) -> SnapshotCache:
    """Detailed trajectories and outputs for the Monte Carlo sample set."""
    cfg = problem.config
    digest = cfg.snapshot_digest()
    path = Path(path) if path is not None else cache_path(cfg)
    if reuse and path.exists():
        log.info("reusing snapshot cache %s", path)
        return SnapshotCache.load(path, digest)
    samples = problem.mc_samples()
    trajectories = np.empty((len(samples), cfg.K + 1, problem.model.n))
    for i, xi in enumerate(samples):
        trajectories[i] = solve_primal(problem.model, xi).values
    outputs = trajectories[:, -1, :] @ problem.model.output
    cache = SnapshotCache(samples, trajectories, outputs, digest, {"seed_mc": cfg.seed_mc})
    path.parent.mkdir(parents=True, exist_ok=True)
    cache.save(path)
    return cache


# --------------------------------------------------------------------------
# pipelines


def greedy_config(problem: Problem, mode: str, weighting: str) -> cons.GreedyConfig:
    cfg = problem.config
    return cons.GreedyConfig(
        problem.training_set(), mode=mode, weighting=weighting, tol=cfg.tol,
        n_max=cfg.n_max, growth=cfg.growth,
    )


def run_greedy(problem: Problem, mode: str, weighting: str) -> cons.GreedyResult:
    return cons.pod_greedy(
        problem.model, greedy_config(problem, mode, weighting), problem.density,
        callback=lambda s: log.info(
            "%s/%s N=%d Ntilde=%d eps=%.3e", mode, weighting, s.N, s.N_dual, s.estimator_max
        ),
    )


def run_offline(config: ExperimentConfig, mode: str | None = None, weighting: str | None = None):
    """Greedy construction; writes ``rom-<mode>-<weighting>.bin`` and the trace CSV."""
    mode = mode or config.mode
    weighting = weighting or config.weighting
    problem = build_problem(config)
    result = run_greedy(problem, mode, weighting)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{mode}-{weighting}"
    rom_path = out / f"rom-{stem}.bin"
    save_reduced_model(
        result.reduced_model, rom_path,
        extra={"basis_primal": result.reductor.primal.vectors,
               "basis_dual": result.reductor.dual.vectors},
    )
    trace_path = out / f"trace-{stem}.csv"
    result.trace.to_csv(trace_path, timing=config.record_timing)
    return result, rom_path, trace_path


def online_report(rm: ReducedModel, xi) -> dict:
    """Reduced and corrected output plus estimators at ``xi`` (reduced data only)."""
    xi = np.asarray(xi, dtype=float)
    c = solve_reduced_primal(rm, xi)
    d = solve_reduced_dual(rm, xi) if rm.N_dual else None
    est = estimate(rm, xi, c, d)
    s = reduced_output(rm, c)
    return {
        "N": rm.N,
        "N_dual": rm.N_dual,
        "in_support": bool(rm.density.in_support(xi)),
        "density": est.density,
        "reduced_output": s,
        "corrected_output": corrected_output(rm, xi, c, d) if d is not None else math.nan,
        "delta_u": est.primal,
        "delta_psi": est.dual,
        "delta_s": est.output,
        "delta_u_weighted": est.primal_weighted,
        "delta_s_weighted": est.output_weighted,
    }


def run_online(rom_path, xi) -> dict:
    rm, _ = load_reduced_model(rom_path)
    return online_report(rm, xi)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) if isinstance(v, (int, np.integer)) else repr(float(v)) for v in row) + "\n")


@dataclass
class ConvergenceData:
    n_values: np.ndarray
    rms_nonweighted: np.ndarray
    rms_weighted: np.ndarray
    rms_pod_projection: np.ndarray
    out_nonweighted: np.ndarray
    out_weighted: np.ndarray
    pod: cons.PodResult
    greedy: dict
    cache: SnapshotCache


def run_convergence(config: ExperimentConfig, write: bool = True) -> ConvergenceData:
    """Non-weighted/weighted greedy spaces vs. the reference POD on shared MC samples."""
    problem = build_problem(config)
    model = problem.model
    cache = snapshot_cache_build(problem)
    n_values = np.arange(1, config.n_max + 1)

    greedy = {
        (mode, w): run_greedy(problem, mode, w)
        for mode in ("primal", "output")
        for w in ("uniform", "pdf")
    }
    rms = {}
    for w in ("uniform", "pdf"):
        res = greedy[("primal", w)]
        rms[w] = cons.mc_rms_solution_error(
            model, cache.primal, cache.samples, res.reductor.primal.vectors, n_values,
            rm=res.reduced_model,
        )
    pod = cons.pod_reference(model, n_max=config.n_max, snapshots=cache.primal)
    n_pod = np.minimum(n_values, pod.modes.shape[1])
    rms_pod = cons.mc_rms_solution_error(model, cache.primal, cache.samples, pod.modes, n_pod)
    out_err = {
        w: cons.mc_abs_output_error(greedy[("output", w)].reduced_model, cache.samples, cache.outputs, n_values)
        for w in ("uniform", "pdf")
    }
    data = ConvergenceData(
        n_values, rms["uniform"], rms["pdf"], rms_pod, out_err["uniform"], out_err["pdf"],
        pod, greedy, cache,
    )
    if write:
        write_convergence(config, data)
    return data


def write_convergence(config: ExperimentConfig, data: ConvergenceData) -> dict[str, Path]:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.csv" for name in ("fig2", "fig3a", "fig3b", "pod_eigenvalues")}
    dens = config.density
    grid = np.linspace(dens.beta_lower, dens.beta_upper, 201)
    _write_csv(paths["fig2"], ["xi_in", "pdf"], zip(grid, dens.beta_pdf(grid)))
    _write_csv(
        paths["fig3a"],
        ["N", "rms_nonweighted", "rms_weighted", "rms_pod_projection"],
        zip(data.n_values, data.rms_nonweighted, data.rms_weighted, data.rms_pod_projection),
    )
    _write_csv(
        paths["fig3b"],
        ["N", "out_nonweighted", "out_weighted"],
        zip(data.n_values, data.out_nonweighted, data.out_weighted),
    )
    data.pod.to_csv(paths["pod_eigenvalues"])
    for (mode, w), res in data.greedy.items():
        res.trace.to_csv(out / f"trace-{mode}-{w}.csv", timing=config.record_timing)
    return paths


def config_self_test(config: ExperimentConfig) -> dict:
    """Instantiate the problem and report the constants it actually uses."""
    problem = build_problem(config)
    m = problem.model
    return {
        "T": m.T,
        "K": m.K,
        "dt": m.dt,
        "Q": problem.kl.n_terms,
        "a": problem.kl.correlation_length,
        "mean": problem.kl.mean_value,
        "n_train": config.n_train,
        "alpha_bar": m.alpha_bar,
        "xi_ref": m.xi_ref.tolist(),
        "dofs": m.n,
        "Qa": m.Qa,
        "Qb": m.Qb,
    }

