"""Offline space construction and Monte Carlo error statistics.

* :func:`pod_greedy` -- weak POD-greedy, primal-only or primal-dual (output),
  with uniform or density-weighted estimator maximization.
* :func:`pod_reference` -- POD of a snapshot set in the reference energy
  product (thin SVD by default; method of snapshots and the spatial
  correlation operator are available for cross-checks).
* ``mc_*`` -- root-mean-square solution errors and mean absolute output errors
  over a fixed sample set, for a range of reduced dimensions.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as la

from .linalg import sym_eig
from .rom import (
    BasisExtensionError,
    ReducedBasis,
    ReducedModel,
    Reductor,
    corrected_output,
    estimate,
    extend_basis,
    reduced_output,
    solve_reduced_dual,
    solve_reduced_primal,
)
from .solvers import AffineModel, final_dual_state, solve_both, solve_primal
from .stochastics import BENCHMARK_DENSITY, DensityModel


class Mode(str, enum.Enum):
    PRIMAL = "primal"
    OUTPUT = "output"


class Weighting(str, enum.Enum):
    UNIFORM = "uniform"
    PDF = "pdf"


def pod1(trajectory, xref) -> np.ndarray:
    """Dominant POD mode of a trajectory (rows are snapshots), X_ref-normalized.

    The sign is fixed so that the entry of largest magnitude is positive.
    """
    E = np.atleast_2d(np.asarray(trajectory, dtype=float))
    XE = (xref @ E.T).T
    corr = E @ XE.T
    corr = 0.5 * (corr + corr.T)
    if not np.any(E) or np.trace(corr) <= 0.0:
        raise BasisExtensionError("trajectory is identically zero")
    spec = sym_eig(corr, tol=1e-10)
    mode = spec.eigenvectors[:, 0] @ E
    norm = np.sqrt(max(mode @ (xref @ mode), 0.0))
    if norm == 0.0:
        raise BasisExtensionError("dominant POD mode vanished")
    mode /= norm
    i = np.argmax(np.abs(mode))
    return mode if mode[i] > 0 else -mode


# --------------------------------------------------------------------------
# POD-greedy


@dataclass
class GreedyConfig:
    training_set: np.ndarray
    mode: Mode = Mode.PRIMAL
    weighting: Weighting = Weighting.UNIFORM
    tol: float | None = None
    n_max: int | None = 30
    density: Callable | None = None  # overrides the joint pdf for PDF weighting
    growth: str = "both"  # OUTPUT mode: "both" spaces per iteration, or "alternate"

    def __post_init__(self):
        self.training_set = np.atleast_2d(np.asarray(self.training_set, dtype=float))
        self.mode = Mode(self.mode)
        self.weighting = Weighting(self.weighting)
        if self.training_set.shape[0] < 1:
            raise ValueError("training set is empty")
        if self.tol is None and self.n_max is None:
            raise ValueError("set at least one stopping rule (tol or n_max)")
        if self.n_max is not None and self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if self.growth not in ("both", "alternate"):
            raise ValueError(f"unknown growth policy {self.growth!r}")


@dataclass
class GreedyStep:
    iteration: int
    N: int
    N_dual: int
    estimator_max: float
    argmax: int  # training index maximizing the estimator at this (N, N_dual)
    selected: int  # training index that produced the newest basis vector(s)
    xi_in_selected: float
    seconds: float
    skipped: list[int] = field(default_factory=list)


@dataclass
class GreedyTrace:
    steps: list[GreedyStep] = field(default_factory=list)
    estimator_values: list[np.ndarray] = field(default_factory=list)

    def to_csv(self, path, timing: bool = True) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("iter,N,Ntilde,estimator_max,xi_in_selected,seconds\n")
            for s in self.steps:
                sec = s.seconds if timing else 0.0
                fh.write(
                    f"{s.iteration},{s.N},{s.N_dual},{s.estimator_max!r},"
                    f"{s.xi_in_selected!r},{sec!r}\n"
                )


@dataclass
class GreedyResult:
    reductor: Reductor
    trace: GreedyTrace
    config: GreedyConfig

    @property
    def reduced_model(self) -> ReducedModel:
        return self.reductor.reduced_model()


def estimator_sweep(rm: ReducedModel, config: GreedyConfig, weights: np.ndarray) -> np.ndarray:
    """Configured selection criterion at every training parameter."""
    vals = np.empty(config.training_set.shape[0])
    output = config.mode is Mode.OUTPUT
    if not output and rm.N_dual:
        rm = rm.truncate(rm.N, 0)
    for i, xi in enumerate(config.training_set):
        c = solve_reduced_primal(rm, xi)
        d = solve_reduced_dual(rm, xi) if output else None
        est = estimate(rm, xi, c, d, density=_unit)
        vals[i] = est.output if output else est.primal
    return vals * weights


def _unit(_xi) -> float:
    return 1.0


def _selection_weights(config: GreedyConfig, density: DensityModel) -> np.ndarray:
    if config.weighting is Weighting.UNIFORM:
        return np.ones(config.training_set.shape[0])
    f = config.density if config.density is not None else density.joint_pdf
    return np.array([float(f(xi)) for xi in config.training_set])


def _first_argmax(values: np.ndarray) -> int:
    # np.argmax returns the lowest index among ties
    return int(np.argmax(values))


def pod_greedy(
    model: AffineModel,
    config: GreedyConfig,
    density: DensityModel = BENCHMARK_DENSITY,
    callback: Callable[[GreedyStep], None] | None = None,
) -> GreedyResult:
    """Weak POD-greedy construction of a primal (and, in OUTPUT mode, dual) space.

    The first primal vector is the final state at the training parameter with
    the largest ``xi_in``. The dual space always starts from the
    parameter-independent final dual state (so even a PRIMAL-mode model can
    report a corrected output); only OUTPUT mode grows it further.
    """
    train = config.training_set
    output = config.mode is Mode.OUTPUT
    weights = _selection_weights(config, density)
    red = Reductor(model, density)
    trace = GreedyTrace()

    t0 = time.perf_counter()
    first = _first_argmax(train[:, -1])
    red.extend_primal(solve_primal(model, train[first]).final)
    red.extend_dual(final_dual_state(model))
    selected, skipped = first, []

    iteration = 0
    while True:
        rm = red.reduced_model()
        values = estimator_sweep(rm, config, weights)
        best = _first_argmax(values)
        step = GreedyStep(
            iteration=iteration,
            N=red.N,
            N_dual=red.N_dual,
            estimator_max=float(values[best]),
            argmax=best,
            selected=selected,
            xi_in_selected=float(train[selected, -1]),
            seconds=time.perf_counter() - t0,
            skipped=skipped,
        )
        trace.steps.append(step)
        trace.estimator_values.append(values)
        if callback is not None:
            callback(step)
        if (config.tol is not None and step.estimator_max <= config.tol) or (
            config.n_max is not None and red.N >= config.n_max
        ):
            break

        t0 = time.perf_counter()
        iteration += 1
        grow_primal = not output or config.growth == "both" or iteration % 2 == 1
        grow_dual = output and (config.growth == "both" or iteration % 2 == 0)
        candidates = values.copy()
        skipped = []
        while True:
            if not np.isfinite(candidates).any() or np.all(candidates == -np.inf):
                raise RuntimeError("every training parameter is already represented")
            j = _first_argmax(candidates)
            try:
                _extend_at(red, model, train[j], grow_primal, grow_dual)
            except BasisExtensionError:
                candidates[j] = -np.inf
                skipped.append(j)
                continue
            selected = j
            break
    return GreedyResult(red, trace, config)


def _extend_at(red: Reductor, model: AffineModel, xi, grow_primal: bool, grow_dual: bool) -> None:
    U, P = solve_both(model, xi) if grow_dual else (solve_primal(model, xi), None)
    new_p = new_d = None
    if grow_primal:
        new_p = pod1(U.values - red.project(U.values, "primal"), model.xref)
    if grow_dual:
        new_d = pod1(P.values - red.project(P.values, "dual"), model.xref)
    # validate both before mutating so a rejection leaves the spaces untouched
    if new_p is not None:
        _check_new(red.primal.vectors, new_p, model.xref)
    if new_d is not None:
        _check_new(red.dual.vectors, new_d, model.xref)
    if new_p is not None:
        red.extend_primal(new_p)
    if new_d is not None:
        red.extend_dual(new_d)


def _check_new(Z: np.ndarray, v: np.ndarray, xref) -> None:
    extend_basis(ReducedBasis(Z), v, xref)


# --------------------------------------------------------------------------
# reference POD


@dataclass(frozen=True)
class PodResult:
    modes: np.ndarray  # (n, n_modes), X_ref-orthonormal
    eigenvalues: np.ndarray  # full spectrum, descending, nonnegative
    total: float  # (dt/M) sum_i sum_k |||u^k(xi_i)|||^2 = sum of all eigenvalues
    n_samples: int
    n_steps: int
    dt: float

    def tail(self, N: int) -> float:
        """``sum_{l > N} sigma_l``, summed directly (no cancellation against the total)."""
        return float(np.sum(self.eigenvalues[N:][::-1]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("index,sigma\n")
            for i, s in enumerate(self.eigenvalues, start=1):
                fh.write(f"{i},{float(s)!r}\n")


def _x_orthonormalize(V: np.ndarray, xref) -> np.ndarray:
    out = np.zeros((V.shape[0], 0))
    for v in V.T:
        w = v.copy()
        for _ in range(2):
            w -= out @ ((xref @ out).T @ w)
        norm = np.sqrt(max(w @ (xref @ w), 0.0))
        if norm <= 1e-10 * np.sqrt(max(v @ (xref @ v), 0.0)):
            break
        out = np.column_stack([out, w / norm])
    return out


def pod_reference(
    model: AffineModel,
    samples=None,
    n_max: int = 30,
    snapshots: np.ndarray | None = None,
    method: str = "svd",
    max_gram: int = 20000,
) -> PodResult:
    """POD in the ``X_ref`` product of the snapshots ``u^k(xi_i)``, ``k = 1..K``.

    Minimizes ``(dt/M) sum_i sum_k |||u^k - P u^k|||^2``. ``snapshots`` of
    shape ``(M, K+1, n)`` are reused if given, otherwise computed from
    ``samples``. With ``X_ref = L L^T`` and ``B = sqrt(dt/M) L^T S^T``:

    * ``"snapshots"`` -- eigenpairs of the ``MK x MK`` Gram matrix ``B^T B``;
    * ``"spatial"`` -- eigenpairs of the ``n x n`` correlation ``B B^T``;
    * ``"svd"`` -- thin SVD of ``B`` (same spectrum; small eigenvalues keep
      full relative accuracy instead of an ``eps * sigma_1`` floor).
    """
    if snapshots is None:
        if samples is None:
            raise ValueError("need samples or snapshots")
        snapshots = np.array([solve_primal(model, xi).values for xi in np.atleast_2d(samples)])
    M, Kp1, n = snapshots.shape
    K = Kp1 - 1
    S = snapshots[:, 1:, :].reshape(M * K, n)
    scale = model.dt / M
    X = model.xref
    L = la.cholesky(X.toarray(), lower=True)
    B = np.sqrt(scale) * (L.T @ S.T)
    total = float(np.sum(B * B))

    if method == "snapshots":
        if M * K > max_gram:
            raise MemoryError(f"snapshot Gram matrix of size {M * K} exceeds cap {max_gram}")
        spec = sym_eig(_sym(B.T @ B), tol=1e-10)
        sigma = np.clip(spec.eigenvalues, 0.0, None)
        k = _numerical_rank(sigma, n_max)
        left = (B @ spec.eigenvectors[:, :k]) / np.sqrt(sigma[:k])
    elif method == "spatial":
        spec = sym_eig(_sym(B @ B.T), tol=1e-10)
        sigma = np.clip(spec.eigenvalues, 0.0, None)
        k = _numerical_rank(sigma, n_max)
        left = spec.eigenvectors[:, :k]
    elif method == "svd":
        # wide B: reduce to the n x n triangle first so the right factor is never formed
        core = la.qr(B.T, mode="r", overwrite_a=True)[0][: B.shape[0]].T if B.shape[1] > B.shape[0] else B
        left_all, sv, _ = la.svd(core, full_matrices=False, lapack_driver="gesdd")
        sigma = sv**2
        k = _numerical_rank(sigma, n_max)
        left = left_all[:, :k]
    else:
        raise ValueError(f"unknown POD method {method!r}")

    modes = _x_orthonormalize(la.solve_triangular(L.T, left, lower=False), X)
    signs = np.sign(modes[np.argmax(np.abs(modes), axis=0), np.arange(modes.shape[1])])
    return PodResult(modes * signs, sigma, total, M, K, model.dt)


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def _numerical_rank(sigma: np.ndarray, n_max: int) -> int:
    if sigma.size == 0 or sigma[0] <= 0.0:
        return 0
    return int(min(n_max, np.count_nonzero(sigma > 1e-14 * sigma[0])))


def pod_projection_error(model: AffineModel, basis: np.ndarray, snapshots: np.ndarray, N: int) -> float:
    """Mean-square X_ref projection error of ``snapshots`` onto the first ``N`` columns."""
    Z = basis[:, :N]
    XZ = model.xref @ Z
    M = snapshots.shape[0]
    total = 0.0
    for U in snapshots:
        E = U[1:] - (U[1:] @ XZ) @ Z.T
        total += np.einsum("ki,ki->", E, (model.xref @ E.T).T)
    return model.dt / M * total


# --------------------------------------------------------------------------
# Monte Carlo statistics


def _check_samples(snapshots: np.ndarray, samples: np.ndarray) -> None:
    if snapshots.shape[0] != np.atleast_2d(samples).shape[0]:
        raise ValueError(
            f"snapshot cache has {snapshots.shape[0]} samples but {len(samples)} were requested"
        )


def mc_rms_solution_error(
    model: AffineModel,
    snapshots: np.ndarray,
    samples: np.ndarray,
    basis: np.ndarray,
    n_values,
    rm: ReducedModel | None = None,
) -> np.ndarray:
    """``sqrt(mean_i dt sum_{k=1..K} |||u_h^k - u_N^k|||_ref^2)`` for each ``N``.

    With ``rm`` the reduced solution is the Galerkin solution on the leading
    ``N`` vectors of ``basis``; without it, the X_ref-orthogonal projection.
    """
    samples = np.atleast_2d(samples)
    _check_samples(snapshots, samples)
    X = model.xref
    out = []
    for N in n_values:
        Z = basis[:, :N]
        XZ = X @ Z
        sub = rm.truncate(N, 0) if rm is not None else None
        acc = 0.0
        for U, xi in zip(snapshots, samples):
            if sub is None:
                approx = (U[1:] @ XZ) @ Z.T
            else:
                approx = solve_reduced_primal(sub, xi)[1:] @ Z.T
            E = U[1:] - approx
            acc += np.einsum("ki,ki->", E, (X @ E.T).T)
        out.append(np.sqrt(model.dt * acc / len(samples)))
    return np.array(out)


def mc_abs_output_error(
    rm: ReducedModel,
    samples: np.ndarray,
    outputs: np.ndarray,
    n_values,
    corrected: bool = True,
) -> np.ndarray:
    """``mean_i |s_h(xi_i) - s_N(xi_i)|`` for each ``N`` (dual size tied to ``N``)."""
    samples = np.atleast_2d(samples)
    outputs = np.asarray(outputs, dtype=float)
    if outputs.shape[0] != samples.shape[0]:
        raise ValueError(f"{outputs.shape[0]} outputs for {samples.shape[0]} samples")
    out = []
    for N in n_values:
        sub = rm.truncate(N, min(N, rm.N_dual) if corrected else 0)
        errs = []
        for xi, s_h in zip(samples, outputs):
            c = solve_reduced_primal(sub, xi)
            s_N = corrected_output(sub, xi, c) if corrected else reduced_output(sub, c)
            errs.append(abs(s_h - s_N))
        out.append(np.mean(errs))
    return np.array(out)
