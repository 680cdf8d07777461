"""Parameter-separable benchmark model and the detailed implicit-Euler solvers."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from . import fem
from .linalg import SPDFactor
from .mesh import Tag, TriMesh
from .stochastics import KLField


@dataclass(frozen=True)
class AffineModel:
    """FE operators of ``a(.,.;xi) = sum theta_q^a(xi) a_q`` and
    ``b(.;xi) = sum theta_q^b(xi) b_q`` plus time-stepping data.

    Matrix components (``Qa = Q + 3``): stiffness, OUT mass weighted by the
    field mean, ``Q`` OUT masses weighted by the KL modes, IN mass.
    Load components (``Qb = Q + 1``): OUT load weighted by the mean, ``Q``
    OUT loads weighted by the KL modes.
    """

    A: tuple
    b: np.ndarray  # (Qb, n)
    mass: sp.csr_matrix
    output: np.ndarray
    xref: sp.csr_matrix
    kl_sqrt_eigenvalues: np.ndarray
    dt: float
    K: int
    alpha_bar: float = 1.0
    xi_ref: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n(self) -> int:
        return self.mass.shape[0]

    @property
    def Q(self) -> int:
        return len(self.kl_sqrt_eigenvalues)

    @property
    def Qa(self) -> int:
        return len(self.A)

    @property
    def Qb(self) -> int:
        return self.b.shape[0]

    @property
    def T(self) -> float:
        return self.dt * self.K

    def theta_a(self, xi) -> np.ndarray:
        return theta_a(xi, self.kl_sqrt_eigenvalues)

    def theta_b(self, xi) -> np.ndarray:
        return theta_b(xi, self.kl_sqrt_eigenvalues)

    def matrix(self, xi):
        """Assembled ``A(xi)``."""
        th = self.theta_a(xi)
        out = th[0] * self.A[0]
        for t, Aq in zip(th[1:], self.A[1:]):
            out = out + t * Aq
        return out.tocsr()

    def load(self, xi) -> np.ndarray:
        return self.theta_b(xi) @ self.b


def theta_a(xi, sqrt_lam) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    Q = len(sqrt_lam)
    return np.concatenate([[1.0, 1.0], sqrt_lam * xi[:Q], [xi[Q]]])


def theta_b(xi, sqrt_lam) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    Q = len(sqrt_lam)
    return np.concatenate([[1.0], sqrt_lam * xi[:Q]])


def reference_parameter(Q: int, xi_in_ref: float = 0.1) -> np.ndarray:
    return np.append(np.zeros(Q), xi_in_ref)


def build_affine_model(
    mesh: TriMesh, kl: KLField, dt: float, K: int, alpha_bar: float = 1.0, xi_in_ref: float = 0.1
) -> AffineModel:
    if kl.nodes.size and kl.nodes.max() >= mesh.n_nodes:
        raise ValueError("KL field was computed on a different mesh")
    out_nodes = mesh.boundary_nodes(Tag.OUT)
    if kl.nodes.size != out_nodes.size or not np.array_equal(np.sort(kl.nodes), out_nodes):
        raise ValueError("KL traces do not cover the OUT boundary nodes of this mesh")
    n = mesh.n_nodes
    modes = [kl.nodal_mode(l, n) for l in range(kl.n_terms)]
    A = [fem.assemble_stiffness(mesh), fem.assemble_boundary_mass(mesh, Tag.OUT, kl.mean_value)]
    A += [fem.assemble_boundary_mass(mesh, Tag.OUT, phi) for phi in modes]
    A.append(fem.assemble_boundary_mass(mesh, Tag.IN, 1.0))
    b = [fem.assemble_boundary_load(mesh, Tag.OUT, kl.mean_value)]
    b += [fem.assemble_boundary_load(mesh, Tag.OUT, phi) for phi in modes]
    mass = fem.assemble_mass(mesh)
    sqrt_lam = np.sqrt(kl.eigenvalues)
    xi_ref = reference_parameter(kl.n_terms, xi_in_ref)
    th = theta_a(xi_ref, sqrt_lam)
    xref = A[0] * th[0]
    for t, Aq in zip(th[1:], A[1:]):
        if t != 0.0:
            xref = xref + t * Aq
    return AffineModel(
        A=tuple(A),
        b=np.array(b),
        mass=mass,
        output=fem.assemble_output_vector(mesh, mass),
        xref=xref.tocsr(),
        kl_sqrt_eigenvalues=sqrt_lam,
        dt=float(dt),
        K=int(K),
        alpha_bar=float(alpha_bar),
        xi_ref=xi_ref,
    )


def assemble_system(model: AffineModel, xi):
    """Implicit-Euler system ``(M + dt A(xi), dt b(xi))``."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (model.Q + 1,):
        raise ValueError(f"parameter must have length {model.Q + 1}, got shape {xi.shape}")
    return (model.mass + model.dt * model.matrix(xi)).tocsr(), model.dt * model.load(xi)


@dataclass(frozen=True)
class Trajectory:
    """Coefficient vectors for ``k = 0..K`` (rows)."""

    values: np.ndarray
    direction: str  # "primal" (forward) or "dual" (backward)

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def save(self, path) -> None:
        np.savetxt(path, self.values, delimiter=",")


def solve_primal(model: AffineModel, xi, factor: SPDFactor | None = None) -> Trajectory:
    S, rhs = assemble_system(model, xi)
    if factor is None:
        factor = SPDFactor(S)
    U = np.zeros((model.K + 1, model.n))
    for k in range(1, model.K + 1):
        U[k] = factor.solve(model.mass @ U[k - 1] + rhs)
    return Trajectory(U, "primal")


def solve_dual(model: AffineModel, xi, factor: SPDFactor | None = None) -> Trajectory:
    """Backward sweep; ``A`` is symmetric, so the primal system matrix is reused."""
    if factor is None:
        factor = SPDFactor(assemble_system(model, xi)[0])
    P = np.empty((model.K + 1, model.n))
    P[-1] = final_dual_state(model)
    for k in range(model.K - 1, -1, -1):
        P[k] = factor.solve(model.mass @ P[k + 1])
    return Trajectory(P, "dual")


def final_dual_state(model: AffineModel) -> np.ndarray:
    """Solution of ``M psi = ell``; parameter independent."""
    return SPDFactor(model.mass).solve(model.output)


def solve_both(model: AffineModel, xi) -> tuple[Trajectory, Trajectory]:
    factor = SPDFactor(assemble_system(model, xi)[0])
    return solve_primal(model, xi, factor), solve_dual(model, xi, factor)


def detailed_output(model: AffineModel, trajectory: Trajectory | np.ndarray) -> float:
    U = trajectory.values if isinstance(trajectory, Trajectory) else np.asarray(trajectory)
    return float(model.output @ U[-1])


def _sqrt_checked(value: float) -> float:
    if value < -1e-12:
        raise ValueError(f"negative quadratic form {value:.3e}: coercivity lost")
    return float(np.sqrt(max(value, 0.0)))


def energy_norm(model: AffineModel, v, xi) -> float:
    v = np.asarray(v, dtype=float)
    return _sqrt_checked(v @ (model.matrix(xi) @ v))


def reference_norm(model: AffineModel, v) -> float:
    v = np.asarray(v, dtype=float)
    return _sqrt_checked(v @ (model.xref @ v))


def primal_spacetime_norm(model: AffineModel, V, xi) -> float:
    """``sqrt(|v^K|_L2^2 + dt sum_{k=1..K} |||v^k|||_xi^2)``."""
    V = np.asarray(V, dtype=float)
    A = model.matrix(xi)
    vK = V[-1]
    energy = np.einsum("ki,ki->", V[1:], (A @ V[1:].T).T)
    return _sqrt_checked(vK @ (model.mass @ vK) + model.dt * energy)


def dual_spacetime_norm(model: AffineModel, V, xi) -> float:
    """``sqrt(|v^0|_L2^2 + dt sum_{k=0..K-1} |||v^k|||_xi^2)``."""
    V = np.asarray(V, dtype=float)
    A = model.matrix(xi)
    v0 = V[0]
    energy = np.einsum("ki,ki->", V[:-1], (A @ V[:-1].T).T)
    return _sqrt_checked(v0 @ (model.mass @ v0) + model.dt * energy)


def coercivity_ratio(model: AffineModel, xi) -> float:
    """``min_v a(v,v;xi) / |||v|||_ref^2`` by a dense generalized eigensolve."""
    A = model.matrix(xi).toarray()
    X = model.xref.toarray()
    return float(la.eigh(A, X, eigvals_only=True, subset_by_index=[0, 0])[0])


def check_coercivity(model: AffineModel, samples) -> float:
    """Smallest coercivity ratio over ``samples``; warns if below ``alpha_bar``."""
    worst = min(coercivity_ratio(model, xi) for xi in np.atleast_2d(samples))
    if worst < model.alpha_bar:
        warnings.warn(
            f"coercivity ratio {worst:.4f} < alpha_bar={model.alpha_bar} on sampled parameters",
            RuntimeWarning,
            stacklevel=2,
        )
    return worst
