"""Reduced bases, projected operators, online solves and a posteriori estimators.

Offline work happens in :class:`Reductor`, which owns every FE-dimension
array. It hands out frozen :class:`ReducedModel` snapshots whose arrays are
all of reduced size; online solves and estimators only touch those.

Residual dual norms
-------------------
Every residual is a linear combination ``R y`` of Riesz representers ``R``
(X_ref-solves of load, mass and affine-operator functionals applied to
basis vectors). Instead of the Gram matrix ``R^T X R`` the snapshot stores
the triangular factor ``C`` of an X_ref-orthonormal QR of ``R``, so that
``|R y|_X = |C y|_2`` is evaluated without the square-root-of-epsilon
cancellation of the Gram quadratic form.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la

from .linalg import SPDFactor
from .solvers import AffineModel, final_dual_state, theta_a, theta_b
from .stochastics import BENCHMARK_DENSITY, DensityModel

_DEPENDENCE_TOL = 1e-10


class BasisExtensionError(ValueError):
    """The candidate vector already lies in the span of the basis."""


@dataclass(frozen=True)
class ReducedBasis:
    """Columns X_ref-orthonormal, shape ``(n, N)``."""

    vectors: np.ndarray
    role: str = "primal"

    @property
    def size(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def empty(cls, n: int, role: str = "primal") -> "ReducedBasis":
        return cls(np.zeros((n, 0)), role)


def _gram_schmidt(W: np.ndarray, XW: np.ndarray, v: np.ndarray, X, passes: int = 2):
    """Orthogonalize ``v`` against X-orthonormal ``W``; returns (coeffs, remainder)."""
    coeffs = np.zeros(W.shape[1])
    w = v.copy()
    for _ in range(passes):
        if W.shape[1] == 0:
            break
        c = XW.T @ w
        w -= W @ c
        coeffs += c
    return coeffs, w


def extend_basis(basis: ReducedBasis, candidate, xref) -> ReducedBasis:
    """Append the X_ref-normalized orthogonal remainder of ``candidate``."""
    v = np.asarray(candidate, dtype=float)
    Z = basis.vectors
    if v.shape != (Z.shape[0],):
        raise ValueError(f"candidate must have length {Z.shape[0]}, got shape {v.shape}")
    norm0 = np.sqrt(max(v @ (xref @ v), 0.0))
    if norm0 == 0.0:
        raise BasisExtensionError("candidate is the zero vector")
    _, w = _gram_schmidt(Z, xref @ Z, v, xref)
    norm = np.sqrt(max(w @ (xref @ w), 0.0))
    if norm <= _DEPENDENCE_TOL * norm0:
        raise BasisExtensionError(
            f"candidate lies in the span of the basis (relative remainder {norm / norm0:.2e})"
        )
    return ReducedBasis(np.column_stack([Z, w / norm]), basis.role)


# --------------------------------------------------------------------------
# online snapshot


@dataclass(frozen=True)
class EstimateBundle:
    primal: float
    dual: float
    output: float
    final_condition: float
    density: float

    @property
    def primal_weighted(self) -> float:
        return self.primal * self.density

    @property
    def output_weighted(self) -> float:
        return self.output * self.density


@dataclass(frozen=True)
class ReducedModel:
    """Everything the online stage needs; no array has FE dimension.

    Naming: ``*_pp`` primal-primal, ``*_dd`` dual-dual, ``*_dp`` dual-tested
    primal trial (cross blocks for the output correction).
    """

    sqrt_lam: np.ndarray
    dt: float
    K: int
    alpha_bar: float
    A_pp: np.ndarray  # (Qa, N, N)
    M_pp: np.ndarray
    b_p: np.ndarray  # (Qb, N)
    ell_p: np.ndarray
    A_dd: np.ndarray  # (Qa, Nd, Nd)
    M_dd: np.ndarray
    ell_d: np.ndarray
    A_dp: np.ndarray  # (Qa, Nd, N)
    M_dp: np.ndarray
    b_d: np.ndarray  # (Qb, Nd)
    riesz_primal: np.ndarray  # (r, Qb + N*(Qa+1))
    riesz_dual: np.ndarray  # (r, Nd*(Qa+1))
    final_condition: np.ndarray  # (Nd,) estimator value for each leading dual size
    density: DensityModel = field(default=BENCHMARK_DENSITY)

    @property
    def N(self) -> int:
        return self.M_pp.shape[0]

    @property
    def N_dual(self) -> int:
        return self.M_dd.shape[0]

    @property
    def Qa(self) -> int:
        return self.A_pp.shape[0]

    @property
    def Qb(self) -> int:
        return self.b_p.shape[0]

    @property
    def gram_primal(self) -> np.ndarray:
        """Gram matrix of the primal Riesz representers in the X_ref product."""
        return self.riesz_primal.T @ self.riesz_primal

    @property
    def gram_dual(self) -> np.ndarray:
        return self.riesz_dual.T @ self.riesz_dual

    def truncate(self, N: int | None = None, N_dual: int | None = None) -> "ReducedModel":
        """Snapshot restricted to the leading ``N`` primal / ``N_dual`` dual vectors."""
        N = self.N if N is None else N
        Nd = self.N_dual if N_dual is None else N_dual
        if not (0 <= N <= self.N and 0 <= Nd <= self.N_dual):
            raise ValueError(f"cannot truncate ({self.N}, {self.N_dual}) to ({N}, {Nd})")
        q = self.Qa + 1
        return replace(
            self,
            A_pp=self.A_pp[:, :N, :N],
            M_pp=self.M_pp[:N, :N],
            b_p=self.b_p[:, :N],
            ell_p=self.ell_p[:N],
            A_dd=self.A_dd[:, :Nd, :Nd],
            M_dd=self.M_dd[:Nd, :Nd],
            ell_d=self.ell_d[:Nd],
            A_dp=self.A_dp[:, :Nd, :N],
            M_dp=self.M_dp[:Nd, :N],
            b_d=self.b_d[:, :Nd],
            riesz_primal=_trim_rows(self.riesz_primal[:, : self.Qb + N * q]),
            riesz_dual=_trim_rows(self.riesz_dual[:, : Nd * q]),
            final_condition=self.final_condition[:Nd],
        )

    def arrays(self) -> dict[str, np.ndarray]:
        """Named arrays for persistence (scalars as length-1 arrays)."""
        out = {
            name: np.asarray(getattr(self, name), dtype=float)
            for name in (
                "sqrt_lam", "A_pp", "M_pp", "b_p", "ell_p", "A_dd", "M_dd", "ell_d",
                "A_dp", "M_dp", "b_d", "riesz_primal", "riesz_dual", "final_condition",
            )
        }
        out["dt"] = np.array([self.dt])
        out["K"] = np.array([float(self.K)])
        out["alpha_bar"] = np.array([self.alpha_bar])
        d = self.density
        out["density"] = np.array(
            [d.n_kl, d.uniform_bound, d.beta_lower, d.beta_upper, d.beta_alpha, d.beta_beta],
            dtype=float,
        )
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "ReducedModel":
        a = dict(arrays)
        dens = a.pop("density")
        density = DensityModel(int(dens[0]), *map(float, dens[1:]))
        dt = float(a.pop("dt")[0])
        K = int(a.pop("K")[0])
        alpha_bar = float(a.pop("alpha_bar")[0])
        return cls(dt=dt, K=K, alpha_bar=alpha_bar, density=density, **a)


def _trim_rows(C: np.ndarray) -> np.ndarray:
    used = np.flatnonzero(np.any(C != 0.0, axis=1))
    return C[: used[-1] + 1] if used.size else C[:0]


# --------------------------------------------------------------------------
# online solves


def _system(rm: ReducedModel, A_red: np.ndarray, M_red: np.ndarray, xi):
    th = theta_a(xi, rm.sqrt_lam)
    S = M_red + rm.dt * np.tensordot(th, A_red, axes=1)
    try:
        lu = la.lu_factor(S, check_finite=True)
    except la.LinAlgError as exc:
        raise la.LinAlgError(f"singular reduced system: {exc}") from exc
    if np.any(np.diag(lu[0]) == 0.0):
        raise la.LinAlgError("singular reduced system (basis degeneracy)")
    return lu


def solve_reduced_primal(rm: ReducedModel, xi) -> np.ndarray:
    """Coefficients ``c[k]`` for ``k = 0..K`` of the reduced primal trajectory."""
    xi = np.asarray(xi, dtype=float)
    N = rm.N
    c = np.zeros((rm.K + 1, N))
    if N == 0:
        return c
    lu = _system(rm, rm.A_pp, rm.M_pp, xi)
    step = la.lu_solve(lu, rm.M_pp)
    load = la.lu_solve(lu, rm.dt * (theta_b(xi, rm.sqrt_lam) @ rm.b_p))
    for k in range(1, rm.K + 1):
        c[k] = step @ c[k - 1] + load
    return c


def solve_reduced_dual(rm: ReducedModel, xi) -> np.ndarray:
    """Coefficients ``d[k]`` of the reduced dual trajectory (backward in time)."""
    xi = np.asarray(xi, dtype=float)
    Nd = rm.N_dual
    d = np.zeros((rm.K + 1, Nd))
    if Nd == 0:
        return d
    d[-1] = la.solve(rm.M_dd, rm.ell_d, assume_a="pos")
    lu = _system(rm, rm.A_dd, rm.M_dd, xi)
    step = la.lu_solve(lu, rm.M_dd)
    for k in range(rm.K - 1, -1, -1):
        d[k] = step @ d[k + 1]
    return d


def reduced_output(rm: ReducedModel, c: np.ndarray) -> float:
    """Uncorrected output ``l(u_N^K)``."""
    return float(rm.ell_p @ c[-1])


def output_correction(rm: ReducedModel, xi, c: np.ndarray, d: np.ndarray) -> float:
    """``dt * sum_{k=1..K} r_N^k(psi^{k-1}; xi)`` from the cross blocks."""
    if rm.N_dual == 0:
        raise ValueError("output correction needs a dual basis")
    tha = theta_a(xi, rm.sqrt_lam)
    thb = theta_b(xi, rm.sqrt_lam)
    D = d[:-1]  # psi^{k-1} for k = 1..K
    load = D @ (thb @ rm.b_d)
    mass = np.einsum("kj,kj->k", D, (c[1:] - c[:-1]) @ rm.M_dp.T) / rm.dt
    stiff = np.einsum("kj,kj->k", D, c[1:] @ np.tensordot(tha, rm.A_dp, axes=1).T)
    return float(rm.dt * np.sum(load - mass - stiff))


def corrected_output(rm: ReducedModel, xi, c: np.ndarray | None = None, d: np.ndarray | None = None) -> float:
    if c is None:
        c = solve_reduced_primal(rm, xi)
    if d is None:
        d = solve_reduced_dual(rm, xi)
    return reduced_output(rm, c) + output_correction(rm, xi, c, d)


# --------------------------------------------------------------------------
# estimators


def _contract(C_blocks: np.ndarray, tha: np.ndarray) -> np.ndarray:
    """``(r, N, Qa+1) -> (r, N, 2)``: columns for the mass and the A(xi) parts."""
    mass_part = C_blocks[:, :, 0]
    op_part = C_blocks[:, :, 1:] @ tha
    return np.stack([mass_part, op_part], axis=2)


def primal_residual_norms(rm: ReducedModel, xi, c: np.ndarray) -> np.ndarray:
    """``|r_N^k(.; xi)|_{X_ref'}`` for ``k = 1..K``."""
    xi = np.asarray(xi, dtype=float)
    tha, thb = theta_a(xi, rm.sqrt_lam), theta_b(xi, rm.sqrt_lam)
    C = rm.riesz_primal
    r, N, q = C.shape[0], rm.N, rm.Qa + 1
    base = C[:, : rm.Qb] @ thb
    if N == 0:
        return np.full(rm.K, np.linalg.norm(base))
    Cu = _contract(C[:, rm.Qb : rm.Qb + N * q].reshape(r, N, q), tha).reshape(r, 2 * N)
    z = np.empty((rm.K, N, 2))
    z[:, :, 0] = -(c[1:] - c[:-1]) / rm.dt
    z[:, :, 1] = -c[1:]
    V = base[None, :] + z.reshape(rm.K, 2 * N) @ Cu.T
    return np.linalg.norm(V, axis=1)


def dual_residual_norms(rm: ReducedModel, xi, d: np.ndarray) -> np.ndarray:
    """``|r~^k(.; xi)|_{X_ref'}`` for ``k = 0..K-1``."""
    xi = np.asarray(xi, dtype=float)
    tha = theta_a(xi, rm.sqrt_lam)
    C = rm.riesz_dual
    r, Nd, q = C.shape[0], rm.N_dual, rm.Qa + 1
    Cu = _contract(C[:, : Nd * q].reshape(r, Nd, q), tha).reshape(r, 2 * Nd)
    z = np.empty((rm.K, Nd, 2))
    z[:, :, 0] = -(d[:-1] - d[1:]) / rm.dt
    z[:, :, 1] = -d[:-1]
    return np.linalg.norm(z.reshape(rm.K, 2 * Nd) @ Cu.T, axis=1)


def estimate(
    rm: ReducedModel, xi, c: np.ndarray | None = None, d: np.ndarray | None = None, density=None
) -> EstimateBundle:
    """Primal, dual and output estimators at ``xi`` (dual parts are NaN without a dual basis).

    ``density`` overrides the snapshot's joint pdf (a callable on ``xi``).
    """
    xi = np.asarray(xi, dtype=float)
    if c is None:
        c = solve_reduced_primal(rm, xi)
    alpha = rm.alpha_bar
    rp = primal_residual_norms(rm, xi, c)
    delta_u = float(np.sqrt(rm.dt / alpha * np.sum(rp**2)))
    if rm.N_dual > 0:
        if d is None:
            d = solve_reduced_dual(rm, xi)
        rd = dual_residual_norms(rm, xi, d)
        fc = float(rm.final_condition[-1])
        delta_psi = float(np.sqrt(rm.dt / alpha * np.sum(rd**2) + fc**2))
        delta_s = delta_u * delta_psi
    else:
        fc = delta_psi = delta_s = float("nan")
    rho = float(rm.density.joint_pdf(xi) if density is None else density(xi))
    return EstimateBundle(delta_u, delta_psi, delta_s, fc, rho)


# --------------------------------------------------------------------------
# offline construction


class _RieszQR:
    """Incremental X-orthonormal QR of Riesz representers ``R = W C``."""

    def __init__(self, xfactor: SPDFactor, xref, n: int):
        self._xf = xfactor
        self._X = xref
        self.W = np.zeros((n, 0))
        self.XW = np.zeros((n, 0))
        self.cols: list[np.ndarray] = []

    def add(self, functionals: np.ndarray) -> None:
        """Append representers of the given functionals (columns)."""
        F = np.atleast_2d(functionals.T).T
        R = self._xf.solve(F)
        for j in range(R.shape[1]):
            v = R[:, j]
            norm0 = np.sqrt(max(v @ F[:, j], 0.0))
            coeffs, w = _gram_schmidt(self.W, self.XW, v, self._X)
            Xw = self._X @ w
            norm = np.sqrt(max(w @ Xw, 0.0))
            if norm > 1e-12 * norm0:
                self.W = np.column_stack([self.W, w / norm])
                self.XW = np.column_stack([self.XW, Xw / norm])
                coeffs = np.append(coeffs, norm)
            self.cols.append(coeffs)

    def factor(self) -> np.ndarray:
        r = self.W.shape[1]
        C = np.zeros((r, len(self.cols)))
        for j, col in enumerate(self.cols):
            C[: col.size, j] = col
        return C


class Reductor:
    """Offline owner of primal/dual bases, FE products and Riesz data.

    Bases grow one vector at a time through :meth:`extend_primal` and
    :meth:`extend_dual`; :meth:`reduced_model` freezes the current state.
    """

    def __init__(self, model: AffineModel, density: DensityModel = BENCHMARK_DENSITY):
        self.model = model
        self.density = density
        n = model.n
        self._xfactor = SPDFactor(model.xref)
        self._psi_final = final_dual_state(model)
        self.primal = ReducedBasis.empty(n, "primal")
        self.dual = ReducedBasis.empty(n, "dual")
        self._riesz_p = _RieszQR(self._xfactor, model.xref, n)
        self._riesz_d = _RieszQR(self._xfactor, model.xref, n)
        self._riesz_p.add(model.b.T.copy())
        self._fc: list[float] = []

    @property
    def N(self) -> int:
        return self.primal.size

    @property
    def N_dual(self) -> int:
        return self.dual.size

    def _functionals(self, z: np.ndarray) -> np.ndarray:
        m = self.model
        return np.column_stack([m.mass @ z] + [Aq @ z for Aq in m.A])

    def extend_primal(self, v) -> None:
        self.primal = extend_basis(self.primal, v, self.model.xref)
        self._riesz_p.add(self._functionals(self.primal.vectors[:, -1]))

    def extend_dual(self, v) -> None:
        self.dual = extend_basis(self.dual, v, self.model.xref)
        self._riesz_d.add(self._functionals(self.dual.vectors[:, -1]))
        Zd = self.dual.vectors
        M = self.model.mass
        d = la.solve(Zd.T @ (M @ Zd), Zd.T @ self.model.output, assume_a="pos")
        e = self._psi_final - Zd @ d
        self._fc.append(float(np.sqrt(max(e @ (M @ e), 0.0))))

    def project(self, u: np.ndarray, role: str = "primal") -> np.ndarray:
        """X_ref-orthogonal projection of the rows of ``u`` onto a basis."""
        Z = (self.primal if role == "primal" else self.dual).vectors
        u = np.atleast_2d(u)
        return (u @ (self.model.xref @ Z)) @ Z.T

    def reduced_model(self) -> ReducedModel:
        ops = project_operators(self.model, self.primal, self.dual)
        return ReducedModel(
            sqrt_lam=self.model.kl_sqrt_eigenvalues.copy(),
            dt=self.model.dt,
            K=self.model.K,
            alpha_bar=self.model.alpha_bar,
            riesz_primal=self._riesz_p.factor(),
            riesz_dual=self._riesz_d.factor(),
            final_condition=np.array(self._fc),
            density=self.density,
            **ops,
        )


def project_operators(model: AffineModel, primal: ReducedBasis, dual: ReducedBasis | None = None) -> dict:
    """Projected and cross blocks, computed from scratch."""
    Z = primal.vectors
    Zd = np.zeros((model.n, 0)) if dual is None else dual.vectors
    AZ = [Aq @ Z for Aq in model.A]
    MZ = model.mass @ Z
    AZd = [Aq @ Zd for Aq in model.A]
    return dict(
        A_pp=np.array([Z.T @ x for x in AZ]).reshape(model.Qa, Z.shape[1], Z.shape[1]),
        M_pp=Z.T @ MZ,
        b_p=(model.b @ Z).reshape(model.Qb, Z.shape[1]),
        ell_p=Z.T @ model.output,
        A_dd=np.array([Zd.T @ x for x in AZd]).reshape(model.Qa, Zd.shape[1], Zd.shape[1]),
        M_dd=Zd.T @ (model.mass @ Zd),
        ell_d=Zd.T @ model.output,
        A_dp=np.array([Zd.T @ x for x in AZ]).reshape(model.Qa, Zd.shape[1], Z.shape[1]),
        M_dp=Zd.T @ MZ,
        b_d=(model.b @ Zd).reshape(model.Qb, Zd.shape[1]),
    )


def compute_riesz_data(model: AffineModel, primal: ReducedBasis, dual: ReducedBasis | None = None):
    """Representers and their Gram matrices, computed from scratch.

    Returns ``(R_primal, G_primal, R_dual, G_dual)`` with column order
    ``[b_1..b_Qb, (M z_1, A_1 z_1, .., A_Qa z_1), (M z_2, ..), ..]`` for the
    primal set and the same per-vector blocks (without loads) for the dual.
    """
    xf = SPDFactor(model.xref)
    fp = [model.b.T] + [
        np.column_stack([model.mass @ z] + [Aq @ z for Aq in model.A]) for z in primal.vectors.T
    ]
    Fp = np.column_stack(fp)
    Rp = xf.solve(Fp)
    Gp = Rp.T @ Fp
    Gp = 0.5 * (Gp + Gp.T)
    zd = [] if dual is None else list(dual.vectors.T)
    if zd:
        Fd = np.column_stack(
            [np.column_stack([model.mass @ z] + [Aq @ z for Aq in model.A]) for z in zd]
        )
        Rd = xf.solve(Fd)
        Gd = Rd.T @ Fd
        Gd = 0.5 * (Gd + Gd.T)
    else:
        Rd = np.zeros((model.n, 0))
        Gd = np.zeros((0, 0))
    return Rp, Gp, Rd, Gd


# --------------------------------------------------------------------------
# persistence

_MAGIC = "WRBROM 1"


def save_reduced_model(rm: ReducedModel, path, extra: dict[str, np.ndarray] | None = None) -> None:
    """Container: text header of ``name ndim shape..`` lines, then little-endian f64 payload."""
    arrays = rm.arrays()
    for name, arr in (extra or {}).items():
        arrays[f"extra:{name}"] = np.asarray(arr, dtype=float)
    lines = [_MAGIC, str(len(arrays))]
    for name, arr in arrays.items():
        lines.append(" ".join([name, str(arr.ndim)] + [str(s) for s in arr.shape]))
    header = ("\n".join(lines) + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_reduced_model(path) -> tuple[ReducedModel, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if fh.readline().decode("ascii").strip() != _MAGIC:
            raise ValueError(f"{path}: not a reduced-model container")
        count = int(fh.readline())
        specs = []
        for _ in range(count):
            tok = fh.readline().decode("ascii").split()
            ndim = int(tok[1])
            specs.append((tok[0], tuple(int(s) for s in tok[2 : 2 + ndim])))
        arrays = {}
        for name, shape in specs:
            size = int(np.prod(shape, dtype=np.int64))
            buf = fh.read(8 * size)
            if len(buf) != 8 * size:
                raise ValueError(f"{path}: truncated payload for {name!r}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(float)
    extra = {k[6:]: arrays.pop(k) for k in list(arrays) if k.startswith("extra:")}
    return ReducedModel.from_arrays(arrays), extra
