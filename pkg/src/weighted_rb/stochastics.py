"""Random inputs: parameter densities, samplers and the boundary KL field.

A parameter ``xi`` is stored as a flat array of length ``Q + 1``:
``xi[:Q]`` are the KL coordinates ``xi_out`` and ``xi[Q]`` is the cooling
coefficient ``xi_in``. Batches are arrays of shape ``(n, Q + 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy import special

from .mesh import Tag, TriMesh

SQRT3 = float(np.sqrt(3.0))


@dataclass(frozen=True)
class ParameterSample:
    xi_out: np.ndarray
    xi_in: float

    @classmethod
    def from_array(cls, xi) -> "ParameterSample":
        xi = np.asarray(xi, dtype=float)
        return cls(xi[:-1].copy(), float(xi[-1]))

    def as_array(self) -> np.ndarray:
        return np.append(np.asarray(self.xi_out, dtype=float), self.xi_in)

    @property
    def dimension(self) -> int:
        return len(self.xi_out) + 1


@dataclass(frozen=True)
class DensityModel:
    """Independent marginals: ``U(-sqrt3, sqrt3)`` per KL coordinate and a
    beta law with shapes ``(alpha, beta)`` scaled to ``[lower, upper]`` for
    ``xi_in``."""

    n_kl: int = 10
    uniform_bound: float = SQRT3
    beta_lower: float = 0.1
    beta_upper: float = 10.0
    beta_alpha: float = 50.0
    beta_beta: float = 50.0

    @property
    def dimension(self) -> int:
        return self.n_kl + 1

    def uniform_pdf(self, x):
        x = np.asarray(x, dtype=float)
        c = self.uniform_bound
        return np.where((x >= -c) & (x <= c), 0.5 / c, 0.0)

    def beta_pdf(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.beta_lower, self.beta_upper
        a, b = self.beta_alpha, self.beta_beta
        width = hi - lo
        t = np.clip((x - lo) / width, 0.0, 1.0)
        with np.errstate(divide="ignore"):
            logp = special.xlogy(a - 1.0, t) + special.xlog1py(b - 1.0, -t) - special.betaln(a, b)
        inside = (x >= lo) & (x <= hi)
        return np.where(inside, np.exp(logp) / width, 0.0)

    def joint_pdf(self, xi):
        """Product of the marginals; accepts one parameter or a batch."""
        xi = np.asarray(xi, dtype=float)
        xi_out, xi_in = xi[..., : self.n_kl], xi[..., self.n_kl]
        return np.prod(self.uniform_pdf(xi_out), axis=-1) * self.beta_pdf(xi_in)

    def in_support(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        c = self.uniform_bound
        out_ok = np.all(np.abs(xi[..., : self.n_kl]) <= c, axis=-1)
        xin = xi[..., self.n_kl]
        return out_ok & (xin >= self.beta_lower) & (xin <= self.beta_upper)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` draws from the joint density (beta part by inversion)."""
        c = self.uniform_bound
        xi_out = rng.uniform(-c, c, size=(n, self.n_kl))
        u = rng.random(n)
        t = special.betaincinv(self.beta_alpha, self.beta_beta, u)
        xi_in = self.beta_lower + (self.beta_upper - self.beta_lower) * t
        return np.column_stack([xi_out, xi_in])

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` draws uniform on the whole parameter box (training sets)."""
        lo = np.append(np.full(self.n_kl, -self.uniform_bound), self.beta_lower)
        hi = np.append(np.full(self.n_kl, self.uniform_bound), self.beta_upper)
        return rng.uniform(lo, hi, size=(n, self.dimension))


BENCHMARK_DENSITY = DensityModel()


def marginal_pdf_uniform(x):
    return BENCHMARK_DENSITY.uniform_pdf(x)


def marginal_pdf_beta(x):
    return BENCHMARK_DENSITY.beta_pdf(x)


def joint_pdf(xi):
    return BENCHMARK_DENSITY.joint_pdf(xi)


def sample_parameter(rng: np.random.Generator, n: int | None = None, density=BENCHMARK_DENSITY):
    """Draw from the joint density; one flat parameter when ``n`` is None."""
    out = density.sample(rng, 1 if n is None else n)
    return out[0] if n is None else out


def sample_uniform_on_gamma(rng: np.random.Generator, n: int | None = None, density=BENCHMARK_DENSITY):
    out = density.sample_uniform(rng, 1 if n is None else n)
    return out[0] if n is None else out


# --------------------------------------------------------------------------
# Karhunen-Loeve expansion of the inflow field on the OUT boundary


@dataclass(frozen=True)
class KLField:
    """Truncated KL expansion ``mean + sum_l sqrt(lam_l) phi_l xi_l``.

    ``traces[l]`` holds ``phi_l`` at ``nodes`` (mesh indices of the OUT
    boundary, ordered by arc length ``arclength``).
    """

    mean_value: float
    correlation_length: float
    eigenvalues: np.ndarray
    traces: np.ndarray
    nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    arclength: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_terms(self) -> int:
        return len(self.eigenvalues)

    def nodal_mode(self, l: int, n_nodes: int) -> np.ndarray:
        """Mode ``l`` as a full nodal vector (zero away from the OUT boundary)."""
        v = np.zeros(n_nodes)
        v[self.nodes] = self.traces[l]
        return v

    def evaluate(self, xi_out) -> np.ndarray:
        """Field values on the OUT boundary nodes."""
        xi_out = np.asarray(xi_out, dtype=float)
        return self.mean_value + (np.sqrt(self.eigenvalues) * xi_out) @ self.traces


def exponential_kernel(s, t, a):
    return np.exp(-np.abs(np.subtract.outer(s, t)) / a)


def _ordered_chain(mesh: TriMesh, tag: Tag) -> tuple[np.ndarray, np.ndarray]:
    """Nodes of a single open boundary chain in walking order, with arc length."""
    edges = mesh.edges_with_tag(tag)
    if edges.size == 0:
        raise ValueError(f"mesh has no {tag.name} boundary")
    nbrs: dict[int, list[int]] = {}
    for i, j in edges:
        nbrs.setdefault(int(i), []).append(int(j))
        nbrs.setdefault(int(j), []).append(int(i))
    ends = sorted(n for n, v in nbrs.items() if len(v) == 1)
    if len(ends) != 2:
        raise ValueError(f"{tag.name} boundary is not a single open curve")
    # start from the end with the smaller coordinates for a deterministic orientation
    start = min(ends, key=lambda n: tuple(mesh.nodes[n]))
    order, prev = [start], -1
    while len(order) < len(nbrs):
        cur = order[-1]
        nxt = [n for n in nbrs[cur] if n != prev]
        prev = cur
        order.append(nxt[0])
    order = np.array(order, dtype=np.int64)
    seg = np.hypot(*(np.diff(mesh.nodes[order], axis=0).T))
    return order, np.concatenate([[0.0], np.cumsum(seg)])


def kl_eigenpairs(
    mesh: TriMesh,
    a: float = 2.0,
    Q: int = 10,
    mean_value: float = 10.0,
    quad_points: int = 2,
) -> KLField:
    """Galerkin eigenpairs of the exponential covariance on the OUT boundary.

    Solves ``C v = lam M_b v`` on the P1 trace space, with
    ``C_ij = int int exp(-|s-t|/a) phi_i(s) phi_j(t)`` integrated by
    ``quad_points``-point Gauss rules on each pair of edges and ``M_b`` the
    exact boundary mass matrix. Modes are ``M_b``-orthonormal; the entry of
    largest magnitude of each mode is made positive.
    """
    if a <= 0:
        raise ValueError(f"correlation length must be positive, got {a}")
    nodes, s = _ordered_chain(mesh, Tag.OUT)
    nb = nodes.size
    if not 1 <= Q <= nb:
        raise ValueError(f"Q={Q} exceeds the {nb} available OUT boundary modes")

    gx, gw = np.polynomial.legendre.leggauss(quad_points)
    lam01 = 0.5 * (gx + 1.0)  # local coordinate in [0, 1]
    L = np.diff(s)
    n_edges = L.size
    pts = s[:-1, None] + L[:, None] * lam01[None, :]
    wts = 0.5 * L[:, None] * gw[None, :]
    # B[i, q] = phi_i(x_q) * w_q
    B = np.zeros((nb, n_edges * quad_points))
    cols = np.arange(n_edges * quad_points).reshape(n_edges, quad_points)
    B[np.arange(n_edges)[:, None], cols] = (1.0 - lam01)[None, :] * wts
    B[np.arange(1, nb)[:, None], cols] += lam01[None, :] * wts
    x = pts.ravel()
    C = B @ exponential_kernel(x, x, a) @ B.T
    C = 0.5 * (C + C.T)

    Mb = np.zeros((nb, nb))
    idx = np.arange(n_edges)
    Mb[idx, idx] += L / 3.0
    Mb[idx + 1, idx + 1] += L / 3.0
    Mb[idx, idx + 1] += L / 6.0
    Mb[idx + 1, idx] += L / 6.0

    w, V = la.eigh(C, Mb)
    w, V = w[::-1][:Q], V[:, ::-1][:, :Q]
    w = np.clip(w, 0.0, None)
    pivot = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[pivot, np.arange(Q)])
    return KLField(float(mean_value), float(a), w, V.T.copy(), nodes, s)


def save_kl(kl: KLField, path) -> None:
    """Text export: comment header, eigenvalue line, one trace per line."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# mean={kl.mean_value!r} a={kl.correlation_length!r} nodes=")
        fh.write(",".join(str(n) for n in kl.nodes) + "\n")
        fh.write(" ".join(repr(float(v)) for v in kl.eigenvalues) + "\n")
        for row in kl.traces:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_kl(path) -> KLField:
    with open(path) as fh:
        head = fh.readline()
        if not head.startswith("#"):
            raise ValueError(f"{path}: missing KL header line")
        meta = dict(tok.split("=", 1) for tok in head[1:].split())
        rows = [np.array([float(v) for v in ln.split()]) for ln in fh if ln.strip()]
    nodes = np.array([int(v) for v in meta["nodes"].split(",")], dtype=np.int64)
    return KLField(
        float(meta["mean"]), float(meta["a"]), rows[0], np.array(rows[1:]), nodes
    )
