"""P1 finite-element assembly on a :class:`~weighted_rb.mesh.TriMesh`.

All matrices are returned as exactly symmetric CSR matrices.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .linalg import symmetrize
from .mesh import DOMAIN_AREA, Tag, TriMesh

_LOCAL_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


def _scatter(mesh: TriMesh, conn: np.ndarray, local: np.ndarray):
    n = mesh.n_nodes
    k = conn.shape[1]
    rows = np.repeat(conn, k, axis=1).ravel()
    cols = np.tile(conn, (1, k)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return symmetrize(A)


def assemble_mass(mesh: TriMesh):
    area = mesh.signed_areas()
    local = area[:, None, None] * _LOCAL_MASS[None]
    return _scatter(mesh, mesh.triangles, local)


def assemble_stiffness(mesh: TriMesh):
    p = mesh.nodes[mesh.triangles]
    area = mesh.signed_areas()
    # gradients of barycentric coordinates: rotate opposite edge by 90 degrees
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grads = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2.0 * area[:, None, None])
    local = area[:, None, None] * np.einsum("tad,tbd->tab", grads, grads)
    return _scatter(mesh, mesh.triangles, local)


def _edge_weights(mesh: TriMesh, tag: Tag, weight) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if tag not in (Tag.OUT, Tag.IN):
        raise ValueError(f"boundary integrals are defined on OUT or IN, not {tag!r}")
    edges = mesh.edges_with_tag(tag)
    lengths = mesh.edge_lengths(tag)
    w = np.broadcast_to(np.asarray(weight, dtype=float), (mesh.n_nodes,))
    we = w[edges]
    if not np.all(np.isfinite(we)):
        raise ValueError(f"weight is missing (non-finite) on some {tag.name} boundary nodes")
    return edges, lengths, we


def assemble_boundary_mass(mesh: TriMesh, tag: Tag, weight=1.0):
    """Edge mass matrix ``int_{tag} w u v`` with ``w`` the P1 trace interpolant.

    ``weight`` is a scalar or a nodal vector of length ``n_nodes``; only its
    values on nodes of ``tag`` edges are read.
    """
    edges, L, we = _edge_weights(mesh, tag, weight)
    wi, wj = we[:, 0], we[:, 1]
    local = np.empty((edges.shape[0], 2, 2))
    local[:, 0, 0] = 3.0 * wi + wj
    local[:, 1, 1] = wi + 3.0 * wj
    local[:, 0, 1] = local[:, 1, 0] = wi + wj
    local *= (L / 12.0)[:, None, None]
    return _scatter(mesh, edges, local)


def assemble_boundary_load(mesh: TriMesh, tag: Tag, weight=1.0) -> np.ndarray:
    """Load vector of ``v -> int_{tag} w v``."""
    edges, L, we = _edge_weights(mesh, tag, weight)
    local = np.stack([2.0 * we[:, 0] + we[:, 1], we[:, 0] + 2.0 * we[:, 1]], axis=1)
    local *= (L / 6.0)[:, None]
    return np.bincount(edges.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


def assemble_output_vector(mesh: TriMesh, mass=None) -> np.ndarray:
    """``ell`` with ``ell @ v`` the domain average of the P1 function ``v``."""
    if mass is None:
        mass = assemble_mass(mesh)
    return np.asarray(mass.sum(axis=1)).ravel() / DOMAIN_AREA
