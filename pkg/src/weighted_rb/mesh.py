"""Structured triangulation of the perforated heat-conduction domain.

The domain is the rectangle ``[0, 10] x [0, 4]`` with the three open squares
``(1,3)x(1,3)``, ``(4,6)x(1,3)`` and ``(7,9)x(1,3)`` removed. The left edge
carries the random Robin inflow (``OUT``), the hole perimeters the cooling
condition (``IN``); everything else is insulated.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

WIDTH = 10.0
HEIGHT = 4.0
HOLES = ((1.0, 3.0, 1.0, 3.0), (4.0, 6.0, 1.0, 3.0), (7.0, 9.0, 1.0, 3.0))
DOMAIN_AREA = WIDTH * HEIGHT - sum((x1 - x0) * (y1 - y0) for x0, x1, y0, y1 in HOLES)


class Tag(enum.IntEnum):
    OUT = 0
    IN = 1
    INSULATED = 2


@dataclass(frozen=True)
class TriMesh:
    """P1 triangulation with tagged boundary edges.

    Attributes
    ----------
    nodes : (n_nodes, 2) ndarray
    triangles : (n_tri, 3) int ndarray, counter-clockwise
    boundary_edges : (n_edges, 2) int ndarray
    edge_tags : (n_edges,) int ndarray of :class:`Tag` values
    mesh_size_h : float
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    mesh_size_h: float

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edges_with_tag(self, tag: Tag) -> np.ndarray:
        return self.boundary_edges[self.edge_tags == int(tag)]

    def edge_lengths(self, tag: Tag | None = None) -> np.ndarray:
        edges = self.boundary_edges if tag is None else self.edges_with_tag(tag)
        d = self.nodes[edges[:, 1]] - self.nodes[edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def boundary_nodes(self, tag: Tag) -> np.ndarray:
        """Sorted unique node indices touched by edges carrying ``tag``."""
        return np.unique(self.edges_with_tag(tag))


def _in_hole(cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    mask = np.zeros(cx.shape, dtype=bool)
    for x0, x1, y0, y1 in HOLES:
        mask |= (cx > x0) & (cx < x1) & (cy > y0) & (cy < y1)
    return mask


def _subdivisions(h: float) -> int:
    if not 0.0 < h <= 1.0:
        raise ValueError(f"mesh size h must lie in (0, 1], got {h!r}")
    n = int(round(1.0 / h))
    if abs(n * h - 1.0) > 1e-9:
        raise ValueError(
            f"1/h must be an integer so that grid lines hit the hole corners; got h={h!r}"
        )
    return n


def build_benchmark_mesh(h: float) -> TriMesh:
    """Right-triangle grid with spacing ``h`` and the hole cells removed.

    ``1/h`` must be an integer. ``h = 1/6`` gives 1162 nodes, the closest
    member of this family to the 1132 degrees of freedom of the reference
    computation.
    """
    n = _subdivisions(h)
    nx, ny = 10 * n, 4 * n
    step = 1.0 / n

    # cell (i, j) has lower-left corner (i*step, j*step)
    ci, cj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    ci, cj = ci.ravel(), cj.ravel()
    keep = ~_in_hole((ci + 0.5) * step, (cj + 0.5) * step)
    ci, cj = ci[keep], cj[keep]

    def gid(i, j):
        return i * (ny + 1) + j

    v00, v10 = gid(ci, cj), gid(ci + 1, cj)
    v01, v11 = gid(ci, cj + 1), gid(ci + 1, cj + 1)
    tri_full = np.concatenate(
        [np.stack([v00, v10, v11], axis=1), np.stack([v00, v11, v01], axis=1)]
    )

    used = np.unique(tri_full)
    renumber = -np.ones((nx + 1) * (ny + 1), dtype=np.int64)
    renumber[used] = np.arange(used.size)
    gi, gj = np.divmod(used, ny + 1)
    nodes = np.stack([gi / n, gj / n], axis=1)
    triangles = renumber[tri_full]

    # boundary edges: cell sides with exactly one adjacent kept cell
    solid = np.zeros((nx, ny), dtype=bool)
    solid[ci, cj] = True
    padded = np.zeros((nx + 2, ny + 2), dtype=bool)
    padded[1:-1, 1:-1] = solid

    parts = []
    # vertical sides at x = i*step, i = 0..nx, spanning y in [j, j+1]
    left = padded[:-1, 1:-1]
    right = padded[1:, 1:-1]
    vi, vj = np.nonzero(left != right)
    parts.append(np.stack([gid(vi, vj), gid(vi, vj + 1)], axis=1))
    # horizontal sides at y = j*step
    below = padded[1:-1, :-1]
    above = padded[1:-1, 1:]
    hi, hj = np.nonzero(below != above)
    parts.append(np.stack([gid(hi, hj), gid(hi + 1, hj)], axis=1))
    edges = renumber[np.concatenate(parts)]

    mid = 0.5 * (nodes[edges[:, 0]] + nodes[edges[:, 1]])
    on_outer = (
        np.isclose(mid[:, 0], 0.0)
        | np.isclose(mid[:, 0], WIDTH)
        | np.isclose(mid[:, 1], 0.0)
        | np.isclose(mid[:, 1], HEIGHT)
    )
    tags = np.full(edges.shape[0], int(Tag.INSULATED), dtype=np.int64)
    tags[~on_outer] = int(Tag.IN)
    tags[np.isclose(mid[:, 0], 0.0)] = int(Tag.OUT)

    return TriMesh(nodes, triangles, edges, tags, step)


def save_mesh(mesh: TriMesh, path) -> None:
    """Plain-text export: header ``nodes T triangles B boundary_edges``."""
    with open(path, "w", newline="\n") as fh:
        fh.write(
            f"{mesh.n_nodes} nodes {mesh.triangles.shape[0]} triangles "
            f"{mesh.boundary_edges.shape[0]} boundary_edges\n"
        )
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
        for (i, j), t in zip(mesh.boundary_edges, mesh.edge_tags):
            fh.write(f"{i} {j} {Tag(t).name}\n")


def load_mesh(path, mesh_size_h: float = float("nan")) -> TriMesh:
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 6 or head[1::2] != ["nodes", "triangles", "boundary_edges"]:
            raise ValueError(f"{path}: malformed mesh header {' '.join(head)!r}")
        n_nodes, n_tri, n_edges = int(head[0]), int(head[2]), int(head[4])
        lines = fh.read().splitlines()
    if len(lines) < n_nodes + n_tri + n_edges:
        raise ValueError(f"{path}: truncated mesh file")
    nodes = np.array([[float(v) for v in ln.split()] for ln in lines[:n_nodes]])
    tri = np.array(
        [[int(v) for v in ln.split()] for ln in lines[n_nodes : n_nodes + n_tri]],
        dtype=np.int64,
    )
    edge_lines = [ln.split() for ln in lines[n_nodes + n_tri : n_nodes + n_tri + n_edges]]
    edges = np.array([[int(a), int(b)] for a, b, _ in edge_lines], dtype=np.int64)
    tags = np.array([int(Tag[t]) for _, _, t in edge_lines], dtype=np.int64)
    return TriMesh(nodes.reshape(-1, 2), tri.reshape(-1, 3), edges.reshape(-1, 2), tags, mesh_size_h)
