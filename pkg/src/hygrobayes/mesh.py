"""Structured triangular meshes on a rectangle, with the geometry
caches the assembly and interpolation paths need.

Node ids run row-major (ix + iy*nx); each grid cell is split along the
(a, c) diagonal into two counter-clockwise triangles. The two vertical
edges carry the Dirichlet node sets; top and bottom are flux-free.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError

# Dense linear solves cap the practical mesh size.
MAX_NODES = 2000


@dataclass(eq=False)
class Mesh:
    nodes: np.ndarray          # (N, 2) coordinates [m]
    elements: np.ndarray       # (E, 3) connectivity, CCW
    dirichlet_left: np.ndarray   # node ids on x = 0
    dirichlet_right: np.ndarray  # node ids on x = width
    width: float = 0.0
    height: float = 0.0

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.elements]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def shape_gradients(self) -> np.ndarray:
        """Constant gradients of the three linear shape functions, (E, 3, 2)."""
        p = self.nodes[self.elements]
        x, y = p[..., 0], p[..., 1]
        two_a = 2.0 * self.areas
        gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        return np.stack([gx, gy], axis=2) / two_a[:, None, None]

    @cached_property
    def unit_stiffness(self) -> np.ndarray:
        """Per-element stiffness for unit conductivity, (E, 3, 3)."""
        g = self.shape_gradients
        return self.areas[:, None, None] * np.einsum("eai,ebi->eab", g, g)

    @cached_property
    def lumped_weights(self) -> np.ndarray:
        """Row-sum (lumped) mass share of each element corner, (E, 3)."""
        return np.repeat(self.areas[:, None] / 3.0, 3, axis=1)

    def lump(self, coeff: np.ndarray) -> np.ndarray:
        """Lumped capacity vector for an element-wise coefficient."""
        out = np.zeros(self.n_nodes)
        np.add.at(out, self.elements, coeff[:, None] * self.lumped_weights)
        return out


def build_mesh(width: float, height: float, nx: int, ny: int) -> Mesh:
    """Structured triangulation of [0, width] x [0, height].

    nx, ny are node counts per direction; the mesh has nx*ny nodes and
    2*(nx-1)*(ny-1) triangles.
    """
    if width <= 0.0 or height <= 0.0:
        raise ConfigError("domain dimensions must be strictly positive")
    if nx < 2 or ny < 2:
        raise ConfigError("need at least 2 nodes per direction")
    if nx * ny > MAX_NODES:
        raise ConfigError(f"mesh exceeds the dense-solver cap of {MAX_NODES} nodes")

    xs = np.linspace(0.0, width, nx)
    ys = np.linspace(0.0, height, ny)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    tris = []
    for iy in range(ny - 1):
        for ix in range(nx - 1):
            a = iy * nx + ix
            b = a + 1
            c = b + nx
            d = a + nx
            tris.append((a, b, c))
            tris.append((a, c, d))
    elements = np.asarray(tris, dtype=np.intp)

    ids = np.arange(nx * ny)
    left = ids[ids % nx == 0]
    right = ids[ids % nx == nx - 1]
    return Mesh(nodes, elements, left, right, width=width, height=height)


def locate_points(mesh: Mesh, points) -> tuple[np.ndarray, np.ndarray]:
    """Containing element and barycentric weights for each query point.

    Returns (element_ids (m,), weights (m, 3)). Weights within 1e-10 of a
    vertex snap to an exact one-hot so nodal queries reproduce nodal
    values bit-exactly.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    elem_ids = np.full(points.shape[0], -1, dtype=np.intp)
    weights = np.zeros((points.shape[0], 3))
    verts = mesh.nodes[mesh.elements]
    for k, pt in enumerate(points):
        for e in range(mesh.n_elements):
            p0, p1, p2 = verts[e]
            T = np.column_stack([p1 - p0, p2 - p0])
            try:
                w12 = np.linalg.solve(T, pt - p0)
            except np.linalg.LinAlgError:
                continue
            w = np.array([1.0 - w12.sum(), w12[0], w12[1]])
            if np.all(w >= -1e-10):
                if w.max() > 1.0 - 1e-10:
                    w = np.where(w == w.max(), 1.0, 0.0)
                else:
                    w = np.clip(w, 0.0, None)
                    w = w / w.sum()
                elem_ids[k] = e
                weights[k] = w
                break
        else:
            raise ConfigError(f"point {pt} lies outside the mesh domain")
    return elem_ids, weights
