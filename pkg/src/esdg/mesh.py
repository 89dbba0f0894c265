"""Axis-aligned brick meshes in Morton order.

Elements are numbered along a global Morton (Z-order) curve of their lattice
coordinates. Faces are numbered ``2*axis + side`` with side 0 on the low
coordinate and side 1 on the high coordinate of ``axis``.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

MAX_NODES = 2**53


class Boundary(str, Enum):
    PERIODIC = "periodic"
    REFLECTING = "reflecting"


REFLECTING = -1  # neighbour tag for a reflecting wall


@dataclass(frozen=True)
class MeshConfig:
    base: tuple = (1, 1, 1)
    level: int = 0
    lo: tuple = (0.0, 0.0, 0.0)
    hi: tuple = (1.0, 1.0, 1.0)
    boundaries: tuple = (Boundary.PERIODIC, Boundary.PERIODIC, Boundary.PERIODIC)

    def __post_init__(self):
        if len(self.base) != 3 or any(int(k) < 1 for k in self.base):
            raise ValueError(f"base element counts must be three positive integers, got {self.base}")
        if self.level < 0:
            raise ValueError("refinement level must be >= 0")
        for a in range(3):
            if not self.hi[a] > self.lo[a]:
                raise ValueError(f"empty extent along axis {a}: [{self.lo[a]}, {self.hi[a]}]")
        object.__setattr__(self, "boundaries", tuple(Boundary(b) for b in self.boundaries))

    @property
    def shape(self):
        """Lattice size per axis, ``K_j * 2**L``."""
        return tuple(int(k) * 2**self.level for k in self.base)

    @property
    def num_elements(self):
        kx, ky, kz = self.base
        return kx * ky * kz * 2 ** (3 * self.level)


def _spread_bits(v, nbits):
    out = np.zeros_like(v, dtype=np.uint64)
    v = v.astype(np.uint64)
    for bit in range(nbits):
        out |= ((v >> np.uint64(bit)) & np.uint64(1)) << np.uint64(3 * bit)
    return out


def morton_index(i, j, k):
    """Bit-interleaved Morton key with x in the least significant bit."""
    i, j, k = (np.asarray(c, dtype=np.int64) for c in (i, j, k))
    top = int(max(np.max(i, initial=0), np.max(j, initial=0), np.max(k, initial=0)))
    nbits = max(top.bit_length(), 1)
    key = _spread_bits(i, nbits) | (_spread_bits(j, nbits) << np.uint64(1)) | (_spread_bits(k, nbits) << np.uint64(2))
    return key if key.ndim else int(key)


@dataclass(frozen=True)
class Neighbor:
    element: int
    face: int


@dataclass(frozen=True)
class Wall:
    element: int
    face: int


@dataclass
class MeshGeometry:
    config: MeshConfig
    lattice: np.ndarray  # (ne, 3) lattice coordinate of each element
    element_at: np.ndarray  # (nx, ny, nz) -> element index
    lower: np.ndarray  # (ne, 3) low corner coordinates
    spacing: np.ndarray  # (3,) element edge lengths
    neighbors: np.ndarray  # (ne, 6) neighbour element or REFLECTING
    metric: np.ndarray = field(repr=False)  # (ne, 3, 3) d(ref coord)/d(physical coord)
    jacobian: np.ndarray = field(repr=False)  # (ne,)
    surface_jacobian: np.ndarray = field(repr=False)  # (ne, 6)
    normals: np.ndarray = field(repr=False)  # (6, 3)

    @property
    def num_elements(self):
        return self.lattice.shape[0]

    def face_neighbor(self, element, face):
        nb = int(self.neighbors[element, face])
        if nb == REFLECTING:
            return Wall(element, face)
        return Neighbor(nb, face ^ 1)

    def node_coordinates(self, ref, element=None):
        """Physical coordinates of LGL nodes, shape ``(..., 3, nq, nq, nq)``.

        The last three axes are ordered (z, y, x) to match the state layout.
        ``element`` may be an index or a slice of elements.
        """
        single = element is not None and not isinstance(element, slice)
        if element is None:
            lower = self.lower
        elif single:
            lower = self.lower[element : element + 1]
        else:
            lower = self.lower[element]
        xi = (np.asarray(ref.nodes, dtype=np.float64) + 1.0) * 0.5
        nq = xi.size
        out = np.empty((lower.shape[0], 3, nq, nq, nq))
        shape = {0: (1, 1, nq), 1: (1, nq, 1), 2: (nq, 1, 1)}
        for a in range(3):
            out[:, a] = lower[:, a, None, None, None] + self.spacing[a] * xi.reshape(shape[a])
        return out[0] if single else out

    def geopotential(self, ref, g=9.81, dtype=np.float64):
        """Static field ``g * z`` at every node, shape ``(ne, nq, nq, nq)``."""
        return (g * self.node_coordinates(ref)[:, 2]).astype(dtype)

    def dof(self, order):
        return self.num_elements * (order + 1) ** 3

    def summary(self, order):
        return {
            "elements": self.num_elements,
            "lattice": self.config.shape,
            "dof_per_variable": self.dof(order),
            "spacing_m": tuple(float(s) for s in self.spacing),
        }


def build_mesh(config):
    shape = config.shape
    ne = config.num_elements
    if ne * 8 >= MAX_NODES:
        raise ValueError(f"mesh with {ne} elements overflows the node index range")
    grid = np.indices(shape).reshape(3, -1).T
    raw = np.ravel_multi_index(grid.T, shape, order="F")
    keys = morton_index(grid[:, 0], grid[:, 1], grid[:, 2])
    order = np.lexsort((raw, keys))
    lattice = grid[order]
    element_at = np.empty(shape, dtype=np.int64)
    element_at[lattice[:, 0], lattice[:, 1], lattice[:, 2]] = np.arange(ne)

    lo = np.asarray(config.lo, dtype=np.float64)
    hi = np.asarray(config.hi, dtype=np.float64)
    spacing = (hi - lo) / np.asarray(shape)
    lower = lo + lattice * spacing

    neighbors = np.empty((ne, 6), dtype=np.int64)
    for axis in range(3):
        n = shape[axis]
        for side, step in ((0, -1), (1, 1)):
            coords = lattice.copy()
            coords[:, axis] += step
            outside = (coords[:, axis] < 0) | (coords[:, axis] >= n)
            coords[:, axis] %= n
            nb = element_at[coords[:, 0], coords[:, 1], coords[:, 2]]
            if config.boundaries[axis] is Boundary.REFLECTING:
                nb = np.where(outside, REFLECTING, nb)
            neighbors[:, 2 * axis + side] = nb

    metric = np.zeros((ne, 3, 3))
    for a in range(3):
        metric[:, a, a] = 2.0 / spacing[a]
    jacobian = np.full(ne, np.prod(spacing) / 8.0)
    face_area = np.array([spacing[1] * spacing[2], spacing[0] * spacing[2], spacing[0] * spacing[1]]) / 4.0
    surface_jacobian = np.repeat(np.repeat(face_area, 2)[None, :], ne, axis=0)
    normals = np.zeros((6, 3))
    for f in range(6):
        normals[f, f // 2] = 1.0 if f % 2 else -1.0
    return MeshGeometry(config, lattice, element_at, lower, spacing, neighbors,
                        metric, jacobian, surface_jacobian, normals)
