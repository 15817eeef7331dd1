"""P1 finite elements on intervals and structured rectangle meshes.

The domain is an interval (0, Lx) or a rectangle (0, Lx) x (0, Ly).  Its
boundary is split into three tagged parts: ``gamma1`` carries the homogeneous
Dirichlet condition, ``gamma2`` carries a surface traction and ``gamma3``
carries the frictional contact law.  Every boundary face belongs to exactly
one tag; nodes shared by differently tagged faces are resolved with the
priority gamma1 > gamma3 > gamma2 so that Dirichlet constraints always win.

Discrete fields are plain numpy arrays of nodal coefficients.  A field lies
in the discrete working space V_h when its gamma1 coefficients vanish; the
V-norm is the full H1 norm assembled from the consistent mass and unit
stiffness matrices.  Friction terms on gamma3 are integrated with a lumped
(nodal) rule, which keeps the nonsmooth term separable across nodes.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

GAMMA1 = "gamma1"
GAMMA2 = "gamma2"
GAMMA3 = "gamma3"
TAGS = (GAMMA1, GAMMA2, GAMMA3)

SIDES_1D = ("left", "right")
SIDES_2D = ("left", "right", "bottom", "top")


class MeshError(ValueError):
    """Raised for inconsistent mesh specifications."""


@dataclass(frozen=True)
class MeshSpec:
    """Parameters of a structured mesh.

    Parameters
    ----------
    dimension : int
        1 for an interval, 2 for a rectangle.
    extents : tuple of float
        Side lengths, one value per dimension.
    resolution : tuple of int
        Number of elements per direction (cells are split into two
        triangles in 2D, along a fixed diagonal).
    partition : dict
        Maps every side name ("left", "right" and, in 2D, "bottom",
        "top") to one of the boundary tags.
    """

    dimension: int
    extents: tuple[float, ...]
    resolution: tuple[int, ...]
    partition: dict[str, str]

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise MeshError(f"dimension must be 1 or 2, got {self.dimension}")
        sides = SIDES_1D if self.dimension == 1 else SIDES_2D
        if len(self.extents) != self.dimension:
            raise MeshError("extents must provide one length per dimension")
        if len(self.resolution) != self.dimension:
            raise MeshError("resolution must provide one count per dimension")
        if any(e <= 0 for e in self.extents):
            raise MeshError("extents must be positive")
        if any(int(r) < 1 for r in self.resolution):
            raise MeshError("resolution must be at least one element per direction")
        unknown = [s for s in self.partition if s not in sides]
        if unknown:
            raise MeshError(f"partition names unknown sides: {unknown}")
        missing = [s for s in sides if s not in self.partition]
        if missing:
            raise MeshError(f"partition misses sides: {missing}")
        bad = [t for t in self.partition.values() if t not in TAGS]
        if bad:
            raise MeshError(f"partition uses unknown tags: {bad}")
        if GAMMA1 not in self.partition.values():
            raise MeshError("at least one side must carry the gamma1 tag")


@dataclass(eq=False)
class Mesh:
    """Assembled structured mesh with tagged boundary data.

    Attributes
    ----------
    nodes : ndarray
        Shape (n,) in 1D, (n, 2) in 2D.
    elements : ndarray of int
        Shape (m, 2) segments or (m, 3) triangles.
    facets : dict
        Per tag, the boundary faces: node indices (k,) in 1D, edge node
        pairs (k, 2) in 2D.  Faces keep the order of the sides they come
        from, so facet lists are deterministic.
    node_sets : dict
        Per tag, the sorted node indices, deduplicated with priority
        gamma1 > gamma3 > gamma2.
    gamma3_weights : ndarray
        Lumped boundary quadrature weight per node (zero off gamma3
        faces); a point on the 1D boundary carries weight one.
    free_nodes : ndarray of int
        All nodes without a Dirichlet constraint.
    """

    spec: MeshSpec
    nodes: np.ndarray
    elements: np.ndarray
    facets: dict[str, np.ndarray]
    node_sets: dict[str, np.ndarray]
    gamma3_weights: np.ndarray
    free_nodes: np.ndarray

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


def build_mesh(spec: MeshSpec) -> Mesh:
    """Build the structured mesh described by ``spec``."""
    if spec.dimension == 1:
        mesh = _build_interval(spec)
    else:
        mesh = _build_rectangle(spec)
    for arr in (mesh.nodes, mesh.elements, mesh.gamma3_weights, mesh.free_nodes):
        arr.flags.writeable = False
    return mesh


def _build_interval(spec: MeshSpec) -> Mesh:
    (length,) = spec.extents
    (n,) = spec.resolution
    nodes = np.linspace(0.0, length, n + 1)
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)]).astype(np.int64)
    side_faces = {"left": np.array([0]), "right": np.array([n])}
    return _finish_mesh(spec, nodes, elements, side_faces)


def _build_rectangle(spec: MeshSpec) -> Mesh:
    lx, ly = spec.extents
    nx, ny = spec.resolution
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    xx, yy = np.meshgrid(xs, ys)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def nid(ix, iy):
        return iy * (nx + 1) + ix

    tris = []
    for iy in range(ny):
        for ix in range(nx):
            a = nid(ix, iy)
            b = nid(ix + 1, iy)
            c = nid(ix + 1, iy + 1)
            d = nid(ix, iy + 1)
            # fixed diagonal a-c keeps the triangulation deterministic
            tris.append((a, b, c))
            tris.append((a, c, d))
    elements = np.array(tris, dtype=np.int64)

    side_faces = {
        "left": np.array([(nid(0, iy), nid(0, iy + 1)) for iy in range(ny)]),
        "right": np.array([(nid(nx, iy), nid(nx, iy + 1)) for iy in range(ny)]),
        "bottom": np.array([(nid(ix, 0), nid(ix + 1, 0)) for ix in range(nx)]),
        "top": np.array([(nid(ix, ny), nid(ix + 1, ny)) for ix in range(nx)]),
    }
    return _finish_mesh(spec, nodes, elements, side_faces)


def _finish_mesh(spec, nodes, elements, side_faces) -> Mesh:
    sides = SIDES_1D if spec.dimension == 1 else SIDES_2D
    empty = np.zeros((0,) if spec.dimension == 1 else (0, 2), dtype=np.int64)
    facets = {tag: [] for tag in TAGS}
    for side in sides:
        facets[spec.partition[side]].append(np.atleast_1d(side_faces[side]))
    facets = {
        tag: (np.concatenate(chunks) if chunks else empty).astype(np.int64)
        for tag, chunks in facets.items()
    }

    taken = np.zeros(0, dtype=np.int64)
    node_sets = {}
    for tag in (GAMMA1, GAMMA3, GAMMA2):  # priority order
        raw = np.unique(facets[tag].ravel())
        node_sets[tag] = np.setdiff1d(raw, taken)
        taken = np.union1d(taken, raw)

    weights = np.zeros(len(nodes))
    g3 = facets[GAMMA3]
    if spec.dimension == 1:
        weights[g3] += 1.0  # point measure on the interval boundary
    else:
        for a, b in g3:
            half = 0.5 * float(np.linalg.norm(nodes[b] - nodes[a]))
            weights[a] += half
            weights[b] += half

    free = np.setdiff1d(np.arange(len(nodes)), node_sets[GAMMA1])
    return Mesh(spec, nodes, elements, facets, node_sets, weights, free)


# ---------------------------------------------------------------------------
# coefficient sampling

def element_midpoints(mesh: Mesh) -> np.ndarray:
    """Midpoints (1D) or centroids (2D) of all elements."""
    return mesh.nodes[mesh.elements].mean(axis=1)


def element_values(mesh: Mesh, data) -> np.ndarray:
    """Sample a coefficient at the element midpoints.

    ``data`` may be a scalar, a callable of the midpoint coordinates, or
    an array with one value per element.
    """
    m = len(mesh.elements)
    if callable(data):
        out = np.asarray(data(element_midpoints(mesh)), dtype=float)
        out = np.broadcast_to(out, (m,)).astype(float)
    elif np.ndim(data) == 0:
        out = np.full(m, float(data))
    else:
        out = np.asarray(data, dtype=float)
        if out.shape != (m,):
            raise ValueError(f"expected {m} element values, got shape {out.shape}")
    return out


def facet_midpoints(mesh: Mesh, tag: str) -> np.ndarray:
    faces = mesh.facets[tag]
    if mesh.dimension == 1:
        return mesh.nodes[faces]
    return mesh.nodes[faces].mean(axis=1)


def facet_values(mesh: Mesh, tag: str, data) -> np.ndarray:
    """Sample a boundary coefficient at the facet midpoints of ``tag``."""
    m = len(mesh.facets[tag])
    if callable(data):
        out = np.asarray(data(facet_midpoints(mesh, tag)), dtype=float)
        out = np.broadcast_to(out, (m,)).astype(float)
    elif np.ndim(data) == 0:
        out = np.full(m, float(data))
    else:
        out = np.asarray(data, dtype=float)
        if out.shape != (m,):
            raise ValueError(f"expected {m} facet values, got shape {out.shape}")
    return out


def facet_measures(mesh: Mesh, tag: str) -> np.ndarray:
    """Measure of each boundary facet of ``tag``: edge lengths in 2D,
    the unit point measure on interval endpoints in 1D."""
    faces = mesh.facets[tag]
    if mesh.dimension == 1:
        return np.ones(len(faces))
    return np.linalg.norm(mesh.nodes[faces[:, 1]] - mesh.nodes[faces[:, 0]], axis=1)


# ---------------------------------------------------------------------------
# assembly

def assemble_stiffness(mesh: Mesh, mu, mu_star: float | None = None) -> sp.csr_matrix:
    """Assemble the weighted stiffness matrix K[i,j] = (mu grad phi_j, grad phi_i).

    The shear modulus ``mu`` is sampled at element midpoints and must stay
    positive; when ``mu_star`` is given, values below it are rejected.
    """
    mu_e = element_values(mesh, mu)
    low = float(mu_e.min())
    if low <= 0.0:
        raise ValueError(f"shear modulus must be positive, min sampled value {low}")
    if mu_star is not None and low < mu_star - 1e-14:
        raise ValueError(f"shear modulus drops to {low}, below the floor {mu_star}")
    return _assemble_gradient_form(mesh, mu_e)


def _assemble_gradient_form(mesh: Mesh, coef_e: np.ndarray) -> sp.csr_matrix:
    n = mesh.n_nodes
    rows, cols, vals = [], [], []
    if mesh.dimension == 1:
        h = np.diff(mesh.nodes)
        k = coef_e / h
        for (i, j), ke in zip(mesh.elements, k):
            rows += [i, i, j, j]
            cols += [i, j, i, j]
            vals += [ke, -ke, -ke, ke]
    else:
        pts = mesh.nodes[mesh.elements]  # (m, 3, 2)
        for conn, p, ce in zip(mesh.elements, pts, coef_e):
            b = np.array([p[1, 1] - p[2, 1], p[2, 1] - p[0, 1], p[0, 1] - p[1, 1]])
            c = np.array([p[2, 0] - p[1, 0], p[0, 0] - p[2, 0], p[1, 0] - p[0, 0]])
            area = 0.5 * abs(b[0] * c[1] - b[1] * c[0])
            ke = ce * (np.outer(b, b) + np.outer(c, c)) / (4.0 * area)
            for a in range(3):
                for d in range(3):
                    rows.append(conn[a])
                    cols.append(conn[d])
                    vals.append(ke[a, d])
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
    return mat.tocsr()


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Assemble the consistent mass matrix M[i,j] = (phi_j, phi_i)."""
    n = mesh.n_nodes
    rows, cols, vals = [], [], []
    if mesh.dimension == 1:
        h = np.diff(mesh.nodes)
        for (i, j), he in zip(mesh.elements, h):
            me = he / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
            for a, ga in enumerate((i, j)):
                for b, gb in enumerate((i, j)):
                    rows.append(ga)
                    cols.append(gb)
                    vals.append(me[a, b])
    else:
        base = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
        pts = mesh.nodes[mesh.elements]
        for conn, p in zip(mesh.elements, pts):
            area = 0.5 * abs(
                (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1])
            )
            me = area * base
            for a in range(3):
                for b in range(3):
                    rows.append(conn[a])
                    cols.append(conn[b])
                    vals.append(me[a, b])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def assemble_load(mesh: Mesh, f0, f2=None) -> np.ndarray:
    """Assemble the load vector of the body force and the gamma2 traction.

    ``f0`` is sampled at element midpoints, ``f2`` at gamma2 facet
    midpoints.  A 1D gamma2 point carries the point measure, so its value
    enters the load with weight one.
    """
    import warnings

    F = np.zeros(mesh.n_nodes)
    f0_e = element_values(mesh, f0)
    if mesh.dimension == 1:
        h = np.diff(mesh.nodes)
        np.add.at(F, mesh.elements[:, 0], f0_e * h / 2.0)
        np.add.at(F, mesh.elements[:, 1], f0_e * h / 2.0)
    else:
        pts = mesh.nodes[mesh.elements]
        areas = 0.5 * np.abs(
            (pts[:, 1, 0] - pts[:, 0, 0]) * (pts[:, 2, 1] - pts[:, 0, 1])
            - (pts[:, 2, 0] - pts[:, 0, 0]) * (pts[:, 1, 1] - pts[:, 0, 1])
        )
        for k in range(mesh.elements.shape[1]):
            np.add.at(F, mesh.elements[:, k], f0_e * areas / 3.0)

    if f2 is not None:
        faces = mesh.facets[GAMMA2]
        if len(faces) == 0:
            val = f2 if np.ndim(f2) == 0 else np.asarray(f2)
            nonzero = (callable(f2) or np.any(np.asarray(val) != 0.0))
            if nonzero:
                warnings.warn("traction given but gamma2 is empty; it is ignored")
            return F
        f2_f = facet_values(mesh, GAMMA2, f2)
        if mesh.dimension == 1:
            np.add.at(F, faces, f2_f)
        else:
            lens = np.linalg.norm(mesh.nodes[faces[:, 1]] - mesh.nodes[faces[:, 0]], axis=1)
            np.add.at(F, faces[:, 0], f2_f * lens / 2.0)
            np.add.at(F, faces[:, 1], f2_f * lens / 2.0)
    return F


# ---------------------------------------------------------------------------
# friction bound

@dataclass(frozen=True)
class FrictionBound:
    """Slip-dependent friction bound g(x, r) with a declared Lipschitz rate.

    ``func(points, r)`` must be vectorized over gamma3 nodes, nonnegative,
    and Lipschitz in r with constant at most ``lipschitz``.
    """

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lipschitz: float
    label: str = ""

    def __post_init__(self):
        if self.lipschitz < 0.0:
            raise ValueError("Lipschitz rate must be nonnegative")

    def __call__(self, points: np.ndarray, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.asarray(self.func(points, r), dtype=float)
        return np.broadcast_to(out, r.shape).astype(float)

    @classmethod
    def constant(cls, c: float) -> "FrictionBound":
        if c < 0.0:
            raise ValueError("constant friction bound must be nonnegative")
        return cls(lambda x, r: np.full_like(r, float(c)), 0.0, label=f"{c}")

    @classmethod
    def affine(cls, a: float, b: float) -> "FrictionBound":
        """Bound a + b*|r|, nonnegative for a, b >= 0."""
        if a < 0.0 or b < 0.0:
            raise ValueError("affine friction coefficients must be nonnegative")
        return cls(lambda x, r: a + b * np.abs(r), float(b), label=f"{a}+{b}|r|")

    def shifted(self, da: float, db: float) -> "FrictionBound":
        """Perturbed bound g(x, r) + da + db*|r| (da, db >= 0)."""
        if da < 0.0 or db < 0.0:
            raise ValueError("perturbation coefficients must be nonnegative")
        return FrictionBound(
            lambda x, r: self(x, r) + da + db * np.abs(r),
            self.lipschitz + db,
            label=f"({self.label})+{da}+{db}|r|",
        )


def eval_j(mesh: Mesh, g: FrictionBound, eta: np.ndarray, v: np.ndarray) -> float:
    """Lumped friction functional j(eta, v) = sum_i w_i g(x_i, |eta_i|) |v_i|."""
    idx = mesh.node_sets[GAMMA3]
    if len(idx) == 0:
        return 0.0
    w = mesh.gamma3_weights[idx]
    G = g(mesh.nodes[idx], np.abs(eta[idx]))
    if np.any(G < -1e-14):
        raise ValueError("friction bound took a negative value on gamma3")
    return float(np.sum(w * G * np.abs(v[idx])))


def gamma3_bound_values(mesh: Mesh, g: FrictionBound, eta: np.ndarray) -> np.ndarray:
    """Bound values g(x_i, |eta_i|) on the gamma3 node set."""
    idx = mesh.node_sets[GAMMA3]
    G = g(mesh.nodes[idx], np.abs(eta[idx]))
    if np.any(G < -1e-14):
        raise ValueError("friction bound took a negative value on gamma3")
    return np.maximum(G, 0.0)


# ---------------------------------------------------------------------------
# norms and cached forms

_FORM_CACHE: "weakref.WeakKeyDictionary[Mesh, dict]" = weakref.WeakKeyDictionary()


def _forms(mesh: Mesh) -> dict:
    cache = _FORM_CACHE.get(mesh)
    if cache is None:
        cache = {}
        _FORM_CACHE[mesh] = cache
    if "gram" not in cache:
        cache["mass"] = assemble_mass(mesh)
        cache["stiff1"] = _assemble_gradient_form(mesh, np.ones(len(mesh.elements)))
        cache["gram"] = (cache["mass"] + cache["stiff1"]).tocsr()
    return cache


def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    return _forms(mesh)["mass"]


def unit_stiffness(mesh: Mesh) -> sp.csr_matrix:
    """Stiffness matrix with unit coefficient (the gradient Gram matrix)."""
    return _forms(mesh)["stiff1"]


def gram_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Matrix of the full H1 inner product (mass + unit stiffness)."""
    return _forms(mesh)["gram"]


def v_norm(mesh: Mesh, v: np.ndarray) -> float:
    """Full H1 norm of a nodal field, consistent element quadrature."""
    A = gram_matrix(mesh)
    return float(np.sqrt(max(v @ (A @ v), 0.0)))


def grad_seminorm(mesh: Mesh, v: np.ndarray) -> float:
    S = unit_stiffness(mesh)
    return float(np.sqrt(max(v @ (S @ v), 0.0)))


def gamma3_norm(mesh: Mesh, v: np.ndarray) -> float:
    """Lumped L2 norm on the gamma3 boundary, matching eval_j quadrature."""
    idx = mesh.node_sets[GAMMA3]
    if len(idx) == 0:
        return 0.0
    w = mesh.gamma3_weights[idx]
    return float(np.sqrt(np.sum(w * v[idx] ** 2)))


def dual_norm(mesh: Mesh, F: np.ndarray) -> float:
    """Norm of a load functional over the constrained space.

    Computed as sqrt(F' A^-1 F) on the free nodes, where A is the H1 Gram
    matrix; this is the Riesz norm of v -> F.v over fields vanishing on
    gamma1.
    """
    cache = _forms(mesh)
    if "gram_free_solve" not in cache:
        free = mesh.free_nodes
        A = gram_matrix(mesh)[free][:, free].tocsc()
        cache["gram_free_solve"] = spla.factorized(A)
    free = mesh.free_nodes
    Ff = F[free]
    z = cache["gram_free_solve"](Ff)
    return float(np.sqrt(max(Ff @ z, 0.0)))


def in_space(mesh: Mesh, v: np.ndarray, tol: float = 0.0) -> bool:
    """True when the field vanishes on all gamma1 nodes (lies in V_h)."""
    g1 = mesh.node_sets[GAMMA1]
    if len(g1) == 0:
        return True
    return bool(np.max(np.abs(v[g1])) <= tol)


def zero_on_gamma1(mesh: Mesh, v: np.ndarray) -> np.ndarray:
    """Copy of ``v`` with the gamma1 coefficients forced to zero."""
    out = np.array(v, dtype=float)
    out[mesh.node_sets[GAMMA1]] = 0.0
    return out
