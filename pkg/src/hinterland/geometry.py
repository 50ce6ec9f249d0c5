"""Raster domains, distance systems, and additively weighted Voronoi tessellations.

The planar domain is discretized into a rectangular grid of cells; everything
downstream (cell measures, amenity integrals, boundary sums) is evaluated at
cell centers, which keeps measure errors O(h) and places no restriction on
domain shape or amenity fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import (
    CoincidentSites,
    DisconnectedDomain,
    EmptyDomain,
    NonFiniteWeight,
    SingleSite,
)

#: Label used for raster cells outside the domain.
OUTSIDE = -1


@dataclass(frozen=True)
class DomainGrid:
    """A bounded planar domain sampled on a regular cell grid.

    ``inside`` marks the cells (by center) that belong to the domain; the
    inside region must be non-empty and 4-connected.
    """

    bbox: tuple[float, float, float, float]
    nx: int
    ny: int
    inside: np.ndarray  # bool, shape (ny, nx)

    @property
    def dx(self) -> float:
        return (self.bbox[2] - self.bbox[0]) / self.nx

    @property
    def dy(self) -> float:
        return (self.bbox[3] - self.bbox[1]) / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def n_inside(self) -> int:
        return int(self.inside.sum())

    @property
    def area(self) -> float:
        """Measure of the discrete domain (inside cell count times cell area)."""
        return self.n_inside * self.cell_area

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (X, Y) arrays of cell-center coordinates, shape (ny, nx)."""
        xmin, ymin, _, _ = self.bbox
        xs = xmin + (np.arange(self.nx) + 0.5) * self.dx
        ys = ymin + (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(xs, ys)

    def cell_of(self, point) -> tuple[int, int]:
        """Return the (iy, ix) cell containing ``point`` (clipped to the grid)."""
        x, y = float(point[0]), float(point[1])
        ix = min(max(int((x - self.bbox[0]) / self.dx), 0), self.nx - 1)
        iy = min(max(int((y - self.bbox[1]) / self.dy), 0), self.ny - 1)
        return iy, ix


def build_grid(bbox, resolution, inside_predicate=None) -> DomainGrid:
    """Discretize a bounding box into a grid and evaluate the domain mask.

    Parameters
    ----------
    bbox : (xmin, ymin, xmax, ymax)
        Bounding box in abstract length units.
    resolution : (nx, ny)
        Cells per axis; at least 2 per axis.
    inside_predicate : callable or None
        Vectorized predicate ``f(X, Y) -> bool array`` evaluated at cell
        centers. ``None`` marks every cell inside.

    Raises
    ------
    EmptyDomain
        If no cell center satisfies the predicate.
    DisconnectedDomain
        If the inside cells split into more than one 4-connected component.
    """
    xmin, ymin, xmax, ymax = (float(v) for v in bbox)
    nx, ny = int(resolution[0]), int(resolution[1])
    if nx < 2 or ny < 2:
        raise ValueError(f"resolution must be at least 2 per axis, got {nx}x{ny}")
    if not (xmax > xmin and ymax > ymin):
        raise ValueError(f"degenerate bbox {bbox}")

    grid = DomainGrid(bbox=(xmin, ymin, xmax, ymax), nx=nx, ny=ny,
                      inside=np.ones((ny, nx), dtype=bool))
    if inside_predicate is not None:
        X, Y = grid.cell_centers()
        mask = np.asarray(inside_predicate(X, Y), dtype=bool)
        if mask.shape != (ny, nx):
            raise ValueError(f"inside predicate returned shape {mask.shape}, expected {(ny, nx)}")
        grid = DomainGrid(bbox=grid.bbox, nx=nx, ny=ny, inside=mask)

    if grid.n_inside == 0:
        raise EmptyDomain("inside predicate marked no cell")
    # 4-connectivity: diagonal contact does not join components.
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    _, n_components = ndimage.label(grid.inside, structure=structure)
    if n_components > 1:
        raise DisconnectedDomain(f"inside mask has {n_components} 4-connected components")
    grid.inside.setflags(write=False)
    return grid


@dataclass(frozen=True)
class Site:
    """A business district: an indexed point with labor productivity."""

    id: int
    position: tuple[float, float]
    productivity: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.productivity) and self.productivity > 0):
            raise ValueError(f"site {self.id}: productivity must be finite and > 0, got {self.productivity}")
        if not all(math.isfinite(c) for c in self.position):
            raise ValueError(f"site {self.id}: non-finite position {self.position}")


def site_positions(sites) -> np.ndarray:
    """Stack site positions into an (n, 2) array."""
    return np.array([s.position for s in sites], dtype=float)


def site_productivities(sites) -> np.ndarray:
    return np.array([s.productivity for s in sites], dtype=float)


@dataclass(frozen=True)
class DistanceSystem:
    """Family of per-site distance functions d_i(x).

    ``euclidean`` uses the plain Euclidean distance for every site;
    ``scaled_euclidean`` multiplies it by a per-site factor s_i > 0 (so the
    family is generally asymmetric: d_i(y_j) != d_j(y_i) when scales differ).
    """

    kind: str = "euclidean"
    scales: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "scaled_euclidean"):
            raise ValueError(f"unknown distance system kind {self.kind!r}")
        if self.kind == "scaled_euclidean":
            if self.scales is None or any(not (s > 0) for s in self.scales):
                raise ValueError("scaled_euclidean needs positive per-site scales")

    def scale_of(self, i: int) -> float:
        if self.kind == "euclidean":
            return 1.0
        return float(self.scales[i])

    def lipschitz_constants(self, n_sites: int) -> tuple[float, float]:
        """Lower/upper constants (c, C) bounding d_i against Euclidean distance."""
        if self.kind == "euclidean":
            return 1.0, 1.0
        scales = self.scales[:n_sites]
        return float(min(scales)), float(max(scales))

    def distance(self, site: Site, i: int, X, Y):
        """Evaluate d_i at points (vectorized over X, Y arrays)."""
        sx, sy = site.position
        dxv = X - sx
        dyv = Y - sy
        d = np.sqrt(dxv * dxv + dyv * dyv)
        s = self.scale_of(i)
        if s != 1.0:
            d = d * s
        return d

    def gradient(self, site: Site, i: int, x: float, y: float) -> tuple[float, float]:
        """Gradient of d_i at a single point (undefined at the site itself)."""
        sx, sy = site.position
        dxv = x - sx
        dyv = y - sy
        norm = math.sqrt(dxv * dxv + dyv * dyv)
        if norm == 0.0:
            return 0.0, 0.0
        s = self.scale_of(i)
        return s * dxv / norm, s * dyv / norm


def cross_distances(sites, system: DistanceSystem) -> np.ndarray:
    """Matrix d[i, j] = d_i(y_j), distance from district i's metric to district j."""
    pos = site_positions(sites)
    diff = pos[:, None, :] - pos[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    if system.kind == "scaled_euclidean":
        d = d * np.asarray(system.scales, dtype=float)[:, None]
    return d


@dataclass(frozen=True)
class Tessellation:
    """Additively weighted Voronoi tessellation on a raster grid.

    Each inside cell carries the index of the site minimizing d_i(x) - w_i at
    the cell center (ties to the lowest index); outside cells carry OUTSIDE.
    """

    grid: DomainGrid
    sites: tuple[Site, ...]
    system: DistanceSystem
    weights: np.ndarray          # (n,)
    labels: np.ndarray           # int32 (ny, nx), OUTSIDE for cells not in the domain
    cell_measure: np.ndarray     # (n,)
    neighbors: tuple[frozenset, ...] = field(repr=False)

    @property
    def active_set(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.cell_measure > 0))

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def is_active(self, i: int) -> bool:
        return self.cell_measure[i] > 0

    def interface_edges(self, i: int, k: int):
        """Cell edges separating the cells of sites i and k.

        Returns an (m, 4) float array of rows (x_mid, y_mid, edge_length,
        normal_axis) for the shared raster edges, midpoints in domain
        coordinates. ``normal_axis`` is 0.0 for vertical edges (separating
        horizontal neighbors, edge normal along x) and 1.0 for horizontal
        edges. Line integrals over the interface must project onto these
        normals: summing raw edge lengths measures the staircase, not the
        curve. Empty when the pair is not adjacent.
        """
        if i == k:
            return np.empty((0, 4))
        lab = self.labels
        g = self.grid
        rows = []
        # vertical edges between horizontally adjacent cells
        left, right = lab[:, :-1], lab[:, 1:]
        mask = ((left == i) & (right == k)) | ((left == k) & (right == i))
        iy, ix = np.nonzero(mask)
        if iy.size:
            x = g.bbox[0] + (ix + 1.0) * g.dx
            y = g.bbox[1] + (iy + 0.5) * g.dy
            rows.append(np.column_stack([x, y, np.full(iy.shape, g.dy),
                                         np.zeros(iy.shape)]))
        # horizontal edges between vertically adjacent cells
        low, high = lab[:-1, :], lab[1:, :]
        mask = ((low == i) & (high == k)) | ((low == k) & (high == i))
        iy, ix = np.nonzero(mask)
        if iy.size:
            x = g.bbox[0] + (ix + 0.5) * g.dx
            y = g.bbox[1] + (iy + 1.0) * g.dy
            rows.append(np.column_stack([x, y, np.full(iy.shape, g.dx),
                                         np.ones(iy.shape)]))
        if not rows:
            return np.empty((0, 4))
        return np.concatenate(rows, axis=0)


def _check_distinct_positions(sites):
    seen = {}
    for s in sites:
        key = (float(s.position[0]), float(s.position[1]))
        if key in seen:
            raise CoincidentSites(
                f"sites {seen[key]} and {s.id} share position {key}")
        seen[key] = s.id


def assign_labels(grid: DomainGrid, sites, system: DistanceSystem, weights) -> Tessellation:
    """Label every inside cell with the site minimizing d_i(x) - w_i.

    Ties are broken toward the lowest site index; adding a common constant to
    all weights leaves the labeling unchanged. Cell measures, the adjacency
    graph, and the active set are populated on the result.
    """
    sites = tuple(sites)
    if not sites:
        raise ValueError("assign_labels needs at least one site")
    _check_distinct_positions(sites)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(sites),):
        raise ValueError(f"expected {len(sites)} weights, got shape {weights.shape}")
    if not np.all(np.isfinite(weights)):
        raise NonFiniteWeight(f"weights contain non-finite entries: {weights}")

    X, Y = grid.cell_centers()
    cost = np.empty((len(sites), grid.ny, grid.nx))
    for i, s in enumerate(sites):
        cost[i] = system.distance(s, i, X, Y) - weights[i]
    labels = np.argmin(cost, axis=0).astype(np.int32)  # first minimum = lowest index
    labels[~grid.inside] = OUTSIDE

    counts = np.bincount(labels[grid.inside].ravel(), minlength=len(sites))
    cell_measure = counts.astype(float) * grid.cell_area

    neighbor_sets = [set() for _ in sites]
    for a, b in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        both_inside = (a != OUTSIDE) & (b != OUTSIDE) & (a != b)
        for u, v in zip(a[both_inside].ravel(), b[both_inside].ravel()):
            neighbor_sets[u].add(int(v))
            neighbor_sets[v].add(int(u))
    neighbors = tuple(frozenset(s) for s in neighbor_sets)

    labels.setflags(write=False)
    return Tessellation(grid=grid, sites=sites, system=system, weights=weights,
                        labels=labels, cell_measure=cell_measure, neighbors=neighbors)


@dataclass(frozen=True)
class FeasibilityReport:
    """Per-ordered-pair classification of a weight vector.

    A pair (i, j) is ``interior`` when w_i - w_j stays within the k-shrunk
    band (-k d_j(y_i), k d_i(y_j)), ``boundary`` when inside the full open
    band but outside the shrunk one, and ``infeasible`` otherwise (site j's
    cell is empty or about to be).
    """

    pairs: dict
    verdict: str

    _ORDER = {"interior": 0, "boundary": 1, "infeasible": 2}


def lambda_feasibility(sites, system: DistanceSystem, weights, k: float) -> FeasibilityReport:
    """Classify weight differences against the active-cell feasibility bands."""
    if not (0.0 < k < 1.0):
        raise ValueError(f"k must be in (0, 1), got {k}")
    sites = tuple(sites)
    weights = np.asarray(weights, dtype=float)
    d = cross_distances(sites, system)
    pairs = {}
    worst = "interior"
    for i in range(len(sites)):
        for j in range(len(sites)):
            if i == j:
                continue
            diff = weights[i] - weights[j]
            # feasible band for w_i - w_j is (-d_j(y_i), d_i(y_j))
            lo, hi = -d[j, i], d[i, j]
            if lo < diff < hi:
                status = "interior" if (k * lo < diff < k * hi) else "boundary"
            else:
                status = "infeasible"
            pairs[(i, j)] = status
            if FeasibilityReport._ORDER[status] > FeasibilityReport._ORDER[worst]:
                worst = status
    return FeasibilityReport(pairs=pairs, verdict=worst)


def pairwise_metrics(sites, system: DistanceSystem):
    """Distance matrix plus the two separation summaries used by the checks.

    Returns ``(d_matrix, d_min, r)`` where ``d_matrix[i, j] = d_i(y_j)``,
    ``d_min`` is the smallest off-diagonal entry and ``r`` the smallest
    eccentricity min_i max_j d_i(y_j).
    """
    sites = tuple(sites)
    _check_distinct_positions(sites)
    d = cross_distances(sites, system)
    n = len(sites)
    if n < 2:
        raise SingleSite("pairwise metrics need at least two sites for d_min")
    off = d[~np.eye(n, dtype=bool)]
    d_min = float(off.min())
    r = float(d.max(axis=1).min())
    return d, d_min, r
