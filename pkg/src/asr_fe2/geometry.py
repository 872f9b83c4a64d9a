"""Random concrete meso-structures on structured triangle meshes.

Aggregates are circles drawn from a Fuller grading and placed largest-first by
random sequential addition. The specimen is discretized by a structured grid of
right triangles and every triangle takes the phase of its centroid.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MeshError, ParameterError, PlacementError

FULLER_EXPONENT = 0.5
N_GRADING_BINS = 16


class Phase(enum.IntEnum):
    MORTAR = 0
    AGGREGATE = 1
    ASR_SITE = 2


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    radius: float

    @property
    def center(self):
        return np.array([self.cx, self.cy])

    @property
    def area(self):
        return math.pi * self.radius**2


@dataclass
class TriMesh:
    """Linear triangle mesh of a ``width`` x ``height`` rectangle (mm).

    Triangles are counter-clockwise. ``element_size`` is the grid spacing h and
    doubles as the crack band width of the meso model.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    element_size: float
    width: float
    height: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.triangles)

    @property
    def areas(self):
        if "areas" not in self._cache:
            p = self.nodes[self.triangles]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            self._cache["areas"] = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._cache["areas"]

    @property
    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)

    def _edge_nodes(self, axis, value):
        tol = 1e-9 * max(self.width, self.height)
        return np.flatnonzero(np.abs(self.nodes[:, axis] - value) < tol)

    def boundary_nodes(self, side):
        """Node indices on ``side`` ('left', 'right', 'bottom', 'top'), sorted along the edge."""
        axis, value = {
            "left": (0, 0.0),
            "right": (0, self.width),
            "bottom": (1, 0.0),
            "top": (1, self.height),
        }[side]
        idx = self._edge_nodes(axis, value)
        along = self.nodes[idx, 1 - axis]
        return idx[np.argsort(along, kind="stable")]

    def corner_nodes(self):
        """Corners in the order bottom-left, top-left, top-right, bottom-right."""
        targets = [(0.0, 0.0), (0.0, self.height), (self.width, self.height), (self.width, 0.0)]
        out = []
        for x, y in targets:
            dist = np.hypot(self.nodes[:, 0] - x, self.nodes[:, 1] - y)
            k = int(np.argmin(dist))
            if dist[k] > 1e-9 * max(self.width, self.height):
                raise MeshError(f"no node at corner ({x}, {y})")
            out.append(k)
        return np.array(out)

    def boundary_edges(self, side):
        """Consecutive node pairs along one side of the rectangle."""
        nodes = self.boundary_nodes(side)
        return np.column_stack([nodes[:-1], nodes[1:]])

    def validate(self):
        if self.triangles.min() < 0 or self.triangles.max() >= self.n_nodes:
            raise MeshError("triangle node index out of range")
        if np.any(self.areas <= 0):
            raise MeshError("triangle with non-positive area")


def _as_grid_count(length, h, name):
    n = length / h
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, n):
        raise ParameterError(f"{name}/h = {n} is not a positive integer")
    return k


def build_structured_mesh(width, height, h):
    """Structured mesh: each h x h square split along its rising diagonal."""
    if h <= 0:
        raise ParameterError("element size must be positive")
    nx = _as_grid_count(width, h, "width")
    ny = _as_grid_count(height, h, "height")
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    n00 = (j * (nx + 1) + i).ravel()
    n10 = n00 + 1
    n01 = n00 + nx + 1
    n11 = n01 + 1
    lower = np.column_stack([n00, n10, n11])
    upper = np.column_stack([n00, n11, n01])
    # lower/upper triangle of one square are neighbours in the element list
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return TriMesh(nodes=nodes, triangles=triangles, element_size=float(h),
                   width=float(width), height=float(height))


def sample_aggregate_diameters(d_min, d_max, target_fraction, domain_area, rng_seed):
    """Aggregate diameters (mm) following a Fuller grading, sorted descending.

    The range [d_min, d_max] is cut into log-spaced bins. Bins are filled from
    the coarsest down; a bin keeps receiving uniformly drawn diameters while the
    cumulative circle area is below the cumulative Fuller target.
    """
    if not (0 < d_min < d_max):
        raise ParameterError("need 0 < d_min < d_max")
    if not (0 <= target_fraction < 1):
        raise ParameterError("target_fraction must lie in [0, 1)")
    if domain_area <= 0:
        raise ParameterError("domain_area must be positive")
    if target_fraction == 0:
        return []

    rng = np.random.default_rng(rng_seed)
    total = target_fraction * domain_area
    edges = np.geomspace(d_min, d_max, N_GRADING_BINS + 1)
    passing = (edges / d_max) ** FULLER_EXPONENT
    passing = (passing - passing[0]) / (passing[-1] - passing[0])

    diameters = []
    placed = 0.0
    for k in range(N_GRADING_BINS - 1, -1, -1):
        lo, hi = edges[k], edges[k + 1]
        target = total * (1.0 - passing[k])
        while placed < target:
            d = rng.uniform(lo, hi)
            diameters.append(d)
            placed += 0.25 * math.pi * d * d
    diameters.sort(reverse=True)
    return diameters


def _overlaps(cand, centers, radii, r):
    if len(centers) == 0:
        return np.zeros(len(cand), dtype=bool)
    diff = cand[:, None, :] - centers[None, :, :]
    dist2 = np.einsum("ijk,ijk->ij", diff, diff)
    reach = (radii + r) ** 2
    return np.any(dist2 < reach[None, :], axis=1)


def place_aggregates(diameters, domain, max_attempts_per_circle=2000, rng_seed=None):
    """Place circles largest-first inside ``domain = (width, height)`` without overlap.

    Raises PlacementError (with the partial packing attached) when a circle
    cannot be placed within ``max_attempts_per_circle`` random trials.
    """
    width, height = domain
    diam = np.asarray(diameters, dtype=float)
    if np.any(np.diff(diam) > 0):
        raise ParameterError("diameters must be sorted descending")
    rng = np.random.default_rng(rng_seed)
    centers = np.empty((0, 2))
    radii = np.empty(0)
    batch = 64
    for d in diam:
        r = 0.5 * d
        if 2 * r > min(width, height):
            raise ParameterError(f"aggregate of diameter {d} does not fit the domain")
        placed = False
        tried = 0
        while tried < max_attempts_per_circle:
            n = min(batch, max_attempts_per_circle - tried)
            cand = np.column_stack([rng.uniform(r, width - r, n), rng.uniform(r, height - r, n)])
            ok = np.flatnonzero(~_overlaps(cand, centers, radii, r))
            tried += n
            if len(ok):
                centers = np.vstack([centers, cand[ok[0]]])
                radii = np.append(radii, r)
                placed = True
                break
        if not placed:
            circles = [Circle(float(x), float(y), float(rr)) for (x, y), rr in zip(centers, radii)]
            frac = float(np.sum(np.pi * radii**2) / (width * height))
            raise PlacementError(
                f"could not place circle of diameter {d:.3f} mm after "
                f"{max_attempts_per_circle} attempts (achieved fraction {frac:.3f})",
                achieved_fraction=frac,
                circles=circles,
            )
    return [Circle(float(x), float(y), float(rr)) for (x, y), rr in zip(centers, radii)]


def area_fraction(circles, domain):
    width, height = domain
    return sum(c.area for c in circles) / (width * height)


def assign_phases(mesh, circles, asr_site_ratio, rng_seed=None):
    """Per-triangle phase labels.

    A triangle is aggregate iff its centroid lies inside a circle; then
    floor(ratio * n_aggregate) aggregate triangles are drawn uniformly and
    relabeled as ASR sites.
    """
    if not (0 <= asr_site_ratio < 1):
        raise ParameterError("asr_site_ratio must lie in [0, 1)")
    cent = mesh.centroids
    phases = np.full(mesh.n_elements, Phase.MORTAR, dtype=np.int8)
    inside = np.zeros(mesh.n_elements, dtype=bool)
    for c in circles:
        # bounding box prefilter keeps this linear in the covered area
        lo_x, hi_x = c.cx - c.radius, c.cx + c.radius
        lo_y, hi_y = c.cy - c.radius, c.cy + c.radius
        cand = np.flatnonzero((cent[:, 0] >= lo_x) & (cent[:, 0] <= hi_x)
                              & (cent[:, 1] >= lo_y) & (cent[:, 1] <= hi_y))
        d2 = (cent[cand, 0] - c.cx) ** 2 + (cent[cand, 1] - c.cy) ** 2
        inside[cand[d2 < c.radius**2]] = True
    phases[inside] = Phase.AGGREGATE
    agg = np.flatnonzero(inside)
    n_sites = int(math.floor(asr_site_ratio * len(agg) + 1e-12))
    if n_sites:
        rng = np.random.default_rng(rng_seed)
        sites = rng.choice(agg, size=n_sites, replace=False)
        phases[sites] = Phase.ASR_SITE
    return phases


def generate_specimen(width, height, h, d_min, d_max, packing, asr_site_ratio,
                      geometry_seed, sites_seed, max_attempts_per_circle=2000,
                      accept_partial=True):
    """Mesh, circles and phase labels for one specimen.

    Returns ``(mesh, circles, phases, achieved_fraction)``. With
    ``accept_partial`` a PlacementError is absorbed and the partial packing is
    used.
    """
    mesh = build_structured_mesh(width, height, h)
    grading_seed, placement_seed = np.random.SeedSequence(geometry_seed).spawn(2)
    diameters = sample_aggregate_diameters(d_min, d_max, packing, width * height, grading_seed)
    if diameters:
        diameters = [d for d in diameters if d <= min(width, height)]
    try:
        circles = place_aggregates(diameters, (width, height), max_attempts_per_circle,
                                   rng_seed=placement_seed)
    except PlacementError as err:
        if not accept_partial:
            raise
        circles = err.circles
    phases = assign_phases(mesh, circles, asr_site_ratio, sites_seed)
    return mesh, circles, phases, area_fraction(circles, (width, height))


def write_circles(path, circles):
    path = Path(path)
    with path.open("w") as fh:
        for c in circles:
            fh.write(f"circle {c.cx!r} {c.cy!r} {c.radius!r}\n")


def read_circles(path):
    circles = []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] != "circle" or len(parts) != 4:
            raise ParameterError(f"malformed geometry line: {line!r}")
        circles.append(Circle(float(parts[1]), float(parts[2]), float(parts[3])))
    return circles
