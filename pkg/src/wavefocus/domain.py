"""Discretized geometry: grids, measures, travel times, and lens sets.

The medium is an interval (m = 1) or a rectangle (m = 2) carrying the
isotropic travel-time metric ``g = c**-2 * identity``.  Node values are
sampled on a uniform tensor grid.  Volume weights discretize
``mu * c**-m dx`` with trapezoid halves on the boundary; boundary weights
discretize the induced boundary measure ``c**-(m-1) dsigma``, which is the
counting measure at the two endpoints when m = 1.

2D nodes are flattened in C order with ``index = i * ny + j`` where ``i``
runs along x.  Boundary nodes are enumerated counter-clockwise starting at
the corner ``(0, 0)``: bottom edge, right edge, top edge, left edge.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

Coefficient = Union[float, Callable[..., np.ndarray]]

# Comparison slack for "distance <= t" so that nodes lying exactly on a level
# set are not lost to round-off in the accumulated travel times.
_LEVEL_SLACK = 1e-9


class InvalidMediumError(ValueError):
    """Raised for coefficient fields or resolutions violating the medium invariants."""


class CoarseGridError(ValueError):
    """The grid cannot resolve the requested lens widths."""


class NonAdmissibleError(ValueError):
    """Raised when a focusing depth is not below the cut time of its boundary point."""


@dataclass(frozen=True)
class MediumSpec:
    """Geometry, coefficients and resolution of the medium.

    Parameters
    ----------
    lengths : tuple of float
        Interval length, or rectangle side lengths, in coordinate units.
    nodes : tuple of int
        Node count per axis, at least 3.
    speed, density, potential : float or callable
        Wave speed ``c > 0``, density weight ``mu > 0`` and potential ``q``.
        Callables receive one coordinate array per axis and return node values.
    """

    lengths: tuple[float, ...]
    nodes: tuple[int, ...]
    speed: Coefficient = 1.0
    density: Coefficient = 1.0
    potential: Coefficient = 0.0

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        nodes = tuple(int(v) for v in np.atleast_1d(self.nodes))
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "nodes", nodes)
        if len(lengths) not in (1, 2):
            raise InvalidMediumError("dimension must be 1 or 2")
        if len(nodes) != len(lengths):
            raise InvalidMediumError("one node count per axis is required")
        if any(n < 3 for n in nodes):
            raise InvalidMediumError("at least 3 nodes per axis are required")
        if any(not v > 0 for v in lengths):
            raise InvalidMediumError("side lengths must be positive")

    @property
    def dim(self) -> int:
        return len(self.lengths)

    def refined(self, factor: int) -> "MediumSpec":
        """Same medium with the spacing divided by ``factor``."""
        nodes = tuple((n - 1) * factor + 1 for n in self.nodes)
        return MediumSpec(self.lengths, nodes, self.speed, self.density, self.potential)


def _evaluate(coef: Coefficient, coords: tuple[np.ndarray, ...]) -> np.ndarray:
    if callable(coef):
        values = np.asarray(coef(*coords), dtype=float)
        return np.broadcast_to(values, coords[0].shape).astype(float)
    return np.full(coords[0].shape, float(coef))


@dataclass(frozen=True, eq=False)
class Grid:
    """Tensor grid with metric-weighted measures.

    Attributes
    ----------
    points : ndarray, shape (n_nodes, m)
    speed, density, potential : ndarray, shape (n_nodes,)
    dv : ndarray, shape (n_nodes,)
        Volume weight of each node.
    boundary : ndarray of int
        Node index of each boundary node, in enumeration order.
    ds : ndarray
        Boundary measure of each boundary node.
    normals : ndarray, shape (n_boundary, m)
        Inward Euclidean unit normal; zero rows at rectangle corners.
    """

    spec: MediumSpec
    axes: tuple[np.ndarray, ...]
    spacing: tuple[float, ...]
    points: np.ndarray
    speed: np.ndarray
    density: np.ndarray
    potential: np.ndarray
    dv: np.ndarray
    boundary: np.ndarray
    ds: np.ndarray
    normals: np.ndarray
    _memo: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.spec.nodes

    @property
    def n_nodes(self) -> int:
        return self.points.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary.shape[0]

    @property
    def boundary_points(self) -> np.ndarray:
        return self.points[self.boundary]

    @property
    def max_spacing(self) -> float:
        return max(self.spacing)

    @property
    def time_resolution(self) -> float:
        """Largest travel time across one grid cell edge."""
        return self.max_spacing / float(self.speed.min())

    def node_mask(self, boundary_subset: np.ndarray) -> np.ndarray:
        """Lift a boolean selection over boundary nodes to a node mask."""
        sel = np.asarray(boundary_subset, dtype=bool)
        if sel.shape != (self.n_boundary,):
            raise ValueError("boundary subset must have one entry per boundary node")
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.boundary[sel]] = True
        return mask

    def boundary_subset(self, positions) -> np.ndarray:
        sel = np.zeros(self.n_boundary, dtype=bool)
        sel[np.atleast_1d(positions)] = True
        return sel

    def nearest_node(self, point) -> int:
        return int(np.argmin(np.sum((self.points - np.asarray(point, float)) ** 2, axis=1)))

    def interpolate(self, values: np.ndarray, point) -> float:
        """Linear (m = 1) or bilinear (m = 2) interpolation of node values."""
        grid_values = np.asarray(values, dtype=float).reshape(self.shape)
        weights = []
        for axis, coord, h, n in zip(self.axes, np.atleast_1d(point), self.spacing, self.shape):
            s = np.clip((coord - axis[0]) / h, 0, n - 1)
            lo = min(int(np.floor(s)), n - 2)
            weights.append(((lo, 1 - (s - lo)), (lo + 1, s - lo)))
        total = 0.0
        for combo in np.ndindex(*(2,) * self.dim):
            idx = tuple(weights[a][combo[a]][0] for a in range(self.dim))
            wt = np.prod([weights[a][combo[a]][1] for a in range(self.dim)])
            total += wt * grid_values[idx]
        return float(total)

    def l2_norm(self, values: np.ndarray) -> float:
        return float(np.sqrt(np.sum(self.dv * np.asarray(values) ** 2)))

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.sum(self.dv * u * v))


def _boundary_enumeration(shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Boundary node indices and inward normals in the documented order."""
    if len(shape) == 1:
        return np.array([0, shape[0] - 1]), np.array([[1.0], [-1.0]])
    nx, ny = shape
    ij = []
    ij += [(i, 0) for i in range(nx)]
    ij += [(nx - 1, j) for j in range(1, ny)]
    ij += [(i, ny - 1) for i in range(nx - 2, -1, -1)]
    ij += [(0, j) for j in range(ny - 2, 0, -1)]
    idx = np.array([i * ny + j for i, j in ij])
    normals = np.zeros((len(ij), 2))
    for k, (i, j) in enumerate(ij):
        on_x = i in (0, nx - 1)
        on_y = j in (0, ny - 1)
        if on_x and on_y:
            continue
        if on_x:
            normals[k, 0] = 1.0 if i == 0 else -1.0
        else:
            normals[k, 1] = 1.0 if j == 0 else -1.0
    return idx, normals


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def build_grid(spec: MediumSpec) -> Grid:
    """Sample the medium and assemble volume and boundary weights.

    Raises
    ------
    InvalidMediumError
        If ``c`` or ``mu`` is non-positive, or ``q`` non-finite, at some node;
        the message names the first offending node index.
    """
    axes = tuple(np.linspace(0.0, L, n) for L, n in zip(spec.lengths, spec.nodes))
    spacing = tuple(L / (n - 1) for L, n in zip(spec.lengths, spec.nodes))
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = tuple(m.ravel() for m in mesh)
    points = np.stack(coords, axis=1)

    speed = _evaluate(spec.speed, coords)
    density = _evaluate(spec.density, coords)
    potential = _evaluate(spec.potential, coords)
    for name, values in (("speed", speed), ("density", density)):
        bad = np.flatnonzero(~(values > 0) | ~np.isfinite(values))
        if bad.size:
            raise InvalidMediumError(
                f"{name} must be positive and finite; first offending node index {bad[0]}"
            )
    bad = np.flatnonzero(~np.isfinite(potential))
    if bad.size:
        raise InvalidMediumError(f"potential must be finite; first offending node index {bad[0]}")

    cell = _trapezoid_weights(spec.nodes[0], spacing[0])
    for n, h in zip(spec.nodes[1:], spacing[1:]):
        cell = np.multiply.outer(cell, _trapezoid_weights(n, h))
    dv = density * speed ** (-spec.dim) * cell.ravel()

    boundary, normals = _boundary_enumeration(spec.nodes)
    if spec.dim == 1:
        ds = np.ones(2)
    else:
        nx, ny = spec.nodes
        hx, hy = spacing
        arc = np.zeros(boundary.shape[0])
        for k, node in enumerate(boundary):
            i, j = divmod(int(node), ny)
            if j in (0, ny - 1):
                arc[k] += hx * (0.5 if i in (0, nx - 1) else 1.0)
            if i in (0, nx - 1):
                arc[k] += hy * (0.5 if j in (0, ny - 1) else 1.0)
        ds = arc / speed[boundary]

    for arr in (points, speed, density, potential, dv, boundary, ds, normals):
        arr.setflags(write=False)
    return Grid(
        spec=spec,
        axes=axes,
        spacing=spacing,
        points=points,
        speed=speed,
        density=density,
        potential=potential,
        dv=dv,
        boundary=boundary,
        ds=ds,
        normals=normals,
    )


@dataclass(frozen=True, eq=False)
class TravelTimeField:
    """First-arrival travel time ``d(x, S)`` per node from a source set ``S``."""

    values: np.ndarray
    source: np.ndarray


def _sweep_1d(grid: Grid, source: np.ndarray) -> np.ndarray:
    x = grid.axes[0]
    slowness = 1.0 / grid.speed
    step = 0.5 * (slowness[1:] + slowness[:-1]) * np.diff(x)
    n = x.size
    fwd = np.full(n, np.inf)
    bwd = np.full(n, np.inf)
    for i in range(n):
        fwd[i] = 0.0 if source[i] else (fwd[i - 1] + step[i - 1] if i else np.inf)
    for i in range(n - 1, -1, -1):
        bwd[i] = 0.0 if source[i] else (bwd[i + 1] + step[i] if i < n - 1 else np.inf)
    return np.minimum(fwd, bwd)


def _eikonal_update(terms: list[tuple[float, float]], s: float) -> float:
    """Upwind solve of ``sum_k w_k (t - v_k)^2 = s^2`` over per-axis ``(v_k, w_k)``.

    Drops the axis with the largest ``v_k`` until the root is causal.
    """
    terms = sorted((v, w) for v, w in terms if np.isfinite(v))
    while terms:
        w = np.array([t[1] for t in terms])
        v = np.array([t[0] for t in terms])
        qa = w.sum()
        qb = -2.0 * np.dot(w, v)
        qc = np.dot(w, v * v) - s * s
        disc = qb * qb - 4.0 * qa * qc
        if disc >= 0:
            t = (-qb + np.sqrt(disc)) / (2.0 * qa)
            if t >= v.max():
                return float(t)
        terms.pop()
    return np.inf


def _axis_term(dist, frozen, i, j, di, dj, h) -> tuple[float, float]:
    """Best upwind value and weight along one axis, second order when possible."""
    best = (np.inf, 0.0)
    nx, ny = dist.shape
    for sign in (1, -1):
        i1, j1 = i + sign * di, j + sign * dj
        if not (0 <= i1 < nx and 0 <= j1 < ny and frozen[i1, j1]):
            continue
        d1 = dist[i1, j1]
        term = (d1, 1.0 / h**2)
        i2, j2 = i1 + sign * di, j1 + sign * dj
        if 0 <= i2 < nx and 0 <= j2 < ny and frozen[i2, j2] and dist[i2, j2] <= d1:
            term = ((4.0 * d1 - dist[i2, j2]) / 3.0, 9.0 / (4.0 * h**2))
        if term[0] < best[0] or (term[0] == best[0] and term[1] > best[1]):
            best = term
    return best


def _fast_march_2d(grid: Grid, source: np.ndarray, seed_radius: float) -> np.ndarray:
    nx, ny = grid.shape
    hx, hy = grid.spacing
    slowness = (1.0 / grid.speed).reshape(nx, ny)
    dist = np.full((nx, ny), np.inf)
    frozen = np.zeros((nx, ny), dtype=bool)
    heap: list[tuple[float, int, int]] = []

    # Straight-ray initialization near the sources removes most of the
    # low-order error of the point-source singularity.
    src_idx = np.flatnonzero(source)
    src_pts = grid.points[src_idx]
    near = np.zeros(grid.n_nodes, dtype=bool)
    seeded = np.full(grid.n_nodes, np.inf)
    flat_slow = slowness.ravel()
    for k, p in zip(src_idx, src_pts):
        r = np.sqrt(np.sum((grid.points - p) ** 2, axis=1))
        close = r <= seed_radius * (1 + 1e-12)
        est = r[close] * 0.5 * (flat_slow[close] + flat_slow[k])
        seeded[close] = np.minimum(seeded[close], est)
        near |= close
    # Seeded values are final: they enter the heap but are never relaxed.
    for k in np.flatnonzero(near):
        i, j = divmod(int(k), ny)
        dist[i, j] = 0.0 if source[k] else seeded[k]
        heapq.heappush(heap, (dist[i, j], i, j))
    accepted_seed = near.reshape(nx, ny)

    neighbours = ((1, 0), (-1, 0), (0, 1), (0, -1))
    while heap:
        d, i, j = heapq.heappop(heap)
        if frozen[i, j] or d > dist[i, j]:
            continue
        frozen[i, j] = True
        for di, dj in neighbours:
            ni, nj = i + di, j + dj
            if not (0 <= ni < nx and 0 <= nj < ny) or frozen[ni, nj] or accepted_seed[ni, nj]:
                continue
            terms = [
                _axis_term(dist, frozen, ni, nj, 1, 0, hx),
                _axis_term(dist, frozen, ni, nj, 0, 1, hy),
            ]
            t = _eikonal_update(terms, slowness[ni, nj])
            if t < dist[ni, nj]:
                dist[ni, nj] = t
                heapq.heappush(heap, (t, ni, nj))
    return dist.ravel()


def travel_time(grid: Grid, source: np.ndarray) -> TravelTimeField:
    """First-arrival distance from a node set in the metric ``c**-2 dx**2``.

    Exact cumulative trapezoid of ``1/c`` in 1D; second-order fast marching
    with straight-ray seeding within two cells of the sources in 2D.
    Results are memoized on the grid.
    """
    source = np.asarray(source, dtype=bool)
    if source.shape != (grid.n_nodes,):
        raise ValueError("source mask must have one entry per node")
    if not source.any():
        raise ValueError("source set is empty")
    key = ("travel_time", source.tobytes())
    cached = grid._memo.get(key)
    if cached is not None:
        return cached
    if grid.dim == 1:
        values = _sweep_1d(grid, source)
    else:
        values = _fast_march_2d(grid, source, seed_radius=2.0 * grid.max_spacing)
    values[source] = 0.0
    values.setflags(write=False)
    result = TravelTimeField(values=values, source=source.copy())
    grid._memo[key] = result
    return result


def _within(values: np.ndarray, t: float) -> np.ndarray:
    return values <= t + _LEVEL_SLACK * max(1.0, abs(t))


def domain_of_influence(grid: Grid, boundary_subset: np.ndarray, t: float) -> np.ndarray:
    """Nodes within travel time ``t`` of a set of boundary nodes."""
    if t < 0:
        raise ValueError("time must be non-negative")
    node_src = grid.node_mask(boundary_subset)
    if not node_src.any():
        raise ValueError("boundary subset is empty")
    return _within(travel_time(grid, node_src).values, t)


def boundary_distance(grid: Grid) -> TravelTimeField:
    return travel_time(grid, grid.node_mask(np.ones(grid.n_boundary, dtype=bool)))


def diameter(grid: Grid) -> float:
    """Largest travel time between two nodes, seeded from every boundary node.

    In 1D the maximum is exactly the end-to-end travel time.  In 2D the
    maximum over boundary-seeded fields is used; for the rectangles in
    scope the extremal pair lies on the boundary.
    """
    key = ("diameter",)
    if key in grid._memo:
        return grid._memo[key]
    if grid.dim == 1:
        value = float(travel_time(grid, grid.node_mask(np.array([True, False]))).values[-1])
    else:
        value = 0.0
        for k in range(grid.n_boundary):
            field_k = travel_time(grid, grid.node_mask(grid.boundary_subset(k)))
            value = max(value, float(field_k.values.max()))
            del grid._memo[("travel_time", field_k.source.tobytes())]
    grid._memo[key] = value
    return value


@dataclass(frozen=True)
class NormalRay:
    """Grid nodes along the inward normal line from a boundary node."""

    nodes: np.ndarray
    arc_time: np.ndarray


def normal_ray(grid: Grid, z: int) -> NormalRay:
    """Walk the grid line through boundary node ``z`` along its inward normal."""
    normal = grid.normals[z]
    if not np.any(normal):
        raise ValueError("inward normal is undefined at a corner node")
    start = int(grid.boundary[z])
    if grid.dim == 1:
        nodes = np.arange(grid.n_nodes) if normal[0] > 0 else np.arange(grid.n_nodes)[::-1]
    else:
        nx, ny = grid.shape
        i, j = divmod(start, ny)
        if normal[0] != 0:
            ii = np.arange(nx) if normal[0] > 0 else np.arange(nx)[::-1]
            nodes = ii * ny + j
        else:
            jj = np.arange(ny) if normal[1] > 0 else np.arange(ny)[::-1]
            nodes = i * ny + jj
    pts = grid.points[nodes]
    seg = np.sqrt(np.sum(np.diff(pts, axis=0) ** 2, axis=1))
    slow = 1.0 / grid.speed[nodes]
    arc = np.concatenate([[0.0], np.cumsum(seg * 0.5 * (slow[1:] + slow[:-1]))])
    return NormalRay(nodes=nodes, arc_time=arc)


def normal_point(grid: Grid, z: int, t: float) -> np.ndarray:
    """Coordinates of the point at travel time ``t`` along the inward normal."""
    ray = normal_ray(grid, z)
    if not 0 <= t <= ray.arc_time[-1]:
        raise ValueError("time exceeds the length of the normal ray")
    pts = grid.points[ray.nodes]
    return np.array([np.interp(t, ray.arc_time, pts[:, a]) for a in range(grid.dim)])


@dataclass(frozen=True)
class CutTime:
    """Critical time along the normal ray; ``truncated`` if the ray exited first."""

    value: float
    truncated: bool
    tolerance: float


def cut_time(grid: Grid, z: int) -> CutTime:
    """Largest ``t`` for which the normal ray still minimizes distance to the boundary.

    The gap ``t - d(gamma(t), boundary)`` is zero while the ray minimizes.
    The first node where it exceeds ``2h / min(c)`` marks the violation; the
    cut time is the zero crossing of a line fitted to the gap from there on.
    """
    tol = 2.0 * grid.time_resolution
    ray = normal_ray(grid, z)
    dist = boundary_distance(grid).values[ray.nodes]
    gap = ray.arc_time - dist
    bad = np.flatnonzero(gap > tol)
    if bad.size == 0:
        return CutTime(float(ray.arc_time[-1]), True, tol)
    k = int(bad[0])
    window = np.arange(k, min(k + 4, gap.size))
    if window.size >= 2:
        slope, intercept = np.polyfit(ray.arc_time[window], gap[window], 1)
        est = -intercept / slope if slope > 0 else ray.arc_time[k]
    else:
        est = ray.arc_time[k]
    lo = ray.arc_time[k - 1] if k > 0 else 0.0
    value = float(np.clip(est, lo - tol, ray.arc_time[k]))
    return CutTime(value, False, tol)


def volume(grid: Grid, mask: np.ndarray) -> float:
    return float(np.sum(grid.dv[np.asarray(mask, dtype=bool)]))


def lens_set(grid: Grid, z: int, t_hat: float, eps: float) -> np.ndarray:
    """Nodes reached from ``z`` by ``t_hat + eps`` but farther than ``t_hat - eps`` from the boundary."""
    if not 0 < eps < t_hat:
        raise ValueError("lens width must satisfy 0 < eps < t_hat")
    reach = domain_of_influence(grid, grid.boundary_subset(z), t_hat + eps)
    shell = domain_of_influence(grid, np.ones(grid.n_boundary, dtype=bool), t_hat - eps)
    return reach & ~shell


def _supersample(grid: Grid, fields: list[np.ndarray], factor: int):
    """Interpolate node fields to sub-cell centres; return values and volume weights."""
    grids = [np.asarray(f, float).reshape(grid.shape) for f in fields]
    weight_field = (grid.density * grid.speed ** (-grid.dim)).reshape(grid.shape)
    frac = (np.arange(factor) + 0.5) / factor
    if grid.dim == 1:
        lo = grids + [weight_field]
        vals = [
            (g[:-1, None] * (1 - frac) + g[1:, None] * frac).ravel() for g in lo
        ]
        cell = grid.spacing[0] / factor
        return vals[:-1], vals[-1] * cell
    fx, fy = np.meshgrid(frac, frac, indexing="ij")
    out = []
    for g in grids + [weight_field]:
        v = (
            g[:-1, :-1, None, None] * (1 - fx) * (1 - fy)
            + g[1:, :-1, None, None] * fx * (1 - fy)
            + g[:-1, 1:, None, None] * (1 - fx) * fy
            + g[1:, 1:, None, None] * fx * fy
        )
        out.append(v.ravel())
    cell = grid.spacing[0] * grid.spacing[1] / factor**2
    return out[:-1], out[-1] * cell


def lens_volume(grid: Grid, z: int, t_hat: float, eps: float, supersample: int = 8) -> float:
    """Lens volume with sub-cell resolution of the two level sets."""
    if not 0 < eps < t_hat:
        raise ValueError("lens width must satisfy 0 < eps < t_hat")
    d_point = travel_time(grid, grid.node_mask(grid.boundary_subset(z))).values
    d_edge = boundary_distance(grid).values
    (dp, de), w = _supersample(grid, [d_point, d_edge], supersample)
    inside = (dp <= t_hat + eps) & (de > t_hat - eps)
    return float(np.sum(w[inside]))


@dataclass(frozen=True)
class LensConstant:
    """Extrapolated limit of ``vol(J(eps)) / eps**((m+1)/2)``."""

    value: float
    uncertainty: float
    eps: tuple[float, ...]
    ratios: tuple[float, ...]


def c_hat(
    grid: Grid,
    z: int,
    t_hat: float,
    *,
    eps0: float | None = None,
    levels: int = 5,
    min_cells: float = 8.0,
    supersample: int = 8,
) -> LensConstant:
    """Estimate the focusing constant at the point ``t_hat`` deep along the normal from ``z``.

    Ratios are evaluated on ``eps_k = eps0 / 2**k`` keeping only widths of at
    least ``min_cells`` travel-time cells, then extrapolated to zero width by
    a least-squares line in ``eps``.  The uncertainty is the change of the
    extrapolated value when the coarsest level is dropped.

    Raises
    ------
    NonAdmissibleError
        If ``t_hat`` is not below the cut time by more than its tolerance.
    CoarseGridError
        If no lens width of at least ``min_cells`` cells fits below ``eps0``.
    """
    ct = cut_time(grid, z)
    if t_hat >= ct.value - ct.tolerance:
        raise NonAdmissibleError(
            f"non-admissible point: t_hat={t_hat:g} is not below the cut time {ct.value:g}"
        )
    if eps0 is None:
        eps0 = 0.5 * min(t_hat, ct.value - t_hat)
    floor = min_cells * grid.time_resolution
    eps = [eps0 / 2**k for k in range(levels) if eps0 / 2**k >= floor]
    if not eps:
        raise CoarseGridError("grid too coarse for the requested lens widths")
    power = 0.5 * (grid.dim + 1)
    ratios = [lens_volume(grid, z, t_hat, e, supersample) / e**power for e in eps]

    def extrapolate(e, r):
        if len(e) == 1:
            return r[0]
        slope, intercept = np.polyfit(e, r, 1)
        return intercept

    value = float(extrapolate(eps, ratios))
    if len(eps) >= 3:
        uncertainty = abs(value - extrapolate(eps[1:], ratios[1:]))
    elif len(eps) == 2:
        uncertainty = abs(value - ratios[-1])
    else:
        uncertainty = abs(value)
    return LensConstant(value, float(uncertainty), tuple(eps), tuple(float(r) for r in ratios))
