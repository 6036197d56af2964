"""Lorentzian model spacetimes and their causal/geodesic structure.

Provides the metric hierarchy (Minkowski, flat cylinder, warped
products), geodesic integration with cubic-Hermite sample
interpolation, time separation, null cut times, earliest observation
times along worldlines, and null-geodesic connection by multi-start
shooting.

Conventions: signature (-, +, ..., +); coordinate 0 is time; a tangent
vector v is future-pointing when v[0] > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import least_squares

from .errors import CapabilityError, DomainError, GeometryError

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


class Metric:
    """Base class: a Lorentzian metric on a coordinate chart of R^dim."""

    dim: int
    name: str = "metric"
    is_flat = False

    def matrix(self, x):
        """Metric components g_ij at x, shape (dim, dim)."""
        raise NotImplementedError

    def inverse(self, x):
        return np.linalg.inv(self.matrix(x))

    def partials(self, x):
        """d[k, i, j] = d g_ij / d x^k at x (zero for flat metrics)."""
        raise NotImplementedError

    def in_chart(self, x):
        return True

    def wrap(self, x):
        """Map x to the canonical chart representative (identity by default)."""
        return np.asarray(x, dtype=float)

    def coord_delta(self, a, b):
        """Chart-aware coordinate difference a - b (wrapped for periodic charts)."""
        return np.asarray(a, dtype=float) - np.asarray(b, dtype=float)

    # -- derived quantities --------------------------------------------------

    def christoffel(self, x):
        """Christoffel symbols Gamma^i_{jk} at x, shape (dim, dim, dim)."""
        d = self.partials(x)
        ginv = self.inverse(x)
        # Gamma^i_jk = 1/2 g^il (d_j g_lk + d_k g_lj - d_l g_jk)
        bracket = (
            np.einsum("jlk->ljk", d)
            + np.einsum("klj->ljk", d)
            - np.einsum("ljk->ljk", d)
        )
        return 0.5 * np.einsum("il,ljk->ijk", ginv, bracket)

    def inner(self, x, u, v):
        """g_x(u, v)."""
        return float(np.real(np.asarray(u) @ self.matrix(x) @ np.asarray(v)))

    def flat(self, x, v):
        """Index lowering: the covector v^flat = g(v, .)."""
        return self.matrix(x) @ np.asarray(v, dtype=float)

    def sharp(self, x, xi):
        """Index raising: the vector xi^sharp with g(xi^sharp, .) = xi."""
        return self.inverse(x) @ np.asarray(xi, dtype=float)

    def validate_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DomainError(f"point has shape {x.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(x)):
            raise DomainError("point has non-finite coordinates")
        if not self.in_chart(x):
            raise DomainError("point lies outside the metric chart")
        return x


class Minkowski(Metric):
    """Flat Minkowski space R^{1,dim-1}."""

    is_flat = True

    def __init__(self, dim=4):
        if dim < 2:
            raise DomainError("need at least one time and one space dimension")
        self.dim = int(dim)
        self.name = f"minkowski{self.dim}"
        self._g = np.diag([-1.0] + [1.0] * (self.dim - 1))

    def matrix(self, x):
        return self._g

    def inverse(self, x):
        return self._g

    def partials(self, x):
        return np.zeros((self.dim,) * 3)

    def christoffel(self, x):
        return np.zeros((self.dim,) * 3)


class Cylinder(Metric):
    """Flat 1+1 cylinder R_t x S^1 with angle coordinate of period 2 pi."""

    is_flat = True
    dim = 2
    name = "cylinder"
    _g = np.diag([-1.0, 1.0])

    def matrix(self, x):
        return self._g

    def inverse(self, x):
        return self._g

    def partials(self, x):
        return np.zeros((2, 2, 2))

    def christoffel(self, x):
        return np.zeros((2, 2, 2))

    def wrap(self, x):
        x = np.array(x, dtype=float)
        x[..., 1] = np.mod(x[..., 1], TWO_PI)
        return x

    def coord_delta(self, a, b):
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        d = np.array(d)
        d[..., 1] = np.mod(d[..., 1] + math.pi, TWO_PI) - math.pi
        return d


class WarpedProduct(Metric):
    """Warped product -beta(x) dt^2 + g0 with diagonal spatial part.

    ``beta`` is a positive scalar field (object with value/grad, e.g.
    ScalarExpansion); ``g0_diag`` is an optional list of dim-1 positive
    scalar fields for the diagonal spatial metric (identity if omitted).
    ``beta_time_only`` declares that beta depends on t alone, which
    enables the closed-form time separation via the conformal time
    substitution.
    """

    def __init__(self, dim, beta, g0_diag=None, beta_time_only=False, chart_bounds=None):
        if dim < 2:
            raise DomainError("need at least one time and one space dimension")
        self.dim = int(dim)
        self.name = f"warped{self.dim}"
        self.beta = beta
        self.g0_diag = list(g0_diag) if g0_diag is not None else None
        if self.g0_diag is not None and len(self.g0_diag) != self.dim - 1:
            raise DomainError("g0_diag must supply one field per spatial coordinate")
        self.beta_time_only = bool(beta_time_only)
        self.chart_bounds = chart_bounds  # optional (lo, hi) arrays

    def in_chart(self, x):
        if self.chart_bounds is not None:
            lo, hi = self.chart_bounds
            if np.any(x < lo) or np.any(x > hi):
                return False
        return self._diag(x)[0] > 0

    def _diag(self, x):
        entries = np.empty(self.dim)
        entries[0] = -float(self.beta.value(x))
        if self.g0_diag is None:
            entries[1:] = 1.0
        else:
            for i, f in enumerate(self.g0_diag):
                entries[i + 1] = float(f.value(x))
        return -entries[0], entries

    def matrix(self, x):
        b, entries = self._diag(x)
        if b <= 0:
            raise DomainError("warping function is not positive at this point")
        return np.diag(entries)

    def inverse(self, x):
        return np.diag(1.0 / np.diag(self.matrix(x)))

    def partials(self, x):
        d = np.zeros((self.dim,) * 3)
        d[:, 0, 0] = -np.asarray(self.beta.grad(x), dtype=float)
        if self.g0_diag is not None:
            for i, f in enumerate(self.g0_diag):
                d[:, i + 1, i + 1] = np.asarray(f.grad(x), dtype=float)
        return d


def metric_from_json(obj):
    """Build a metric from its JSON description (see scenario schema)."""
    from .expansions import ScalarExpansion

    kind = obj.get("kind", "minkowski")
    if kind == "minkowski":
        return Minkowski(int(obj.get("dim", 4)))
    if kind == "cylinder":
        return Cylinder()
    if kind == "warped":
        beta = ScalarExpansion.from_json(obj["beta"])
        g0 = None
        if obj.get("g0_diag"):
            g0 = [ScalarExpansion.from_json(f) for f in obj["g0_diag"]]
        return WarpedProduct(
            int(obj["dim"]),
            beta,
            g0_diag=g0,
            beta_time_only=bool(obj.get("beta_time_only", False)),
        )
    raise DomainError(f"unknown metric kind {kind!r}")


# ---------------------------------------------------------------------------
# geodesics
# ---------------------------------------------------------------------------


@dataclass
class GeodesicSegment:
    """Sampled geodesic gamma on [s_min, s_max] with Hermite interpolation."""

    metric: Metric
    s: np.ndarray  # (N,), strictly increasing
    x: np.ndarray  # (N, dim)
    v: np.ndarray  # (N, dim)
    truncated: bool = False
    _accel: np.ndarray | None = field(default=None, repr=False)

    @property
    def s_min(self):
        return float(self.s[0])

    @property
    def s_max(self):
        return float(self.s[-1])

    def _acceleration(self):
        if self._accel is None:
            if self.metric.is_flat:
                self._accel = np.zeros_like(self.v)
            else:
                acc = np.empty_like(self.v)
                for i in range(len(self.s)):
                    gam = self.metric.christoffel(self.x[i])
                    acc[i] = -np.einsum("ijk,j,k->i", gam, self.v[i], self.v[i])
                self._accel = acc
        return self._accel

    def state(self, si):
        """Interpolated (position, velocity) at parameter values si.

        Positions use cubic Hermite interpolation on the stored samples
        (velocities are the exact derivatives); velocities use Hermite
        interpolation with the geodesic acceleration as derivative.
        """
        si = np.asarray(si, dtype=float)
        scalar = si.ndim == 0
        sq = np.atleast_1d(si)
        if np.any(sq < self.s[0] - 1e-9) or np.any(sq > self.s[-1] + 1e-9):
            raise DomainError("parameter outside the integrated range")
        sq = np.clip(sq, self.s[0], self.s[-1])
        if self.metric.is_flat:
            pos = self.x[0] + (sq - self.s[0])[:, None] * self.v[0]
            vel = np.broadcast_to(self.v[0], pos.shape).copy()
        else:
            idx = np.clip(np.searchsorted(self.s, sq, side="right") - 1, 0, len(self.s) - 2)
            h = (self.s[idx + 1] - self.s[idx])[:, None]
            t = ((sq - self.s[idx])[:, None]) / h
            acc = self._acceleration()
            pos = _hermite(self.x[idx], self.v[idx] * h, self.x[idx + 1], self.v[idx + 1] * h, t)
            vel = _hermite(self.v[idx], acc[idx] * h, self.v[idx + 1], acc[idx + 1] * h, t)
        if scalar:
            return pos[0], vel[0]
        return pos, vel

    def position(self, si):
        return self.state(si)[0]

    def velocity(self, si):
        return self.state(si)[1]

    @property
    def endpoint(self):
        return self.x[-1]

    def null_residual(self):
        """Max |g(v, v)| over the stored samples."""
        worst = 0.0
        for xi, vi in zip(self.x, self.v):
            worst = max(worst, abs(self.metric.inner(xi, vi, vi)))
        return worst


def _hermite(p0, m0, p1, m1, t):
    """Cubic Hermite basis on [0, 1]; tangents already scaled by the step."""
    t2 = t * t
    t3 = t2 * t
    return (
        (2 * t3 - 3 * t2 + 1) * p0
        + (t3 - 2 * t2 + t) * m0
        + (-2 * t3 + 3 * t2) * p1
        + (t3 - t2) * m1
    )


def _geodesic_rhs(metric, x, v):
    gam = metric.christoffel(x)
    return v, -np.einsum("ijk,j,k->i", gam, v, v)


def _rk4_march(metric, x0, v0, s_stop, n_steps):
    """Fixed-step RK4 from parameter 0 to s_stop (sign of s_stop sets direction)."""
    h = s_stop / n_steps
    xs = np.empty((n_steps + 1, metric.dim))
    vs = np.empty((n_steps + 1, metric.dim))
    xs[0], vs[0] = x0, v0
    x, v = x0.copy(), v0.copy()
    truncated = False
    count = n_steps
    for i in range(n_steps):
        k1x, k1v = _geodesic_rhs(metric, x, v)
        k2x, k2v = _geodesic_rhs(metric, x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = _geodesic_rhs(metric, x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = _geodesic_rhs(metric, x + h * k3x, v + h * k3v)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not (np.all(np.isfinite(x)) and metric.in_chart(x)):
            truncated = True
            count = i
            break
        xs[i + 1], vs[i + 1] = x, v
    return xs[: count + 1], vs[: count + 1], truncated


def integrate_geodesic(metric, x0, v0, s_max, h=1e-2, s_min=0.0):
    """Integrate the geodesic through (x0, v0) over [s_min, s_max].

    Flat metrics take the exact straight-line path; otherwise fixed-step
    RK4 with step size at most h. ``truncated`` is set on the returned
    segment if the trajectory leaves the chart early.
    """
    x0 = metric.validate_point(x0)
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != (metric.dim,):
        raise DomainError("initial velocity has wrong shape")
    if s_max < s_min:
        raise DomainError("s_max must be >= s_min")
    if h <= 0:
        raise DomainError("step size must be positive")
    if metric.is_flat:
        n = max(2, int(math.ceil((s_max - s_min) / h)) + 1)
        s = np.linspace(s_min, s_max, n)
        xs = x0 + s[:, None] * v0
        vs = np.broadcast_to(v0, xs.shape).copy()
        return GeodesicSegment(metric, s, xs, vs)
    truncated = False
    parts_s, parts_x, parts_v = [], [], []
    if s_min < 0:
        n_back = max(1, int(math.ceil(-s_min / h)))
        xs, vs, tr = _rk4_march(metric, x0, v0, s_min, n_back)
        truncated |= tr
        s_back = np.linspace(0, s_min, n_back + 1)[: len(xs)]
        parts_s.append(s_back[::-1][:-1])
        parts_x.append(xs[::-1][:-1])
        parts_v.append(vs[::-1][:-1])
    if s_max > 0:
        n_fwd = max(1, int(math.ceil(s_max / h)))
        xs, vs, tr = _rk4_march(metric, x0, v0, s_max, n_fwd)
        truncated |= tr
        s_fwd = np.linspace(0, s_max, n_fwd + 1)[: len(xs)]
        parts_s.append(s_fwd)
        parts_x.append(xs)
        parts_v.append(vs)
    else:
        parts_s.append(np.array([min(0.0, s_max) * 0.0]))
        parts_x.append(x0[None])
        parts_v.append(v0[None])
    s = np.concatenate(parts_s)
    xs = np.concatenate(parts_x)
    vs = np.concatenate(parts_v)
    return GeodesicSegment(metric, s, xs, vs, truncated=truncated)


def null_vector(metric, x, spatial_dir, time_sign=1.0):
    """Future (time_sign>0) or past null vector at x with given spatial direction.

    Solves g(v, v) = 0 for the time component with the spatial part
    fixed to the normalized input direction.
    """
    x = metric.validate_point(x)
    u = np.asarray(spatial_dir, dtype=float)
    if u.shape != (metric.dim - 1,):
        raise DomainError("spatial direction has wrong dimension")
    nrm = np.linalg.norm(u)
    if nrm == 0:
        raise DomainError("spatial direction must be nonzero")
    u = u / nrm
    g = metric.matrix(x)
    # quadratic in the time component a: g00 a^2 + 2 a g0.u + u.g.u = 0
    g00 = g[0, 0]
    cross = g[0, 1:] @ u
    spat = u @ g[1:, 1:] @ u
    disc = cross * cross - g00 * spat
    if disc < 0:
        raise GeometryError("no null direction with this spatial part")
    root = math.sqrt(disc)
    a1 = (-cross + root) / g00
    a2 = (-cross - root) / g00
    a = max(a1, a2) if time_sign > 0 else min(a1, a2)
    v = np.empty(metric.dim)
    v[0] = a
    v[1:] = u
    return v


def unit_directions(n_spatial, count):
    """Roughly uniform unit vectors on S^{n_spatial-1} for shooting starts."""
    if n_spatial == 1:
        return np.array([[1.0], [-1.0]])[: max(count, 2)]
    if n_spatial == 2:
        ang = np.linspace(0, TWO_PI, count, endpoint=False)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # Fibonacci-type spiral for n_spatial == 3; random otherwise.
    if n_spatial == 3:
        i = np.arange(count) + 0.5
        phi = math.pi * (3.0 - math.sqrt(5.0)) * i
        z = 1 - 2 * i / count
        r = np.sqrt(np.maximum(0.0, 1 - z * z))
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    rng = np.random.default_rng(0)
    g = rng.standard_normal((count, n_spatial))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# causal structure
# ---------------------------------------------------------------------------


def time_separation(metric, x, y):
    """Lorentzian time separation tau(x, y) (0 unless y is in the chronological future of x)."""
    x = metric.validate_point(x)
    y = metric.validate_point(y)
    if isinstance(metric, Minkowski):
        return _tau_flat(x, y)
    if isinstance(metric, Cylinder):
        # maximize over windings of the angle difference on the covering space
        dt = y[0] - x[0]
        if dt <= 0:
            return 0.0
        dth = y[1] - x[1]
        kmax = int(abs(dth) / TWO_PI + abs(dt) / TWO_PI) + 2
        best = 0.0
        for k in range(-kmax, kmax + 1):
            q = dt * dt - (dth + TWO_PI * k) ** 2
            if q > 0:
                best = max(best, math.sqrt(q))
        return best
    if isinstance(metric, WarpedProduct):
        if metric.beta_time_only and metric.g0_diag is None:
            # conformal time t~ = int sqrt(beta) maps to Minkowski up to a
            # conformal factor; for beta depending on t only the warped
            # metric is -beta dt^2 + dx^2 = isometric to -dt~^2 + dx^2.
            xt = _conformal_time(metric, x[0])
            yt = _conformal_time(metric, y[0])
            return _tau_flat(
                np.concatenate([[xt], x[1:]]), np.concatenate([[yt], y[1:]])
            )
        raise CapabilityError(
            "time separation on warped products requires a time-only warping "
            "function and flat spatial factor"
        )
    raise CapabilityError(f"time separation not implemented for {metric.name}")


def _tau_flat(x, y):
    dt = y[0] - x[0]
    if dt <= 0:
        return 0.0
    q = dt * dt - float(np.sum((y[1:] - x[1:]) ** 2))
    return math.sqrt(q) if q > 0 else 0.0


def _conformal_time(metric, t):
    def integrand(u):
        p = np.zeros(metric.dim)
        p[0] = u
        return math.sqrt(float(metric.beta.value(p)))

    val, _ = quad(integrand, 0.0, t, limit=200)
    return val


def null_cut_time(metric, x, v, s_max=None, tol=1e-6, coarse=512, h=1e-2):
    """First parameter s > 0 at which gamma_{x,v}(s) and x become
    chronologically related, or inf.

    For future-pointing v this is the first s with tau(x, gamma(s)) > 0;
    for past-pointing v, the first s with tau(gamma(s), x) > 0. Scans a
    coarse grid along the null geodesic for the first sign change of the
    chronology indicator and bisects it down to tol.
    """
    x = metric.validate_point(x)
    v = np.asarray(v, dtype=float)
    if abs(metric.inner(x, v, v)) > 1e-8 * max(1.0, float(v @ v)):
        raise DomainError("initial vector is not null")
    if v[0] == 0:
        raise DomainError("initial vector must be time-oriented")
    if s_max is None:
        s_max = 100.0 / max(abs(v[0]), 1e-12)
    seg = integrate_geodesic(metric, x, v, s_max, h=max(h, s_max / 20000))

    # floating-point noise can make tau ~1e-8 on the exactly-null ray
    # itself; past the cut point tau grows like sqrt(s - s_cut), so a
    # small absolute floor does not bias the bisection noticeably
    def chronological(s):
        floor = 1e-7 * (1.0 + abs(s))
        if v[0] > 0:
            return time_separation(metric, x, seg.position(s)) > floor
        return time_separation(metric, seg.position(s), x) > floor

    grid = np.linspace(0.0, seg.s_max, coarse + 1)
    lo = 0.0
    hit = None
    for s in grid[1:]:
        if chronological(float(s)):
            hit = float(s)
            break
        lo = float(s)
    if hit is None:
        return math.inf
    hi = hit
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if chronological(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# worldlines and observation sets
# ---------------------------------------------------------------------------


@dataclass
class WorldLine:
    """Timelike curve mu: [0, T] -> M, sampled affinely in its parameter.

    ``spatial`` maps the parameter array to spatial coordinates; the
    time coordinate is the parameter itself plus ``t0`` (so the curve is
    t-graphed, which keeps it causally well behaved for our metrics).
    """

    metric: Metric
    T: float
    spatial: object = None  # callable s -> (len(s), dim-1); static point if None
    point: np.ndarray | None = None
    t0: float = 0.0

    def __post_init__(self):
        if self.spatial is None:
            if self.point is None:
                self.point = np.zeros(self.metric.dim - 1)
            self.point = np.asarray(self.point, dtype=float)

    def position(self, s):
        s = np.asarray(s, dtype=float)
        scalar = s.ndim == 0
        sq = np.atleast_1d(s)
        if np.any(sq < -1e-12) or np.any(sq > self.T + 1e-12):
            raise DomainError("worldline parameter outside [0, T]")
        out = np.empty((len(sq), self.metric.dim))
        out[:, 0] = self.t0 + sq
        if self.spatial is None:
            out[:, 1:] = self.point
        else:
            out[:, 1:] = self.spatial(sq)
        return out[0] if scalar else out


def earliest_obs_time(metric, line, y, direction="future", tol=1e-8, coarse=256):
    """Earliest observation parameter along a worldline.

    direction="future": f^+ = inf { s : tau(y, mu(s)) > 0 }, T if empty
    direction="past":   f^- = sup { s : tau(mu(s), y) > 0 }, 0 if empty
    """
    y = metric.validate_point(y)
    if direction == "future":
        def pred(s):
            return time_separation(metric, y, line.position(s)) > 0
        empty_value, monotone_up = line.T, True
    elif direction == "past":
        def pred(s):
            return time_separation(metric, line.position(s), y) > 0
        empty_value, monotone_up = 0.0, False
    else:
        raise DomainError("direction must be 'future' or 'past'")
    grid = np.linspace(0.0, line.T, coarse + 1)
    flags = [pred(float(s)) for s in grid]
    if monotone_up:
        # first True
        if not any(flags):
            return empty_value
        i = flags.index(True)
        if i == 0:
            return 0.0
        lo, hi = float(grid[i - 1]), float(grid[i])
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if pred(mid):
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)
    # last True
    if not any(flags):
        return empty_value
    i = len(flags) - 1 - flags[::-1].index(True)
    if i == len(flags) - 1:
        return line.T
    lo, hi = float(grid[i]), float(grid[i + 1])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class ObservationSet:
    """Open causal-diamond-like region rho = (0, T) x B(center, radius)."""

    metric: Metric
    T: float
    radius: float
    center: np.ndarray | None = None

    def __post_init__(self):
        if self.center is None:
            self.center = np.zeros(self.metric.dim - 1)
        self.center = np.asarray(self.center, dtype=float)

    def contains(self, x, margin=0.0):
        x = np.asarray(x, dtype=float)
        if not (margin < x[0] < self.T - margin):
            return False
        return float(np.linalg.norm(x[1:] - self.center)) < self.radius - margin


# ---------------------------------------------------------------------------
# null connection by shooting
# ---------------------------------------------------------------------------


@dataclass
class NullConnection:
    """One null geodesic from x to y: gamma_{x,v}(s_arr) = y."""

    v: np.ndarray
    s_arr: float
    residual: float


def _endpoint(metric, x, v, s, h):
    if metric.is_flat:
        return x + s * v
    n = max(8, int(math.ceil(abs(s) / h)))
    xs, _, truncated = _rk4_march(metric, x, v, s, n)
    if truncated:
        return np.full(metric.dim, 1e6)
    return xs[-1]


def connect_null(metric, x, y, n_starts=None, tol=1e-9, dedup_tol=1e-4, h=1e-2):
    """All null geodesics from x to y found by multi-start shooting.

    Velocities are normalized to unit time component (|v^0| = 1), so the
    arrival parameter equals the coordinate-time lapse for t-static
    metrics. Returns (solutions, diagnostics).
    """
    x = metric.validate_point(x)
    y = metric.validate_point(y)
    if np.allclose(metric.coord_delta(y, x), 0.0, atol=1e-14):
        raise DomainError("endpoints must be distinct")
    dt = y[0] - x[0]
    if dt == 0:
        return [], {"n_starts": 0, "n_converged": 0}
    sign = 1.0 if dt > 0 else -1.0
    nsp = metric.dim - 1
    if n_starts is None:
        n_starts = 2 if nsp == 1 else 64
    starts = unit_directions(nsp, n_starts)
    scale = max(1.0, float(np.linalg.norm(metric.coord_delta(y, x))))

    def residual(p):
        u = p[:-1]
        s = p[-1]
        nu = np.linalg.norm(u)
        if nu < 1e-12 or s <= 0:
            return np.full(metric.dim, 1e3)
        try:
            v = null_vector(metric, x, u / nu, time_sign=sign)
        except GeometryError:
            return np.full(metric.dim, 1e3)
        end = _endpoint(metric, x, v, s, h)
        return metric.coord_delta(end, y) / scale

    solutions = []
    n_conv = 0
    for u0 in starts:
        p0 = np.concatenate([u0, [abs(dt)]])
        try:
            res = least_squares(residual, p0, xtol=1e-14, ftol=1e-14, gtol=1e-14)
        except Exception:
            continue
        r = float(np.linalg.norm(residual(res.x)))
        if r > tol:
            continue
        n_conv += 1
        u = res.x[:-1]
        u = u / np.linalg.norm(u)
        v = null_vector(metric, x, u, time_sign=sign)
        s = float(res.x[-1])
        new = True
        for sol in solutions:
            if np.linalg.norm(v - sol.v) < dedup_tol and abs(s - sol.s_arr) < dedup_tol * max(1.0, s):
                new = False
                break
        if new:
            solutions.append(NullConnection(v=v, s_arr=s, residual=r))
    solutions.sort(key=lambda c: c.s_arr)
    diag = {"n_starts": int(n_starts), "n_converged": n_conv, "n_solutions": len(solutions)}
    return solutions, diag
