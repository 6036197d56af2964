"""Symbol-level simulation of the three-wave interaction measurement.

Covers null bicharacteristics, wave-operator symbols, the volume factor,
symbol transport with the subprincipal term, the three-source
interaction geometry with its kappa coefficients, the interaction
symbol, the simulated measurement that reproduces the broken light-ray
transform up to an opaque positive scalar, and the flowout-disjointness
diagnostic.

Sign convention for the interaction covectors: eta = w^flat for the
outgoing direction and eta_1 = +w_1^flat, eta_2 = -w_2^flat,
eta_3 = -w_3^flat for the incoming ones. This is the unique choice for
which the linear relation eta = r^{-2} sum kappa_j eta_j has all-positive
coefficients (the time components force sum of signed kappas to be
negative under any other assignment).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .errors import DomainError, GeometryError
from .geometry import GeodesicSegment, integrate_geodesic, null_vector, time_separation
from .linalg import expm_skew, polar_project
from .transport import _A1, _A2, _C1, _C2, BrokenRayQuery, parallel_transport

# ---------------------------------------------------------------------------
# bicharacteristics
# ---------------------------------------------------------------------------


@dataclass
class Bicharacteristic:
    """Sampled solution of the Hamiltonian system for H = 1/2 g^{ij} xi_i xi_j."""

    metric: object
    s: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    truncated: bool = False

    @property
    def s_max(self):
        return float(self.s[-1])

    def hamiltonian(self, i=None):
        if i is None:
            return np.array([self.hamiltonian(j) for j in range(len(self.s))])
        ginv = self.metric.inverse(self.x[i])
        return 0.5 * float(self.xi[i] @ ginv @ self.xi[i])

    def hamiltonian_drift(self):
        h = self.hamiltonian()
        return float(np.max(np.abs(h - h[0])))

    def velocity(self, i):
        """The sharp of xi: the projected geodesic velocity."""
        return self.metric.inverse(self.x[i]) @ self.xi[i]

    def to_segment(self):
        """Project to a GeodesicSegment (positions with v = xi^sharp)."""
        vs = np.stack([self.velocity(i) for i in range(len(self.s))])
        return GeodesicSegment(self.metric, self.s, self.x, vs, truncated=self.truncated)

    def state(self, si):
        """Interpolated (x, xi) via the projected segment's Hermite data."""
        seg = self.to_segment()
        pos, vel = seg.state(si)
        g = self.metric.matrix
        if np.ndim(si) == 0:
            return pos, g(pos) @ vel
        return pos, np.stack([g(p) @ v for p, v in zip(pos, vel)])


def _inverse_metric_partials(metric, x):
    """d_k g^{ij} = -g^{il} (d_k g_lm) g^{mj}."""
    ginv = metric.inverse(x)
    d = metric.partials(x)
    return -np.einsum("il,klm,mj->kij", ginv, d, ginv)


def _bichar_rhs(metric, x, xi):
    ginv = metric.inverse(x)
    dginv = _inverse_metric_partials(metric, x)
    xdot = ginv @ xi
    xidot = -0.5 * np.einsum("kij,i,j->k", dginv, xi, xi)
    return xdot, xidot


def integrate_bicharacteristic(metric, x0, xi0, s_max, h=1e-2):
    """RK4 integration of the Hamiltonian system from a lightlike covector."""
    x0 = metric.validate_point(x0)
    xi0 = np.asarray(xi0, dtype=float)
    ginv = metric.inverse(x0)
    if abs(0.5 * xi0 @ ginv @ xi0) > 1e-8 * max(1.0, float(xi0 @ xi0)):
        raise DomainError("initial covector is not lightlike")
    if metric.is_flat:
        n = max(2, int(math.ceil(s_max / h)) + 1)
        s = np.linspace(0.0, s_max, n)
        xdot = ginv @ xi0
        xs = x0 + s[:, None] * xdot
        xis = np.broadcast_to(xi0, xs.shape).copy()
        return Bicharacteristic(metric, s, xs, xis)
    m = max(1, int(math.ceil(s_max / h)))
    hs = s_max / m
    xs = np.empty((m + 1, metric.dim))
    xis = np.empty((m + 1, metric.dim))
    xs[0], xis[0] = x0, xi0
    x, xi = x0.copy(), xi0.copy()
    truncated = False
    count = m
    for i in range(m):
        k1x, k1p = _bichar_rhs(metric, x, xi)
        k2x, k2p = _bichar_rhs(metric, x + 0.5 * hs * k1x, xi + 0.5 * hs * k1p)
        k3x, k3p = _bichar_rhs(metric, x + 0.5 * hs * k2x, xi + 0.5 * hs * k2p)
        k4x, k4p = _bichar_rhs(metric, x + hs * k3x, xi + hs * k3p)
        x = x + (hs / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        xi = xi + (hs / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
        if not (np.all(np.isfinite(x)) and metric.in_chart(x)):
            truncated = True
            count = i
            break
        xs[i + 1], xis[i + 1] = x, xi
    s = np.linspace(0.0, s_max, m + 1)[: count + 1]
    return Bicharacteristic(metric, s, xs[: count + 1], xis[: count + 1], truncated=truncated)


# ---------------------------------------------------------------------------
# symbols
# ---------------------------------------------------------------------------


def wave_symbols(metric, connection, x, xi):
    """(principal, subprincipal) symbols of the connection wave operator.

    principal = 1/2 g^{ij} xi_i xi_j (real scalar)
    subprincipal = i^{-1} g^{ij} A_i xi_j (Hermitian matrix)
    """
    x = metric.validate_point(x)
    xi = np.asarray(xi, dtype=float)
    ginv = metric.inverse(x)
    principal = 0.5 * float(xi @ ginv @ xi)
    sub = connection.pairing(x, ginv @ xi) / 1j
    return principal, sub


@dataclass
class SymbolState:
    """The C^n part of a half-density-trivialized principal symbol."""

    value: np.ndarray
    degree: float = 0.5  # homogeneity degree mu + 1/2

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=complex)
        if not np.all(np.isfinite(self.value)):
            raise DomainError("symbol value is not finite")


class FlatDensity:
    """Translation-invariant half density: the volume divergence vanishes."""

    def divergence(self, x, xi):
        return 0.0


class LogDerivativeDensity:
    """Half density specified by the divergence f(x, xi) of H_P against it."""

    def __init__(self, f):
        self.f = f

    def divergence(self, x, xi):
        return float(self.f(x, xi))


def volume_factor(metric, bichar, omega_spec, s, n_quad=400):
    """rho_vol(s) = integral_0^s div_omega H_P along the bicharacteristic (Simpson)."""
    if s < 0 or s > bichar.s_max + 1e-12:
        raise DomainError("parameter outside the bicharacteristic range")
    if s == 0:
        return 0.0
    if isinstance(omega_spec, FlatDensity):
        return 0.0
    m = n_quad + (n_quad % 2)  # Simpson needs an even interval count
    nodes = np.linspace(0.0, s, m + 1)
    xs, xis = bichar.state(nodes)
    vals = np.array([omega_spec.divergence(x, xi) for x, xi in zip(xs, xis)])
    w = np.ones(m + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float((s / m) / 3.0 * np.sum(w * vals))


def transport_symbol(metric, connection, bichar, sigma0, s, omega_spec=None, h=1e-3):
    """Transport a symbol along the bicharacteristic: the ODE route.

    Solves c' = (K(s) - f(s) I) c with K the skew-Hermitian transport
    generator and f the volume divergence, using the same
    commutator-free scheme as parallel_transport (the scalar part
    commutes with everything, so exp splits exactly).
    """
    if omega_spec is None:
        omega_spec = FlatDensity()
    seg = bichar.to_segment()
    span = s - 0.0
    if span == 0:
        return SymbolState(sigma0.value.copy(), sigma0.degree)
    m = max(1, int(math.ceil(abs(span) / h)))
    hs = span / m
    steps = hs * np.arange(m)
    params = np.concatenate([steps + _C1 * hs, steps + _C2 * hs])
    xs, vs = seg.state(params)
    k = -connection.pairing_batch(xs, vs)
    xis = np.stack([metric.matrix(x) @ v for x, v in zip(xs, vs)])
    f = np.array([omega_spec.divergence(x, xi) for x, xi in zip(xs, xis)])
    k1, k2 = k[:m], k[m:]
    f1, f2 = f[:m], f[m:]
    first = expm_skew(hs * (_A1 * k1 + _A2 * k2))
    second = expm_skew(hs * (_A2 * k1 + _A1 * k2))
    sc_first = np.exp(-hs * (_A1 * f1 + _A2 * f2))
    sc_second = np.exp(-hs * (_A2 * f1 + _A1 * f2))
    c = sigma0.value.copy()
    for i in range(m):
        c = sc_second[i] * sc_first[i] * (second[i] @ (first[i] @ c))
    return SymbolState(c, sigma0.degree)


def transport_symbol_reference(metric, connection, bichar, sigma0, s, omega_spec=None, h=1e-3):
    """Independent route: e^{-rho_vol(s)} . parallel_transport . sigma0."""
    if omega_spec is None:
        omega_spec = FlatDensity()
    seg = bichar.to_segment()
    p = parallel_transport(metric, connection, seg, 0.0, s, h=h)
    rho = volume_factor(metric, bichar, omega_spec, s)
    return SymbolState(math.exp(-rho) * (p @ sigma0.value), sigma0.degree)


def homogeneity_residual(metric, connection, x, xi, s, lam, mu, c, h=1e-3):
    """Residual of the lambda^{mu + 1/2} homogeneity law of the transported symbol.

    The bicharacteristic from (x, lam xi) run to s / lam traverses the
    same null geodesic; initial data positively homogeneous of degree
    mu + 5/2 minus the two orders absorbed by the wave-operator
    normalization must reproduce lam^{mu + 1/2} times the base run.
    """
    c = np.asarray(c, dtype=complex)
    base = integrate_bicharacteristic(metric, x, xi, s, h=min(h, s / 50))
    scaled = integrate_bicharacteristic(metric, x, lam * np.asarray(xi, float), s / lam,
                                        h=min(h, s / (50 * lam)))
    out_base = transport_symbol(metric, connection, base, SymbolState(c, mu + 0.5), s, h=h)
    data = lam ** (mu + 2.5) * c
    out_scaled = transport_symbol(
        metric, connection, scaled, SymbolState(data, mu + 0.5), s / lam, h=h
    )
    lhs = lam ** (-2.0) * out_scaled.value
    rhs = lam ** (mu + 0.5) * out_base.value
    return float(np.linalg.norm(lhs - rhs))


# ---------------------------------------------------------------------------
# interaction geometry
# ---------------------------------------------------------------------------


def _orthonormal_frame(metric, y):
    """Columns e_0..e_{d-1}: g(e_0,e_0) = -1, g(e_a,e_b) = delta_ab.

    Exact identity on Minkowski/cylinder; for diagonal warped metrics a
    rescaled coordinate frame.
    """
    g = metric.matrix(y)
    if np.allclose(g, np.diag(np.diag(g))):
        scale = 1.0 / np.sqrt(np.abs(np.diag(g)))
        return np.diag(scale)
    # Gram-Schmidt against g, starting from the coordinate frame
    dim = metric.dim
    frame = np.eye(dim)
    e0 = frame[:, 0] / math.sqrt(-float(frame[:, 0] @ g @ frame[:, 0]))
    cols = [e0]
    for a in range(1, dim):
        v = frame[:, a].astype(float)
        v = v + (v @ g @ e0) * e0  # project out the timelike direction (note sign)
        for e in cols[1:]:
            v = v - (v @ g @ e) * e
        cols.append(v / math.sqrt(float(v @ g @ v)))
    return np.stack(cols, axis=1)


def causally_independent(metric, a, b):
    """True when neither point lies in the causal future of the other."""
    if metric.is_flat:
        d = metric.coord_delta(b, a)
        return float(d @ metric.matrix(a) @ d) > 1e-12
    return time_separation(metric, a, b) == 0.0 and time_separation(metric, b, a) == 0.0


@dataclass
class InteractionGeometry:
    """The three-source configuration of the interaction construction."""

    metric: object
    y: np.ndarray
    theta: float
    r: float
    s_in: float
    w: np.ndarray                      # outgoing future-pointing lightlike vector
    w_legs: list                       # [w_(1), w_(2), w_(3)], past-pointing
    x_legs: list                       # source points x_(j) = gamma_{y, w_j}(s_in)
    xi_legs: list                      # future-pointing vectors -gamma'_{y,w_j}(s_in)
    eta: np.ndarray                    # covector w^flat at y
    eta_legs: list                     # signed leg covectors at y
    kappa: np.ndarray
    kappa_residual: float
    segments: list = field(default_factory=list, repr=False)

    def query(self, s_out):
        """The broken-ray query with v = w_(1) and the outgoing direction w."""
        return BrokenRayQuery(self.y, self.w_legs[0], self.w, self.s_in, s_out)


def build_interaction_geometry(metric, y, theta, r, observation, s_range=None,
                               n_scan=120, h=1e-2, margin=1e-6):
    """Construct the three-source geometry at vertex y with opening theta and
    perturbation size r.

    The three past-pointing directions are the normal-form vectors
    w_1 = (-1, 1, 0, ...), w_{2,3} = (-1, sqrt(1-r^2), +/- r, 0, ...) in
    an orthonormal frame at y, and the common source parameter s' is
    searched so that all three sources land inside the observation set.
    """
    y = metric.validate_point(y)
    dim = metric.dim
    if dim < 3:
        raise DomainError("the interaction geometry needs at least two spatial dimensions")
    if not 0 < r < 1:
        raise DomainError("r must lie in (0, 1)")
    if min(abs(math.sin(theta)), 1.0 + math.cos(theta)) < 1e-6:
        raise GeometryError("degenerate interaction angle (theta near 0 or pi)")
    frame = _orthonormal_frame(metric, y)

    def vec(components):
        comp = np.zeros(dim)
        comp[: len(components)] = components
        return frame @ comp

    root = math.sqrt(1.0 - r * r)
    w = vec([1.0, math.cos(theta), math.sin(theta)])
    w_legs = [
        vec([-1.0, 1.0, 0.0]),
        vec([-1.0, root, r]),
        vec([-1.0, root, -r]),
    ]
    g = metric.matrix(y)
    for u in [w] + w_legs:
        if abs(float(u @ g @ u)) > 1e-10:
            raise GeometryError("constructed direction is not lightlike")

    eta = g @ w
    signs = (1.0, -1.0, -1.0)
    eta_legs = [sg * (g @ u) for sg, u in zip(signs, w_legs)]
    basis = np.stack(eta_legs, axis=1)
    kappa, residuals, rank, _ = np.linalg.lstsq(basis, r * r * eta, rcond=None)
    if rank < 3:
        raise GeometryError("degenerate interaction angle: kappa system is singular")
    kappa_residual = float(np.linalg.norm(basis @ kappa - r * r * eta))
    if kappa_residual > 1e-10:
        raise GeometryError("kappa linear relation residual too large")
    if np.any(kappa <= 0):
        raise GeometryError("kappa coefficients are not all positive")

    # search a common source parameter s' putting all sources in the
    # observation set
    if s_range is None:
        t0 = y[0]
        s_range = (max(1e-3, t0 - observation.T + 1e-3), t0 - 1e-3)
    lo, hi = s_range
    if not lo < hi:
        raise GeometryError("empty s' search range")
    smax = hi * 1.01
    segments = [integrate_geodesic(metric, y, u, smax, h=h) for u in w_legs]
    candidates = np.linspace(lo, hi, n_scan)
    valid = []
    for s in candidates:
        pts = [seg.position(float(s)) for seg in segments]
        if all(observation.contains(p, margin=margin) for p in pts):
            valid.append(float(s))
    if not valid:
        raise GeometryError("no common s' places all three sources in the observation set")
    s_in = valid[len(valid) // 2]

    x_legs = [seg.position(s_in) for seg in segments]
    xi_legs = [-seg.velocity(s_in) for seg in segments]
    for j in range(3):
        for k in range(j + 1, 3):
            if not causally_independent(metric, x_legs[j], x_legs[k]):
                raise GeometryError("source points are not causally independent")

    return InteractionGeometry(
        metric=metric, y=y, theta=float(theta), r=float(r), s_in=s_in,
        w=w, w_legs=w_legs, x_legs=x_legs, xi_legs=xi_legs,
        eta=eta, eta_legs=eta_legs, kappa=kappa, kappa_residual=kappa_residual,
        segments=segments,
    )


# ---------------------------------------------------------------------------
# interaction symbol and measurement
# ---------------------------------------------------------------------------


def interaction_symbol(sigma1, sigma2, sigma3, scale_factor=1.0):
    """Sum over S(3) of Re<sigma_t(1), sigma_t(2)> sigma_t(3), scaled."""
    vals = (np.asarray(sigma1, dtype=complex), np.asarray(sigma2, dtype=complex),
            np.asarray(sigma3, dtype=complex))
    out = np.zeros_like(vals[0])
    for i, j, k in permutations(range(3)):
        out = out + np.real(np.vdot(vals[i], vals[j])) * vals[k]
    return scale_factor * out


@dataclass
class MeasurementScalar:
    """The opaque positive-modulus scalar multiplying a simulated measurement.

    Collects every connection-independent factor (interaction constants,
    kappa powers, density weights); only its A-independence is
    meaningful, so it is flagged unknown.
    """

    value: complex
    unknown: bool = True


def simulated_measurement(metric, connection, geom, c_tilde, s_out, mu=0.0,
                          mode="fixed_r", h=1e-3, omega_spec=None):
    """Run the three-wave pipeline and return (vector, MeasurementScalar).

    mode="fixed_r": transport c_tilde from each source to the vertex
    along its leg, combine with interaction_symbol, transport outward.
    mode="limit": the analytic r -> 0 limit, the broken transform of the
    degenerate query applied to c_tilde.
    """
    c_tilde = np.asarray(c_tilde, dtype=complex)
    if abs(np.linalg.norm(c_tilde) - 1.0) > 1e-9:
        raise DomainError("c_tilde must be a unit vector")
    if omega_spec is None:
        omega_spec = FlatDensity()

    # connection-independent factors folded into the opaque scalar
    lam_value = 6.0 * float(np.prod((geom.kappa / geom.r**2) ** (mu + 0.5)))
    lam = MeasurementScalar(complex(lam_value))

    seg_out = integrate_geodesic(metric, geom.y, geom.w, s_out,
                                 h=min(1e-2, s_out / 50))
    p_out = parallel_transport(metric, connection, seg_out, 0.0, s_out, h=h)
    rho_out = 0.0
    if not isinstance(omega_spec, FlatDensity):
        bichar_out = integrate_bicharacteristic(
            metric, geom.y, metric.flat(geom.y, geom.w), s_out, h=min(1e-2, s_out / 50)
        )
        rho_out = volume_factor(metric, bichar_out, omega_spec, s_out)

    if mode == "limit":
        p_in = parallel_transport(metric, connection, geom.segments[0], geom.s_in, 0.0, h=h)
        vec = math.exp(-rho_out) * (p_out @ (p_in @ c_tilde))
        return vec, lam

    if mode != "fixed_r":
        raise DomainError("mode must be 'fixed_r' or 'limit'")

    # incoming symbols at the vertex: transport c_tilde from x_(j) to y
    # (leg 1 via the reversal identity, numerically the reversed-parameter
    # transport along the stored segment)
    at_vertex = []
    for seg in geom.segments:
        p_in = parallel_transport(metric, connection, seg, geom.s_in, 0.0, h=h)
        at_vertex.append(p_in @ c_tilde)
    combined = interaction_symbol(*at_vertex)
    vec = math.exp(-rho_out) * (p_out @ combined)
    # the factor 6 of the permutation sum is part of the opaque scalar;
    # keep the raw vector and the scalar separate
    return vec, lam


def flowout_disjointness(metric, geom, s_out, s0_cone, n_samples=24,
                         eps_excl=0.05, h=1e-2, rng=None):
    """Min distance between perturbed source flowouts and the outgoing segment.

    Each source x_(j) emits n_samples null geodesics with directions in a
    cone of opening s0_cone around xi_(j); points within eps_excl of the
    vertex are excluded before taking the distance to the outgoing
    segment (which all legs meet at y by construction).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    seg_out = integrate_geodesic(metric, geom.y, geom.w, s_out, h=min(h, s_out / 100))
    out_pts = seg_out.position(np.linspace(0.0, s_out, 400))
    keep = np.linalg.norm(out_pts - geom.y, axis=1) > eps_excl
    out_pts = out_pts[keep]
    length = geom.s_in + s_out
    best = math.inf
    for x_src, xi in zip(geom.x_legs, geom.xi_legs):
        base = np.asarray(xi, dtype=float)
        for _ in range(n_samples):
            pert = rng.standard_normal(metric.dim - 1)
            pert = pert / np.linalg.norm(pert)
            # perturb the spatial direction within the cone and re-null
            spatial = base[1:] / abs(base[0]) + s0_cone * pert
            v = null_vector(metric, x_src, spatial, time_sign=math.copysign(1.0, base[0]))
            v = v * abs(base[0])
            traj = integrate_geodesic(metric, x_src, v, length, h=min(h, length / 200))
            pts = traj.position(np.linspace(0.0, length, 400))
            near_y = np.linalg.norm(pts - geom.y, axis=1) <= eps_excl
            pts = pts[~near_y]
            if len(pts) == 0 or len(out_pts) == 0:
                continue
            d = np.min(
                np.linalg.norm(pts[:, None, :] - out_pts[None, :, :], axis=2)
            )
            best = min(best, float(d))
    return best
