"""Pointwise pseudo-Riemannian metric machinery.

A manifold is a single coordinate chart with a symbolic metric matrix, an
optional quotient (lattice translations or a scaling map) that encodes
compactness structurally, and a chart domain predicate.  All heavy lifting
(Christoffel symbols, inverse metric) is done symbolically once per manifold
and compiled; the public operations evaluate at points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import expr as ex
from . import sampling

RIEMANNIAN = "riemannian"
LORENTZIAN = "lorentzian"

_DEGENERACY_TOL = 1e-12
_NULL_BAND = 1e-12
_MAX_SYMBOLIC_DIM = 4


class GeometryError(ValueError):
    pass


class OutsideDomainError(GeometryError):
    pass


class DegenerateMetricError(GeometryError):
    pass


class SignatureError(GeometryError):
    pass


class ValidationError(GeometryError):
    """A spec or scenario violates a structural invariant."""


@dataclass(frozen=True)
class ChartDomain:
    """Box bounds per coordinate plus an optional excluded ball at the origin."""

    lower: tuple
    upper: tuple
    exclude_origin_radius: float | None = None

    @staticmethod
    def unbounded(n: int, exclude_origin_radius: float | None = None) -> "ChartDomain":
        return ChartDomain((-math.inf,) * n, (math.inf,) * n, exclude_origin_radius)

    def contains(self, q) -> bool:
        for x, lo, hi in zip(q, self.lower, self.upper):
            if not (lo <= x <= hi):
                return False
        if self.exclude_origin_radius is not None:
            if math.sqrt(sum(x * x for x in q)) < self.exclude_origin_radius:
                return False
        return True

    def boundary_distance(self, q) -> float:
        """Distance to the nearest finite box face or to the excluded ball."""
        d = math.inf
        for x, lo, hi in zip(q, self.lower, self.upper):
            if math.isfinite(lo):
                d = min(d, abs(x - lo))
            if math.isfinite(hi):
                d = min(d, abs(x - hi))
        if self.exclude_origin_radius is not None:
            r = math.sqrt(sum(x * x for x in q))
            d = min(d, abs(r - self.exclude_origin_radius))
        return d


@dataclass(frozen=True)
class LatticeQuotient:
    """Translation quotient: period L_i per coordinate, None = not periodic."""

    periods: tuple

    def __post_init__(self):
        if not any(p is not None for p in self.periods):
            raise ValidationError("lattice quotient needs at least one period")
        for p in self.periods:
            if p is not None and not (p > 0):
                raise ValidationError(f"lattice period must be positive, got {p}")


@dataclass(frozen=True)
class ScalingQuotient:
    """Quotient by p -> factor*p; fundamental annulus 1 <= |p| < factor."""

    factor: float

    def __post_init__(self):
        if not (self.factor > 1):
            raise ValidationError(f"scaling factor must exceed 1, got {self.factor}")


@dataclass(frozen=True)
class Tangent:
    point: tuple
    vector: tuple


@dataclass(frozen=True)
class TrajectoryState:
    """Affine parameter, base point and velocity components."""

    t: float
    q: tuple
    v: tuple


@dataclass(frozen=True)
class ManifoldSpec:
    frame: ex.CoordinateFrame
    metric: tuple  # n x n tuple-of-tuples of Expr, structurally symmetric
    domain: ChartDomain
    signature: str = RIEMANNIAN
    quotient: LatticeQuotient | ScalingQuotient | None = None
    declared_complete: bool = False

    def __post_init__(self):
        n = self.frame.dim
        if len(self.metric) != n or any(len(row) != n for row in self.metric):
            raise ValidationError(f"metric must be {n}x{n} for this frame")
        for i in range(n):
            for j in range(i + 1, n):
                if self.metric[i][j] != self.metric[j][i]:
                    raise ValidationError(
                        f"metric entries g_{i}_{j} and g_{j}_{i} differ structurally")
        for row in self.metric:
            for entry in row:
                if ex.references_time(entry):
                    raise ValidationError("metric components must not depend on the parameter t")
        if self.signature not in (RIEMANNIAN, LORENTZIAN):
            raise ValidationError(f"unknown signature {self.signature!r}")
        if len(self.domain.lower) != n or len(self.domain.upper) != n:
            raise ValidationError("chart domain bounds must match the dimension")
        if isinstance(self.quotient, LatticeQuotient) and len(self.quotient.periods) != n:
            raise ValidationError("lattice periods must match the dimension")

    @property
    def dim(self) -> int:
        return self.frame.dim

    # -- compiled machinery (built once, read-only afterwards) --------------

    @cached_property
    def _sys(self) -> "_CompiledMetric":
        return _CompiledMetric(self)

    def metric_value(self, q, t: float = 0.0) -> np.ndarray:
        """Raw metric matrix at a point, no domain/signature checks."""
        return self._sys.value(q)

    def metric_batch(self, qs: np.ndarray) -> np.ndarray:
        """Metric matrices at an (m, n) array of points, shape (m, n, n)."""
        return self._sys.batch(qs)


def manifold_from_components(frame, components: dict, domain=None,
                             signature=RIEMANNIAN, quotient=None,
                             declared_complete=False) -> ManifoldSpec:
    """Build a spec from upper-triangle entries {(i, j): Expr}, i <= j."""
    n = frame.dim
    rows = [[ex.ZERO] * n for _ in range(n)]
    for (i, j), e in components.items():
        if not (0 <= i <= j < n):
            raise ValidationError(f"metric key ({i},{j}) out of range for dimension {n}")
        rows[i][j] = e
        rows[j][i] = e
    if domain is None:
        domain = ChartDomain.unbounded(n)
    return ManifoldSpec(frame, tuple(tuple(r) for r in rows), domain,
                        signature, quotient, declared_complete)


class _CompiledMetric:
    """Symbolic derivatives, inverse and Christoffels of a metric, compiled."""

    def __init__(self, m: ManifoldSpec):
        frame = m.frame
        n = m.dim
        self.n = n
        g = m.metric
        self.entry_scalar = [[ex.compile_scalar(g[i][j], frame) for j in range(n)]
                             for i in range(n)]
        self.entry_batch = [[ex.compile_batch(g[i][j], frame) if j >= i else None
                             for j in range(n)] for i in range(n)]
        # dg[k][i][j] = d g_ij / d x_k
        self.dg = [[[ex.derive(g[i][j], frame.names[k]) for j in range(n)]
                    for i in range(n)] for k in range(n)]
        self.dg_scalar = [[[ex.compile_scalar(self.dg[k][i][j], frame)
                           for j in range(n)] for i in range(n)] for k in range(n)]
        self.det_expr = _det(g, n)
        self.det_scalar = ex.compile_scalar(self.det_expr, frame)
        if n <= _MAX_SYMBOLIC_DIM:
            self.ginv = _symbolic_inverse(g, self.det_expr, n)
            self.gamma = self._christoffel_exprs()
            self.gamma_scalar = [[[ex.compile_scalar(self.gamma[k][i][j], frame)
                                  for j in range(n)] for i in range(n)] for k in range(n)]
        else:
            self.ginv = None
            self.gamma = None
            self.gamma_scalar = None

    def _christoffel_exprs(self):
        n = self.n
        gamma = [[[None] * n for _ in range(n)] for _ in range(n)]
        for k in range(n):
            for i in range(n):
                for j in range(i, n):
                    acc = ex.ZERO
                    for l in range(n):
                        term = ex.sub(ex.add(self.dg[i][j][l], self.dg[j][i][l]),
                                      self.dg[l][i][j])
                        acc = ex.add(acc, ex.mul(self.ginv[k][l], term))
                    e = ex.mul(Half, acc)
                    gamma[k][i][j] = e
                    gamma[k][j][i] = e
        return gamma

    def value(self, q) -> np.ndarray:
        n = self.n
        out = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                out[i, j] = out[j, i] = self.entry_scalar[i][j](q)
        return out

    def batch(self, qs: np.ndarray) -> np.ndarray:
        m, n = qs.shape[0], self.n
        ts = np.zeros(m)
        out = np.empty((m, n, n))
        for i in range(n):
            for j in range(i, n):
                vals = self.entry_batch[i][j](qs, ts)
                out[:, i, j] = out[:, j, i] = vals
        return out

    def dg_value(self, q) -> np.ndarray:
        n = self.n
        out = np.empty((n, n, n))
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    out[k, i, j] = self.dg_scalar[k][i][j](q)
        return out


Half = ex.Const(0.5)


def _det(g, n) -> ex.Expr:
    if n == 1:
        return g[0][0]
    acc = ex.ZERO
    for j in range(n):
        minor = _minor(g, 0, j, n)
        term = ex.mul(g[0][j], _det(minor, n - 1))
        acc = ex.add(acc, term if j % 2 == 0 else ex.neg(term))
    return acc


def _minor(g, drop_i, drop_j, n):
    return tuple(tuple(g[i][j] for j in range(n) if j != drop_j)
                 for i in range(n) if i != drop_i)


def _symbolic_inverse(g, det, n):
    """Inverse via the adjugate; entries are Expr."""
    if n == 1:
        return ((ex.div(ex.ONE, g[0][0]),),)
    inv = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            cof = _det(_minor(g, j, i, n), n - 1)
            if (i + j) % 2 == 1:
                cof = ex.neg(cof)
            inv[i][j] = ex.div(cof, det)
    return tuple(tuple(row) for row in inv)


# --- public operations -----------------------------------------------------

def metric_at(m: ManifoldSpec, p) -> np.ndarray:
    """Evaluate g at p; checks domain membership, degeneracy and signature."""
    if not m.domain.contains(p):
        raise OutsideDomainError(f"point {tuple(p)} is outside the chart domain")
    g = m.metric_value(p)
    _check_matrix(m, g, p)
    return g


def _check_matrix(m, g, p):
    det = np.linalg.det(g)
    if abs(det) < _DEGENERACY_TOL:
        raise DegenerateMetricError(f"metric is degenerate at {tuple(p)} (det={det:.3e})")
    negatives = int(np.sum(np.linalg.eigvalsh(g) < 0.0))
    expected = 1 if m.signature == LORENTZIAN else 0
    if negatives != expected:
        raise SignatureError(
            f"metric at {tuple(p)} has {negatives} negative eigenvalues, "
            f"expected {expected} for a {m.signature} spec")


def inner(m: ManifoldSpec, p, u, v) -> float:
    """g_p(u, v)."""
    g = metric_at(m, p)
    return float(np.asarray(u) @ g @ np.asarray(v))


def causal_character(m: ManifoldSpec, p, v) -> str:
    """One of 'timelike', 'null', 'spacelike', 'zero'."""
    v = np.asarray(v, dtype=float)
    norm_sq = float(v @ v)
    if norm_sq == 0.0:
        return "zero"
    gvv = inner(m, p, v, v)
    if abs(gvv) <= _NULL_BAND * norm_sq:
        return "null"
    return "timelike" if gvv < 0.0 else "spacelike"


def christoffel_at(m: ManifoldSpec, p) -> np.ndarray:
    """Levi-Civita coefficients at p, shape (n, n, n) indexed [k, i, j]."""
    sys = m._sys
    if abs(sys.det_scalar(p)) < _DEGENERACY_TOL:
        raise DegenerateMetricError(f"metric is degenerate at {tuple(p)}")
    n = sys.n
    out = np.empty((n, n, n))
    if sys.gamma_scalar is not None:
        for k in range(n):
            for i in range(n):
                for j in range(i, n):
                    out[k, i, j] = out[k, j, i] = sys.gamma_scalar[k][i][j](p)
        return out
    g = sys.value(p)
    ginv = np.linalg.inv(g)
    dg = sys.dg_value(p)
    # 0.5 * g^{kl} (d_i g_jl + d_j g_il - d_l g_ij); dg is indexed [k, i, j]
    out = 0.5 * np.einsum("kl,ijl->kij",
                          ginv, dg + dg.transpose(1, 0, 2) - dg.transpose(1, 2, 0))
    return out


def auxiliary_riemannian(m: ManifoldSpec, p, z, v) -> float:
    """Positive-definite companion form g(v,v) + 2 g(z,v)^2 for unit timelike z."""
    g = metric_at(m, p)
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    gzz = float(z @ g @ z)
    if abs(gzz + 1.0) > 1e-10:
        raise ValidationError(f"reference vector is not unit timelike: g(z,z)={gzz!r}")
    return float(v @ g @ v) + 2.0 * float(z @ g @ v) ** 2


def normalize_qv(m: ManifoldSpec, q: tuple, v: tuple):
    """Map (q, v) into the fundamental domain by a deck transformation.

    Returns (q', v', changed).  Deck maps are isometries: lattice
    translations leave v untouched; the scaling map divides both by the
    applied power of the factor.
    """
    quot = m.quotient
    if quot is None:
        return q, v, False
    if isinstance(quot, LatticeQuotient):
        q_new = tuple(x if L is None else x % L for x, L in zip(q, quot.periods))
        return (q_new, v, q_new != q)
    lam = quot.factor
    r = math.sqrt(sum(x * x for x in q))
    if r == 0.0:
        return q, v, False
    k = math.floor(math.log(r) / math.log(lam))
    scale = lam ** k
    while r / scale >= lam:
        scale *= lam
    while r / scale < 1.0:
        scale /= lam
    if scale == 1.0:
        return q, v, False
    inv = 1.0 / scale
    return tuple(x * inv for x in q), tuple(x * inv for x in v), True


def normalize(m: ManifoldSpec, s: TrajectoryState) -> TrajectoryState:
    q, v, changed = normalize_qv(m, s.q, s.v)
    return TrajectoryState(s.t, q, v) if changed else s


# --- fundamental domain sampling ------------------------------------------

def fundamental_domain_bounded(m: ManifoldSpec) -> bool:
    """True when quotient plus chart bounds make the fundamental domain bounded."""
    if isinstance(m.quotient, ScalingQuotient):
        return True
    if isinstance(m.quotient, LatticeQuotient):
        pairs = zip(m.quotient.periods, m.domain.lower, m.domain.upper)
        return all(L is not None or (math.isfinite(lo) and math.isfinite(hi))
                   for L, lo, hi in pairs)
    return all(math.isfinite(lo) and math.isfinite(hi)
               for lo, hi in zip(m.domain.lower, m.domain.upper))


def sampling_box(m: ManifoldSpec, fallback_halfwidth: float = 10.0):
    """Box (lo, hi) enclosing the fundamental domain, finite in each coordinate."""
    n = m.dim
    if isinstance(m.quotient, ScalingQuotient):
        lam = m.quotient.factor
        return (-lam,) * n, (lam,) * n
    lo, hi = [], []
    periods = m.quotient.periods if isinstance(m.quotient, LatticeQuotient) else (None,) * n
    for i in range(n):
        if periods[i] is not None:
            lo.append(0.0)
            hi.append(periods[i])
        else:
            a, b = m.domain.lower[i], m.domain.upper[i]
            lo.append(a if math.isfinite(a) else -fallback_halfwidth)
            hi.append(b if math.isfinite(b) else fallback_halfwidth)
    return tuple(lo), tuple(hi)


def sample_points(m: ManifoldSpec, count: int,
                  fallback_halfwidth: float = 10.0) -> np.ndarray:
    """Low-discrepancy points in the fundamental domain (chart domain respected)."""
    lo, hi = sampling_box(m, fallback_halfwidth)

    def keep(q):
        if isinstance(m.quotient, ScalingQuotient):
            r = math.sqrt(sum(x * x for x in q))
            if not (1.0 <= r < m.quotient.factor):
                return False
        return m.domain.contains(q)

    return sampling.sample_predicate(count, lo, hi, keep)


# --- validation ------------------------------------------------------------

def deck_transforms(m: ManifoldSpec):
    """Generator deck maps as (point_map, vector_map) pairs."""
    out = []
    if isinstance(m.quotient, LatticeQuotient):
        for i, L in enumerate(m.quotient.periods):
            if L is None:
                continue
            shift = np.zeros(m.dim)
            shift[i] = L
            out.append((lambda q, s=shift: np.asarray(q) + s, lambda v: np.asarray(v)))
    elif isinstance(m.quotient, ScalingQuotient):
        lam = m.quotient.factor
        out.append((lambda q: np.asarray(q) * lam, lambda v: np.asarray(v) * lam))
    return out


def validate_manifold(m: ManifoldSpec, points: int = 100, seed: int = sampling.DEFAULT_SEED):
    """Sampled structural checks: signature, non-degeneracy, deck isometry.

    Raises ValidationError on failure; silent on success.
    """
    try:
        pts = sample_points(m, points)
    except ValueError as err:
        raise ValidationError(f"cannot sample the fundamental domain: {err}") from err
    for q in pts:
        try:
            metric_at(m, tuple(q))
        except GeometryError as err:
            raise ValidationError(str(err)) from err
    transforms = deck_transforms(m)
    if not transforms:
        return
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((points, 2, m.dim))
    for q, (u, v) in zip(pts, dirs):
        g = m.metric_value(tuple(q))
        base = float(u @ g @ v)
        for point_map, vector_map in transforms:
            q2 = point_map(q)
            g2 = m.metric_value(tuple(q2))
            moved = float(vector_map(u) @ g2 @ vector_map(v))
            if abs(moved - base) > 1e-10 * (1.0 + abs(base)):
                raise ValidationError(
                    f"quotient map is not an isometry at {tuple(q)}: "
                    f"g(u,v)={base!r} vs {moved!r}")
