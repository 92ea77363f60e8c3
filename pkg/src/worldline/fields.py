"""Force data attached to a manifold.

Holds the linear force operator F (a (1,1) tensor acting on velocities), an
explicit force vector X or a potential V generating X = -grad V, and an
optional reference vector field K used for conserved-charge monitoring and
the completeness checks.  All components are symbolic expressions over the
manifold's coordinate frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from . import expr as ex
from . import geometry as geo
from . import sampling

_SKEW_TOL = 1e-10
_ANNIHILATE_TOL = 1e-10
_CONFORMAL_TOL = 1e-9
_TIMELIKE_MARGIN = -1e-10

DEFAULT_POINTS = 1000
DEFAULT_DIRECTIONS = 8


@dataclass(frozen=True)
class FieldPack:
    frame: ex.CoordinateFrame
    force_operator: tuple | None = None   # rows F^i_j, i = upper index
    force_vector: tuple | None = None     # X components
    potential: ex.Expr | None = None      # V; drives X = -grad V
    reference_field: tuple | None = None  # K components

    def __post_init__(self):
        n = self.frame.dim
        F = self.force_operator
        if F is not None:
            if len(F) != n or any(len(row) != n for row in F):
                raise geo.ValidationError(f"force operator must be {n}x{n}")
        for label, vec in (("X", self.force_vector), ("K", self.reference_field)):
            if vec is not None and len(vec) != n:
                raise geo.ValidationError(f"vector field {label} must have {n} components")

    @property
    def time_dependent(self) -> bool:
        return any(ex.references_time(e) for e in self._all_exprs())

    def _all_exprs(self):
        if self.force_operator is not None:
            for row in self.force_operator:
                yield from row
        for vec in (self.force_vector, self.reference_field):
            if vec is not None:
                yield from vec
        if self.potential is not None:
            yield self.potential

    # -- compiled evaluators -------------------------------------------------

    @cached_property
    def _compiled(self) -> "_CompiledFields":
        return _CompiledFields(self)

    def force_matrix(self, q, t: float = 0.0) -> np.ndarray:
        """F as an n x n matrix at a point (zero matrix when F is absent)."""
        return self._compiled.F_value(q, t)

    def reference_value(self, q, t: float = 0.0) -> np.ndarray:
        return self._compiled.K_value(q, t)

    def reference_batch(self, qs, ts) -> np.ndarray:
        return self._compiled.K_batch(qs, ts)

    def potential_value(self, q, t: float = 0.0) -> float:
        return self._compiled.V_scalar(q, t) if self.potential is not None else 0.0

    def potential_batch(self, qs, ts) -> np.ndarray:
        if self.potential is None:
            return np.zeros(len(qs))
        return self._compiled.V_batch(qs, ts)


class _CompiledFields:
    def __init__(self, fp: FieldPack):
        frame = fp.frame
        n = frame.dim
        self.n = n
        F = fp.force_operator
        self.F_scalar = None if F is None else [
            [ex.compile_scalar(e, frame) for e in row] for row in F]
        X = fp.force_vector
        self.X_scalar = None if X is None else [ex.compile_scalar(e, frame) for e in X]
        K = fp.reference_field
        self.K_scalar = None if K is None else [ex.compile_scalar(e, frame) for e in K]
        self.K_bat = None if K is None else [ex.compile_batch(e, frame) for e in K]
        V = fp.potential
        self.V_scalar = None if V is None else ex.compile_scalar(V, frame)
        self.V_batch = None if V is None else ex.compile_batch(V, frame)
        if V is not None:
            self.dV = [ex.derive(V, name) for name in frame.names]
            self.dV_scalar = [ex.compile_scalar(e, frame) for e in self.dV]
            self.dV_batch = [ex.compile_batch(e, frame) for e in self.dV]
        else:
            self.dV = None
            self.dV_scalar = None
            self.dV_batch = None

    def F_value(self, q, t=0.0) -> np.ndarray:
        if self.F_scalar is None:
            return np.zeros((self.n, self.n))
        return np.array([[f(q, t) for f in row] for row in self.F_scalar])

    def K_value(self, q, t=0.0) -> np.ndarray:
        if self.K_scalar is None:
            raise geo.ValidationError("no reference field K in this pack")
        return np.array([f(q, t) for f in self.K_scalar])

    def K_batch(self, qs, ts) -> np.ndarray:
        if self.K_bat is None:
            raise geo.ValidationError("no reference field K in this pack")
        return np.column_stack([f(qs, ts) for f in self.K_bat])


@dataclass(frozen=True)
class DecompositionAt:
    """F split at a point into the part symmetric for g and the part skew for g."""

    S: np.ndarray
    H: np.ndarray


@dataclass(frozen=True)
class SampledCheck:
    """Outcome of a pointwise-everywhere hypothesis tested on finite samples."""

    passed: bool
    worst: float
    points: int
    note: str = "sampled check, not a proof"


def g_adjoint(g: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Adjoint of F with respect to the (possibly indefinite) form g."""
    return np.linalg.solve(g, F.T @ g)


def decompose(m: geo.ManifoldSpec, fp: FieldPack, p, t: float = 0.0) -> DecompositionAt:
    if fp.force_operator is None:
        raise geo.ValidationError("no force operator to decompose")
    g = geo.metric_at(m, p)
    F = fp.force_matrix(p, t)
    Fstar = g_adjoint(g, F)
    return DecompositionAt(0.5 * (F + Fstar), 0.5 * (F - Fstar))


def _sample_set(m: geo.ManifoldSpec, count: int, directions: int,
                seed: int = sampling.DEFAULT_SEED):
    pts = geo.sample_points(m, count)
    dirs = sampling.sample_directions(count * directions, m.dim, seed)
    return pts, dirs.reshape(count, directions, m.dim)


def is_skew_adjoint(m: geo.ManifoldSpec, fp: FieldPack,
                    count: int = DEFAULT_POINTS,
                    directions: int = DEFAULT_DIRECTIONS) -> SampledCheck:
    """Does g(v, Fv) vanish for all sampled points and directions?"""
    if fp.force_operator is None:
        return SampledCheck(True, 0.0, 0)
    pts, dirs = _sample_set(m, count, directions)
    worst = 0.0
    for q, vs in zip(pts, dirs):
        q = tuple(q)
        g = m.metric_value(q)
        F = fp.force_matrix(q)
        gF = g @ F
        for v in vs:
            val = float(abs(v @ gF @ v) / (1.0 + v @ v))
            if val > worst:
                worst = val
    return SampledCheck(worst <= _SKEW_TOL, worst, count)


def annihilates(m: geo.ManifoldSpec, fp: FieldPack,
                count: int = DEFAULT_POINTS) -> SampledCheck:
    """Does F send the reference field K to zero at sampled points?"""
    if fp.force_operator is None:
        return SampledCheck(True, 0.0, 0)
    if fp.reference_field is None:
        raise geo.ValidationError("no reference field K in this pack")
    pts = geo.sample_points(m, count)
    worst = 0.0
    for q in pts:
        q = tuple(q)
        fk = fp.force_matrix(q) @ fp.reference_value(q)
        worst = max(worst, float(np.sqrt(fk @ fk)))
    return SampledCheck(worst <= _ANNIHILATE_TOL, worst, count)


def gradient(m: geo.ManifoldSpec, fp: FieldPack, p, t: float = 0.0) -> np.ndarray:
    """Metric gradient of the potential, components g^{ij} dV/dx_j."""
    if fp.potential is None:
        raise geo.ValidationError("no potential in this pack")
    g = geo.metric_at(m, p)
    dv = np.array([f(p, t) for f in fp._compiled.dV_scalar])
    return np.linalg.solve(g, dv)


def drive_vector(m: geo.ManifoldSpec, fp: FieldPack, p, t: float = 0.0) -> np.ndarray:
    """The X that actually enters the equation: -grad V if a potential is given,
    else the explicit force vector, else zero."""
    if fp.potential is not None:
        return -gradient(m, fp, p, t)
    if fp.force_vector is not None:
        return np.array([f(p, t) for f in fp._compiled.X_scalar])
    return np.zeros(m.dim)


# -- conformal structure of K ----------------------------------------------

@lru_cache(maxsize=32)
def _lie_system(m: geo.ManifoldSpec, K: tuple):
    """Compiled entries of the Lie derivative of g along K."""
    frame = m.frame
    n = m.dim
    g = m.metric
    if len(K) != n:
        raise geo.ValidationError(f"vector field K must have {n} components")
    dK = [[ex.derive(K[l], frame.names[i]) for l in range(n)] for i in range(n)]
    lie = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            acc = ex.ZERO
            for l in range(n):
                acc = ex.add(acc, ex.mul(K[l], ex.derive(g[i][j], frame.names[l])))
                acc = ex.add(acc, ex.mul(g[l][j], dK[i][l]))
                acc = ex.add(acc, ex.mul(g[i][l], dK[j][l]))
            lie[i][j] = lie[j][i] = ex.compile_scalar(acc, frame)
    return lie


def conformal_factor(m: geo.ManifoldSpec, K: tuple, p) -> tuple:
    """(sigma, residual) of L_K g = 2 sigma g at a point.

    sigma is extracted by trace even when K is not conformal; the residual
    (max-abs entry of L_K g - 2 sigma g) quantifies the failure.
    """
    n = m.dim
    lie = _lie_system(m, K)
    L = np.array([[lie[i][j](p) for j in range(n)] for i in range(n)])
    g = geo.metric_at(m, p)
    sigma = float(np.trace(np.linalg.solve(g, L))) / (2 * n)
    residual = float(np.max(np.abs(L - 2.0 * sigma * g)))
    return sigma, residual


def conformal_report(m: geo.ManifoldSpec, fp: FieldPack,
                     count: int = DEFAULT_POINTS):
    """Sampled conformal diagnostics of K.

    Returns (max residual, max |sigma|, sigma at the first sample).  K is
    conformal on the sample iff residual <= 1e-9, Killing iff also the
    sigma bound is <= 1e-9.
    """
    if fp.reference_field is None:
        raise geo.ValidationError("no reference field K in this pack")
    pts = geo.sample_points(m, count)
    max_res = 0.0
    max_sigma = 0.0
    sigma0 = None
    for q in pts:
        sigma, res = conformal_factor(m, fp.reference_field, tuple(q))
        if sigma0 is None:
            sigma0 = sigma
        max_res = max(max_res, res)
        max_sigma = max(max_sigma, abs(sigma))
    return max_res, max_sigma, sigma0


def is_timelike_everywhere(m: geo.ManifoldSpec, fp: FieldPack,
                           count: int = DEFAULT_POINTS) -> SampledCheck:
    """g(K,K) < -1e-10 at every sampled point; worst is the largest value seen."""
    if fp.reference_field is None:
        raise geo.ValidationError("no reference field K in this pack")
    pts = geo.sample_points(m, count)
    worst = -math.inf
    for q in pts:
        q = tuple(q)
        k = fp.reference_value(q)
        worst = max(worst, float(k @ m.metric_value(q) @ k))
    return SampledCheck(worst < _TIMELIKE_MARGIN, worst, count)


def invariant_norms(m: geo.ManifoldSpec, fp: FieldPack, p, t: float = 0.0) -> dict:
    """Pointwise size diagnostics under both the metric and plain sums.

    Metric contractions can vanish on null data, so the Euclidean figures are
    reported alongside rather than folded into one number.
    """
    g = geo.metric_at(m, p)
    out = {}
    if fp.force_vector is not None or fp.potential is not None:
        x = drive_vector(m, fp, p, t)
        out["g_XX"] = float(x @ g @ x)
        out["euclid_XX"] = float(x @ x)
    if fp.force_operator is not None:
        F = fp.force_matrix(p, t)
        # full contraction F^{mu nu} F_{mu nu} = F^i_j F^k_l g_{ik} g^{jl}
        ginv = np.linalg.inv(g)
        out["F_full_contraction"] = float(np.einsum("ij,kl,ik,jl", F, F, g, ginv))
        out["F_frobenius_sq"] = float(np.sum(F * F))
    return out


def validate_fields(m: geo.ManifoldSpec, fp: FieldPack, count: int = 100):
    """Sampled structural checks: finite evaluation, X vs -grad V agreement."""
    if fp.frame != m.frame:
        raise geo.ValidationError("field pack and manifold use different frames")
    pts = geo.sample_points(m, count)
    for q in pts:
        q = tuple(q)
        try:
            if fp.force_operator is not None:
                fp.force_matrix(q)
            if fp.potential is not None:
                fp.potential_value(q)
            if fp.reference_field is not None:
                fp.reference_value(q)
            if fp.force_vector is not None:
                for f in fp._compiled.X_scalar:
                    f(q)
        except ex.EvaluationDomainError as err:
            raise geo.ValidationError(
                f"field expression fails to evaluate at {q}: {err}") from err
        if fp.potential is not None and fp.force_vector is not None:
            explicit = np.array([f(q) for f in fp._compiled.X_scalar])
            derived = -gradient(m, fp, q)
            if not np.allclose(explicit, derived, rtol=1e-8, atol=1e-8):
                raise geo.ValidationError(
                    f"X and -grad V disagree at {q}: {explicit} vs {derived}")
