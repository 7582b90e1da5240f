"""Approximating Laplace-Beltrami operators, their limit and the intrinsic curvature.

Every quantity is built from jets of the defining function at a single point.
The adapted frame F1 = hatX, F2 = b J(F1) - X0 is extended off the surface by
the same formulas, so derivatives along it can be taken with jet arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import jets as J
from .foliation import (
    CRITERION_TOL,
    CharacteristicPointError,
    StopRule,
    SurfaceSpec,
    trace_leaf,
)
from .geometry import ContactStructure, ScalarField, bracket_jets, directional, solve


def _trunc(V, order):
    return [c.truncate(order) for c in V]


class PointContext:
    """Jets of the adapted frame and its invariants at one surface point.

    ``order`` is the jet order of u; F1, F2 and b carry order - 1 and the
    bracket invariants h and eta carry order - 2.
    """

    def __init__(self, S: SurfaceSpec, cs: ContactStructure, p, order: int = 2):
        if order < 2:
            raise ValueError("need at least second-order jets of u")
        self.p = np.asarray(p, dtype=float)
        self.order = order
        self.cs = cs
        m = order - 1
        g = S.u.jet(self.p, order)
        X1, X2, X0 = cs.frame_jets(self.p, m)
        A1, A2, A0 = directional(X1, g), directional(X2, g), directional(X0, g)
        n2 = A1 * A1 + A2 * A2
        if math.sqrt(n2.value) <= CRITERION_TOL:
            raise CharacteristicPointError(f"adapted frame undefined at {tuple(self.p)}")
        inv_n = J.reciprocal(J.sqrt(n2))
        self.u_jet = g
        self.X = (X1, X2, X0)
        self.f1, self.f2 = A2 * inv_n, -A1 * inv_n
        self.b = A0 * inv_n
        self.F1 = [self.f1 * a + self.f2 * c for a, c in zip(X1, X2)]
        self.JF1 = [-self.f2 * a + self.f1 * c for a, c in zip(X1, X2)]
        self.F2 = [self.b * j - x0 for j, x0 in zip(self.JF1, X0)]
        self._normal = cs.normal_jets(self.p, m)
        self._h_eta = None

    def apply(self, V, g: J.Jet) -> J.Jet:
        return directional(_trunc(V, g.order - 1), g)

    def frame_coords(self, v: Sequence[J.Jet]) -> list[J.Jet]:
        """Jets of (c1, c2, c0) with v = c1 X1 + c2 X2 + c0 X0."""
        o = min(c.order for c in v)
        cols = [_trunc(X, o) for X in self.X]
        if self._normal is not None:
            cols.append(_trunc(self._normal, o))
        dim = len(v)
        A = [[cols[j][i] for j in range(len(cols))] for i in range(dim)]
        return solve(A, [c.truncate(o) for c in v])[:3]

    def h_eta(self) -> tuple[J.Jet, J.Jet]:
        """Characteristic deviation h(F1) and eta(F1) as jets."""
        if self._h_eta is None:
            o = self.order - 2
            f1, f2 = self.f1.truncate(o), self.f2.truncate(o)
            c = self.frame_coords(bracket_jets(self.F1, self.JF1))
            h = -(c[0] * f1 + c[1] * f2)
            c = self.frame_coords(bracket_jets(self.X[2], self.F1))
            eta = -(c[0] * f1 + c[1] * f2)
            self._h_eta = (h, eta)
        return self._h_eta

    def h_eta_structure(self) -> tuple[float, float]:
        """h and eta from the structure functions (independent route)."""
        from .geometry import structure_functions

        c = structure_functions(self.cs, self.p)
        f1, f2 = self.f1, self.f2
        F1f1 = self.apply(self.F1, f1).value
        F1f2 = self.apply(self.F1, f2).value
        f1, f2 = f1.value, f2.value
        h = -(f2 * F1f1 - f1 * F1f2 + f1 * c.c12_1 + f2 * c.c12_2)
        eta = -(f1 * f1 * c.c01_1 + f1 * f2 * (c.c01_2 + c.c02_1) + f2 * f2 * c.c02_2)
        return h, eta

    def vec(self, V) -> np.ndarray:
        return np.array([c.value for c in V])


@dataclass
class FrameF:
    F1: np.ndarray
    F2: np.ndarray
    b: float
    JF1: np.ndarray

    def g_eps(self, cs: ContactStructure, p, eps: float) -> np.ndarray:
        """Gram matrix of (F1, F2) in the metric making X1, X2, sqrt(eps) X0 orthonormal."""
        C = np.array([cs.decompose(v, p) for v in (self.F1, self.F2)])
        W = np.diag([1.0, 1.0, 1.0 / eps])
        return C @ W @ C.T


def frame_F(S: SurfaceSpec, cs: ContactStructure, p) -> FrameF:
    ctx = PointContext(S, cs, p, 2)
    return FrameF(ctx.vec(ctx.F1), ctx.vec(ctx.F2), ctx.b.value, ctx.vec(ctx.JF1))


def h_eta(S: SurfaceSpec, cs: ContactStructure, p) -> tuple[float, float]:
    h, eta = PointContext(S, cs, p, 2).h_eta()
    return h.value, eta.value


def bracket_F_coefficients(S: SurfaceSpec, cs: ContactStructure, p) -> tuple[float, float, float]:
    """(b1, b2, residual) from a least-squares decomposition of [F1, F2] in (F1, F2)."""
    ctx = PointContext(S, cs, p, 2)
    br = np.array([c.value for c in bracket_jets(ctx.F1, ctx.F2)])
    A = np.column_stack([ctx.vec(ctx.F1), ctx.vec(ctx.F2)])
    coef, *_ = np.linalg.lstsq(A, br, rcond=None)
    return float(coef[0]), float(coef[1]), float(np.linalg.norm(A @ coef - br))


def a_eps(b: float, eps: float) -> float:
    if not eps > 0:
        raise ValueError("eps must be positive")
    return 1.0 / math.sqrt(b * b + 1.0 / eps)


def a_eps_at(S: SurfaceSpec, cs: ContactStructure, p, eps: float) -> float:
    return a_eps(PointContext(S, cs, p, 2).b.value, eps)


@dataclass
class OperatorParts:
    """Derivatives of f along the adapted frame and the frame invariants at one point."""

    F1f: float
    F1F1f: float
    F2f: float
    F2F2f: float
    b: float
    F1b: float
    h: float
    eta: float

    def delta_eps(self, eps: float) -> float:
        a2 = eps / (eps * self.b ** 2 + 1.0)
        q = -eps * self.b * self.F1b / (eps * self.b ** 2 + 1.0)
        return (self.F1F1f + a2 * self.F2F2f + (self.b - q) * self.F1f
                - a2 * (self.b * self.h + self.eta) * self.F2f)

    def delta0(self) -> float:
        return self.F1F1f + self.b * self.F1f


def operator_parts(S: SurfaceSpec, cs: ContactStructure, f: ScalarField, p) -> OperatorParts:
    ctx = PointContext(S, cs, p, 2)
    fj = f.jet(ctx.p, 2)
    F1f = ctx.apply(ctx.F1, fj)
    F2f = ctx.apply(ctx.F2, fj)
    h, eta = ctx.h_eta()
    return OperatorParts(
        F1f.value, ctx.apply(ctx.F1, F1f).value, F2f.value, ctx.apply(ctx.F2, F2f).value,
        ctx.b.value, ctx.apply(ctx.F1, ctx.b).value, h.value, eta.value,
    )


def delta_eps(S: SurfaceSpec, cs: ContactStructure, f: ScalarField, p, eps: float) -> float:
    if not eps > 0:
        raise ValueError("eps must be positive")
    return operator_parts(S, cs, f, p).delta_eps(eps)


def delta0(S: SurfaceSpec, cs: ContactStructure, f: ScalarField, p) -> float:
    return operator_parts(S, cs, f, p).delta0()


@dataclass
class OperatorSample:
    point: tuple
    epsilon: float
    delta_eps_f: float
    delta0_f: float

    @property
    def error(self) -> float:
        return abs(self.delta_eps_f - self.delta0_f)


@dataclass
class ConvergenceReport:
    samples: list[OperatorSample]
    eps_list: list[float]
    max_error_per_eps: list[float]
    empirical_order: list[float]
    max_F2F2f: float

    def summary(self) -> dict:
        return {
            "eps": self.eps_list,
            "max_error_per_eps": self.max_error_per_eps,
            "empirical_order": self.empirical_order,
            "max_abs_F2F2f": self.max_F2F2f,
        }


def convergence_study(S: SurfaceSpec, cs: ContactStructure, f: ScalarField, points,
                      eps_list: Sequence[float], min_criterion: float = 0.05) -> ConvergenceReport:
    """Errors |Delta_eps f - Delta_0 f| per point and eps, with empirical orders.

    The order between consecutive eps values is log(err ratio) / log(eps ratio),
    which is log2 of the ratio for halvings.
    """
    from .foliation import criterion

    eps_list = [float(e) for e in eps_list]
    if any(e2 >= e1 for e1, e2 in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be decreasing")
    samples = []
    errs = np.zeros((len(points), len(eps_list)))
    f22 = 0.0
    for i, p in enumerate(points):
        if criterion(S, cs, p) < min_criterion:
            raise ValueError(f"sample point {tuple(p)} too close to the characteristic set")
        parts = operator_parts(S, cs, f, p)
        d0 = parts.delta0()
        f22 = max(f22, abs(parts.F2F2f))
        for j, eps in enumerate(eps_list):
            de = parts.delta_eps(eps)
            samples.append(OperatorSample(tuple(map(float, p)), eps, de, d0))
            errs[i, j] = abs(de - d0)
    mx = errs.max(axis=0)
    orders = [float(math.log(mx[j] / mx[j + 1]) / math.log(eps_list[j] / eps_list[j + 1]))
              for j in range(len(eps_list) - 1)]
    return ConvergenceReport(samples, eps_list, [float(v) for v in mx], orders, f22)


# curvature --------------------------------------------------------------------

def gauss_K(S: SurfaceSpec, cs: ContactStructure, p, eps: float) -> float:
    """Gaussian curvature of the surface in the eps-metric, from the adapted frame."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    ctx = PointContext(S, cs, p, 3)
    b = ctx.b
    a = J.reciprocal(J.sqrt(b * b + 1.0 / eps))
    F1b = ctx.apply(ctx.F1, b)
    q = -eps * b.truncate(1) * F1b * J.reciprocal(eps * b.truncate(1) * b.truncate(1) + 1.0)
    h, eta = ctx.h_eta()
    b1 = -(b.truncate(1) * h) - eta
    ab1 = a.truncate(1) * b1
    drift = q - b.truncate(1)
    return (ctx.apply(ctx.F1, drift).value - a.value * ctx.apply(ctx.F2, ab1).value
            - ab1.value ** 2 - drift.value ** 2)


def gauss_K0(S: SurfaceSpec, cs: ContactStructure, p) -> float:
    ctx = PointContext(S, cs, p, 2)
    return -ctx.apply(ctx.F1, ctx.b).value - ctx.b.value ** 2


def drift_along_leaf(S: SurfaceSpec, cs: ContactStructure, p, s: float) -> float:
    """b at the point reached by flowing hatX for signed arc length s."""
    direction = 1 if s > 0 else -1
    tr = trace_leaf(S, cs, p, direction, step=abs(s) / 8.0,
                    stop=StopRule(max_length=abs(s), proximity=0.0))
    return float(tr.b[-1])


def hatX_of_b(S: SurfaceSpec, cs: ContactStructure, p, h: float = 1e-2) -> float:
    """hatX(b) by central differences along the traced leaf with one Richardson level."""
    def central(step):
        return (drift_along_leaf(S, cs, p, step) - drift_along_leaf(S, cs, p, -step)) / (2 * step)

    return (4.0 * central(h / 2) - central(h)) / 3.0


def riccati_residual(S: SurfaceSpec, cs: ContactStructure, p, h: float = 1e-2) -> float:
    """hatX(b) + b^2 + K0, with hatX(b) measured along the leaf and K0 from jets.

    The difference step is ``h`` in units of the local length scale 1/|b|
    (capped at ``h``), since b varies like 1/s near characteristic points.
    """
    ctx = PointContext(S, cs, p, 2)
    b = ctx.b.value
    step = h / max(1.0, abs(b))
    return hatX_of_b(S, cs, p, step) + b * b + gauss_K0(S, cs, p)


@dataclass
class CurvatureSample:
    point: tuple
    K_eps: dict
    K0: float
    riccati_residual: float


def curvature_sweep(S: SurfaceSpec, cs: ContactStructure, points, eps_list: Sequence[float],
                    h: float = 1e-2) -> list[CurvatureSample]:
    out = []
    for p in points:
        K = {float(e): gauss_K(S, cs, p, e) for e in eps_list}
        out.append(CurvatureSample(tuple(map(float, p)), K, gauss_K0(S, cs, p),
                                   riccati_residual(S, cs, p, h)))
    return out


# test functions ----------------------------------------------------------------

def bump(center: Sequence[float], radius: float) -> ScalarField:
    """exp(1 - 1/(1 - d^2/R^2)) in ambient Euclidean distance d, zero for d >= R."""
    c = np.asarray(center, dtype=float)
    R2 = float(radius) ** 2

    def jet_fn(p, order):
        xs = J.variables(p, order)
        t = sum((x - ci) * (x - ci) for x, ci in zip(xs, c)) * (1.0 / R2)
        if t.value >= 1.0:
            return J.Jet.constant(0.0, len(p), order)
        return J.exp(1.0 - J.reciprocal(1.0 - t))

    return ScalarField(jet_fn, "bump")


def empirical_orders(eps_list: Sequence[float], errors: Sequence[float]) -> list[float]:
    return [math.log(errors[i] / errors[i + 1]) / math.log(eps_list[i] / eps_list[i + 1])
            for i in range(len(errors) - 1)]


def default_eps_list() -> list[float]:
    return [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]


def sample_in_support(S: SurfaceSpec, cs: ContactStructure, center, radius: float, n: int,
                      rng: np.random.Generator, shrink: float = 0.9,
                      min_criterion: float = 0.05, max_tries: int = 100_000) -> list[np.ndarray]:
    """Surface points within ``shrink * radius`` of ``center``, away from the characteristic set."""
    from .foliation import ProjectionError, criterion, project_to_surface

    c = np.asarray(center, dtype=float)
    r = shrink * float(radius)
    out = []
    for _ in range(max_tries):
        if len(out) == n:
            return out
        q = c + rng.uniform(-r, r, c.size)
        try:
            p = project_to_surface(S, q)
        except ProjectionError:
            continue
        if S.contains(p) and np.linalg.norm(p - c) < r and criterion(S, cs, p) >= min_criterion:
            out.append(p)
    raise ValueError(f"found only {len(out)} of {n} admissible points near {tuple(c)}")
