"""Characteristic points, the unit foliation field, the drift and leaf tracing."""
from __future__ import annotations

import csv
import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import jets as J
from .geometry import (
    Chart,
    ChartError,
    ChartPoint,
    ContactStructure,
    ScalarField,
    directional,
)

CRITERION_TOL = 1e-12
PROXIMITY_TOL = 1e-4
DEGENERACY_TOL = 1e-9
ON_SURFACE_TOL = 1e-8


class CharacteristicPointError(ValueError):
    """Raised when a quantity undefined on the characteristic set is requested there."""


class NotCharacteristicError(ValueError):
    pass


class ProjectionError(RuntimeError):
    pass


class InsufficientSamplesError(ValueError):
    pass


@dataclass
class SurfaceSpec:
    """Zero set of ``u`` inside a chart.

    ``domain`` optionally restricts the part of the zero set in use (one sheet,
    one hemisphere); it receives ambient coordinates and returns a bool.
    """

    u: ScalarField
    chart: Chart = Chart.HEISENBERG
    name: str = "surface"
    domain: Optional[Callable[[np.ndarray], bool]] = None

    def contains(self, p) -> bool:
        return True if self.domain is None else bool(self.domain(np.asarray(p, dtype=float)))

    def scaled(self, g: ScalarField, name: str = "") -> "SurfaceSpec":
        return SurfaceSpec(self.u * g, self.chart, name or self.name, self.domain)

    def negated(self) -> "SurfaceSpec":
        return SurfaceSpec(-self.u, self.chart, self.name + "(-u)", self.domain)


def _p(p) -> np.ndarray:
    return p.array if isinstance(p, ChartPoint) else np.asarray(p, dtype=float)


def horizontal_jets(S: SurfaceSpec, cs: ContactStructure, p, order: int) -> tuple:
    """Jets of (X1u, X2u, X0u) of the given order at p."""
    p = _p(p)
    g = S.u.jet(p, order + 1)
    X1, X2, X0 = cs.frame_jets(p, order)
    return directional(X1, g), directional(X2, g), directional(X0, g)


def horizontal_gradient(S: SurfaceSpec, cs: ContactStructure, p) -> tuple[float, float, float]:
    p = _p(p)
    grad = S.u.jet(p, 1).gradient
    X1, X2, X0 = cs.frame_at(p)
    return float(X1 @ grad), float(X2 @ grad), float(X0 @ grad)


def criterion(S: SurfaceSpec, cs: ContactStructure, p) -> float:
    """Norm of the horizontal gradient; zero exactly on the characteristic set."""
    a, b, _ = horizontal_gradient(S, cs, p)
    return math.hypot(a, b)


# characteristic points -------------------------------------------------------

def _char_system(S: SurfaceSpec, cs: ContactStructure, p: np.ndarray):
    g = S.u.jet(p, 2)
    X1, X2, _ = cs.frame_jets(p, 1)
    rows = [g.truncate(1), directional(X1, g), directional(X2, g)]
    nrm = cs.normal_jets(p, 1)
    if nrm is not None:
        c = cs.chart.constraint(J.variables(p, 1))
        rows.append(c)
    F = np.array([r.value for r in rows])
    Jm = np.array([r.gradient for r in rows])
    return F, Jm


def default_seeds(S: SurfaceSpec, box: float = 2.0, n: int = 11) -> list[np.ndarray]:
    """Regular lattice in a box; for constrained charts the lattice is projected."""
    grid = np.linspace(-box, box, n)
    seeds = []
    if S.chart is Chart.HEISENBERG:
        for q in itertools.product(grid, repeat=3):
            seeds.append(np.array(q))
        return seeds
    grid4 = np.linspace(-box, box, max(5, n // 2 + 1))
    for q in itertools.product(grid4, repeat=4):
        q = np.array(q)
        c = S.chart.constraint(list(q))
        nrm = np.array(S.chart.normal(list(q)))
        nn = nrm @ nrm
        if nn < 1e-12:
            continue
        seeds.append(q - c * nrm / nn)
    return seeds


@dataclass
class CharSearchResult:
    points: list[ChartPoint]
    failures: list[tuple[tuple[float, ...], str]] = field(default_factory=list)


def find_characteristic_points(S: SurfaceSpec, cs: ContactStructure,
                               seeds: Optional[Sequence] = None, *, keep: int = 64,
                               max_iter: int = 50, tol: float = 1e-10,
                               dedup: float = 1e-6, report_failures: bool = False):
    """Newton search for zeros of (u, X1u, X2u) restricted to the chart.

    Seeds are ranked by residual and only the best ``keep`` are iterated.
    Returns a list of distinct ChartPoints (or a CharSearchResult carrying
    per-seed failures when ``report_failures`` is set).
    """
    seeds = default_seeds(S) if seeds is None else [_p(s) for s in seeds]
    ranked = []
    for q in seeds:
        try:
            F, _ = _char_system(S, cs, q)
        except (J.DomainError, ZeroDivisionError):
            continue
        if S.contains(q):
            ranked.append((float(np.linalg.norm(F)), q))
    ranked.sort(key=lambda t: t[0])
    found: list[np.ndarray] = []
    failures = []
    for _, q in ranked[:keep]:
        x = q.copy()
        ok = False
        try:
            for _ in range(max_iter):
                F, Jm = _char_system(S, cs, x)
                if np.max(np.abs(F)) <= tol:
                    ok = True
                    break
                step = np.linalg.lstsq(Jm, -F, rcond=None)[0]
                x = x + step
                if not np.all(np.isfinite(x)):
                    break
            if not ok:
                F, _ = _char_system(S, cs, x)
                ok = bool(np.max(np.abs(F)) <= tol)
        except (J.DomainError, ZeroDivisionError) as exc:
            failures.append((tuple(q), str(exc)))
            continue
        if not ok:
            failures.append((tuple(q), "no convergence"))
            continue
        if not S.contains(x):
            continue
        if all(np.linalg.norm(x - y) > dedup for y in found):
            found.append(x)
    found.sort(key=lambda v: tuple(np.round(v, 8)))
    pts = [ChartPoint(tuple(float(t) for t in x), S.chart, S.chart.residual(x)) for x in found]
    if report_failures:
        return CharSearchResult(pts, failures)
    return pts


# normalisation and classification ---------------------------------------------

def normalize_u(S: SurfaceSpec, cs: ContactStructure, x) -> SurfaceSpec:
    """Surface defined by u / X0u, so that X0 of the new defining function is 1 on S."""
    x0 = _p(x)
    _, _, r = horizontal_gradient(S, cs, x0)
    if abs(r) <= 1e-12:
        raise ZeroDivisionError("X0u vanishes at the normalisation point")

    def jet_fn(p, order):
        g = S.u.jet(p, order + 1)
        X0 = cs.X0.jets(p, order)
        return g.truncate(order) / directional(X0, g)

    return SurfaceSpec(ScalarField(jet_fn, f"({S.u.label})/X0u"), S.chart, S.name, S.domain)


def second_horizontal(S: SurfaceSpec, cs: ContactStructure, x) -> np.ndarray:
    """Matrix M[i, j] = Xi Xj u at x (i, j over X1, X2)."""
    p = _p(x)
    g = S.u.jet(p, 2)
    X1, X2, _ = cs.frame_jets(p, 1)
    first = [directional(X1, g), directional(X2, g)]
    frame0 = [[c.truncate(0) for c in X1], [c.truncate(0) for c in X2]]
    return np.array([[directional(frame0[i], first[j]).value for j in range(2)] for i in range(2)])


def hessJ(S_normalized: SurfaceSpec, cs: ContactStructure, x) -> np.ndarray:
    """(Hess u)J with rows (X1X2u, -X1X1u) and (X2X2u, -X2X1u)."""
    M = second_horizontal(S_normalized, cs, x)
    return np.array([[M[0, 1], -M[0, 0]], [M[1, 1], -M[1, 0]]])


class PointClass(str, enum.Enum):
    ELLIPTIC_FOCUS = "EllipticFocus"
    ELLIPTIC_NODE = "EllipticNode"
    HYPERBOLIC_SADDLE = "HyperbolicSaddle"
    DEGENERATE = "Degenerate"


@dataclass
class CharacteristicPointReport:
    location: ChartPoint
    hessJ: np.ndarray
    det: float
    trace: float
    eigenvalues: tuple[complex, complex]
    cls: PointClass
    normalized: bool = True
    eigenvectors: Optional[np.ndarray] = None

    @property
    def is_elliptic(self) -> bool:
        return self.cls in (PointClass.ELLIPTIC_FOCUS, PointClass.ELLIPTIC_NODE)

    def to_dict(self) -> dict:
        out = {
            "location": list(self.location.coords),
            "chart": self.location.chart.value,
            "hessJ": self.hessJ.tolist(),
            "det": self.det,
            "trace": self.trace,
            "eigenvalues": [[float(np.real(e)), float(np.imag(e))] for e in self.eigenvalues],
            "class": self.cls.value,
            "normalized": self.normalized,
        }
        if self.eigenvectors is not None:
            out["eigenvectors"] = np.real(self.eigenvectors).T.tolist()
        return out


def classify(S: SurfaceSpec, cs: ContactStructure, x, tol: float = DEGENERACY_TOL,
             criterion_tol: float = 1e-8) -> CharacteristicPointReport:
    p = _p(x)
    a1, a2, _ = horizontal_gradient(S, cs, p)
    if math.hypot(a1, a2) > criterion_tol or abs(S.u(p)) > criterion_tol:
        raise NotCharacteristicError(f"{tuple(p)} is not a characteristic point")
    H = hessJ(normalize_u(S, cs, p), cs, p)
    det = float(np.linalg.det(H))
    tr = float(np.trace(H))
    ev, vecs = np.linalg.eig(H)
    disc = tr * tr - 4.0 * det
    if abs(det) <= tol:
        cls = PointClass.DEGENERATE
    elif det < 0:
        cls = PointClass.HYPERBOLIC_SADDLE
    elif disc < -tol:
        cls = PointClass.ELLIPTIC_FOCUS
    else:
        cls = PointClass.ELLIPTIC_NODE
    order = np.argsort(np.real(ev))
    ev, vecs = ev[order], vecs[:, order]
    focus = cls is PointClass.ELLIPTIC_FOCUS
    eigvecs = None if focus else np.real(vecs)
    if not focus:
        ev = np.real(ev)
    loc = x if isinstance(x, ChartPoint) else ChartPoint(tuple(float(t) for t in p), S.chart,
                                                         S.chart.residual(p))
    return CharacteristicPointReport(loc, H, det, tr, (complex(ev[0]), complex(ev[1])), cls,
                                     True, eigvecs)


def approach_exponent(report: CharacteristicPointReport, direction: Optional[int] = None) -> float:
    """Exponent governing b ~ 1/(lambda s): 1/2 for a focus, else the chosen eigenvalue."""
    if report.cls is PointClass.ELLIPTIC_FOCUS:
        return 0.5
    if report.cls is PointClass.DEGENERATE:
        raise ValueError("degenerate point has no approach exponent")
    if direction is None:
        raise ValueError("real eigenvalues need an eigendirection index")
    return float(np.real(report.eigenvalues[direction]))


# foliation field and drift -----------------------------------------------------

def hatX(S: SurfaceSpec, cs: ContactStructure, p) -> np.ndarray:
    p = _p(p)
    a1, a2, _ = horizontal_gradient(S, cs, p)
    n = math.hypot(a1, a2)
    if n <= CRITERION_TOL:
        raise CharacteristicPointError(f"foliation field undefined at {tuple(p)}")
    X1, X2, _ = cs.frame_at(p)
    return (a2 * X1 - a1 * X2) / n


def g_norm(cs: ContactStructure, p, v) -> float:
    """Norm of a horizontal vector in the sub-Riemannian metric."""
    c = cs.decompose(v, p)
    return math.hypot(c[0], c[1])


def drift_b(S: SurfaceSpec, cs: ContactStructure, p, check: bool = True) -> float:
    """X0u / |(X1u, X2u)|, with a tangency check of b J(hatX) - X0."""
    p = _p(p)
    grad = S.u.jet(p, 1).gradient
    X1, X2, X0 = cs.frame_at(p)
    a1, a2, a0 = float(X1 @ grad), float(X2 @ grad), float(X0 @ grad)
    n = math.hypot(a1, a2)
    if n <= CRITERION_TOL:
        raise CharacteristicPointError(f"drift undefined at {tuple(p)}")
    b = a0 / n
    if check:
        v = b * (a1 * X1 + a2 * X2) / n - X0
        res = float(v @ grad)
        if abs(res) > 1e-8 * max(1.0, abs(a0), abs(b) * n):
            raise ArithmeticError(f"b J(hatX) - X0 not tangent at {tuple(p)}: {res:.3e}")
    return b


# leaf tracing ---------------------------------------------------------------

class Termination(str, enum.Enum):
    MAX_LENGTH = "MaxLength"
    NEAR_CHARACTERISTIC_POINT = "NearCharacteristicPoint"
    DOMAIN_EXIT = "DomainExit"


@dataclass
class StopRule:
    max_length: float = 1.0
    proximity: float = PROXIMITY_TOL
    box: Optional[float] = None
    max_steps: int = 200_000


@dataclass
class LeafTrace:
    s: np.ndarray
    points: np.ndarray
    b: np.ndarray
    hatX: np.ndarray
    direction: int
    terminated_by: Termination
    chart: Chart = Chart.HEISENBERG

    def __len__(self) -> int:
        return len(self.s)

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def header(self) -> list[str]:
        d = self.points.shape[1]
        return ["s"] + [f"coord{i}" for i in range(d)] + ["b"] + [f"hatX{i}" for i in range(d)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# direction={self.direction} terminated_by={self.terminated_by.value} "
                     f"chart={self.chart.value}\n")
            w = csv.writer(fh)
            w.writerow(self.header())
            for i in range(len(self.s)):
                row = [self.s[i], *self.points[i], self.b[i], *self.hatX[i]]
                w.writerow(["%.17g" % v for v in row])

    @classmethod
    def from_csv(cls, path) -> "LeafTrace":
        with open(path, newline="") as fh:
            meta_line = fh.readline()
            meta = dict(kv.split("=") for kv in meta_line.lstrip("# ").split())
            rows = list(csv.reader(fh))
        header, data = rows[0], np.array(rows[1:], dtype=float)
        d = (len(header) - 2) // 2
        return cls(data[:, 0], data[:, 1:1 + d], data[:, 1 + d], data[:, 2 + d:],
                   int(meta["direction"]), Termination(meta["terminated_by"]),
                   Chart(meta["chart"]))


def project_to_surface(S: SurfaceSpec, p: np.ndarray, tol: float = 1e-10,
                       max_iter: int = 20) -> np.ndarray:
    """Minimum-norm Newton projection onto {u = 0} intersected with the chart."""
    x = np.array(p, dtype=float)
    for _ in range(max_iter):
        g = S.u.jet(x, 1)
        F = [g.value]
        rows = [g.gradient]
        if S.chart is not Chart.HEISENBERG:
            F.append(J.value(S.chart.constraint(list(x))))
            rows.append(np.array(S.chart.normal(list(x)), dtype=float))
        F = np.array(F)
        if np.max(np.abs(F)) <= tol:
            return x
        A = np.array(rows)
        x = x - A.T @ np.linalg.solve(A @ A.T, F)
    g = S.u.jet(x, 0).value
    c = abs(J.value(S.chart.constraint(list(x))))
    if max(abs(g), c) <= tol:
        return x
    raise ProjectionError(f"projection onto surface failed near {tuple(p)}")


def _angle(v: np.ndarray, w: np.ndarray) -> float:
    c = float(v @ w) / (np.linalg.norm(v) * np.linalg.norm(w))
    return math.acos(max(-1.0, min(1.0, c)))


def trace_leaf(S: SurfaceSpec, cs: ContactStructure, start, direction: int = 1,
               step: float = 1e-3, stop: Optional[StopRule] = None,
               max_turn: float = 0.05, min_step: float = 1e-10) -> LeafTrace:
    """Integrate direction * hatX from ``start`` with RK4 and surface projection.

    The nominal step is fixed; it is halved near the characteristic set when a
    step turns the field by more than ``max_turn`` radians or shrinks the
    horizontal gradient by more than 30 percent, and regrows when that stops.
    """
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    stop = stop or StopRule()
    x = project_to_surface(S, _p(start))
    if criterion(S, cs, x) <= CRITERION_TOL:
        raise CharacteristicPointError("cannot start a leaf on the characteristic set")

    def field(q):
        return direction * hatX(S, cs, q)

    s_list, p_list, b_list, v_list = [0.0], [x.copy()], [drift_b(S, cs, x)], [hatX(S, cs, x)]
    s = 0.0
    h = step
    crit = criterion(S, cs, x)
    term = Termination.MAX_LENGTH
    for _ in range(stop.max_steps):
        if crit <= stop.proximity:
            term = Termination.NEAR_CHARACTERISTIC_POINT
            break
        if s >= stop.max_length - 1e-15:
            term = Termination.MAX_LENGTH
            break
        hh = min(h, stop.max_length - s)
        while True:
            try:
                k1 = field(x)
                k2 = field(x + 0.5 * hh * k1)
                k3 = field(x + 0.5 * hh * k2)
                k4 = field(x + hh * k3)
                y = x + hh / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                drift = abs(S.u(y))
                if drift > 1e-6:
                    raise ArithmeticError("surface drift")
                y = project_to_surface(S, y)
                crit_y = criterion(S, cs, y)
                turned = _angle(k1, field(y)) if crit_y > CRITERION_TOL else math.pi
                ok = turned <= max_turn and crit_y >= 0.7 * crit
            except (CharacteristicPointError, ArithmeticError, ProjectionError, J.DomainError):
                ok = False
            if ok:
                break
            hh *= 0.5
            if hh < min_step:
                raise ProjectionError(f"step size underflow at s={s:.6g}")
        if not S.contains(y) or (stop.box is not None and np.max(np.abs(y)) > stop.box):
            term = Termination.DOMAIN_EXIT
            break
        x, s, crit = y, s + hh, crit_y
        s_list.append(s)
        p_list.append(x.copy())
        b_list.append(drift_b(S, cs, x))
        v_list.append(hatX(S, cs, x))
        if hh < h and turned < 0.25 * max_turn and crit_y >= 0.9 * crit:
            h = min(step, 2.0 * hh)
        else:
            h = hh
    return LeafTrace(np.array(s_list), np.array(p_list), np.array(b_list), np.array(v_list),
                     direction, term, S.chart)


# expansion near characteristic points --------------------------------------------

@dataclass
class ExpansionFit:
    lam: float
    intercept: float
    slope: float
    residual_distance: float
    n_samples: int


def residual_distance(trace: LeafTrace, window: float = 0.02) -> float:
    """Remaining arc length from the trace end to the characteristic point.

    1/|b| vanishes linearly at the characteristic point; a quadratic fit of it
    against arc length over the final ``window`` is extrapolated to zero.
    """
    s_end = trace.s[-1]
    mask = trace.s >= s_end - window
    if mask.sum() < 5:
        raise InsufficientSamplesError("too few samples near the trace end")
    t = s_end - trace.s[mask]
    y = 1.0 / np.abs(trace.b[mask])
    c2, c1, c0 = np.polyfit(t, y, 2)
    roots = np.roots([c2, -c1, c0]) if abs(c2) > 0 else np.array([c0 / c1])
    # distance d >= 0 past the end solves c0 - c1 d + c2 d^2 = 0 in t = -d
    real = [float(np.real(r)) for r in roots if abs(np.imag(r)) < 1e-12 and np.real(r) >= -1e-12]
    if not real:
        return max(c0 / c1, 0.0) if c1 > 0 else 0.0
    return max(min(real), 0.0)


def expansion_check(report: CharacteristicPointReport, trace: LeafTrace,
                    window: tuple[float, float] = (0.01, 0.1)) -> ExpansionFit:
    """Fit b*s = c0 + c1 s over distances s in ``window`` from the characteristic point.

    ``s`` is arc length measured away from the point and ``b`` is expressed in
    that orientation; the fitted exponent is 1/c0.
    """
    if trace.terminated_by is not Termination.NEAR_CHARACTERISTIC_POINT:
        raise InsufficientSamplesError("trace did not reach a characteristic point")
    end_gap = float(np.linalg.norm(trace.end - report.location.array))
    if end_gap > 1e-2:
        raise InsufficientSamplesError("trace ends away from the reported point")
    d_end = residual_distance(trace)
    sigma = trace.s[-1] - trace.s + d_end
    b_sigma = -trace.direction * trace.b
    mask = (sigma >= window[0]) & (sigma <= window[1])
    if mask.sum() < 10:
        raise InsufficientSamplesError(f"only {int(mask.sum())} samples inside the fit window")
    c1, c0 = np.polyfit(sigma[mask], b_sigma[mask] * sigma[mask], 1)
    return ExpansionFit(1.0 / c0, float(c0), float(c1), d_end, int(mask.sum()))
