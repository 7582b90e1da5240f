"""Model contact manifolds and the surfaces studied on them, with closed-form oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .foliation import SurfaceSpec, horizontal_gradient
from .geometry import (
    Chart,
    ChartPoint,
    ContactStructure,
    OneForm,
    ScalarField,
    VectorField,
    project_to_chart,
)


@dataclass(frozen=True)
class ModelSpace:
    name: str
    kappa: float
    k: float
    structure: ContactStructure

    @property
    def chart(self) -> Chart:
        return self.structure.chart

    @property
    def identity(self) -> np.ndarray:
        if self.chart is Chart.HEISENBERG:
            return np.zeros(3)
        if self.chart is Chart.SU2:
            return np.array([0.0, 0.0, 1.0, 0.0])
        return np.array([1.0, 0.0, 0.0, 1.0])

    def random_points(self, n: int, rng: np.random.Generator, scale: float = 1.0) -> list[np.ndarray]:
        """Random points of the group (ambient coordinates)."""
        out = []
        while len(out) < n:
            if self.chart is Chart.HEISENBERG:
                out.append(rng.uniform(-scale, scale, 3))
            elif self.chart is Chart.SU2:
                v = rng.normal(size=4)
                out.append(v / np.linalg.norm(v))
            else:
                x, y, z = rng.uniform(-scale, scale, 3) + np.array([1.5, 0.0, 0.0])
                out.append(np.array([x, y, z, (1.0 + y * z) / x]))
        return out


def _check_k(k: float) -> float:
    k = float(k)
    if not k > 0:
        raise ValueError("k must be positive")
    return k


def heisenberg() -> ModelSpace:
    X1 = VectorField(lambda p: [1.0, 0.0, -0.5 * p[1]], "X1")
    X2 = VectorField(lambda p: [0.0, 1.0, 0.5 * p[0]], "X2")
    X0 = VectorField(lambda p: [0.0, 0.0, 1.0], "X0")
    omega = OneForm(lambda p: [0.5 * p[1], -0.5 * p[0], 1.0])
    return ModelSpace("heisenberg", 0.0, 0.0, ContactStructure(X1, X2, X0, Chart.HEISENBERG, omega))


def su2(k: float = 1.0) -> ModelSpace:
    """Unit quaternions with X1 = 2kU1, X2 = 2kU2 and Reeb field -4k^2 U3."""
    k = _check_k(k)
    X1 = VectorField(lambda p: [k * p[2], -k * p[3], -k * p[0], k * p[1]], "X1")
    X2 = VectorField(lambda p: [k * p[3], k * p[2], -k * p[1], -k * p[0]], "X2")
    s = 2.0 * k * k
    X0 = VectorField(lambda p: [s * p[1], -s * p[0], s * p[3], -s * p[2]], "X0")
    t = 1.0 / s
    omega = OneForm(lambda p: [t * p[1], -t * p[0], t * p[3], -t * p[2]])
    return ModelSpace("su2", 4.0 * k * k, k, ContactStructure(X1, X2, X0, Chart.SU2, omega))


def sl2(k: float = 1.0) -> ModelSpace:
    """Matrices [[x, y], [z, w]] of determinant one with X1 = 2kX, X2 = 2kY, X0 = 4k^2 K."""
    k = _check_k(k)
    X1 = VectorField(lambda p: [k * p[0], -k * p[1], k * p[2], -k * p[3]], "X1")
    X2 = VectorField(lambda p: [k * p[1], k * p[0], k * p[3], k * p[2]], "X2")
    s = 2.0 * k * k
    X0 = VectorField(lambda p: [-s * p[1], s * p[0], -s * p[3], s * p[2]], "X0")
    t = 1.0 / (4.0 * k * k)
    omega = OneForm(lambda p: [t * p[2], t * p[3], -t * p[0], -t * p[1]])
    return ModelSpace("sl2", -4.0 * k * k, k, ContactStructure(X1, X2, X0, Chart.SL2, omega))


def model_space(kappa: float, k: float = 1.0) -> ModelSpace:
    if kappa == 0:
        return heisenberg()
    return su2(k) if kappa > 0 else sl2(k)


@dataclass
class NamedSurface:
    name: str
    model: ModelSpace
    spec: SurfaceSpec
    params: dict
    closed_form_b: Optional[Callable[[np.ndarray], float]] = None
    char_points_expected: list = field(default_factory=list)
    sheet: Optional[Callable[[np.ndarray], bool]] = None

    @property
    def cs(self) -> ContactStructure:
        return self.model.structure

    def on_sheet(self) -> SurfaceSpec:
        """The surface restricted to its working sheet (if any)."""
        if self.sheet is None:
            return self.spec
        return SurfaceSpec(self.spec.u, self.spec.chart, self.spec.name, self.sheet)


def _surface(fn, chart: Chart, name: str) -> SurfaceSpec:
    return SurfaceSpec(ScalarField.from_expression(fn, name), chart, name)


def paraboloid(a: float) -> NamedSurface:
    a = float(a)
    if a < 0:
        raise ValueError("paraboloid needs a >= 0")
    spec = _surface(lambda p: p[2] - a * (p[0] * p[0] + p[1] * p[1]), Chart.HEISENBERG, "paraboloid")

    def b(p):
        return 2.0 / (math.hypot(p[0], p[1]) * math.sqrt(1.0 + 16.0 * a * a))

    return NamedSurface("paraboloid", heisenberg(), spec, {"a": a}, b, [np.zeros(3)])


def spheroid(a: float, c: float) -> NamedSurface:
    a, c = float(a), float(c)
    if not (a > 0 and c > 0):
        raise ValueError("spheroid needs a, c > 0")
    spec = _surface(lambda p: p[0] * p[0] + p[1] * p[1] + p[2] * p[2] / (c * c) - a * a,
                    Chart.HEISENBERG, "spheroid")

    def b(p):
        th = spheroid_polar_angle(a, c, p)
        return 2.0 / math.tan(th) / math.sqrt(4.0 * c * c + a * a * math.cos(th) ** 2)

    poles = [np.array([0.0, 0.0, -a * c]), np.array([0.0, 0.0, a * c])]
    return NamedSurface("spheroid", heisenberg(), spec, {"a": a, "c": c}, b, poles)


def spheroid_polar_angle(a: float, c: float, p) -> float:
    return math.atan2(math.hypot(p[0], p[1]) / a, p[2] / (a * c))


def hyperbolic_paraboloid(a: float) -> NamedSurface:
    a = float(a)
    if not a > 0:
        raise ValueError("hyperbolic paraboloid needs a > 0")
    spec = _surface(lambda p: p[2] - a * p[0] * p[1], Chart.HEISENBERG, "hyperbolic-paraboloid")

    def b(p):
        """Closed form along the two coordinate axes only."""
        if abs(p[1]) <= 1e-12 and abs(p[0]) > 0:
            return 1.0 / (abs(0.5 - a) * abs(p[0]))
        if abs(p[0]) <= 1e-12 and abs(p[1]) > 0:
            return 1.0 / ((0.5 + a) * abs(p[1]))
        return float("nan")

    return NamedSurface("hyperbolic-paraboloid", heisenberg(), spec, {"a": a}, b, [np.zeros(3)])


def su2_sphere(k: float = 1.0) -> NamedSurface:
    model = su2(k)
    spec = _surface(lambda p: p[3], Chart.SU2, "su2-sphere")

    def b(p):
        return -2.0 * model.k * p[2] / math.hypot(p[0], p[1])

    pts = [np.array([0.0, 0.0, -1.0, 0.0]), np.array([0.0, 0.0, 1.0, 0.0])]
    return NamedSurface("su2-sphere", model, spec, {"k": model.k}, b, pts)


def _upper_sheet(p) -> bool:
    return p[0] + p[3] > 0


def sl2_plane(k: float = 1.0) -> NamedSurface:
    model = sl2(k)
    spec = _surface(lambda p: p[1] - p[2], Chart.SL2, "sl2-plane")

    def b(p):
        h = 0.5 * (p[0] + p[3])
        return 2.0 * model.k * h / math.sqrt(h * h - 1.0)

    pts = [np.array([-1.0, 0.0, 0.0, -1.0]), np.array([1.0, 0.0, 0.0, 1.0])]
    return NamedSurface("sl2-plane", model, spec, {"k": model.k}, b, pts, _upper_sheet)


def exp_surface_drift(kappa: float, k: float, r):
    """Drift of the canonical exp-surface in geodesic distance r."""
    r = np.asarray(r, dtype=float)
    if kappa == 0:
        return 2.0 / r
    if kappa > 0:
        return 2.0 * k / np.tan(k * r)
    return 2.0 * k / np.tanh(k * r)


def canonical_exp_surface(kappa: float, k: float = 1.0) -> NamedSurface:
    """Surface swept by horizontal geodesics from the identity.

    The defining function is oriented so the foliation field points away from
    the identity; the leaf through angle theta is r -> exp(r A_theta).
    """
    model = model_space(kappa, k)
    if model.chart is Chart.HEISENBERG:
        spec = _surface(lambda p: p[2], Chart.HEISENBERG, "exp-surface")
        sheet = None
    elif model.chart is Chart.SU2:
        spec = _surface(lambda p: -p[3], Chart.SU2, "exp-surface")
        sheet = None
    else:
        spec = _surface(lambda p: p[1] - p[2], Chart.SL2, "exp-surface")
        sheet = _upper_sheet

    def b(p):
        return float(exp_surface_drift(model.kappa, model.k, geodesic_radius(model, p)))

    return NamedSurface("exp-surface", model, spec, {"kappa": model.kappa, "k": model.k}, b,
                        [model.identity], sheet)


def geodesic_radius(model: ModelSpace, p) -> float:
    """Distance from the identity along the exp-surface ruling through p."""
    if model.chart is Chart.HEISENBERG:
        return math.hypot(p[0], p[1])
    if model.chart is Chart.SU2:
        return math.atan2(math.hypot(p[0], p[1]), p[2]) / model.k
    return math.acosh(0.5 * (p[0] + p[3])) / model.k


# group exponential along horizontal directions ----------------------------------

def _horizontal_direction(cs: ContactStructure, theta: float):
    c, s = math.cos(theta), math.sin(theta)

    def f(p):
        return c * cs.X1.at(p) + s * cs.X2.at(p)

    def df(p):
        X1, X2 = cs.X1.jets(p, 1), cs.X2.jets(p, 1)
        return np.array([c * a.gradient + s * b.gradient for a, b in zip(X1, X2)])

    def dtheta(p):
        return -s * cs.X1.at(p) + c * cs.X2.at(p)

    return f, df, dtheta


def exp_curve(model: ModelSpace, theta: float, r_values, n_per_unit: int = 2000):
    """Points exp(r A_theta) and their theta-derivatives for each r in ``r_values``.

    RK4 on the joint system (P, dP/dtheta) with the variational equation, and
    projection of P onto the group after each step.
    """
    r_values = np.asarray(r_values, dtype=float)
    f, df, dth = _horizontal_direction(model.structure, theta)

    def rhs(state):
        P, V = state[: len(state) // 2], state[len(state) // 2:]
        return np.concatenate([f(P), df(P) @ V + dth(P)])

    dim = model.chart.dim
    state = np.concatenate([model.identity, np.zeros(dim)])
    r = 0.0
    out_P, out_V = [], []
    for target in np.sort(r_values):
        n = max(1, int(math.ceil((target - r) * n_per_unit)))
        h = (target - r) / n
        for _ in range(n):
            k1 = rhs(state)
            k2 = rhs(state + 0.5 * h * k1)
            k3 = rhs(state + 0.5 * h * k2)
            k4 = rhs(state + h * k3)
            state = state + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if model.chart is not Chart.HEISENBERG:
                state[:dim] = project_to_chart(state[:dim], model.chart).array
        r = target
        out_P.append(state[:dim].copy())
        out_V.append(state[dim:].copy())
    order = np.argsort(np.argsort(r_values))
    return np.array(out_P)[order], np.array(out_V)[order]


def _annihilator(vectors: list[np.ndarray]) -> np.ndarray:
    """Covector vanishing on the given dim-1 vectors (generalised cross product)."""
    M = np.array(vectors)
    dim = M.shape[1]
    out = np.empty(dim)
    for i in range(dim):
        minor = np.delete(M, i, axis=1)
        out[i] = (-1) ** i * np.linalg.det(minor)
    return out


def exp_surface_drift_measured(model: ModelSpace, theta: float, r_values) -> np.ndarray:
    """Drift of the swept surface from its tangent planes, independent of any defining function.

    The conormal annihilates dP/dr, dP/dtheta (and the group constraint normal);
    it is oriented so the resulting unit foliation field is +dP/dr.
    """
    P, V = exp_curve(model, theta, r_values)
    cs = model.structure
    f, _, _ = _horizontal_direction(cs, theta)
    out = []
    for p, v in zip(P, V):
        vecs = [f(p), v]
        nrm = cs.normal_at(p)
        if nrm is not None:
            vecs.append(nrm)
        nu = _annihilator(vecs)
        X1, X2, X0 = cs.frame_at(p)
        a1, a2, a0 = nu @ X1, nu @ X2, nu @ X0
        n = math.hypot(a1, a2)
        hat = (a2 * X1 - a1 * X2) / n
        if hat @ f(p) < 0:
            a0 = -a0
        out.append(a0 / n)
    return np.array(out)


# paraboloid, spheroid and axis oracles -----------------------------------------

def spiral_leaf(a: float, psi: float, s: float) -> ChartPoint:
    """Point at arc length s from the origin on the spiral leaf with phase psi."""
    if not s > 0:
        raise ValueError("arc length must be positive")
    q = math.sqrt(1.0 + 16.0 * a * a)
    r = s / q
    th = 4.0 * a * math.log(r) + psi
    return ChartPoint((r * math.cos(th), r * math.sin(th), a * r * r), Chart.HEISENBERG)


def spheroid_arclength(a: float, c: float, theta: float) -> float:
    """Leaf arc length from the north pole to polar angle theta."""
    val, _ = integrate.quad(lambda t: math.sqrt(4.0 * c * c + a * a * math.cos(t) ** 2),
                            0.0, theta, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def spheroid_angle_at(a: float, c: float, s: float) -> float:
    """Inverse of :func:`spheroid_arclength`."""
    total = spheroid_arclength(a, c, math.pi)
    if not 0.0 <= s <= total:
        raise ValueError("arc length outside the leaf")
    return optimize.brentq(lambda t: spheroid_arclength(a, c, t) - s, 0.0, math.pi,
                           xtol=1e-15, rtol=1e-15)


def loxodrome_angle(a: float, c: float, theta) -> np.ndarray:
    """cos of the angle between hatX and the azimuthal direction at polar angle theta."""
    theta = np.asarray(theta, dtype=float)
    return -2.0 * c / np.sqrt(a * a * np.cos(theta) ** 2 + a * a * c * c * np.sin(theta) ** 2
                              + 4.0 * c * c)


def azimuthal_bearing(sf: NamedSurface, p) -> float:
    """Euclidean cos of the angle between hatX and the azimuthal direction at a spheroid point."""
    from .foliation import hatX

    d_phi = np.array([-p[1], p[0], 0.0])
    v = hatX(sf.spec, sf.cs, p)
    return float(v @ d_phi / (np.linalg.norm(v) * np.linalg.norm(d_phi)))


def axis_bessel_orders(a: float) -> tuple[float, float]:
    """Bessel orders of the drift along the y- and x-axes of the hyperbolic paraboloid."""
    a = float(a)
    if a <= 0 or abs(a - 0.5) < 1e-12:
        raise ValueError("axis orders need a > 0 and a != 1/2")
    return 1.0 + 2.0 / (1.0 + 2.0 * a), 1.0 + 2.0 / (1.0 - 2.0 * a)


# registry --------------------------------------------------------------------

REGISTRY = {
    "paraboloid": {
        "builder": paraboloid,
        "params": {"a": {"type": "number", "minimum": 0}},
        "defaults": {"a": 1.0},
        "description": "z = a(x^2 + y^2) in the Heisenberg group",
    },
    "spheroid": {
        "builder": spheroid,
        "params": {"a": {"type": "number", "exclusiveMinimum": 0},
                   "c": {"type": "number", "exclusiveMinimum": 0}},
        "defaults": {"a": 1.0, "c": 1.0},
        "description": "x^2 + y^2 + z^2/c^2 = a^2 in the Heisenberg group",
    },
    "hyperbolic-paraboloid": {
        "builder": hyperbolic_paraboloid,
        "params": {"a": {"type": "number", "exclusiveMinimum": 0}},
        "defaults": {"a": 1.0},
        "description": "z = a x y in the Heisenberg group",
    },
    "su2-sphere": {
        "builder": su2_sphere,
        "params": {"k": {"type": "number", "exclusiveMinimum": 0}},
        "defaults": {"k": 1.0},
        "description": "w = 0 in SU(2)",
    },
    "sl2-plane": {
        "builder": sl2_plane,
        "params": {"k": {"type": "number", "exclusiveMinimum": 0}},
        "defaults": {"k": 1.0},
        "description": "y = z in SL(2,R)",
    },
    "exp-surface": {
        "builder": canonical_exp_surface,
        "params": {"kappa": {"type": "number"}, "k": {"type": "number", "exclusiveMinimum": 0}},
        "defaults": {"kappa": 0.0, "k": 1.0},
        "description": "surface of horizontal geodesics from the identity",
    },
}


def build(name: str, **params) -> NamedSurface:
    if name not in REGISTRY:
        raise KeyError(f"unknown surface {name!r}")
    entry = REGISTRY[name]
    kwargs = dict(entry["defaults"])
    kwargs.update({k: v for k, v in params.items() if k in entry["params"] and v is not None})
    return entry["builder"](**kwargs)


def registry_json() -> list[dict]:
    return [{"name": n, "description": e["description"],
             "params": {"type": "object", "properties": e["params"], "additionalProperties": False},
             "defaults": e["defaults"]} for n, e in REGISTRY.items()]


def check_expected_points(sf: NamedSurface, tol: float = 1e-10) -> float:
    """Largest criterion value over the expected characteristic points."""
    worst = 0.0
    for p in sf.char_points_expected:
        a1, a2, _ = horizontal_gradient(sf.spec, sf.cs, p)
        worst = max(worst, math.hypot(a1, a2), abs(sf.spec.u(p)))
    return worst


# leaf starts -------------------------------------------------------------------

def point_near(sf: NamedSurface, radius: float, phi: float, index: int = -1) -> np.ndarray:
    """Surface point at distance ``radius`` (in adapted coordinates) from a characteristic point."""
    from .foliation import project_to_surface

    c = np.asarray(sf.char_points_expected[index], dtype=float)
    chart = sf.spec.chart
    if chart is Chart.HEISENBERG:
        if sf.name == "spheroid":
            a, cc = sf.params["a"], sf.params["c"]
            th = radius if c[2] > 0 else math.pi - radius
            return np.array([a * math.sin(th) * math.cos(phi), a * math.sin(th) * math.sin(phi),
                             a * cc * math.cos(th)])
        if sf.name == "paraboloid":
            return spiral_leaf(sf.params["a"], phi,
                               radius * math.sqrt(1 + 16 * sf.params["a"] ** 2)).array
        q = c + radius * np.array([math.cos(phi), math.sin(phi), 0.0])
        return project_to_surface(sf.spec, q)
    k = sf.model.k
    if chart is Chart.SU2:
        t = k * radius
        sgn = 1.0 if c[2] > 0 else -1.0
        return np.array([math.sin(t) * math.cos(phi), math.sin(t) * math.sin(phi), sgn * math.cos(t), 0.0])
    t = k * radius
    ch, sh = math.cosh(t), math.sinh(t)
    sgn = 1.0 if c[0] > 0 else -1.0
    return sgn * np.array([ch + sh * math.cos(phi), sh * math.sin(phi), sh * math.sin(phi),
                           ch - sh * math.cos(phi)])


AXIS_LEAVES = {"x-axis": (1.0, 0.0), "y-axis": (0.0, 1.0), "-x-axis": (-1.0, 0.0), "-y-axis": (0.0, -1.0)}


def approach_leaf(sf: NamedSurface, leaf: str = "default", length: float = 1.0):
    """(start point, target characteristic point) of a leaf running into the point.

    Axis leaves are available on the hyperbolic paraboloid and start exactly
    on the axis, since separatrices do not tolerate rounding off it; every
    other surface uses the leaf through the point at angle zero.
    """
    target = np.asarray(sf.char_points_expected[-1], dtype=float)
    if leaf in AXIS_LEAVES:
        if sf.name != "hyperbolic-paraboloid":
            raise ValueError(f"leaf {leaf!r} only exists on the hyperbolic paraboloid")
        dx, dy = AXIS_LEAVES[leaf]
        return target + length * np.array([dx, dy, 0.0]), target
    if leaf not in ("default", "spiral", "meridian", "radial"):
        raise ValueError(f"unknown leaf {leaf!r}")
    return point_near(sf, length, 0.0), target


def direction_towards(sf: NamedSurface, start, target) -> int:
    """Orientation of hatX at ``start`` that decreases the distance to ``target``."""
    from .foliation import hatX

    v = hatX(sf.spec, sf.cs, start)
    return 1 if float(v @ (np.asarray(target) - np.asarray(start))) > 0 else -1
