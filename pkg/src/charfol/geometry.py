"""Charts, jet-evaluable fields, Lie brackets and contact structures."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import jets as J
from .jets import Jet, Number


class GeometryError(RuntimeError):
    pass


class ChartError(GeometryError):
    pass


class SingularFrameError(GeometryError):
    pass


class ContactStructureError(GeometryError):
    pass


FRAME_DET_TOL = 1e-10
CONSTRAINT_TOL = 1e-10


class Chart(enum.Enum):
    HEISENBERG = "heisenberg"
    SU2 = "su2"
    SL2 = "sl2"

    @property
    def dim(self) -> int:
        return 3 if self is Chart.HEISENBERG else 4

    @property
    def names(self) -> tuple[str, ...]:
        return ("x", "y", "z") if self is Chart.HEISENBERG else ("x", "y", "z", "w")

    def constraint(self, xs: Sequence[Number]) -> Number:
        """Defining function of the ambient constraint set (0 on the group)."""
        if self is Chart.HEISENBERG:
            return 0.0
        x, y, z, w = xs
        if self is Chart.SU2:
            return x * x + y * y + z * z + w * w - 1.0
        return x * w - y * z - 1.0

    def residual(self, p: Sequence[float]) -> float:
        return abs(J.value(self.constraint([float(t) for t in p])))

    def normal(self, xs: Sequence[Number]) -> Optional[list[Number]]:
        """Gradient of the constraint, or None for unconstrained charts."""
        if self is Chart.HEISENBERG:
            return None
        x, y, z, w = xs
        if self is Chart.SU2:
            return [2.0 * x, 2.0 * y, 2.0 * z, 2.0 * w]
        return [w, -z, -y, x]


@dataclass(frozen=True)
class ChartPoint:
    coords: tuple[float, ...]
    chart: Chart
    constraint_residual: float = 0.0

    @classmethod
    def make(cls, coords: Sequence[float], chart: Chart = Chart.HEISENBERG,
             tol: float = CONSTRAINT_TOL) -> "ChartPoint":
        coords = tuple(float(c) for c in coords)
        if len(coords) != chart.dim:
            raise ChartError(f"{chart.value} points need {chart.dim} coordinates")
        res = chart.residual(coords)
        if res > tol:
            raise ChartError(f"point {coords} is off the {chart.value} constraint ({res:.3e})")
        return cls(coords, chart, res)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords)

    def __len__(self) -> int:
        return len(self.coords)

    def __iter__(self):
        return iter(self.coords)

    def __getitem__(self, i):
        return self.coords[i]


def _coords(p) -> np.ndarray:
    if isinstance(p, ChartPoint):
        return p.array
    return np.asarray(p, dtype=float)


class ScalarField:
    """A scalar field whose Taylor jet can be produced at any point.

    ``jet_fn(p, order)`` returns a :class:`Jet` of the requested order.  Use
    :meth:`from_expression` to wrap a plain function of the coordinates.
    """

    def __init__(self, jet_fn: Callable[[np.ndarray, int], Jet], label: str = ""):
        self._jet_fn = jet_fn
        self.label = label

    @classmethod
    def from_expression(cls, fn: Callable[[list[Jet]], Number], label: str = "") -> "ScalarField":
        def jet_fn(p, order):
            xs = J.variables(p, order)
            return J.as_jet(fn(xs), len(p), order)

        field = cls(jet_fn, label)
        field.expression = fn
        return field

    def jet(self, p, order: int = 2) -> Jet:
        return self._jet_fn(_coords(p), order)

    def __call__(self, p) -> float:
        return self.jet(p, 0).value

    def __mul__(self, other: "ScalarField") -> "ScalarField":
        if isinstance(other, ScalarField):
            return ScalarField(lambda p, o: self._jet_fn(p, o) * other._jet_fn(p, o),
                               f"({self.label})*({other.label})")
        c = float(other)
        return ScalarField(lambda p, o: self._jet_fn(p, o) * c, f"{c}*({self.label})")

    __rmul__ = __mul__

    def __truediv__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(lambda p, o: self._jet_fn(p, o) / other._jet_fn(p, o),
                           f"({self.label})/({other.label})")

    def __neg__(self) -> "ScalarField":
        return ScalarField(lambda p, o: -self._jet_fn(p, o), f"-({self.label})")


def eval_jet(f: ScalarField, p: ChartPoint, order: int = 2) -> Jet:
    """Value, gradient and Hessian of ``f`` at ``p``; raises DomainError off-domain."""
    if isinstance(p, ChartPoint) and p.chart.residual(p.coords) > CONSTRAINT_TOL:
        raise ChartError("point violates its chart constraint")
    return f.jet(p, order)


class VectorField:
    """Vector field given by coefficient functions on the ambient chart."""

    def __init__(self, coeff_fn: Callable[[list[Number]], Sequence[Number]], label: str = ""):
        self.coeff_fn = coeff_fn
        self.label = label

    def jets(self, p, order: int) -> list[Jet]:
        p = _coords(p)
        xs = J.variables(p, order)
        return [J.as_jet(c, len(p), order) for c in self.coeff_fn(xs)]

    def at(self, p) -> np.ndarray:
        return np.array([J.value(c) for c in self.coeff_fn([float(t) for t in _coords(p)])])

    def scaled(self, c: float, label: str = "") -> "VectorField":
        return VectorField(lambda xs: [c * v for v in self.coeff_fn(xs)], label or f"{c}*{self.label}")


def directional(V: Sequence[Number], g: Jet) -> Jet:
    """Jet of V(g) = sum_k V^k d_k g; the result has order g.order - 1."""
    out = None
    for k, vk in enumerate(V):
        term = g.partial(k) * vk
        out = term if out is None else out + term
    return out


def bracket_jets(V: Sequence[Jet], W: Sequence[Jet]) -> list[Jet]:
    """Coefficient jets of [V, W]; one order lower than the inputs."""
    dim = len(V)
    out = []
    for k in range(dim):
        acc = None
        for j in range(dim):
            t = V[j] * W[k].partial(j) - W[j] * V[k].partial(j)
            acc = t if acc is None else acc + t
        out.append(acc)
    return out


def lie_derivative(V: VectorField, f: ScalarField) -> ScalarField:
    """The scalar field V f, composable to any depth."""

    def jet_fn(p, order):
        g = f.jet(p, order + 1)
        return directional(V.jets(p, order), g)

    return ScalarField(jet_fn, f"{V.label}({f.label})")


def apply_field(V: VectorField, f: ScalarField, p) -> float:
    return lie_derivative(V, f)(p)


def lie_bracket(V: VectorField, W: VectorField, p) -> np.ndarray:
    Vj, Wj = V.jets(p, 1), W.jets(p, 1)
    return np.array([c.value for c in bracket_jets(Vj, Wj)])


def solve(A: list[list[Number]], rhs: list[Number]) -> list[Number]:
    """Gaussian elimination with partial pivoting on values; works on jets too."""
    n = len(rhs)
    M = [list(row) + [r] for row, r in zip(A, rhs)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(J.value(M[r][col])))
        if abs(J.value(M[piv][col])) == 0.0:
            raise SingularFrameError("singular linear system")
        M[col], M[piv] = M[piv], M[col]
        inv = J.reciprocal(M[col][col])
        for r in range(col + 1, n):
            f = M[r][col] * inv
            if J.value(f) == 0.0 and not isinstance(f, Jet):
                continue
            for c in range(col, n + 1):
                M[r][c] = M[r][c] - f * M[col][c]
    x: list[Number] = [0.0] * n
    for r in range(n - 1, -1, -1):
        acc = M[r][n]
        for c in range(r + 1, n):
            acc = acc - M[r][c] * x[c]
        x[r] = acc * J.reciprocal(M[r][r])
    return x


def frame_coordinates(v: Sequence[Number], frame: Sequence[Sequence[Number]],
                      normal: Optional[Sequence[Number]] = None) -> list[Number]:
    """Coefficients (a1, a2, a0) with v = a1 X1 + a2 X2 + a0 X0.

    In four-dimensional ambient charts the constraint gradient is appended as
    a fourth column; its coefficient (zero for tangent ``v``) is dropped.
    """
    cols = list(frame) + ([list(normal)] if normal is not None else [])
    n = len(cols)
    A = [[cols[j][i] for j in range(n)] for i in range(n)]
    return solve(A, list(v))[:3]


def frame_determinant(frame: Sequence[np.ndarray], normal: Optional[np.ndarray] = None) -> float:
    cols = [np.asarray(f, dtype=float) for f in frame]
    if normal is not None:
        nrm = np.asarray(normal, dtype=float)
        cols.append(nrm / np.linalg.norm(nrm))
    return float(np.linalg.det(np.column_stack(cols)))


class OneForm:
    def __init__(self, coeff_fn: Callable[[list[Number]], Sequence[Number]], label: str = "omega"):
        self.coeff_fn = coeff_fn
        self.label = label

    def jets(self, p, order: int) -> list[Jet]:
        p = _coords(p)
        xs = J.variables(p, order)
        return [J.as_jet(c, len(p), order) for c in self.coeff_fn(xs)]

    def at(self, p) -> np.ndarray:
        return np.array([J.value(c) for c in self.coeff_fn([float(t) for t in _coords(p)])])


@dataclass(frozen=True)
class StructureFunctions:
    c12_1: float
    c12_2: float
    c01_1: float
    c01_2: float
    c02_1: float
    c02_2: float
    reeb_component: float = 1.0


@dataclass(frozen=True)
class ContactStructure:
    X1: VectorField
    X2: VectorField
    X0: VectorField
    chart: Chart = Chart.HEISENBERG
    omega: Optional[OneForm] = None

    @property
    def dim(self) -> int:
        return self.chart.dim

    def frame_at(self, p) -> list[np.ndarray]:
        return [self.X1.at(p), self.X2.at(p), self.X0.at(p)]

    def frame_jets(self, p, order: int) -> list[list[Jet]]:
        return [self.X1.jets(p, order), self.X2.jets(p, order), self.X0.jets(p, order)]

    def normal_jets(self, p, order: int) -> Optional[list[Jet]]:
        p = _coords(p)
        nrm = self.chart.normal(J.variables(p, order))
        if nrm is None:
            return None
        return [J.as_jet(c, len(p), order) for c in nrm]

    def normal_at(self, p) -> Optional[np.ndarray]:
        nrm = self.chart.normal([float(t) for t in _coords(p)])
        return None if nrm is None else np.array(nrm, dtype=float)

    def decompose(self, v, p) -> np.ndarray:
        frame = self.frame_at(p)
        normal = self.normal_at(p)
        if abs(frame_determinant(frame, normal)) < FRAME_DET_TOL:
            raise SingularFrameError(f"frame degenerate at {tuple(_coords(p))}")
        return np.array(frame_coordinates(list(map(float, v)), frame, normal), dtype=float)

    def validate(self, points: Sequence, tol: float = 1e-8) -> None:
        """Check the contact normalisation at sample points; raise on failure."""
        for p in points:
            c = structure_functions(self, p)
            if abs(c.reeb_component - 1.0) > tol:
                raise ContactStructureError(f"omega([X1,X2]) = {c.reeb_component} at {p}")
            for lbl, W in (("X1", self.X1), ("X2", self.X2)):
                v = self.decompose(lie_bracket(self.X0, W, p), p)
                if abs(v[2]) > tol:
                    raise ContactStructureError(f"[X0,{lbl}] leaves the distribution at {p}")
            if self.omega is not None:
                res = omega_residuals(self, p)
                if max(abs(r) for r in res.values()) > tol:
                    raise ContactStructureError(f"contact form normalisation fails at {p}: {res}")
            if self.chart is not Chart.HEISENBERG:
                nrm = self.normal_at(p)
                for V in (self.X1, self.X2, self.X0):
                    if abs(float(nrm @ V.at(p))) > 1e-9:
                        raise ContactStructureError(f"{V.label} not tangent to the chart at {p}")


def omega_residuals(cs: ContactStructure, p) -> dict[str, float]:
    """omega(X0) - 1, d omega(X0, Xi) and omega([X1,X2]) - 1 at p."""
    om = cs.omega.jets(p, 1)
    X = cs.frame_at(p)
    vals = np.array([c.value for c in om])
    d_om = np.array([[om[j].gradient[i] - om[i].gradient[j] for j in range(cs.dim)]
                     for i in range(cs.dim)])
    return {
        "omega_X0": float(vals @ X[2]) - 1.0,
        "domega_X0_X1": float(X[2] @ d_om @ X[0]),
        "domega_X0_X2": float(X[2] @ d_om @ X[1]),
        "omega_X1X2": float(vals @ lie_bracket(cs.X1, cs.X2, p)) - 1.0,
        "omega_X0X1": float(vals @ lie_bracket(cs.X0, cs.X1, p)),
        "omega_X0X2": float(vals @ lie_bracket(cs.X0, cs.X2, p)),
    }


def structure_functions(cs: ContactStructure, p) -> StructureFunctions:
    b12 = cs.decompose(lie_bracket(cs.X1, cs.X2, p), p)
    b01 = cs.decompose(lie_bracket(cs.X0, cs.X1, p), p)
    b02 = cs.decompose(lie_bracket(cs.X0, cs.X2, p), p)
    if abs(b12[2] - 1.0) > 1e-6:
        raise ContactStructureError(f"X0-component of [X1,X2] is {b12[2]}, expected 1")
    vals = (b12[0], b12[1], b01[0], b01[1], b02[0], b02[1], b12[2])
    return StructureFunctions(*(float(v) for v in vals))


def project_to_chart(p_raw: Sequence[float], chart: Chart, max_iter: int = 20,
                     tol: float = 1e-12) -> ChartPoint:
    """Minimum-norm Newton projection onto the chart constraint."""
    x = np.array(p_raw, dtype=float)
    if chart is Chart.HEISENBERG:
        return ChartPoint(tuple(float(t) for t in x), chart, 0.0)
    for _ in range(max_iter):
        c = J.value(chart.constraint(list(x)))
        if abs(c) <= tol:
            return ChartPoint(tuple(float(t) for t in x), chart, abs(c))
        g = np.array(chart.normal(list(x)), dtype=float)
        x = x - c * g / (g @ g)
    c = abs(J.value(chart.constraint(list(x))))
    if c <= tol:
        return ChartPoint(tuple(float(t) for t in x), chart, c)
    raise ChartError(f"projection onto {chart.value} did not converge (residual {c:.3e})")
