"""The leafwise diffusion with generator (d^2/ds^2 + b d/ds)/2: simulation and boundary tests."""
from __future__ import annotations

import enum
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, interpolate, stats

from . import kernels
from .foliation import CharacteristicPointReport, LeafTrace, PointClass, residual_distance


class Boundary(str, enum.Enum):
    CHARACTERISTIC_POINT = "CharacteristicPoint"
    DOMAIN_EDGE = "DomainEdge"


class DriftKind(enum.IntEnum):
    BESSEL = kernels.DRIFT_BESSEL
    COT = kernels.DRIFT_COT
    COTH = kernels.DRIFT_COTH
    TABLE = kernels.DRIFT_TABLE
    CALLABLE = -1


class SimulationError(RuntimeError):
    pass


@dataclass
class LeafDiffusionSpec:
    """Drift b(s) on an interval of the leaf, s = arc length from the lower end.

    Compiled drifts are described by ``kind`` and ``params``; ``table`` holds
    a piecewise cubic of s*b(s).  ``b_of_s`` is always available for quadrature.
    """

    b_of_s: Callable[[float], float]
    domain: tuple[float, float]
    boundary_labels: tuple[Boundary, Boundary] = (Boundary.CHARACTERISTIC_POINT, Boundary.DOMAIN_EDGE)
    kind: DriftKind = DriftKind.CALLABLE
    params: tuple[float, ...] = ()
    table: Optional[interpolate.PPoly] = None
    label: str = ""
    approach_direction: Optional[np.ndarray] = None

    def __post_init__(self):
        lo, hi = self.domain
        if not lo < hi:
            raise ValueError("empty domain")

    def b_array(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.table is not None:
            return self.table(s) / s
        return np.array([self.b_of_s(x) for x in s])

    def describe(self) -> dict:
        return {
            "label": self.label,
            "kind": self.kind.name,
            "params": list(self.params),
            "domain": [self.domain[0], self.domain[1] if math.isfinite(self.domain[1]) else None],
            "boundaries": [b.value for b in self.boundary_labels],
        }


class ProcessKind(str, enum.Enum):
    BESSEL3 = "bessel3"
    LEGENDRE3 = "legendre3"
    HYPERBOLIC_BESSEL3 = "hyperbolic-bessel3"
    BESSEL_ORDER = "bessel"


def reference_process(kind, k: float = 1.0, order: Optional[float] = None) -> LeafDiffusionSpec:
    """Closed-form model drifts: 2/s, 2k cot(ks), 2k coth(ks) or (order - 1)/s."""
    kind = ProcessKind(kind)
    cp, edge = Boundary.CHARACTERISTIC_POINT, Boundary.DOMAIN_EDGE
    if kind in (ProcessKind.LEGENDRE3, ProcessKind.HYPERBOLIC_BESSEL3) and not k > 0:
        raise ValueError("k must be positive")
    if kind is ProcessKind.BESSEL3:
        return LeafDiffusionSpec(lambda s: 2.0 / s, (0.0, math.inf), (cp, edge), DriftKind.BESSEL,
                                 (2.0, 0.0), label="bessel3")
    if kind is ProcessKind.LEGENDRE3:
        return LeafDiffusionSpec(lambda s: 2.0 * k / math.tan(k * s), (0.0, math.pi / k), (cp, cp),
                                 DriftKind.COT, (2.0, k), label=f"legendre3(k={k})")
    if kind is ProcessKind.HYPERBOLIC_BESSEL3:
        return LeafDiffusionSpec(lambda s: 2.0 * k / math.tanh(k * s), (0.0, math.inf), (cp, edge),
                                 DriftKind.COTH, (2.0, k), label=f"hyperbolic-bessel3(k={k})")
    if order is None:
        raise ValueError("Bessel order required")
    c = float(order) - 1.0
    return LeafDiffusionSpec(lambda s: c / s, (0.0, math.inf), (cp, edge), DriftKind.BESSEL,
                             (c, 0.0), label=f"bessel(order={order})")


def weighted_laplacian_h(kappa: float, k: float, r: float, check: bool = True) -> float:
    """h(r) with 2h'/h equal to the model drift: sin(kr), r or sinh(kr)."""
    if kappa == 0:
        h, dh, b = r, 1.0, 2.0 / r
    elif kappa > 0:
        h, dh, b = math.sin(k * r), k * math.cos(k * r), 2.0 * k / math.tan(k * r)
    else:
        h, dh, b = math.sinh(k * r), k * math.cosh(k * r), 2.0 * k / math.tanh(k * r)
    if check and abs(2.0 * dh / h - b) > 1e-10 * max(1.0, abs(b)):
        raise ArithmeticError("2h'/h does not reproduce the drift")
    return h


def spec_from_trace(trace: LeafTrace, label: str = "leaf") -> LeafDiffusionSpec:
    """Drift along a trace that ends at a characteristic point.

    Arc length is measured from the characteristic point (including the
    extrapolated gap left by the tracer) and b is re-oriented to that
    direction.  s*b(s) is interpolated with a monotone cubic, which stays
    bounded at the singular end.
    """
    d_end = residual_distance(trace)
    sigma = trace.s[-1] - trace.s + d_end
    b = -trace.direction * trace.b
    order = np.argsort(sigma)
    sigma, b = sigma[order], b[order]
    keep = np.concatenate([[True], np.diff(sigma) > 1e-14])
    sigma, b = sigma[keep], b[keep]
    pchip = interpolate.PchipInterpolator(sigma, sigma * b, extrapolate=True)
    table = interpolate.PPoly(pchip.c, pchip.x, extrapolate=True)

    def b_of_s(s):
        return float(table(s)) / s

    approach = trace.points[-1] - trace.points[-2]
    approach = approach / np.linalg.norm(approach)
    return LeafDiffusionSpec(b_of_s, (0.0, float(sigma[-1])),
                             (Boundary.CHARACTERISTIC_POINT, Boundary.DOMAIN_EDGE),
                             DriftKind.TABLE, (), table, label, approach)


# simulation ---------------------------------------------------------------------

@dataclass
class SimConfig:
    dt: float = 1e-4
    t_max: float = 10.0
    n_paths: int = 10_000
    kill_radius: float = 1e-3
    master_seed: int = 0
    s0: float = 1.0
    chunk: int = 256

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if not self.kill_radius > 0:
            raise ValueError("kill_radius must be positive")
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValueError("master_seed must fit in 64 unsigned bits")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class PathStats:
    n_paths: int
    n_hit: int
    n_hit_lower: int
    n_hit_upper: int
    n_survived: int
    n_exited_far: int
    n_aborted: int
    hit_fraction: float
    wilson_ci_95: tuple[float, float]
    mean_hit_time: Optional[float]
    wall_time_s: float = 0.0
    hit_times: Optional[np.ndarray] = field(default=None, repr=False)

    def endpoint_ci(self, side: str) -> tuple[float, float]:
        k = self.n_hit_lower if side == "lower" else self.n_hit_upper
        return wilson_interval(k, self.n_paths)

    def report(self, spec: LeafDiffusionSpec, cfg: SimConfig, include_wall_time: bool = True) -> dict:
        out = {
            "spec": spec.describe(),
            "config": {k: v for k, v in asdict(cfg).items()},
            "n_paths": self.n_paths,
            "n_hit": self.n_hit,
            "n_hit_lower": self.n_hit_lower,
            "n_hit_upper": self.n_hit_upper,
            "n_survived": self.n_survived,
            "n_exited_far": self.n_exited_far,
            "n_aborted": self.n_aborted,
            "hit_fraction": self.hit_fraction,
            "wilson_ci_95": list(self.wilson_ci_95),
            "mean_hit_time": self.mean_hit_time,
        }
        if include_wall_time:
            out["wall_time_s"] = self.wall_time_s
        return out


def thread_count(requested: Optional[int] = None) -> int:
    cap = os.environ.get("FOLIATION_THREADS")
    n = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def _python_paths(spec, cfg, first, count, lo_abs, hi_abs, status, times):
    """Same scheme and random stream as the compiled kernel, for arbitrary drifts."""
    sq = math.sqrt(cfg.dt)
    lo_kill = spec.boundary_labels[0] is Boundary.CHARACTERISTIC_POINT
    hi_kill = spec.boundary_labels[1] is Boundary.CHARACTERISTIC_POINT
    for idx in range(first, first + count):
        state = kernels.path_key(np.uint64(cfg.master_seed), idx)
        s, st, t_hit, spare = cfg.s0, kernels.STATUS_SURVIVED, math.nan, None
        for n in range(cfg.n_steps):
            try:
                bv = float(spec.b_of_s(s))
            except (ArithmeticError, ValueError):
                bv = math.nan
            if not math.isfinite(bv):
                st, t_hit = kernels.STATUS_ABORTED, n * cfg.dt
                break
            if spare is None:
                state, w = kernels.splitmix_next(np.uint64(state))
                z, spare = kernels.normal_pair(np.uint64(w))
            else:
                z, spare = spare, None
            s = s + 0.5 * bv * cfg.dt + sq * z
            if s <= lo_abs:
                st = kernels.STATUS_HIT_LOWER if lo_kill else kernels.STATUS_EXITED
                t_hit = (n + 1) * cfg.dt
                break
            if s >= hi_abs:
                st = kernels.STATUS_HIT_UPPER if hi_kill else kernels.STATUS_EXITED
                t_hit = (n + 1) * cfg.dt
                break
        status[idx], times[idx] = st, t_hit


def absorption_levels(spec: LeafDiffusionSpec, cfg: SimConfig) -> tuple[float, float]:
    lo, hi = spec.domain
    cp = Boundary.CHARACTERISTIC_POINT
    lo_abs = lo + cfg.kill_radius if spec.boundary_labels[0] is cp else lo
    hi_abs = hi - cfg.kill_radius if spec.boundary_labels[1] is cp else hi
    return lo_abs, hi_abs


def simulate(spec: LeafDiffusionSpec, cfg: SimConfig, threads: Optional[int] = None,
             keep_times: bool = False, abort_limit: float = 1e-3) -> PathStats:
    """Euler-Maruyama paths of dS = b(S)/2 dt + dW with absorption near the endpoints.

    Path i draws from a random stream keyed by (master_seed, i) only, and
    paths are processed in fixed chunks, so results do not depend on the
    number of worker threads.
    """
    lo_abs, hi_abs = absorption_levels(spec, cfg)
    if not lo_abs < cfg.s0 < hi_abs:
        raise ValueError(f"start {cfg.s0} outside the open domain ({lo_abs}, {hi_abs})")
    n = cfg.n_paths
    status = np.full(n, -1, dtype=np.int8)
    times = np.full(n, np.nan)
    chunks = [(i, min(cfg.chunk, n - i)) for i in range(0, n, cfg.chunk)]
    cp = Boundary.CHARACTERISTIC_POINT
    lo_kill = spec.boundary_labels[0] is cp
    hi_kill = spec.boundary_labels[1] is cp
    seed = np.uint64(cfg.master_seed)

    if spec.kind is DriftKind.CALLABLE:
        def work(ch):
            _python_paths(spec, cfg, ch[0], ch[1], lo_abs, hi_abs, status, times)
    else:
        params = np.array(list(spec.params) + [0.0, 0.0], dtype=float)[:2]
        if spec.kind is DriftKind.TABLE:
            tx = np.ascontiguousarray(spec.table.x, dtype=float)
            tc = np.ascontiguousarray(spec.table.c, dtype=float)
        else:
            tx, tc = np.zeros(2), np.zeros((4, 1))

        def work(ch):
            kernels.run_paths(ch[0], ch[1], seed, float(cfg.s0), float(cfg.dt), cfg.n_steps,
                              float(lo_abs), float(hi_abs), lo_kill, hi_kill, int(spec.kind),
                              params, tx, tc, status, times)

    t0 = time.perf_counter()
    nt = thread_count(threads)
    if nt == 1:
        for ch in chunks:
            work(ch)
    else:
        with ThreadPoolExecutor(max_workers=nt) as pool:
            list(pool.map(work, chunks))
    wall = time.perf_counter() - t0

    counts = np.bincount(status.astype(np.int64), minlength=5)
    n_lo, n_hi = int(counts[kernels.STATUS_HIT_LOWER]), int(counts[kernels.STATUS_HIT_UPPER])
    n_abort = int(counts[kernels.STATUS_ABORTED])
    if n_abort > abort_limit * n:
        raise SimulationError(f"{n_abort} of {n} paths aborted on drift evaluation")
    n_hit = n_lo + n_hi
    hit_mask = (status == kernels.STATUS_HIT_LOWER) | (status == kernels.STATUS_HIT_UPPER)
    mean_t = float(np.sum(times[hit_mask]) / n_hit) if n_hit else None
    return PathStats(n, n_hit, n_lo, n_hi, int(counts[kernels.STATUS_SURVIVED]),
                     int(counts[kernels.STATUS_EXITED]), n_abort, n_hit / n,
                     wilson_interval(n_hit, n), mean_t, wall,
                     times.copy() if keep_times else None)


# boundary classification ---------------------------------------------------------

class Verdict(str, enum.Enum):
    INACCESSIBLE = "Inaccessible"
    ACCESSIBLE = "Accessible"


class Method(str, enum.Enum):
    EIGENVALUE_RULE = "EigenvalueRule"
    NUMERIC_INTEGRAL = "NumericIntegral"
    BOTH = "Both"


DIVERGENT = math.inf


@dataclass
class BoundaryReport:
    verdict: Verdict
    lambda_exponent: Optional[float]
    integral_rho: float
    integral_test2: Optional[float]
    method: Method
    fitted_exponent_q: float
    fit_r2: float
    eigen_verdict: Optional[Verdict] = None
    numeric_verdict: Optional[Verdict] = None
    flags: list[str] = field(default_factory=list)
    integral_drift: Optional[float] = None

    @property
    def disagreement(self) -> bool:
        return "Disagreement" in self.flags

    def to_dict(self) -> dict:
        def num(x):
            if x is None:
                return None
            return "divergent" if math.isinf(x) else float(x)

        return {
            "verdict": self.verdict.value,
            "lambda_exponent": self.lambda_exponent,
            "integral_rho": num(self.integral_rho),
            "integral_test2": num(self.integral_test2),
            "integral_drift": num(self.integral_drift),
            "method": self.method.value,
            "fitted_exponent_q": self.fitted_exponent_q,
            "fit_r2": self.fit_r2,
            "eigen_verdict": self.eigen_verdict.value if self.eigen_verdict else None,
            "numeric_verdict": self.numeric_verdict.value if self.numeric_verdict else None,
            "flags": list(self.flags),
        }


def _oriented(spec: LeafDiffusionSpec, side: str):
    """Drift in the distance to the chosen endpoint and the usable length."""
    lo, hi = spec.domain
    if side == "lower":
        return spec.b_of_s, hi - lo if math.isfinite(hi) else math.inf, lambda t: lo + t
    if not math.isfinite(hi):
        raise ValueError("upper endpoint at infinity")
    return (lambda t: -spec.b_of_s(hi - t)), hi - lo, lambda t: hi - t


def rho(spec: LeafDiffusionSpec, t: float, delta: float, side: str = "lower") -> float:
    """exp of the integral of b from t to delta, distances measured from the endpoint."""
    b, length, _ = _oriented(spec, side)
    if not 0 < t <= delta or delta > length:
        raise ValueError("need 0 < t <= delta inside the domain")
    val, err = integrate.quad(b, t, delta, epsabs=0.0, epsrel=1e-11, limit=400)
    if not math.isfinite(val):
        raise ArithmeticError("quadrature failed")
    return math.exp(val)


def _tail(y0: float, y1: float, t0: float, t1: float) -> float:
    """Integral over (0, t0) of the power law through (t0, y0) and (t1, y1)."""
    if y0 <= 0 or y1 <= 0:
        return 0.0
    p = math.log(y1 / y0) / math.log(t1 / t0)
    if p <= -1.0 + 1e-9:
        return DIVERGENT
    return y0 * t0 / (p + 1.0)


def _grid_integral(t: np.ndarray, u: np.ndarray, y: np.ndarray) -> float:
    """Integral of y over (0, t[-1]]: Simpson in log t plus a power-law tail."""
    tail = _tail(y[0], y[1], t[0], t[1])
    return tail + float(integrate.simpson(y * t, x=u))


def classify_boundary(spec: LeafDiffusionSpec, side: str = "lower",
                      char_report: Optional[CharacteristicPointReport] = None,
                      eigen_index: Optional[int] = None, delta: Optional[float] = None,
                      deadband: float = 0.02, r2_min: float = 0.999) -> BoundaryReport:
    """Decide whether the diffusion reaches the chosen endpoint.

    With a characteristic-point report the exponent lambda is read off the
    eigenvalues (1/2 for a focus) and the point is inaccessible iff lambda is
    in (0, 1].  Independently, log rho is fitted against log t; its slope
    gives q = 1/lambda and the integral of rho diverges iff q >= 1 - deadband.
    """
    labels = spec.boundary_labels
    if labels[0 if side == "lower" else 1] is not Boundary.CHARACTERISTIC_POINT:
        raise ValueError("endpoint is not a characteristic point")
    b, length, _ = _oriented(spec, side)
    if delta is None:
        delta = min(1.0, 0.5 * length)
    flags = []

    ts = np.geomspace(1e-4 * delta, 1e-2 * delta, 25)
    logs = np.array([math.log(rho(spec, t, delta, side)) for t in ts])
    slope, intercept, r, *_ = stats.linregress(np.log(ts), logs)
    q = -float(slope)
    r2 = float(r * r)
    if r2 < r2_min and abs(q) > 1e-6:
        flags.append("UnreliableFit")
    divergent = q >= 1.0 - deadband
    numeric = Verdict.INACCESSIBLE if divergent else Verdict.ACCESSIBLE

    u = np.linspace(math.log(1e-4 * delta), math.log(delta), 801)
    t = np.exp(u)
    lo, hi = spec.domain
    Bs = spec.b_array(lo + t) if side == "lower" else -spec.b_array(hi - t)
    # log rho(t) = integral of b from t to delta, accumulated in log t
    cum = integrate.cumulative_simpson(Bs * t, x=u, initial=0.0)
    R = np.exp(cum[-1] - cum)
    B = np.abs(Bs)
    integral_rho = DIVERGENT if divergent else _grid_integral(t, u, R)
    test2 = None
    drift_int = None
    if not divergent:
        if q > 0:
            test2 = _grid_integral(t, u, (1 + 0.5 * B) / R)
            drift_int = _grid_integral(t, u, 0.5 * B)
        else:
            S = _tail(R[0], R[1], t[0], t[1]) + integrate.cumulative_simpson(R * t, x=u, initial=0.0)
            test2 = _grid_integral(t, u, (1 + 0.5 * B) * S / R)

    lam = None
    eigen = None
    method = Method.NUMERIC_INTEGRAL
    if char_report is not None:
        if char_report.cls is PointClass.DEGENERATE:
            flags.append("DegeneratePoint")
        else:
            if char_report.cls is PointClass.ELLIPTIC_FOCUS:
                lam = 0.5
            else:
                if eigen_index is None:
                    raise ValueError("eigen_index required for real eigenvalues")
                lam = float(np.real(char_report.eigenvalues[eigen_index]))
            eigen = Verdict.INACCESSIBLE if 0.0 < lam <= 1.0 else Verdict.ACCESSIBLE
            method = Method.BOTH
    if eigen is not None and eigen is not numeric:
        flags.append("Disagreement")
    verdict = eigen if eigen is not None else numeric
    return BoundaryReport(verdict, lam, integral_rho, test2, method, q, r2, eigen, numeric, flags,
                          drift_int)


def approach_eigen_index(report: CharacteristicPointReport, cs, direction: np.ndarray) -> int:
    """Index of the eigenvector (in X1, X2 components) closest to a tangent direction."""
    if report.eigenvectors is None:
        raise ValueError("no real eigenvectors")
    c = cs.decompose(direction, report.location.array)[:2]
    c = c / np.linalg.norm(c)
    scores = [abs(float(c @ (v / np.linalg.norm(v)))) for v in report.eigenvectors.T]
    return int(np.argmax(scores))


@dataclass
class ApproachLeaf:
    trace: LeafTrace
    spec: LeafDiffusionSpec
    report: CharacteristicPointReport
    eigen_index: Optional[int]


def approach_leaf_diffusion(S, cs, start, direction: int, target, step: float = 1e-3,
                            max_length: float = 50.0, label: str = "leaf") -> ApproachLeaf:
    """Trace the leaf from ``start`` into the characteristic point ``target``.

    Returns the trace, the leaf diffusion in distance to the point, the
    point's classification and the eigenvector the leaf comes in along.
    """
    from .foliation import StopRule, Termination, classify, trace_leaf

    tr = trace_leaf(S, cs, start, direction, step, StopRule(max_length=max_length))
    if tr.terminated_by is not Termination.NEAR_CHARACTERISTIC_POINT:
        raise SimulationError(f"leaf did not reach a characteristic point ({tr.terminated_by.value})")
    if np.linalg.norm(tr.end - np.asarray(target, dtype=float)) > 1e-2:
        raise SimulationError(f"leaf ended at {tuple(tr.end)}, not at {tuple(target)}")
    rep = classify(S, cs, target)
    spec = spec_from_trace(tr, label)
    idx = None
    if rep.eigenvectors is not None:
        idx = approach_eigen_index(rep, cs, spec.approach_direction)
    return ApproachLeaf(tr, spec, rep, idx)
