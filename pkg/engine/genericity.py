# genericity.py - 谱单重性、交错性和 theta 同伦的数值检验

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from engine.eigenmode import (
    TAU_LOOP,
    TAU_VANISH,
    AmbiguousLoopSupport,
    EigenFunction,
    LoopSupported,
    NonvanishingOnVertices,
    VanishesAtVertices,
    eigenfunctions_at,
    evaluate,
    vertex_flux,
    vertex_values,
)
from engine.errors import (
    CircleExcluded,
    CoordinateOutOfRange,
    InvalidThetaPath,
    NoConvergence,
    NoPointFound,
    PathThroughDegeneracy,
    RobinNotSupportedOnTorus,
)
from engine.metric_graph import LoopDescriptor, MetricGraph, VertexCondition, is_circle, perturb_lengths, with_condition, with_lengths
from engine.secular import GRADIENT_TOL, torus_gradient, torus_value
from engine.spectral import (
    ScanOptions,
    basis_at,
    direct_matrices,
    direct_system,
    eigenvalue_list,
    lowest_eigenvalues,
    scan_spectrum,
    with_options,
)

logger = logging.getLogger(__name__)

GOLDEN_STEP = 0.6180339887498949
MAX_CANDIDATES = 1000
DEFAULT_GAP_THRESHOLD = 1e-6


@dataclass
class GenericityReport:
    signature: str
    examined: int
    eigenvalues: list[float]
    min_spectral_gap: float
    gap_margin: float
    gap_threshold: float
    nonvanishing: list[int] = field(default_factory=list)
    vanishing_incidents: list[tuple[int, str]] = field(default_factory=list)
    loop_states: list[tuple[int, LoopDescriptor]] = field(default_factory=list)
    ambiguous_states: list[tuple[int, tuple[LoopDescriptor, ...]]] = field(default_factory=list)

    @property
    def simple(self) -> bool:
        return self.gap_margin > 0.0

    @property
    def nonvanishing_ok(self) -> bool:
        return not self.vanishing_incidents

    @property
    def loop_unique(self) -> bool:
        return not self.ambiguous_states

    @property
    def passed(self) -> bool:
        return self.simple and self.nonvanishing_ok and self.loop_unique


@dataclass
class TrialSummary:
    trials: int
    passed: int
    reports: list[GenericityReport]

    @property
    def fraction(self) -> float | None:
        return self.passed / self.trials if self.trials else None


@dataclass(frozen=True)
class InterlacingResult:
    alpha: float
    alpha_prime: float
    worst_margin: float
    margins: tuple[float, ...]
    non_strict: tuple[int, ...]
    strict_expected: tuple[int, ...]

    @property
    def strict_violations(self) -> tuple[int, ...]:
        return tuple(n for n in self.non_strict if n in self.strict_expected)

    @property
    def ok(self) -> bool:
        return self.worst_margin >= -1e-9 and not self.strict_violations


@dataclass(frozen=True)
class ThetaSample:
    theta: float
    lam: float
    extended_length: float
    torus_point: tuple[float, ...]
    phi_residual: float
    gradient_single_signed: bool


@dataclass
class ThetaPath:
    leaf: str
    edge: str
    samples: list[ThetaSample]
    start_index: int
    end_index: int
    consistency: float

    @property
    def max_residual(self) -> float:
        return max(sample.phi_residual for sample in self.samples)


# ----------------------------------------------------------------------
# 一般性报告
# ----------------------------------------------------------------------

def genericity_report(
    g: MetricGraph,
    n: int,
    options: ScanOptions | None = None,
    gap_threshold: float = DEFAULT_GAP_THRESHOLD,
) -> GenericityReport:
    """检查前 n 个特征对的单重性以及在顶点处不为零

    Raises:
        CircleExcluded
    """
    if is_circle(g):
        raise CircleExcluded("a circle has a degenerate spectrum for every length; it is excluded")
    records = lowest_eigenvalues(g, n, options)
    lams = eigenvalue_list(records, n)
    gaps = np.diff(lams)
    margins = gaps - gap_threshold * (1.0 + np.abs(lams[:-1]))
    report = GenericityReport(
        signature=g.signature,
        examined=len(lams),
        eigenvalues=[float(lam) for lam in lams],
        min_spectral_gap=float(gaps.min()) if len(gaps) else math.inf,
        gap_margin=float(margins.min()) if len(margins) else math.inf,
        gap_threshold=gap_threshold,
    )
    for record in records:
        for f in eigenfunctions_at(g, record):
            if f.index >= n:
                continue
            support = f.classification
            if isinstance(support, NonvanishingOnVertices):
                report.nonvanishing.append(f.index)
            elif isinstance(support, LoopSupported):
                report.loop_states.append((f.index, support.loop))
            elif isinstance(support, AmbiguousLoopSupport):
                report.ambiguous_states.append((f.index, support.loops))
            elif isinstance(support, VanishesAtVertices):
                report.vanishing_incidents.extend((f.index, v) for v in support.vertices)
    logger.debug(
        "genericity %s: gap margin %.3e, %d vanishing incidents, %d loop states",
        g.signature, report.gap_margin, len(report.vanishing_incidents), len(report.loop_states),
    )
    return report


def randomized_genericity_trial(
    g: MetricGraph,
    trials: int,
    epsilon: float,
    n: int,
    seed: int,
    threads: int = 1,
    options: ScanOptions | None = None,
    gap_threshold: float = DEFAULT_GAP_THRESHOLD,
) -> TrialSummary:
    """对所有边长做 trials 次扰动，统计全部条款都通过的报告数"""
    if is_circle(g):
        raise CircleExcluded("a circle has a degenerate spectrum for every length; it is excluded")
    # 不做试验时也校验 epsilon
    perturb_lengths(g, epsilon, seed)
    if trials <= 0:
        return TrialSummary(0, 0, [])

    seeds = [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(trials)]

    def run(trial_seed: int) -> GenericityReport:
        return genericity_report(perturb_lengths(g, epsilon, trial_seed), n, options, gap_threshold)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(run, seeds))
    else:
        reports = [run(trial_seed) for trial_seed in seeds]
    passed = sum(1 for report in reports if report.passed)
    if passed < trials:
        logger.warning("%d of %d perturbed graphs failed the genericity check", trials - passed, trials)
    return TrialSummary(trials, passed, reports)


# ----------------------------------------------------------------------
# 交错性
# ----------------------------------------------------------------------

def _condition_for(alpha: float) -> VertexCondition:
    return VertexCondition.dirichlet() if math.isinf(alpha) else VertexCondition.delta(alpha)


def verify_interlacing(
    g: MetricGraph,
    v: str,
    alpha_pairs,
    n: int,
    options: ScanOptions | None = None,
) -> list[InterlacingResult]:
    """a < a' 时 lambda_{n-1}(a') <= lambda_n(a) <= lambda_n(a')；a' = inf 表示 Dirichlet

    Raises:
        DirichletAtInternalVertex
    """
    results = []
    for alpha, alpha_prime in alpha_pairs:
        low, high = sorted((float(alpha), float(alpha_prime)))
        g_low = with_condition(g, v, _condition_for(low))
        g_high = with_condition(g, v, _condition_for(high))
        records_low = lowest_eigenvalues(g_low, n + 1, options)
        lam_low = eigenvalue_list(records_low, n + 1)
        lam_high = eigenvalue_list(lowest_eigenvalues(g_high, n + 1, options), n + 1)

        margins = []
        non_strict = []
        for i in range(n):
            upper = lam_high[i] - lam_low[i]
            lower = lam_low[i] - lam_high[i - 1] if i > 0 else math.inf
            margins.append(min(upper, lower))
            tol = 1e-9 * (1.0 + abs(lam_low[i]))
            if low != high and (upper <= tol or lower <= tol):
                non_strict.append(i)

        strict_expected = tuple(i for i in range(n) if low != high and _strictness_holds(g_low, records_low, v, i))
        results.append(
            InterlacingResult(
                alpha=float(alpha),
                alpha_prime=float(alpha_prime),
                worst_margin=float(min(margins)) if margins else math.inf,
                margins=tuple(float(m) for m in margins),
                non_strict=tuple(non_strict),
                strict_expected=strict_expected,
            )
        )
        logger.debug("interlacing (%s, %s) at %s: worst margin %.3e", alpha, alpha_prime, v, results[-1].worst_margin)
    return results


def _strictness_holds(g: MetricGraph, records, v: str, index: int) -> bool:
    """单重特征值，且其特征函数满足 |f(v)| + |sum f'(v)| > 1e-6"""
    record = next((r for r in records if index in r.index_range), None)
    if record is None or record.multiplicity != 1:
        return False
    f = eigenfunctions_at(g, record)[0]
    return abs(vertex_values(f)[v]) + abs(vertex_flux(f, v)) > 1e-6


# ----------------------------------------------------------------------
# 不为零的点
# ----------------------------------------------------------------------

def pick_nonvanishing_point(
    g: MetricGraph, edge: str, x0: float, radius: float, n: int, options: ScanOptions | None = None
) -> float:
    """(x0 - radius, x0 + radius) 内的一点 y，前 n 个特征函数在 y 处都不为零
    或在整条边上为零

    Raises:
        CoordinateOutOfRange, NoPointFound
    """
    length = g.edge(edge).length
    if radius <= 0.0 or x0 - radius < 0.0 or x0 + radius > length:
        raise CoordinateOutOfRange(f"window ({x0 - radius!r}, {x0 + radius!r}) leaves edge '{edge}'")
    if n <= 0:
        return float(x0)

    functions: list[EigenFunction] = []
    for record in lowest_eigenvalues(g, n, options):
        functions.extend(f for f in eigenfunctions_at(g, record) if f.index < n)
    active = [f for f in functions if np.max(np.abs(f.edge_coefficients(edge))) > TAU_LOOP]

    for j in range(MAX_CANDIDATES + 1):
        y = x0 if j == 0 else x0 + radius * (2.0 * ((j * GOLDEN_STEP) % 1.0) - 1.0)
        if all(abs(evaluate(f, edge, y)) > TAU_VANISH for f in active):
            return float(y)
    raise NoPointFound(f"no admissible point in ({x0 - radius!r}, {x0 + radius!r}) on edge '{edge}'")


# ----------------------------------------------------------------------
# theta 同伦
# ----------------------------------------------------------------------

def _leaf_parameters(g: MetricGraph, leaf: str) -> tuple[str, float]:
    if g.has_robin:
        raise RobinNotSupportedOnTorus("theta paths need NK/Dirichlet conditions")
    condition = g.condition(leaf)
    if g.degree(leaf) != 1 or not (condition.is_nk or condition.is_dirichlet):
        raise InvalidThetaPath(f"vertex '{leaf}' is not an NK or Dirichlet leaf")
    edge_id = g.ends_at(leaf)[0][0]
    return edge_id, (math.pi if condition.is_dirichlet else 0.0)


def _theta_det(g: MetricGraph, leaf: str, theta: float):
    def det_at(ks):
        ks = np.atleast_1d(np.asarray(ks, dtype=float))
        return np.linalg.det(direct_matrices(g, ks ** 2, theta, leaf))

    return det_at


def _track(g: MetricGraph, leaf: str, theta: float, prediction: float, radius: float) -> float | None:
    """区间内离预测值最近的 det H(k; theta) 的根，没有则返回 None"""
    det_at = _theta_det(g, leaf, theta)
    lo = max(prediction - radius, 1e-9)
    grid = np.linspace(lo, prediction + radius, 17)
    values = det_at(grid)
    roots = [
        brentq(lambda k: float(det_at(k)[0]), grid[i], grid[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps)
        for i in np.nonzero(values[:-1] * values[1:] < 0)[0]
    ]
    if not roots:
        return None
    return min(roots, key=lambda k: abs(k - prediction))


def _theta_sample(g: MetricGraph, leaf: str, edge_id: str, theta_v: float, theta: float, k: float) -> ThetaSample:
    system = direct_system(g, k * k, theta, leaf)
    vectors, _ = system.null_vectors(1)
    y = vectors[:, 0]
    column = 2 * g.edge_index(edge_id)
    a, scaled = y[column], y[column + 1]
    weight = 1.0 + k
    if g.ends_at(leaf)[0][1] == 0:
        value, outgoing = a, weight * scaled
    else:
        c, s = basis_at(np.array([k * k]), g.edge(edge_id).length)
        value = a * c[0] + weight * scaled * s[0]
        outgoing = k * k * s[0] * a - c[0] * weight * scaled
    size = 1e-9 * np.max(np.abs(y))
    if abs(value) <= size and abs(outgoing) / weight <= size:
        raise PathThroughDegeneracy(f"eigenfunction vanishes on leaf edge '{edge_id}' at theta={theta:.12g}")

    extended = g.edge(edge_id).length + (theta_v - theta) / (2.0 * k)
    kappa = k * g.lengths
    kappa[g.edge_index(edge_id)] = k * extended
    point = np.mod(kappa, 2.0 * math.pi)
    residual = abs(float(torus_value(g, point)))
    gradient = np.asarray(torus_gradient(g, point))
    significant = gradient[np.abs(gradient) > GRADIENT_TOL]
    single = bool(np.all(significant > 0) or np.all(significant < 0))
    return ThetaSample(theta, k * k, extended, tuple(float(p) for p in point), residual, single)


def trace_theta_path(
    g: MetricGraph,
    leaf: str,
    n_start: int,
    n_turns: int,
    steps: int = 200,
    options: ScanOptions | None = None,
) -> ThetaPath:
    """叶顶点条件角 theta 按整圈减小 n_turns 圈，同时延拓编号为 n_start 的特征值；
    每转一圈编号减一

    Raises:
        InvalidThetaPath, RobinNotSupportedOnTorus, PathThroughDegeneracy, NoConvergence
    """
    edge_id, theta_v = _leaf_parameters(g, leaf)
    if n_turns < 0 or n_turns % 2:
        raise InvalidThetaPath(f"the number of turns must be a non-negative even integer, got {n_turns}")
    if steps < 1:
        raise InvalidThetaPath(f"steps per turn must be positive, got {steps}")
    records = lowest_eigenvalues(g, n_start + 1, options)
    record = next((r for r in records if n_start in r.index_range), None)
    if record is None or record.multiplicity != 1 or record.lam <= 0.0:
        raise InvalidThetaPath(f"eigenvalue {n_start} must be simple and positive to start a path")

    radius = math.pi / (4.0 * g.total_length)
    base_step = 2.0 * math.pi / steps
    theta_end = theta_v - 2.0 * math.pi * n_turns
    theta, k = theta_v, record.k
    samples = [_theta_sample(g, leaf, edge_id, theta_v, theta, k)]
    previous: tuple[float, float] | None = None
    step = base_step
    while theta - theta_end > 1e-12:
        current_step = min(step, theta - theta_end)
        prediction = k
        if previous is not None:
            prediction = k + (k - previous[0]) * current_step / previous[1]
        root = _track(g, leaf, theta - current_step, prediction, radius)
        if root is None:
            step /= 2.0
            logger.debug("theta step halved to %.3e at theta=%.12g", step, theta)
            if step < base_step / 4096:
                raise NoConvergence(f"theta path lost the eigenvalue at theta={theta:.12g}")
            continue
        previous = (k, current_step)
        theta -= current_step
        k = root
        samples.append(_theta_sample(g, leaf, edge_id, theta_v, theta, k))
        step = min(base_step, 2.0 * step)

    end_records = scan_spectrum(g, k + 1.0, with_options(options, check_weyl=False))
    end = min(end_records, key=lambda r: abs(r.k - k))
    extended = with_lengths(g, {edge_id: samples[-1].extended_length})
    check = scan_spectrum(extended, k + 1.0, with_options(options, check_weyl=False))
    nearest = min(check, key=lambda r: abs(r.k - k))
    consistency = abs(nearest.k - k) / k
    logger.debug("theta path from index %d ended at index %d (consistency %.3e)", n_start, end.index_start, consistency)
    return ThetaPath(leaf, edge_id, samples, n_start, end.index_start, consistency)
