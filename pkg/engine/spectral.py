# spectral.py - 扫描行列式求度量图的特征值
#
# 每条边上 f(x) = a c(x) + w y s(x)，其中 c = cos(kx)，s = sin(kx)/k
# (lambda < 0 时为 cosh / sinh，lambda = 0 时为 1 / x)，w = 1 + sqrt|lambda|
# 正则化后的 s 使直接矩阵 H 在 k = 0 处连续

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from engine.errors import CheckFailed, NoConvergence, NonpositiveK, WeylCountMismatch
from engine.metric_graph import EdgeEnd, MetricGraph
from engine.secular import BondIndex, phase_power, bond_scattering

logger = logging.getLogger(__name__)

GOLDEN_OFFSET = 0.381966
ROOT_MERGE_TOL = 1e-9
ZERO_K = 1e-7
POLISH_TOL = 1e-10

# 一批网格点上的 (det 或 None, 降序奇异值)
Evaluator = Callable[[np.ndarray], tuple[Optional[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class ScanOptions:
    grid_step: float | None = None
    accept_tol: float = 1e-8
    null_tol: float = 1e-8
    threads: int = 1
    check_weyl: bool = True
    chunk: int = 256
    max_iterations: int = 200


@dataclass(frozen=True)
class EigenvalueRecord:
    lam: float
    k: float
    multiplicity: int
    index_start: int
    residual: float
    negative: bool = False
    degeneracy_suspected: bool = False

    @property
    def index_range(self) -> range:
        return range(self.index_start, self.index_start + self.multiplicity)


@dataclass(frozen=True)
class WeylEstimate:
    expected: float
    tolerance: float

    def accepts(self, found: int) -> bool:
        return abs(found - self.expected) <= self.tolerance


@dataclass(frozen=True)
class DirectSystem:
    """H(lambda)：每个顶点的连续性行和delta行，2E x 2E"""

    lam: float
    matrix: np.ndarray
    theta: float | None = None

    @property
    def k(self) -> float:
        return math.sqrt(abs(self.lam))

    @property
    def basis(self) -> str:
        if self.lam > 0:
            return "cos/sin"
        if self.lam < 0:
            return "cosh/sinh"
        return "1/x"

    @property
    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix, compute_uv=False)

    def nullity(self, null_tol: float = 1e-8) -> int:
        sv = self.singular_values
        return int(np.count_nonzero(sv <= null_tol * max(sv[0], 1.0)))

    def null_vectors(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        """最小的 count 个奇异值对应的右奇异向量（按列）"""
        _, sv, vh = np.linalg.svd(self.matrix)
        return vh[len(sv) - count:].T, sv


# ----------------------------------------------------------------------
# 直接系统
# ----------------------------------------------------------------------

def basis_at(lams: np.ndarray, x) -> tuple[np.ndarray, np.ndarray]:
    """每个 lambda 的正则化 c(x), s(x)（与 x 广播）"""
    lams = np.asarray(lams, dtype=float)
    k = np.sqrt(np.abs(lams))
    x = np.asarray(x, dtype=float)
    kx = k * x
    positive = lams >= 0
    c = np.where(positive, np.cos(kx), np.cosh(np.where(positive, 0.0, kx)))
    sin_part = x * np.sinc(kx / np.pi)
    safe_k = np.where(k > 0, k, 1.0)
    sinh_part = np.where(k > 0, np.sinh(np.where(positive, 0.0, kx)) / safe_k, x)
    s = np.where(positive, sin_part, sinh_part)
    return c, s


def _end_rows(g: MetricGraph, lams: np.ndarray, weight: np.ndarray):
    """每个边端点的取值和外法向导数系数对，形状均为 (n, 2)"""
    c, s = basis_at(lams[:, np.newaxis], g.lengths[np.newaxis, :])
    n = len(lams)
    ones, zeros = np.ones(n), np.zeros(n)
    rows: dict[EdgeEnd, tuple[np.ndarray, np.ndarray]] = {}
    for e, edge in enumerate(g.edges):
        rows[(edge.id, 0)] = (
            np.stack([ones, zeros], axis=1),
            np.stack([zeros, weight], axis=1),
        )
        rows[(edge.id, 1)] = (
            np.stack([c[:, e], s[:, e] * weight], axis=1),
            np.stack([lams * s[:, e], -c[:, e] * weight], axis=1),
        )
    return rows


def direct_matrices(g: MetricGraph, lams, theta: float | None = None, leaf: str | None = None) -> np.ndarray:
    """一批 lambda 的 H(lambda)，形状 (n, 2E, 2E)

    指定 theta 时，leaf 处的条件换成
    cos(theta/2) f'(v) / k = sin(theta/2) f(v)（仅 lambda > 0）
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    n = len(lams)
    dim = 2 * len(g.edges)
    weight = 1.0 + np.sqrt(np.abs(lams))
    rows = _end_rows(g, lams, weight)
    column = {edge.id: 2 * e for e, edge in enumerate(g.edges)}
    h = np.zeros((n, dim, dim))

    row = 0
    for vtx in g.vertices:
        ends = g.ends_at(vtx.id)
        if not ends:
            continue
        first = ends[0]
        first_cols = slice(column[first[0]], column[first[0]] + 2)
        first_value, first_deriv = rows[first]

        if theta is not None and vtx.id == leaf:
            k = np.sqrt(np.abs(lams))[:, np.newaxis]
            h[:, row, first_cols] += math.cos(theta / 2) * first_deriv / k - math.sin(theta / 2) * first_value
            row += 1
            continue
        if vtx.condition.is_dirichlet:
            h[:, row, first_cols] += first_value
            row += 1
            continue

        for end in ends[1:]:
            cols = slice(column[end[0]], column[end[0]] + 2)
            h[:, row, cols] += rows[end][0]
            h[:, row, first_cols] -= first_value
            row += 1
        for end in ends:
            cols = slice(column[end[0]], column[end[0]] + 2)
            h[:, row, cols] += rows[end][1] / weight[:, np.newaxis]
        h[:, row, first_cols] -= vtx.condition.alpha * first_value / weight[:, np.newaxis]
        row += 1
    return h


def direct_system(g: MetricGraph, lam: float, theta: float | None = None, leaf: str | None = None) -> DirectSystem:
    return DirectSystem(float(lam), direct_matrices(g, [lam], theta, leaf)[0], theta)


def direct_determinant(g: MetricGraph, lam: float) -> tuple[float, tuple[float, float]]:
    """det H(lambda) 及最小的两个奇异值（降序）"""
    system = direct_system(g, lam)
    sv = system.singular_values
    pair = (float(sv[-2]), float(sv[-1])) if len(sv) > 1 else (float(sv[-1]), float(sv[-1]))
    return float(np.linalg.det(system.matrix)), pair


def multiplicity_at(g: MetricGraph, lam: float, null_tol: float = 1e-8) -> int:
    return direct_system(g, lam).nullity(null_tol)


def weyl_count(g: MetricGraph, k_max: float) -> WeylEstimate:
    return WeylEstimate(g.total_length * k_max / math.pi, float(len(g.vertices) + 2))


# ----------------------------------------------------------------------
# 根扫描
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class _Root:
    x: float
    multiplicity: int
    residual: float
    degeneracy_suspected: bool


def _direct_evaluator(g: MetricGraph, sign: float, theta: float | None = None, leaf: str | None = None) -> Evaluator:
    def evaluate(xs: np.ndarray):
        h = direct_matrices(g, sign * xs ** 2, theta, leaf)
        return np.linalg.det(h), np.linalg.svd(h, compute_uv=False)

    return evaluate


def _secular_evaluator(g: MetricGraph) -> Evaluator:
    bonds = BondIndex(g.edge_ids)
    bond_lengths = g.lengths[bonds.bond_edges]
    total = g.total_length
    dim = bonds.dimension

    if g.has_robin:
        def evaluate(xs: np.ndarray):
            matrices = np.stack(
                [np.eye(dim) - bond_scattering(g, x) * np.exp(1j * x * bond_lengths)[np.newaxis, :] for x in xs]
            )
            return None, np.linalg.svd(matrices, compute_uv=False)

        return evaluate

    s = bond_scattering(g, 1.0)
    power = phase_power(g)

    def evaluate(xs: np.ndarray):
        phases = np.exp(1j * xs[:, np.newaxis] * bond_lengths[np.newaxis, :])
        matrices = np.eye(dim) - s[np.newaxis] * phases[:, np.newaxis, :]
        value = (1j ** power) * np.exp(-1j * xs * total) * np.linalg.det(matrices)
        return value.real, np.linalg.svd(matrices, compute_uv=False)

    return evaluate


def _evaluate_grid(evaluate: Evaluator, xs: np.ndarray, options: ScanOptions):
    chunks = np.array_split(xs, max(1, math.ceil(len(xs) / options.chunk)))
    if options.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=options.threads) as pool:
            parts = list(pool.map(evaluate, chunks))
    else:
        parts = [evaluate(chunk) for chunk in chunks]
    det = None if parts[0][0] is None else np.concatenate([part[0] for part in parts])
    sv = np.concatenate([part[1] for part in parts])
    return det, sv


def _relative_min(sv: np.ndarray) -> np.ndarray:
    # 尺度下限为1：重数满的根处整个矩阵为零
    return sv[..., -1] / np.maximum(sv[..., 0], 1.0)


def _polish(rel_at: Callable[[float], float], x: float, radius: float, max_iterations: int) -> float:
    """把变号得到的根移到附近相对最小奇异值的极小点"""
    try:
        result = minimize_scalar(
            rel_at, bracket=(x - radius, x, x + radius), method="golden", tol=1e-13,
            options={"maxiter": max_iterations},
        )
    except ValueError:
        return x
    return float(result.x) if result.fun < rel_at(x) else x


def _refine(evaluate: Evaluator, xs: np.ndarray, det, rel: np.ndarray, options: ScanOptions) -> list[float]:
    """
    det变号处用brentq求根，相对最小奇异值的局部极小处用黄金分割搜索

    Raises:
        NoConvergence: 迭代用尽时区间宽度仍大于1e-13且相对最小奇异值仍大于1e-10
    """

    def det_at(x: float) -> float:
        return float(evaluate(np.array([x]))[0][0])

    def rel_at(x: float) -> float:
        return float(_relative_min(evaluate(np.array([x]))[1])[0])

    found: list[float] = []
    if det is not None:
        for i in np.nonzero(det[:-1] * det[1:] < 0)[0]:
            x, status = brentq(
                det_at, xs[i], xs[i + 1], xtol=1e-13, rtol=4 * np.finfo(float).eps,
                maxiter=options.max_iterations, full_output=True, disp=False,
            )
            # 重根处det很平，二分会停在离根较远的地方
            if rel_at(x) > POLISH_TOL:
                if not status.converged:
                    raise NoConvergence(
                        f"root in [{xs[i]:.12g}, {xs[i + 1]:.12g}] not refined after {status.iterations} iterations"
                    )
                x = _polish(rel_at, x, 0.25 * (xs[i + 1] - xs[i]), options.max_iterations)
            found.append(float(x))
        found.extend(float(x) for x in xs[det == 0.0])

    interior = np.nonzero((rel[1:-1] < rel[:-2]) & (rel[1:-1] < rel[2:]))[0] + 1
    for i in interior:
        try:
            result = minimize_scalar(
                rel_at, bracket=(xs[i - 1], xs[i], xs[i + 1]), method="golden", tol=1e-13,
                options={"maxiter": options.max_iterations},
            )
        except ValueError:
            logger.debug("golden bracket rejected around x=%.12g", xs[i])
            continue
        if not result.success and result.fun > POLISH_TOL:
            raise NoConvergence(
                f"minimum near x={xs[i]:.12g} not refined after {result.nit} iterations "
                f"(relative sigma_min {result.fun:.3e})"
            )
        if result.fun <= options.accept_tol:
            found.append(float(result.x))
    return found


def _classify(evaluate: Evaluator, xs: list[float], options: ScanOptions) -> list[_Root]:
    roots: list[_Root] = []
    if not xs:
        return roots
    _, sv = evaluate(np.asarray(xs))
    for x, values in zip(xs, sv):
        scale = max(values[0], 1.0)
        multiplicity = int(np.count_nonzero(values <= options.null_tol * scale))
        if multiplicity == 0:
            # 区间已收敛到1e-13以内
            logger.warning("root at x=%.12g kept with relative sigma_min %.3e above threshold", x, values[-1] / scale)
            multiplicity = 1
        suspected = multiplicity >= 2 and values[-2] / scale > 1e-12
        if suspected:
            logger.warning("near-degenerate pair reported as multiplicity %d at x=%.12g", multiplicity, x)
        roots.append(_Root(float(x), multiplicity, float(values[-1] / scale), suspected))
    return roots


def _merge(candidates: list[float], evaluate: Evaluator) -> list[float]:
    merged: list[float] = []
    for x in sorted(candidates):
        if merged and abs(x - merged[-1]) <= ROOT_MERGE_TOL * (1.0 + abs(x)):
            keep = min((merged[-1], x), key=lambda y: float(_relative_min(evaluate(np.array([y]))[1])[0]))
            merged[-1] = keep
            continue
        merged.append(x)
    return merged


def _find_roots(evaluate: Evaluator, a: float, b: float, step: float, options: ScanOptions) -> list[_Root]:
    n = max(2, math.ceil((b - a) / step))
    xs = a + step * (GOLDEN_OFFSET + np.arange(n))
    xs = np.concatenate([[a], xs[xs < b], [b]])
    det, sv = _evaluate_grid(evaluate, xs, options)
    rel = _relative_min(sv)
    logger.debug("scan [%.6g, %.6g]: %d grid points, step %.3g", a, b, len(xs), step)

    roots = _classify(evaluate, _merge(_refine(evaluate, xs, det, rel, options), evaluate), options)
    if det is not None:
        roots = _repair_parity(evaluate, xs, det, roots, options)
    return roots


def _repair_parity(evaluate: Evaluator, xs: np.ndarray, det: np.ndarray, roots: list[_Root], options: ScanOptions) -> list[_Root]:
    """根的个数与det符号不一致的网格区间内重新搜索"""
    added: list[float] = []
    for i in range(len(xs) - 1):
        lo, hi = float(xs[i]), float(xs[i + 1])
        if det[i] == 0.0 or det[i + 1] == 0.0:
            continue
        margin = ROOT_MERGE_TOL * (1.0 + hi)
        inside = [root for root in roots if lo < root.x < hi]
        if any(min(root.x - lo, hi - root.x) < margin for root in inside):
            continue
        odd_sign = det[i] * det[i + 1] < 0
        if (sum(root.multiplicity for root in inside) % 2 == 1) == odd_sign:
            continue

        cuts = [lo]
        for root in inside:
            cuts += [root.x - margin, root.x + margin]
        cuts.append(hi)
        for p, q in zip(cuts[::2], cuts[1::2]):
            if q <= p:
                continue
            fine = np.linspace(p, q, 65)
            fine_det, fine_sv = evaluate(fine)
            added += _refine(evaluate, fine, fine_det, _relative_min(fine_sv), options)
        logger.debug("parity repair in [%.12g, %.12g] found %d candidate(s)", lo, hi, len(added))

    if not added:
        return roots
    merged = _merge([root.x for root in roots] + added, evaluate)
    repaired = _classify(evaluate, merged, options)
    if len(repaired) == len(roots):
        logger.warning("parity mismatch could not be repaired")
    return repaired


def _grid_step(g: MetricGraph, options: ScanOptions) -> float:
    return options.grid_step or min(math.pi / (4.0 * g.total_length), 0.01)


def _records(entries: list[tuple[float, float, _Root, bool]], first_index: int = 0) -> list[EigenvalueRecord]:
    records = []
    index = first_index
    for lam, k, root, negative in sorted(entries, key=lambda item: item[0]):
        records.append(
            EigenvalueRecord(lam, k, root.multiplicity, index, root.residual, negative, root.degeneracy_suspected)
        )
        index += root.multiplicity
    return records


def scan_spectrum(g: MetricGraph, k_max: float, options: ScanOptions | None = None) -> list[EigenvalueRecord]:
    """k 在 [0, k_max] 内的全部特征值，包括负特征值

    Raises:
        NonpositiveK, WeylCountMismatch, NoConvergence, CheckFailed
    """
    if not k_max > 0.0:
        raise NonpositiveK(f"k_max must be positive, got {k_max!r}")
    options = options or ScanOptions()
    step = _grid_step(g, options)
    entries: list[tuple[float, float, _Root, bool]] = []

    if g.negative_alpha_count:
        kappa_max = 1.0 + sum(abs(min(vtx.condition.alpha, 0.0)) for vtx in g.vertices)
        for root in _find_roots(_direct_evaluator(g, -1.0), 0.0, kappa_max, step, options):
            if root.x > ZERO_K:
                entries.append((-root.x ** 2, root.x, root, True))
        negatives = sum(root.multiplicity for _, _, root, _ in entries)
        if negatives > g.negative_alpha_count:
            raise CheckFailed(
                f"{negatives} negative eigenvalues exceed the {g.negative_alpha_count} negative vertex coefficients"
            )

    zero = direct_system(g, 0.0)
    nullity = zero.nullity(options.null_tol)
    if nullity:
        sv = zero.singular_values
        entries.append((0.0, 0.0, _Root(0.0, nullity, float(sv[-1] / sv[0]), False), False))

    for root in _find_roots(_direct_evaluator(g, 1.0), 0.0, float(k_max), step, options):
        if root.x > ZERO_K:
            entries.append((root.x ** 2, root.x, root, False))

    records = _records(entries)
    found = sum(record.multiplicity for record in records)
    estimate = weyl_count(g, k_max)
    logger.debug("found %d eigenvalues up to k=%.6g (Weyl %.3f)", found, k_max, estimate.expected)
    if options.check_weyl and not estimate.accepts(found):
        raise WeylCountMismatch(found, estimate.expected, estimate.tolerance)
    return records


def secular_roots(
    g: MetricGraph, k_max: float, options: ScanOptions | None = None, k_min: float = 0.1
) -> list[EigenvalueRecord]:
    """久期矩阵 I - S e^{ikL} 在 [k_min, k_max] 上的根，编号从 k_min 开始"""
    if not (k_min > 0.0 and k_max > k_min):
        raise NonpositiveK(f"need 0 < k_min < k_max, got [{k_min!r}, {k_max!r}]")
    options = options or ScanOptions()
    roots = _find_roots(_secular_evaluator(g), float(k_min), float(k_max), _grid_step(g, options), options)
    return _records([(root.x ** 2, root.x, root, False) for root in roots])


def lowest_eigenvalues(g: MetricGraph, n: int, options: ScanOptions | None = None) -> list[EigenvalueRecord]:
    """覆盖编号 0..n-1 的记录（最后一条可能超出 n - 1）"""
    if n <= 0:
        return []
    k_max = math.pi * (n + len(g.vertices) + 2) / g.total_length
    for _ in range(24):
        records = scan_spectrum(g, k_max, options)
        if sum(record.multiplicity for record in records) >= n:
            return [record for record in records if record.index_start < n]
        k_max *= 1.5
    raise NoConvergence(f"could not collect {n} eigenvalues")


def eigenvalue_list(records: list[EigenvalueRecord], n: int | None = None) -> np.ndarray:
    """按重数重复的特征值"""
    values = np.array([record.lam for record in records for _ in range(record.multiplicity)])
    return values if n is None else values[:n]


def impure_loop_roots(length: float, alpha0: float, k_max: float) -> tuple[np.ndarray, np.ndarray]:
    """带一个delta顶点的环上两个标量方程的根 k

    odd:  sin(k l / 2) = 0
    even: 2 k sin(k l / 2) = alpha0 cos(k l / 2)
    """

    def odd(k: float) -> float:
        return math.sin(k * length / 2)

    def even(k: float) -> float:
        return 2 * k * math.sin(k * length / 2) - alpha0 * math.cos(k * length / 2)

    step = min(math.pi / (8.0 * length), 0.01)
    grid = step * (GOLDEN_OFFSET + np.arange(math.ceil(k_max / step)))
    grid = np.append(grid[grid < k_max], k_max)

    def bisect(func) -> np.ndarray:
        values = np.array([func(k) for k in grid])
        roots = [
            brentq(func, grid[i], grid[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps)
            for i in np.nonzero(values[:-1] * values[1:] < 0)[0]
        ]
        return np.array(roots)

    return bisect(odd), bisect(even)


def with_options(options: ScanOptions | None, **changes) -> ScanOptions:
    return replace(options or ScanOptions(), **changes)
