# eigenmode.py - 由直接系统的零空间构造特征函数
#
# 每条边上的系数按基底存为 (a, b)：
#   lambda > 0: cos(kx), sin(kx)    lambda = 0: 1, x    lambda < 0: cosh(kx), sinh(kx)
# x 从边的 u 端开始计量

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Union

import numpy as np
import scipy.linalg

from engine.errors import CoordinateOutOfRange, NullSpaceDimensionMismatch
from engine.metric_graph import LoopDescriptor, MetricGraph, find_loops
from engine.spectral import EigenvalueRecord, direct_system

logger = logging.getLogger(__name__)

TAU_VANISH = 1e-7
TAU_LOOP = 1e-8


@dataclass(frozen=True)
class NonvanishingOnVertices:
    label = "nonvanishing"


@dataclass(frozen=True)
class VanishesAtVertices:
    vertices: tuple[str, ...]
    label = "vanishes"


@dataclass(frozen=True)
class LoopSupported:
    loop: LoopDescriptor
    label = "loop"


@dataclass(frozen=True)
class AmbiguousLoopSupport:
    loops: tuple[LoopDescriptor, ...]
    label = "ambiguous-loop"


SupportClass = Union[NonvanishingOnVertices, VanishesAtVertices, LoopSupported, AmbiguousLoopSupport]


@dataclass(frozen=True, eq=False)
class EigenFunction:
    graph: MetricGraph
    lam: float
    coefficients: np.ndarray
    index: int = 0
    classification: SupportClass | None = field(default=None)

    @property
    def k(self) -> float:
        return math.sqrt(abs(self.lam))

    def edge_coefficients(self, edge_id: str) -> np.ndarray:
        return self.coefficients[self.graph.edge_index(edge_id)]

    @property
    def vertex_values(self) -> dict[str, float]:
        return vertex_values(self)


# ----------------------------------------------------------------------
# 基底与内积
# ----------------------------------------------------------------------

def _basis(lam: float, x):
    """x 处存储的基函数及其导数"""
    k = math.sqrt(abs(lam))
    x = np.asarray(x, dtype=float)
    if lam > 0:
        return np.cos(k * x), np.sin(k * x), -k * np.sin(k * x), k * np.cos(k * x)
    if lam < 0:
        return np.cosh(k * x), np.sinh(k * x), k * np.sinh(k * x), k * np.cosh(k * x)
    return np.ones_like(x), x, np.zeros_like(x), np.ones_like(x)


def _start_slope(lam: float) -> float:
    """第二个基函数在 x = 0 处的导数"""
    return math.sqrt(abs(lam)) if lam != 0 else 1.0


def mass_matrix(g: MetricGraph, lam: float) -> np.ndarray:
    """存储基底的分块对角 L^2 Gram 矩阵，由精确原函数求得"""
    k = math.sqrt(abs(lam))
    blocks = []
    for length in g.lengths:
        if lam > 0:
            cc = length / 2 + math.sin(2 * k * length) / (4 * k)
            ss = length / 2 - math.sin(2 * k * length) / (4 * k)
            cs = math.sin(k * length) ** 2 / (2 * k)
        elif lam < 0:
            cc = length / 2 + math.sinh(2 * k * length) / (4 * k)
            ss = math.sinh(2 * k * length) / (4 * k) - length / 2
            cs = math.sinh(k * length) ** 2 / (2 * k)
        else:
            cc, cs, ss = length, length ** 2 / 2, length ** 3 / 3
        blocks.append(np.array([[cc, cs], [cs, ss]]))
    return scipy.linalg.block_diag(*blocks)


def inner_product(f: EigenFunction, h: EigenFunction) -> float:
    return float(np.ravel(f.coefficients) @ mass_matrix(f.graph, f.lam) @ np.ravel(h.coefficients))


# ----------------------------------------------------------------------
# 重构
# ----------------------------------------------------------------------

def _null_basis(matrix: np.ndarray, tol: float) -> np.ndarray:
    """按奇异值绝对阈值取零空间"""
    if matrix.shape[0] == 0:
        return np.eye(matrix.shape[1])
    _, sv, vh = scipy.linalg.svd(matrix)
    rank = int(np.count_nonzero(sv > tol))
    return vh[rank:].T


def _loop_aligned(g: MetricGraph, coefficients: np.ndarray) -> np.ndarray:
    """旋转 L^2 正交归一的特征空间基底，使环态排在前面

    coefficients 形状为 (2E, m)，旋转矩阵为正交阵
    """
    m = coefficients.shape[1]
    if m == 1:
        return coefficients
    directions = []
    for loop in find_loops(g):
        if not loop.pure:
            continue
        off_rows = [
            2 * e + j for e, edge_id in enumerate(g.edge_ids) if edge_id not in loop.edge_chain for j in (0, 1)
        ]
        if not off_rows:
            continue
        null = _null_basis(coefficients[off_rows], TAU_LOOP)
        if null.shape[1]:
            directions.append(null[:, 0])
    if not directions:
        return coefficients

    q, r = np.linalg.qr(np.column_stack(directions))
    q = q[:, np.abs(np.diag(r)) > 1e-6]
    rotation = np.hstack([q, scipy.linalg.null_space(q.T)]) if q.shape[1] < m else q
    return coefficients @ rotation


def _fix_sign(g: MetricGraph, coefficients: np.ndarray) -> np.ndarray:
    """字典序第一条支撑边上第一个超过阈值的系数取正"""
    per_edge = coefficients.reshape(len(g.edges), 2)
    for edge_id in sorted(g.edge_ids):
        pair = per_edge[g.edge_index(edge_id)]
        for value in pair:
            if abs(value) > TAU_LOOP:
                return coefficients if value > 0 else -coefficients
    return coefficients


def eigenfunctions_at(g: MetricGraph, record: EigenvalueRecord, null_tol: float = 1e-8) -> list[EigenFunction]:
    """record 对应特征空间的 L^2 正交归一基

    Raises:
        NullSpaceDimensionMismatch
    """
    system = direct_system(g, record.lam)
    nullity = system.nullity(null_tol)
    if nullity != record.multiplicity:
        raise NullSpaceDimensionMismatch(
            f"lambda={record.lam:.12g}: null space has dimension {nullity}, expected {record.multiplicity}"
        )
    vectors, _ = system.null_vectors(record.multiplicity)

    # 未知量 (a, y) -> 存储的 (a, b)，b = w y / k
    weight = 1.0 + system.k
    coefficients = vectors.copy()
    coefficients[1::2] *= weight / _start_slope(record.lam)

    gram = coefficients.T @ mass_matrix(g, record.lam) @ coefficients
    values, q = np.linalg.eigh(gram)
    coefficients = coefficients @ (q @ np.diag(values ** -0.5) @ q.T)
    coefficients = _loop_aligned(g, coefficients)

    functions = []
    for j in range(record.multiplicity):
        column = _fix_sign(g, coefficients[:, j])
        f = EigenFunction(g, record.lam, column.reshape(len(g.edges), 2), record.index_start + j)
        functions.append(replace(f, classification=classify_support(g, f)))
    return functions


# ----------------------------------------------------------------------
# 求值
# ----------------------------------------------------------------------

def _check_coordinate(f: EigenFunction, edge: str, x: float) -> float:
    length = f.graph.edge(edge).length
    if x < -1e-12 * length or x > length * (1 + 1e-12):
        raise CoordinateOutOfRange(f"x={x!r} outside [0, {length!r}] on edge '{edge}'")
    return min(max(x, 0.0), length)


def evaluate(f: EigenFunction, edge: str, x: float) -> float:
    x = _check_coordinate(f, edge, x)
    a, b = f.edge_coefficients(edge)
    phi1, phi2, _, _ = _basis(f.lam, x)
    return float(a * phi1 + b * phi2)


def derivative(f: EigenFunction, edge: str, x: float) -> float:
    x = _check_coordinate(f, edge, x)
    a, b = f.edge_coefficients(edge)
    _, _, dphi1, dphi2 = _basis(f.lam, x)
    return float(a * dphi1 + b * dphi2)


def _end_value(f: EigenFunction, end) -> float:
    edge_id, side = end
    return evaluate(f, edge_id, 0.0 if side == 0 else f.graph.edge(edge_id).length)


def _end_outgoing(f: EigenFunction, end) -> float:
    edge_id, side = end
    if side == 0:
        return derivative(f, edge_id, 0.0)
    return -derivative(f, edge_id, f.graph.edge(edge_id).length)


def vertex_values(f: EigenFunction) -> dict[str, float]:
    return {
        vertex_id: _end_value(f, f.graph.ends_at(vertex_id)[0])
        for vertex_id in f.graph.vertex_ids
        if f.graph.ends_at(vertex_id)
    }


def vertex_flux(f: EigenFunction, v: str) -> float:
    """v 处外向导数之和"""
    return float(sum(_end_outgoing(f, end) for end in f.graph.ends_at(v)))


def condition_residuals(f: EigenFunction) -> tuple[float, float]:
    """所有顶点上的 (最大连续性误差, 最大通量残差)"""
    continuity = 0.0
    flux = 0.0
    for vtx in f.graph.vertices:
        ends = f.graph.ends_at(vtx.id)
        if not ends:
            continue
        values = [_end_value(f, end) for end in ends]
        continuity = max(continuity, max(abs(value - values[0]) for value in values))
        if vtx.condition.is_dirichlet:
            flux = max(flux, abs(values[0]))
        else:
            flux = max(flux, abs(vertex_flux(f, vtx.id) - vtx.condition.alpha * values[0]))
    return continuity, flux


# ----------------------------------------------------------------------
# 支撑分类
# ----------------------------------------------------------------------

def classify_support(g: MetricGraph, f: EigenFunction, tau_vanish: float = TAU_VANISH) -> SupportClass:
    values = vertex_values(f)
    vanishing = tuple(
        vertex_id
        for vertex_id, value in values.items()
        if not g.condition(vertex_id).is_dirichlet and abs(value) <= tau_vanish
    )
    if not vanishing:
        return NonvanishingOnVertices()

    magnitude = np.max(np.abs(f.coefficients), axis=1)
    support = {edge_id for edge_id, size in zip(g.edge_ids, magnitude) if size > TAU_LOOP}
    pure = [loop for loop in find_loops(g) if loop.pure]

    holders = [
        loop for loop in pure
        if support <= set(loop.edge_chain) and abs(values[loop.attachment_vertex]) <= TAU_LOOP
    ]
    if len(holders) == 1:
        return LoopSupported(holders[0])

    touched = tuple(loop for loop in pure if support & set(loop.edge_chain))
    covered = set().union(*(set(loop.edge_chain) for loop in touched)) if touched else set()
    if len(touched) > 1 and support <= covered and all(
        abs(values[loop.attachment_vertex]) <= TAU_LOOP for loop in touched
    ):
        return AmbiguousLoopSupport(touched)
    return VanishesAtVertices(vanishing)


# ----------------------------------------------------------------------
# 环翻转与采样表
# ----------------------------------------------------------------------

def flip_loop(f: EigenFunction, loop: LoopDescriptor) -> EigenFunction:
    """把环反向参数化 s -> L - s，环外系数不变"""
    g = f.graph
    orientation, starts, lengths = [], [], []
    current = loop.attachment_vertex
    position = 0.0
    for edge_id in loop.edge_chain:
        edge = g.edge(edge_id)
        forward = edge.u == current
        orientation.append(1.0 if forward else -1.0)
        starts.append(position)
        lengths.append(edge.length)
        position += edge.length
        current = edge.v if forward else edge.u
    total = position

    def along(t: float) -> tuple[float, float]:
        """沿链弧长 t 处 f 的值及其弧长导数"""
        j = int(np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(starts) - 1))
        local = t - starts[j]
        edge_id = loop.edge_chain[j]
        x = local if orientation[j] > 0 else lengths[j] - local
        x = min(max(x, 0.0), lengths[j])
        return evaluate(f, edge_id, x), orientation[j] * derivative(f, edge_id, x)

    coefficients = f.coefficients.copy()
    for j, edge_id in enumerate(loop.edge_chain):
        start = starts[j] if orientation[j] > 0 else starts[j] + lengths[j]
        value, slope = along(total - start)
        row = g.edge_index(edge_id)
        coefficients[row] = (value, -orientation[j] * slope / _start_slope(f.lam))
    flipped = replace(f, coefficients=coefficients, classification=None)
    return replace(flipped, classification=classify_support(g, flipped))


def sample_table(functions: Iterable[EigenFunction], points_per_edge: int) -> list[tuple[int, str, float, float]]:
    """绘图用的 (特征值编号, 边id, x, f(x)) 行"""
    rows = []
    for f in functions:
        for edge in f.graph.edges:
            for x in np.linspace(0.0, edge.length, max(points_per_edge, 2)):
                rows.append((f.index, edge.id, float(x), evaluate(f, edge.id, float(x))))
    return rows
