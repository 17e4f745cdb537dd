# secular.py - 键散射矩阵与久期函数
#
# 键的约定：第 i 条边承载键 2i (u -> v) 和键 2i + 1 (v -> u)
# 正向键从边端点 (i, 0) 出发、到达 (i, 1)；
# 反向键从 (i, 1) 出发、到达 (i, 0)

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from engine.errors import NonpositiveK, RobinNotSupportedOnTorus
from engine.metric_graph import EdgeEnd, MetricGraph, VertexCondition

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
GRADIENT_TOL = 1e-8


def vertex_scattering(condition: VertexCondition, degree: int, k: float) -> np.ndarray:
    """顶点局部散射矩阵 sigma(v) = (2 / (d + i alpha / k)) J - I

    NK 顶点为实矩阵，Dirichlet 叶顶点为 (-1)，其余情况为依赖 k 的复矩阵
    """
    if degree < 1:
        raise ValueError(f"vertex degree must be positive, got {degree}")
    if not k > 0.0:
        raise NonpositiveK(f"k must be positive, got {k!r}")
    if condition.is_dirichlet:
        return -np.eye(degree)
    if condition.is_nk:
        return (2.0 / degree) * np.ones((degree, degree)) - np.eye(degree)
    factor = 2.0 / (degree + 1j * condition.alpha / k)
    return factor * np.ones((degree, degree), dtype=complex) - np.eye(degree)


@dataclass(frozen=True)
class BondIndex:
    edge_ids: tuple[str, ...]

    @property
    def dimension(self) -> int:
        return 2 * len(self.edge_ids)

    @staticmethod
    def reverse(bond: int) -> int:
        return bond ^ 1

    @staticmethod
    def edge_of(bond: int) -> int:
        return bond // 2

    def bond(self, edge_id: str, forward: bool = True) -> int:
        return 2 * self.edge_ids.index(edge_id) + (0 if forward else 1)

    def in_end(self, bond: int) -> EdgeEnd:
        """键进入终点顶点时经过的边端点"""
        return self.edge_ids[bond // 2], 1 - (bond & 1)

    def out_end(self, bond: int) -> EdgeEnd:
        """键离开起点顶点时经过的边端点"""
        return self.edge_ids[bond // 2], bond & 1

    @cached_property
    def bond_edges(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.edge_ids)), 2)


@dataclass(frozen=True)
class SecularSystem:
    """某个 k 处的 S 与各键长度；F(k) = i^p e^{-ikT} det(I - S e^{ikL})"""

    k: float
    bonds: BondIndex
    scattering: np.ndarray
    bond_lengths: np.ndarray
    phase_power: int
    total_length: float

    @property
    def length_matrix(self) -> np.ndarray:
        return np.diag(self.bond_lengths)

    def matrix(self) -> np.ndarray:
        phases = np.exp(1j * self.k * self.bond_lengths)
        return np.eye(self.bonds.dimension) - self.scattering * phases[np.newaxis, :]

    def value(self) -> complex:
        det = np.linalg.det(self.matrix())
        return (1j ** self.phase_power) * np.exp(-1j * self.k * self.total_length) * det

    def unitarity_defect(self) -> float:
        s = self.scattering
        return float(np.linalg.norm(s @ s.conj().T - np.eye(self.bonds.dimension), ord=2))


def bond_scattering(g: MetricGraph, k: float) -> np.ndarray:
    """组装 2E x 2E 矩阵 S，S[b', b] = sigma_v[out(b'), in(b)]"""
    bonds = BondIndex(g.edge_ids)
    dtype = complex if g.has_robin else float
    s = np.zeros((bonds.dimension, bonds.dimension), dtype=dtype)

    local: dict[str, tuple[np.ndarray, dict[EdgeEnd, int]]] = {}
    for vtx in g.vertices:
        ends = g.ends_at(vtx.id)
        if not ends:
            continue
        local[vtx.id] = (vertex_scattering(vtx.condition, len(ends), k), {end: j for j, end in enumerate(ends)})

    for incoming in range(bonds.dimension):
        in_end = bonds.in_end(incoming)
        vertex_id = g.end_vertex(in_end)
        sigma, position = local[vertex_id]
        for outgoing_end, row in position.items():
            edge_id, side = outgoing_end
            # 经 (e, 0) 离开的键为正向，经 (e, 1) 离开的为反向
            outgoing = bonds.bond(edge_id, forward=(side == 0))
            s[outgoing, incoming] = sigma[row, position[in_end]]
    return s


def assemble_secular_system(g: MetricGraph, k: float) -> SecularSystem:
    if not k > 0.0:
        raise NonpositiveK(f"k must be positive, got {k!r}")
    bonds = BondIndex(g.edge_ids)
    return SecularSystem(
        k=float(k),
        bonds=bonds,
        scattering=bond_scattering(g, k),
        bond_lengths=g.lengths[bonds.bond_edges],
        phase_power=phase_power(g) if not g.has_robin else 0,
        total_length=g.total_length,
    )


def secular_value(g: MetricGraph, k: float) -> float | complex:
    """F(k)；NK/Dirichlet 图为实数，有 Robin 顶点时为复数"""
    value = assemble_secular_system(g, k).value()
    if g.has_robin:
        return complex(value)
    if abs(value.imag) > 1e-10 * (1.0 + abs(value)):
        logger.warning("secular value at k=%.12g has imaginary part %.3e", k, value.imag)
    return float(value.real)


def _raw_torus(scattering: np.ndarray, bond_edges: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    """一批环面点上的 e^{-i sum kappa} det(I - S diag(e^{i kappa_e(b)}))"""
    phases = np.exp(1j * kappa[..., bond_edges])
    dim = scattering.shape[0]
    matrices = np.eye(dim) - scattering * phases[..., np.newaxis, :]
    return np.exp(-1j * kappa.sum(axis=-1)) * np.linalg.det(matrices)


@lru_cache(maxsize=256)
def phase_power(g: MetricGraph) -> int:
    """使环面函数为实数的 i 的幂次 p，在校准点上确定"""
    s = bond_scattering(g, 1.0)
    bond_edges = BondIndex(g.edge_ids).bond_edges
    points = np.random.default_rng(0).uniform(0.0, TWO_PI, size=(16, len(g.edges)))
    raw = _raw_torus(s, bond_edges, points)
    errors = [np.max(np.abs(((1j ** p) * raw).imag) / (1.0 + np.abs(raw))) for p in (0, 1)]
    power = int(np.argmin(errors))
    logger.debug("phase power %d for %s (imaginary residuals %s)", power, g.signature, errors)
    return power


def torus_value(g: MetricGraph, kappa) -> np.ndarray | float:
    """环面上的 Phi(kappa)；接受单点 (E,) 或批量 (..., E)"""
    if g.has_robin:
        raise RobinNotSupportedOnTorus("the torus function is only defined for NK/Dirichlet graphs")
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape[-1] != len(g.edges):
        raise ValueError(f"expected torus points of dimension {len(g.edges)}, got shape {kappa.shape}")
    s = bond_scattering(g, 1.0)
    values = ((1j ** phase_power(g)) * _raw_torus(s, BondIndex(g.edge_ids).bond_edges, kappa)).real
    if values.ndim == 0:
        return float(values)
    return values


def torus_gradient(g: MetricGraph, kappa, step: float = 1e-6) -> np.ndarray:
    """Phi 的中心差分梯度，批量形状与 kappa 相同"""
    kappa = np.asarray(kappa, dtype=float)
    dim = len(g.edges)
    offsets = step * np.eye(dim)
    forward = torus_value(g, kappa[..., np.newaxis, :] + offsets)
    backward = torus_value(g, kappa[..., np.newaxis, :] - offsets)
    return (np.asarray(forward) - np.asarray(backward)) / (2.0 * step)


# 三边参考图的闭式表达

def star3_dirichlet_closed_form(kappa) -> np.ndarray | float:
    kappa = np.asarray(kappa, dtype=float)
    s, c = np.sin(kappa), np.cos(kappa)
    value = sum(s[..., j] * s[..., (j + 1) % 3] * c[..., (j + 2) % 3] for j in range(3))
    return float(value) if np.ndim(value) == 0 else value


def star3_neumann_closed_form(kappa) -> np.ndarray | float:
    return star3_dirichlet_closed_form(np.asarray(kappa, dtype=float) - np.pi / 2)


def mandarin3_closed_form(kappa) -> np.ndarray | float:
    half = np.asarray(kappa, dtype=float) / 2.0
    value = np.asarray(star3_dirichlet_closed_form(half)) * np.asarray(star3_neumann_closed_form(half))
    return float(value) if value.ndim == 0 else value


def fit_proportionality(a, b) -> tuple[float, float]:
    """最小二乘拟合 a ~ c * b，返回 (c, ||a - c b|| / ||a||)"""
    a = np.ravel(np.asarray(a, dtype=float))
    b = np.ravel(np.asarray(b, dtype=float))
    denominator = float(b @ b)
    if denominator == 0.0:
        raise ValueError("cannot fit a constant against an identically zero reference")
    constant = float(a @ b) / denominator
    norm = float(np.linalg.norm(a))
    residual = float(np.linalg.norm(a - constant * b)) / norm if norm > 0.0 else 0.0
    return constant, residual
