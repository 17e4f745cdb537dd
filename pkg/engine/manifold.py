# manifold.py - 周期网格上环面函数的零点集
#
# 单元以其下角点编号，每个坐标轴首尾相接

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.cluster.hierarchy import DisjointSet
from scipy.optimize import minimize
from skimage import measure

from engine.errors import (
    DimensionNot3,
    DimensionTooLarge,
    IoError,
    MixedSignAtSmoothCell,
    ResolutionTooLow,
    RobinNotSupportedOnTorus,
)
from engine.metric_graph import MetricGraph, find_bridges, find_loops, with_lengths
from engine.secular import GRADIENT_TOL, BondIndex, bond_scattering, torus_gradient, torus_value
from engine.spectral import multiplicity_at

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
MIN_RESOLUTION = 16
MAX_DIMENSION = 4
FRAGMENT_SHARE = 0.01


@dataclass
class TorusField:
    graph: MetricGraph
    resolution: int
    origin: float
    values: np.ndarray
    zero: np.ndarray | None = None
    singular: np.ndarray | None = None
    smooth: np.ndarray | None = None
    gradient_norm: np.ndarray | None = None
    labels: np.ndarray | None = None
    component_sizes: list[int] = field(default_factory=list)
    fragment_sizes: list[int] = field(default_factory=list)
    signs: np.ndarray | None = None

    @property
    def dimension(self) -> int:
        return self.values.ndim

    @property
    def spacing(self) -> float:
        return TWO_PI / self.resolution

    @property
    def n_components(self) -> int:
        return len(self.component_sizes)

    @property
    def degenerate(self) -> bool:
        """一维环面的零点集是有限点集，统计分支没有意义"""
        return self.dimension < 2

    def axis(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.resolution)

    def cell_centers(self, cells: np.ndarray) -> np.ndarray:
        """(m, E) 单元编号数组对应的单元中心环面坐标"""
        return self.origin + self.spacing * (cells + 0.5)


def sample_field(g: MetricGraph, resolution: int, origin: float = 0.0, threads: int = 1) -> TorusField:
    """规则网格 origin + 2 pi j / resolution 上的 Phi，按层计算

    Raises:
        RobinNotSupportedOnTorus, DimensionTooLarge, ResolutionTooLow
    """
    if g.has_robin:
        raise RobinNotSupportedOnTorus("the secular manifold is only defined for NK/Dirichlet graphs")
    dim = len(g.edges)
    if dim > MAX_DIMENSION:
        raise DimensionTooLarge(f"{dim} edges; the torus grid supports at most {MAX_DIMENSION}")
    if resolution < MIN_RESOLUTION:
        raise ResolutionTooLow(f"resolution {resolution} is below the minimum {MIN_RESOLUTION}")

    axis = origin + TWO_PI * np.arange(resolution) / resolution
    rest = np.stack(np.meshgrid(*([axis] * (dim - 1)), indexing="ij"), axis=-1) if dim > 1 else None

    def slab(i: int) -> np.ndarray:
        if rest is None:
            return np.asarray(torus_value(g, np.array([[axis[i]]])))
        first = np.full(rest.shape[:-1] + (1,), axis[i])
        return np.asarray(torus_value(g, np.concatenate([first, rest], axis=-1)))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            slabs = list(pool.map(slab, range(resolution)))
    else:
        slabs = [slab(i) for i in range(resolution)]
    values = np.stack(slabs).reshape((resolution,) * dim)
    logger.debug("sampled %d^%d torus points, max |Phi| = %.3e", resolution, dim, np.abs(values).max())
    return TorusField(g, resolution, float(origin), values)


def _corner_offsets(dim: int):
    return list(itertools.product((0, 1), repeat=dim))


def _shifted(array: np.ndarray, offset) -> np.ndarray:
    """带回绕的 array[i + offset]"""
    return np.roll(array, shift=tuple(-o for o in offset), axis=tuple(range(len(offset))))


def classify_points(field: TorusField) -> TorusField:
    """标记零点单元，并分为光滑单元和奇异单元

    平均梯度低于 tau_grad，或对角导数 sum(dPhi/dkappa_j) 在各角点上不同号时，
    零点单元为奇异单元。与奇异单元相距一个单元以内的单元不计入光滑集
    """
    values = field.values
    dim = field.dimension
    scale = float(np.abs(values).max())
    tau_zero = 1e-12 * scale
    tau_grad = 1e-4 * scale * field.resolution / TWO_PI

    corners = [_shifted(values, offset) for offset in _corner_offsets(dim)]
    low = np.min(corners, axis=0)
    high = np.max(corners, axis=0)
    nearest = np.min(np.abs(corners), axis=0)
    zero = ((low < 0) & (high > 0)) | (nearest <= tau_zero)

    h = field.spacing
    gradient = np.stack(
        [(np.roll(values, -1, axis=j) - np.roll(values, 1, axis=j)) / (2 * h) for j in range(dim)]
    )
    diagonal = gradient.sum(axis=0)
    cell_gradient = np.mean([_shifted(gradient, (0,) + offset) for offset in _corner_offsets(dim)], axis=0)
    norm = np.sqrt((cell_gradient ** 2).sum(axis=0))
    diagonal_corners = [_shifted(diagonal, offset) for offset in _corner_offsets(dim)]
    mixed = ~((np.min(diagonal_corners, axis=0) > 0) | (np.max(diagonal_corners, axis=0) < 0))

    singular = zero & ((norm < tau_grad) | mixed)
    near = np.zeros_like(singular)
    for offset in itertools.product((-1, 0, 1), repeat=dim):
        near |= _shifted(singular, offset)

    field.zero = zero
    field.singular = singular
    field.smooth = zero & ~near
    field.gradient_norm = norm
    logger.debug(
        "%d zero cells, %d singular, %d smooth (tau_grad %.3e)",
        int(zero.sum()), int(singular.sum()), int(field.smooth.sum()), tau_grad,
    )
    return field


def connected_components(field: TorusField) -> tuple[int, np.ndarray]:
    """面相邻的光滑零点单元，跨周期边界合并"""
    if field.smooth is None:
        classify_points(field)
    dim = field.dimension
    labels, count = ndimage.label(field.smooth, structure=ndimage.generate_binary_structure(dim, 1))

    merged = DisjointSet(range(1, count + 1))
    for axis in range(dim):
        first = np.take(labels, [0], axis=axis)
        last = np.take(labels, [field.resolution - 1], axis=axis)
        both = (first > 0) & (last > 0)
        for a, b in zip(first[both], last[both]):
            merged.merge(int(a), int(b))

    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    groups = []
    for subset in merged.subsets():
        members = sorted(subset)
        groups.append((int(sizes[members].sum()), members))
    groups.sort(key=lambda item: (-item[0], item[1][0]))

    relabel = np.zeros(count + 1, dtype=np.int32)
    for new_label, (_, members) in enumerate(groups, start=1):
        relabel[members] = new_label
    field.labels = relabel[labels]

    largest = groups[0][0] if groups else 0
    field.component_sizes = [size for size, _ in groups if size >= FRAGMENT_SHARE * largest]
    field.fragment_sizes = [size for size, _ in groups if size < FRAGMENT_SHARE * largest]
    if field.fragment_sizes:
        logger.warning("%d fragment(s) below %.0f%% of the largest component", len(field.fragment_sizes), 100 * FRAGMENT_SHARE)
    if field.degenerate:
        logger.warning("one-dimensional torus: the zero set is a finite point set")
    return field.n_components, field.labels


def _project(g: MetricGraph, points: np.ndarray, iterations: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """沿梯度做 Newton 迭代投影到 Phi = 0 上，返回 (点, 梯度)"""
    for _ in range(iterations):
        values = np.asarray(torus_value(g, points))
        gradient = np.asarray(torus_gradient(g, points))
        norm2 = np.maximum((gradient ** 2).sum(axis=-1), np.finfo(float).tiny)
        points = points - (values / norm2)[:, np.newaxis] * gradient
    return points, np.asarray(torus_gradient(g, points))


def gradient_sign_labels(field: TorusField, tolerance: float = GRADIENT_TOL) -> np.ndarray:
    """每个光滑单元取零点集上最近点的梯度符号 +1 / -1

    Raises:
        MixedSignAtSmoothCell
    """
    if field.labels is None:
        connected_components(field)
    signs = np.zeros(field.values.shape, dtype=np.int8)
    cells = np.argwhere(field.smooth)
    if len(cells) == 0:
        field.signs = signs
        return signs

    chunks = np.array_split(np.arange(len(cells)), max(1, math.ceil(len(cells) / 4096)))
    for chunk in chunks:
        _, gradient = _project(field.graph, field.cell_centers(cells[chunk]))
        direction = np.sign(gradient.sum(axis=-1))
        opposing = np.where(gradient * direction[:, np.newaxis] < 0, np.abs(gradient), 0.0).max(axis=-1)
        bad = opposing > tolerance
        if np.any(bad):
            where = tuple(int(i) for i in cells[chunk][np.argmax(bad)])
            raise MixedSignAtSmoothCell(f"gradient components of both signs at smooth cell {where}")
        signs[tuple(cells[chunk].T)] = direction.astype(np.int8)
    field.signs = signs
    return signs


def coloring_agreement(field: TorusField) -> float:
    """符号与所在分支多数符号一致的光滑单元所占比例"""
    if field.signs is None:
        gradient_sign_labels(field)
    agree = 0
    total = 0
    for label in range(1, int(field.labels.max()) + 1):
        members = field.signs[field.labels == label]
        if members.size == 0:
            continue
        agree += max(int((members > 0).sum()), int((members < 0).sum()))
        total += members.size
    return agree / total if total else 1.0


def component_signs(field: TorusField) -> list[int]:
    """每个计入分支的多数梯度符号"""
    if field.signs is None:
        gradient_sign_labels(field)
    result = []
    for label in range(1, field.n_components + 1):
        members = field.signs[field.labels == label]
        result.append(1 if (members > 0).sum() >= (members < 0).sum() else -1)
    return result


def theorem_hypothesis(g: MetricGraph) -> str:
    """适用哪种两分支结论：'loopless-leaf'、'bridge' 或 'none'"""
    if not find_loops(g) and any(g.degree(v) == 1 for v in g.vertex_ids):
        return "loopless-leaf"
    if find_bridges(g):
        return "bridge"
    return "none"


def _second_singular(g: MetricGraph):
    s = bond_scattering(g, 1.0)
    bond_edges = BondIndex(g.edge_ids).bond_edges
    dim = s.shape[0]

    def sigma2(kappa: np.ndarray) -> float:
        matrix = np.eye(dim) - s * np.exp(1j * kappa[bond_edges])[np.newaxis, :]
        return float(np.linalg.svd(matrix, compute_uv=False)[-2])

    return sigma2


def cross_check_singular(field: TorusField, g: MetricGraph, samples: int = 4) -> list[tuple[tuple[int, ...], int]]:
    """在采样的奇异单元附近取最近的边长实现，求其在 k = 1 处的重数

    在单元中心附近最小化 I - S e^{i kappa} 的第二小奇异值，
    再在 lambda = 1 处检查边长为 kappa + 2 pi 的图
    """
    if field.singular is None:
        classify_points(field)
    cells = np.argwhere(field.singular)
    if len(cells) == 0 or samples <= 0 or len(g.edges) < 2:
        return []
    picks = cells[np.linspace(0, len(cells) - 1, min(samples, len(cells))).astype(int)]
    sigma2 = _second_singular(g)
    results = []
    for cell in picks:
        start = field.cell_centers(cell[np.newaxis, :])[0]
        simplex = start + field.spacing * np.vstack([np.zeros(len(start)), np.eye(len(start))])
        best = minimize(
            sigma2, start, method="Nelder-Mead",
            options={"initial_simplex": simplex, "xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000},
        )
        lengths = np.mod(best.x, TWO_PI) + TWO_PI
        multiplicity = multiplicity_at(with_lengths(g, lengths), 1.0, null_tol=1e-6)
        results.append((tuple(int(i) for i in cell), multiplicity))
        logger.debug("singular cell %s: sigma_2 %.3e, multiplicity %d", tuple(cell), best.fun, multiplicity)
    return results


# ----------------------------------------------------------------------
# 导出
# ----------------------------------------------------------------------

def export_mesh(field: TorusField, path: str | Path) -> tuple[int, int]:
    """把零等值面按分支分组写成 v/f 行

    返回 (顶点数, 面数)

    Raises:
        DimensionNot3, IoError
    """
    if field.dimension != 3:
        raise DimensionNot3(f"mesh export needs a 3-torus, got dimension {field.dimension}")
    if field.labels is None:
        connected_components(field)

    padded = np.pad(field.values, ((0, 1),) * 3, mode="wrap")
    h = field.spacing
    if padded.min() < 0.0 < padded.max():
        verts, faces, _, _ = measure.marching_cubes(padded, level=0.0, spacing=(h, h, h))
    else:
        verts, faces = np.zeros((0, 3)), np.zeros((0, 3), dtype=int)

    groups: dict[int, list[np.ndarray]] = {}
    if len(faces):
        centroids = verts[faces].mean(axis=1)
        cells = np.floor(centroids / h).astype(int) % field.resolution
        face_labels = field.labels[tuple(cells.T)]
        for label in np.unique(face_labels):
            groups[int(label)] = faces[face_labels == label]

    lines = [f"# zero set of Phi, {field.graph.signature}, resolution {field.resolution}"]
    lines += [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in verts + field.origin]
    for label in sorted(groups):
        lines.append(f"g component_{label}" if label > 0 else "g singular")
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in groups[label]]
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write mesh '{path}': {exc}") from exc
    return len(verts), len(faces)


def dump_field(field: TorusField, path: str | Path) -> int:
    """写出 (kappa_1, ..., kappa_E, Phi) 行，返回行数"""
    axis = field.axis()
    grids = np.meshgrid(*([axis] * field.dimension), indexing="ij")
    columns = [grid.ravel() for grid in grids] + [field.values.ravel()]
    header = "\t".join([f"kappa{j + 1}" for j in range(field.dimension)] + ["phi"])
    try:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(header + "\n")
            for row in zip(*columns):
                handle.write("\t".join(f"{value:.12g}" for value in row) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write field dump '{path}': {exc}") from exc
    return len(columns[0])
