# metric_graph.py - 带delta型顶点条件的紧度量图
#
# 图是不可变值，所有操作都返回新图
# 边端点是 (边id, side) 对，side 0 在 x = 0 (端点 u)，
# side 1 在 x = length (端点 v)

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np
from networkx.algorithms import isomorphism

from engine.errors import (
    AlphaSumMismatch,
    DirichletAtInternalVertex,
    DirichletGlue,
    DisconnectedGraph,
    DuplicateId,
    EpsilonTooLarge,
    GraphSyntaxError,
    IoError,
    NonpositiveLength,
    OffsetOutOfRange,
    PartitionNotCovering,
    UnknownEdge,
    UnknownVertex,
)

logger = logging.getLogger(__name__)

EdgeEnd = tuple[str, int]


@dataclass(frozen=True)
class VertexCondition:
    """delta型条件：连续，且外向导数之和 = alpha * f(v)

    alpha = 0 即 Neumann-Kirchhoff (NK)；kind 为 "dirichlet" 时 f(v) = 0
    """

    kind: str = "delta"
    alpha: float = 0.0

    @classmethod
    def nk(cls) -> VertexCondition:
        return cls("delta", 0.0)

    @classmethod
    def delta(cls, alpha: float) -> VertexCondition:
        return cls("delta", float(alpha))

    @classmethod
    def dirichlet(cls) -> VertexCondition:
        return cls("dirichlet", 0.0)

    @property
    def is_dirichlet(self) -> bool:
        return self.kind == "dirichlet"

    @property
    def is_nk(self) -> bool:
        return self.kind == "delta" and self.alpha == 0.0

    @property
    def is_robin(self) -> bool:
        return self.kind == "delta" and self.alpha != 0.0

    def __str__(self) -> str:
        if self.is_dirichlet:
            return "dirichlet"
        if self.is_nk:
            return "nk"
        return f"delta {self.alpha!r}"


@dataclass(frozen=True)
class Vertex:
    id: str
    condition: VertexCondition = field(default_factory=VertexCondition.nk)


@dataclass(frozen=True)
class Edge:
    id: str
    u: str
    v: str
    length: float

    @property
    def is_loop(self) -> bool:
        return self.u == self.v

    def endpoint(self, side: int) -> str:
        return self.u if side == 0 else self.v


@dataclass(frozen=True)
class LoopDescriptor:
    attachment_vertex: str
    edge_chain: tuple[str, ...]
    intermediate_vertices: tuple[str, ...]
    total_length: float
    pure: bool


@dataclass(frozen=True)
class GraphSpec:
    """未经校验的图描述，即从描述文件读入的内容"""

    vertices: tuple[tuple[str, VertexCondition], ...] = ()
    edges: tuple[tuple[str, str, str, float], ...] = ()


@dataclass(frozen=True)
class MetricGraph:
    vertices: tuple[Vertex, ...]
    edges: tuple[Edge, ...]

    # -- 查询 ------------------------------------------------------------

    @cached_property
    def _vertex_map(self) -> dict[str, Vertex]:
        return {vtx.id: vtx for vtx in self.vertices}

    @cached_property
    def _edge_map(self) -> dict[str, Edge]:
        return {edge.id: edge for edge in self.edges}

    @cached_property
    def _incidence(self) -> dict[str, tuple[EdgeEnd, ...]]:
        ends: dict[str, list[EdgeEnd]] = {vtx.id: [] for vtx in self.vertices}
        for edge in self.edges:
            ends[edge.u].append((edge.id, 0))
            ends[edge.v].append((edge.id, 1))
        return {key: tuple(value) for key, value in ends.items()}

    @property
    def vertex_ids(self) -> tuple[str, ...]:
        return tuple(vtx.id for vtx in self.vertices)

    @property
    def edge_ids(self) -> tuple[str, ...]:
        return tuple(edge.id for edge in self.edges)

    def vertex(self, vertex_id: str) -> Vertex:
        try:
            return self._vertex_map[vertex_id]
        except KeyError:
            raise UnknownVertex(f"unknown vertex '{vertex_id}'") from None

    def edge(self, edge_id: str) -> Edge:
        try:
            return self._edge_map[edge_id]
        except KeyError:
            raise UnknownEdge(f"unknown edge '{edge_id}'") from None

    def edge_index(self, edge_id: str) -> int:
        self.edge(edge_id)
        return self.edge_ids.index(edge_id)

    def condition(self, vertex_id: str) -> VertexCondition:
        return self.vertex(vertex_id).condition

    def ends_at(self, vertex_id: str) -> tuple[EdgeEnd, ...]:
        self.vertex(vertex_id)
        return self._incidence[vertex_id]

    def degree(self, vertex_id: str) -> int:
        # 自环边的两个端点都计入
        return len(self.ends_at(vertex_id))

    def end_vertex(self, end: EdgeEnd) -> str:
        edge_id, side = end
        return self.edge(edge_id).endpoint(side)

    # -- 导出量 ----------------------------------------------------------

    @property
    def lengths(self) -> np.ndarray:
        return np.array([edge.length for edge in self.edges], dtype=float)

    @property
    def total_length(self) -> float:
        return float(sum(edge.length for edge in self.edges))

    @property
    def min_length(self) -> float:
        return float(min(edge.length for edge in self.edges))

    @property
    def has_robin(self) -> bool:
        return any(vtx.condition.is_robin for vtx in self.vertices)

    @property
    def negative_alpha_count(self) -> int:
        return sum(1 for vtx in self.vertices if vtx.condition.kind == "delta" and vtx.condition.alpha < 0)

    @cached_property
    def is_connected(self) -> bool:
        return nx.is_connected(self.to_networkx())

    @property
    def signature(self) -> str:
        return f"V={len(self.vertices)} E={len(self.edges)} L={self.total_length:.12g}"

    def to_networkx(self) -> nx.MultiGraph:
        graph = nx.MultiGraph()
        for vtx in self.vertices:
            graph.add_node(vtx.id, kind=vtx.condition.kind, alpha=vtx.condition.alpha)
        for edge in self.edges:
            graph.add_edge(edge.u, edge.v, key=edge.id, length=edge.length)
        return graph


# ----------------------------------------------------------------------
# 构造
# ----------------------------------------------------------------------

def _make_graph(vertices: Sequence[Vertex], edges: Sequence[Edge], require_connected: bool = True) -> MetricGraph:
    vertex_ids = [vtx.id for vtx in vertices]
    if len(set(vertex_ids)) != len(vertex_ids):
        dup = next(v for v in vertex_ids if vertex_ids.count(v) > 1)
        raise DuplicateId(f"duplicate vertex id '{dup}'")
    edge_ids = [edge.id for edge in edges]
    if len(set(edge_ids)) != len(edge_ids):
        dup = next(e for e in edge_ids if edge_ids.count(e) > 1)
        raise DuplicateId(f"duplicate edge id '{dup}'")
    if not edges:
        raise DisconnectedGraph("a metric graph needs at least one edge")

    known = set(vertex_ids)
    for edge in edges:
        for endpoint in (edge.u, edge.v):
            if endpoint not in known:
                raise UnknownVertex(f"edge '{edge.id}' refers to unknown vertex '{endpoint}'")
        if not (math.isfinite(edge.length) and edge.length > 0.0):
            raise NonpositiveLength(f"edge '{edge.id}' has length {edge.length!r}")

    graph = MetricGraph(tuple(vertices), tuple(edges))
    for vtx in graph.vertices:
        if vtx.condition.is_dirichlet and graph.degree(vtx.id) != 1:
            raise DirichletAtInternalVertex(
                f"Dirichlet condition at vertex '{vtx.id}' of degree {graph.degree(vtx.id)}"
            )
    if require_connected and not graph.is_connected:
        raise DisconnectedGraph("graph is not connected")
    return graph


def build_graph(spec: GraphSpec) -> MetricGraph:
    """校验图描述并构造图

    Raises:
        DisconnectedGraph, NonpositiveLength, DirichletAtInternalVertex, DuplicateId
    """
    vertices = [Vertex(vertex_id, condition) for vertex_id, condition in spec.vertices]
    edges = [Edge(edge_id, u, v, float(length)) for edge_id, u, v, length in spec.edges]
    return _make_graph(vertices, edges, require_connected=True)


def parse_graph(text: str) -> GraphSpec:
    """解析按行书写的图描述格式

    vertex <id> nk | delta <alpha> | dirichlet
    edge <id> <u> <v> <length>
    """
    vertices: list[tuple[str, VertexCondition]] = []
    edges: list[tuple[str, str, str, float]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        keyword = words[0].lower()
        if keyword == "vertex":
            if len(words) < 3:
                raise GraphSyntaxError("expected 'vertex <id> nk|delta <alpha>|dirichlet'", line_no)
            kind = words[2].lower()
            if kind == "nk" and len(words) == 3:
                condition = VertexCondition.nk()
            elif kind == "dirichlet" and len(words) == 3:
                condition = VertexCondition.dirichlet()
            elif kind == "delta" and len(words) == 4:
                condition = VertexCondition.delta(_parse_real(words[3], line_no))
            else:
                raise GraphSyntaxError(f"bad vertex condition '{' '.join(words[2:])}'", line_no)
            vertices.append((words[1], condition))
        elif keyword == "edge":
            if len(words) != 5:
                raise GraphSyntaxError("expected 'edge <id> <u> <v> <length>'", line_no)
            edges.append((words[1], words[2], words[3], _parse_real(words[4], line_no)))
        else:
            raise GraphSyntaxError(f"unknown keyword '{words[0]}'", line_no)
    return GraphSpec(tuple(vertices), tuple(edges))


def _parse_real(token: str, line_no: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise GraphSyntaxError(f"'{token}' is not a real number", line_no) from None
    if math.isnan(value):
        raise GraphSyntaxError(f"'{token}' is not a real number", line_no)
    return value


def load_graph(path: str | Path) -> MetricGraph:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read graph file '{path}': {exc}") from exc
    return build_graph(parse_graph(text))


def format_graph(g: MetricGraph) -> str:
    lines = [f"vertex {vtx.id} {vtx.condition}" for vtx in g.vertices]
    lines += [f"edge {edge.id} {edge.u} {edge.v} {edge.length!r}" for edge in g.edges]
    return "\n".join(lines) + "\n"


def disjoint_union(g1: MetricGraph, g2: MetricGraph) -> MetricGraph:
    """把两个图并排放置，结果标记为不连通"""
    return _make_graph(g1.vertices + g2.vertices, g1.edges + g2.edges, require_connected=False)


def with_condition(g: MetricGraph, vertex_id: str, condition: VertexCondition) -> MetricGraph:
    g.vertex(vertex_id)
    vertices = [replace(vtx, condition=condition) if vtx.id == vertex_id else vtx for vtx in g.vertices]
    return _make_graph(vertices, g.edges, require_connected=False)


def with_lengths(g: MetricGraph, lengths: Mapping[str, float] | Sequence[float]) -> MetricGraph:
    if isinstance(lengths, Mapping):
        for edge_id in lengths:
            g.edge(edge_id)
        edges = [replace(edge, length=float(lengths.get(edge.id, edge.length))) for edge in g.edges]
    else:
        values = list(lengths)
        if len(values) != len(g.edges):
            raise ValueError(f"expected {len(g.edges)} lengths, got {len(values)}")
        edges = [replace(edge, length=float(value)) for edge, value in zip(g.edges, values)]
    return _make_graph(g.vertices, edges, require_connected=False)


def _fresh_id(taken: Iterable[str], base: str) -> str:
    taken = set(taken)
    if base not in taken:
        return base
    n = 1
    while f"{base}{n}" in taken:
        n += 1
    return f"{base}{n}"


# ----------------------------------------------------------------------
# 平凡顶点与环
# ----------------------------------------------------------------------

def insert_trivial_vertex(g: MetricGraph, edge: str, offset: float, vertex_id: str | None = None) -> MetricGraph:
    """在 offset 处用一个2度NK顶点把边切开"""
    target = g.edge(edge)
    if not (0.0 < offset < target.length):
        raise OffsetOutOfRange(f"offset {offset!r} not inside (0, {target.length!r}) on edge '{edge}'")

    new_vertex = vertex_id or _fresh_id(g.vertex_ids, f"{edge}_t")
    if new_vertex in g.vertex_ids:
        raise DuplicateId(f"duplicate vertex id '{new_vertex}'")
    first_id = _fresh_id(g.edge_ids, f"{edge}.1")
    second_id = _fresh_id(set(g.edge_ids) | {first_id}, f"{edge}.2")

    edges: list[Edge] = []
    for current in g.edges:
        if current.id == edge:
            edges.append(Edge(first_id, current.u, new_vertex, float(offset)))
            edges.append(Edge(second_id, new_vertex, current.v, current.length - float(offset)))
        else:
            edges.append(current)
    vertices = list(g.vertices) + [Vertex(new_vertex, VertexCondition.nk())]
    return _make_graph(vertices, edges, require_connected=False)


def suppress_trivial_vertices(g: MetricGraph) -> MetricGraph:
    """拼接两条边，去掉所有2度NK顶点

    2度顶点上的自环边保留：该顶点是圆周上最后一个锚点
    """
    vertices = list(g.vertices)
    edges = list(g.edges)
    changed = True
    while changed:
        changed = False
        for vtx in vertices:
            if not vtx.condition.is_nk:
                continue
            ends = [(edge.id, side) for edge in edges for side in (0, 1) if edge.endpoint(side) == vtx.id]
            if len(ends) != 2 or ends[0][0] == ends[1][0]:
                continue
            (first_id, first_side), (second_id, second_side) = ends
            first = next(edge for edge in edges if edge.id == first_id)
            second = next(edge for edge in edges if edge.id == second_id)
            merged = Edge(
                first.id,
                first.endpoint(1 - first_side),
                second.endpoint(1 - second_side),
                first.length + second.length,
            )
            edges = [merged if edge.id == first.id else edge for edge in edges if edge.id != second.id]
            vertices = [other for other in vertices if other.id != vtx.id]
            changed = True
            break
    return _make_graph(vertices, edges, require_connected=False)


def is_circle(g: MetricGraph) -> bool:
    """图恰为一条由NK顶点组成的闭链时为 True"""
    return g.is_connected and all(
        vtx.condition.is_nk and g.degree(vtx.id) == 2 for vtx in g.vertices
    )


def find_loops(g: MetricGraph) -> list[LoopDescriptor]:
    """所有极大环：由2度顶点组成、首尾落在同一连接顶点上的链"""
    degree = {vertex_id: g.degree(vertex_id) for vertex_id in g.vertex_ids}
    anchors = [vertex_id for vertex_id in g.vertex_ids if degree[vertex_id] != 2]
    if not anchors and g.is_connected:
        # 整个图是一个圈；若有非NK顶点则以其为锚点
        non_nk = [vtx.id for vtx in g.vertices if not vtx.condition.is_nk]
        anchors = [non_nk[0] if non_nk else g.vertices[0].id]

    loops: list[LoopDescriptor] = []
    seen: set[frozenset[str]] = set()
    for anchor in anchors:
        for edge_id, side in g.ends_at(anchor):
            chain = [edge_id]
            intermediate: list[str] = []
            far_end = (edge_id, 1 - side)
            current = g.end_vertex(far_end)
            while current != anchor and degree[current] == 2 and len(chain) <= len(g.edges):
                intermediate.append(current)
                next_end = next(end for end in g.ends_at(current) if end != far_end)
                chain.append(next_end[0])
                far_end = (next_end[0], 1 - next_end[1])
                current = g.end_vertex(far_end)
            if current != anchor:
                continue
            key = frozenset(chain)
            if key in seen:
                continue
            seen.add(key)
            loops.append(
                LoopDescriptor(
                    attachment_vertex=anchor,
                    edge_chain=tuple(chain),
                    intermediate_vertices=tuple(intermediate),
                    total_length=float(sum(g.edge(e).length for e in chain)),
                    pure=all(g.condition(v).is_nk for v in intermediate),
                )
            )
    return loops


def find_bridges(g: MetricGraph) -> list[str]:
    """删除后使图不连通的边"""
    graph = g.to_networkx()
    graph.remove_edges_from(list(nx.selfloop_edges(graph, keys=True)))
    bridges = []
    for u, v in nx.bridges(graph):
        keys = list(graph[u][v])
        if len(keys) == 1:
            bridges.append(keys[0])
    return [edge_id for edge_id in g.edge_ids if edge_id in set(bridges)]


# ----------------------------------------------------------------------
# 图的手术操作
# ----------------------------------------------------------------------

def split_vertex(
    g: MetricGraph,
    v: str,
    partition: tuple[Iterable[EdgeEnd], Iterable[EdgeEnd]],
    alphas: tuple[float, float],
    new_ids: tuple[str | None, str | None] = (None, None),
) -> MetricGraph:
    """把 v 替换为分担其边端点的两个顶点，alpha_1 + alpha_2 = alpha_v

    结果可能不连通，需要检查其 is_connected
    """
    ends = set(g.ends_at(v))
    first = {(str(e), int(s)) for e, s in partition[0]}
    second = {(str(e), int(s)) for e, s in partition[1]}
    if not first or not second or first & second or (first | second) != ends:
        raise PartitionNotCovering(f"partition does not split the edge-ends of '{v}' into two non-empty parts")
    condition = g.condition(v)
    alpha_1, alpha_2 = float(alphas[0]), float(alphas[1])
    if not math.isclose(alpha_1 + alpha_2, condition.alpha, rel_tol=1e-12, abs_tol=1e-12):
        raise AlphaSumMismatch(f"alphas {alpha_1!r} + {alpha_2!r} != {condition.alpha!r} at '{v}'")

    first_id = new_ids[0] or v
    second_id = new_ids[1] or _fresh_id(set(g.vertex_ids) | {first_id}, f"{v}'")

    edges = []
    for edge in g.edges:
        u_new = edge.u
        v_new = edge.v
        if edge.u == v:
            u_new = second_id if (edge.id, 0) in second else first_id
        if edge.v == v:
            v_new = second_id if (edge.id, 1) in second else first_id
        edges.append(Edge(edge.id, u_new, v_new, edge.length))

    vertices: list[Vertex] = []
    for vtx in g.vertices:
        if vtx.id == v:
            vertices.append(Vertex(first_id, VertexCondition.delta(alpha_1)))
            vertices.append(Vertex(second_id, VertexCondition.delta(alpha_2)))
        else:
            vertices.append(vtx)
    result = _make_graph(vertices, edges, require_connected=False)
    if not result.is_connected:
        logger.debug("split of vertex %s disconnected the graph", v)
    return result


def glue_vertices(g: MetricGraph, v1: str, v2: str, new_id: str | None = None) -> MetricGraph:
    """把两个delta顶点粘合，系数相加"""
    first, second = g.condition(v1), g.condition(v2)
    if first.is_dirichlet or second.is_dirichlet:
        raise DirichletGlue(f"cannot glue Dirichlet vertex ('{v1}', '{v2}')")
    if v1 == v2:
        raise PartitionNotCovering("cannot glue a vertex to itself")
    glued = new_id or v1
    if glued in g.vertex_ids and glued not in (v1, v2):
        raise DuplicateId(f"duplicate vertex id '{glued}'")

    def rename(vertex_id: str) -> str:
        return glued if vertex_id in (v1, v2) else vertex_id

    edges = [Edge(edge.id, rename(edge.u), rename(edge.v), edge.length) for edge in g.edges]
    vertices: list[Vertex] = []
    for vtx in g.vertices:
        if vtx.id == v1:
            vertices.append(Vertex(glued, VertexCondition.delta(first.alpha + second.alpha)))
        elif vtx.id != v2:
            vertices.append(vtx)
    return _make_graph(vertices, edges, require_connected=False)


def perturb_lengths(g: MetricGraph, epsilon: float, rng_seed: int) -> MetricGraph:
    """每条边长独立加上 [-epsilon, epsilon] 上的均匀随机量"""
    if epsilon < 0.0 or epsilon >= g.min_length:
        raise EpsilonTooLarge(f"epsilon {epsilon!r} must lie in [0, {g.min_length!r})")
    if epsilon == 0.0:
        return g
    rng = np.random.default_rng(rng_seed)
    shifts = rng.uniform(-epsilon, epsilon, size=len(g.edges))
    return with_lengths(g, g.lengths + shifts)


def is_isomorphic(g1: MetricGraph, g2: MetricGraph, rel_tol: float = 1e-9) -> bool:
    """保持顶点条件和边长的同构判定"""

    def same_condition(a: dict, b: dict) -> bool:
        return a["kind"] == b["kind"] and math.isclose(a["alpha"], b["alpha"], rel_tol=rel_tol, abs_tol=1e-12)

    def same_length(a: float, b: float) -> bool:
        return math.isclose(a, b, rel_tol=rel_tol)

    edge_match = isomorphism.generic_multiedge_match("length", 0.0, same_length)
    return nx.is_isomorphic(g1.to_networkx(), g2.to_networkx(), node_match=same_condition, edge_match=edge_match)
