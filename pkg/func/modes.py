# modes.py - 特征函数及其支撑分类

from typing import Dict

from core import settings
from core.arguments import CommandParser, nonnegative_int, positive_int
from core.output_processor import OutputProcessor, Reply
from engine.eigenmode import (
    AmbiguousLoopSupport,
    LoopSupported,
    VanishesAtVertices,
    eigenfunctions_at,
    sample_table,
)
from engine.metric_graph import load_graph
from engine.spectral import ScanOptions, lowest_eigenvalues


def get_info() -> Dict[str, str]:
    return {
        "keyword": "modes",
        "description": "orthonormal eigenfunctions of the first N eigenvalues, classified by support",
        "usage": "modes <graph> [--n <N>] [--samples <m>]",
        "example": "modes graphs/lollipop.qg --n 8 --samples 5",
    }


def _parser() -> CommandParser:
    parser = CommandParser("modes")
    parser.add_argument("graph")
    parser.add_argument("--n", type=positive_int, default=settings.get("n"))
    parser.add_argument("--samples", type=nonnegative_int, default=settings.get("samples"))
    return parser


def _detail(support) -> str:
    if isinstance(support, VanishesAtVertices):
        return ",".join(support.vertices)
    if isinstance(support, LoopSupported):
        return support.loop.attachment_vertex + ":" + ",".join(support.loop.edge_chain)
    if isinstance(support, AmbiguousLoopSupport):
        return ";".join(loop.attachment_vertex + ":" + ",".join(loop.edge_chain) for loop in support.loops)
    return "-"


def execute(request_dict: Dict) -> Reply:
    args = _parser().parse_args(request_dict.get('args', []))
    g = load_graph(args.graph)
    records = lowest_eigenvalues(g, args.n, ScanOptions(threads=request_dict.get('threads', 1)))

    functions = [
        f for record in records for f in eigenfunctions_at(g, record) if f.index < args.n
    ]
    text = OutputProcessor.table(
        ("index", "lambda", "multiplicity", "class", "detail"),
        (
            (f.index, f.lam, next(r.multiplicity for r in records if f.index in r.index_range),
             f.classification.label, _detail(f.classification))
            for f in functions
        ),
    )
    if args.samples:
        samples = OutputProcessor.table(("index", "edge", "x", "value"), sample_table(functions, args.samples))
        text = OutputProcessor.join(text, samples)
    return Reply(text)
