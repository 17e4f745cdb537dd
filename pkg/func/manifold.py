# manifold.py - 久期流形的光滑分支计数与网格导出

import math
from typing import Dict

from core import settings
from core.arguments import CommandParser, nonnegative_int, positive_int
from core.output_processor import OutputProcessor, Reply
from engine.manifold import (
    classify_points,
    coloring_agreement,
    connected_components,
    cross_check_singular,
    dump_field,
    export_mesh,
    gradient_sign_labels,
    sample_field,
    theorem_hypothesis,
)
from engine.metric_graph import load_graph


def get_info() -> Dict[str, str]:
    return {
        "keyword": "manifold",
        "description": "smooth connected components of the zero set of the torus function",
        "usage": "manifold <graph> [--res <r>] [--mesh <path>] [--dump <path>] [--origin <r>] [--cross-check <m>]",
        "example": "manifold graphs/star3_dirichlet.qg --res 128 --mesh out.mesh",
    }


def _parser() -> CommandParser:
    parser = CommandParser("manifold")
    parser.add_argument("graph")
    parser.add_argument("--res", type=positive_int, default=settings.get("resolution"))
    parser.add_argument("--mesh")
    parser.add_argument("--dump")
    parser.add_argument("--origin", type=float, default=0.0)
    parser.add_argument("--cross-check", dest="cross_check", type=nonnegative_int, default=0)
    return parser


def execute(request_dict: Dict) -> Reply:
    args = _parser().parse_args(request_dict.get('args', []))
    g = load_graph(args.graph)
    field = sample_field(g, args.res, origin=args.origin, threads=request_dict.get('threads', 1))
    classify_points(field)
    count, _ = connected_components(field)
    hypothesis = theorem_hypothesis(g)

    rows = [
        ("signature", g.signature),
        ("dimension", field.dimension),
        ("resolution", field.resolution),
        ("zero_cells", int(field.zero.sum())),
        ("singular_cells", int(field.singular.sum())),
        ("smooth_cells", int(field.smooth.sum())),
        ("components", count),
        ("fragments", len(field.fragment_sizes)),
        ("degenerate", field.degenerate),
        ("hypothesis", hypothesis),
    ]
    agreement = math.nan
    if not field.degenerate:
        gradient_sign_labels(field)
        agreement = coloring_agreement(field)
        rows.append(("coloring_agreement", agreement))

    if args.cross_check:
        checks = cross_check_singular(field, g, args.cross_check)
        rows.append(("singular_checked", len(checks)))
        rows.append(("singular_confirmed", sum(1 for _, multiplicity in checks if multiplicity >= 2)))
    if args.dump:
        rows.append(("dump_rows", dump_field(field, args.dump)))
    if args.mesh:
        vertices, faces = export_mesh(field, args.mesh)
        rows.append(("mesh_vertices", vertices))
        rows.append(("mesh_faces", faces))

    exit_code = 0
    if hypothesis != "none" and not field.degenerate and (count != 2 or agreement < 1.0):
        exit_code = 2
    return Reply(OutputProcessor.key_values(rows), exit_code)
