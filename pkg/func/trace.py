# trace.py - 沿叶顶点条件角θ延拓特征值

from typing import Dict

from core import settings
from core.arguments import CommandParser, nonnegative_int, positive_int
from core.output_processor import OutputProcessor, Reply
from engine.genericity import trace_theta_path
from engine.metric_graph import load_graph
from engine.spectral import ScanOptions

RESIDUAL_TOL = 1e-7


def get_info() -> Dict[str, str]:
    return {
        "keyword": "trace",
        "description": "follow one eigenvalue while the leaf condition angle winds down by whole turns",
        "usage": "trace <graph> --leaf <id> --start <n> [--turns <even>] [--steps <s>]",
        "example": "trace graphs/star3_dirichlet.qg --leaf v1 --start 3 --turns 2",
    }


def _parser() -> CommandParser:
    parser = CommandParser("trace")
    parser.add_argument("graph")
    parser.add_argument("--leaf", required=True)
    parser.add_argument("--start", type=nonnegative_int, required=True)
    parser.add_argument("--turns", type=nonnegative_int, default=settings.get("turns"))
    parser.add_argument("--steps", type=positive_int, default=settings.get("steps_per_turn"))
    return parser


def execute(request_dict: Dict) -> Reply:
    args = _parser().parse_args(request_dict.get('args', []))
    g = load_graph(args.graph)
    path = trace_theta_path(
        g, args.leaf, args.start, args.turns, args.steps,
        ScanOptions(threads=request_dict.get('threads', 1)),
    )

    samples = OutputProcessor.table(
        ("theta", "lambda", "extended_length", "residual", "single_signed"),
        (
            (s.theta, s.lam, s.extended_length, s.phi_residual, s.gradient_single_signed)
            for s in path.samples
        ),
    )
    summary = OutputProcessor.key_values([
        ("leaf", path.leaf),
        ("edge", path.edge),
        ("start_index", path.start_index),
        ("end_index", path.end_index),
        ("max_residual", path.max_residual),
        ("consistency", path.consistency),
    ])
    return Reply(OutputProcessor.join(samples, summary), 0 if path.max_residual <= RESIDUAL_TOL else 2)
