# interlace.py - 顶点系数变化时的特征值交错检验

from typing import Dict

from core import settings
from core.arguments import CommandParser, alpha_list, positive_int
from core.output_processor import OutputProcessor, Reply
from engine.genericity import verify_interlacing
from engine.metric_graph import load_graph
from engine.spectral import ScanOptions


def get_info() -> Dict[str, str]:
    return {
        "keyword": "interlace",
        "description": "interlacing of the first N eigenvalues between consecutive coefficients at one vertex",
        "usage": "interlace <graph> --vertex <id> --alphas <a1,a2,...> [--n <N>]",
        "example": "interlace graphs/interval_dirichlet.qg --vertex v1 --alphas 0,inf",
    }


def _parser() -> CommandParser:
    parser = CommandParser("interlace")
    parser.add_argument("graph")
    parser.add_argument("--vertex", required=True)
    # 逗号分隔，相邻两个系数组成一对，inf 表示 Dirichlet
    parser.add_argument("--alphas", type=alpha_list, required=True)
    parser.add_argument("--n", type=positive_int, default=settings.get("n"))
    return parser


def execute(request_dict: Dict) -> Reply:
    args = _parser().parse_args(request_dict.get('args', []))
    g = load_graph(args.graph)
    g.vertex(args.vertex)
    pairs = list(zip(args.alphas, args.alphas[1:]))
    results = verify_interlacing(g, args.vertex, pairs, args.n, ScanOptions(threads=request_dict.get('threads', 1)))

    text = OutputProcessor.table(
        ("alpha", "alpha_prime", "worst_margin", "strict_expected", "strict_violations", "ok"),
        (
            (r.alpha, r.alpha_prime, r.worst_margin, len(r.strict_expected), len(r.strict_violations), r.ok)
            for r in results
        ),
    )
    return Reply(text, 0 if all(r.ok for r in results) else 2)
