# generic.py - 随机扰动边长的一般性检验

from typing import Dict

from core import settings
from core.arguments import CommandParser, nonnegative_int, positive_int
from core.output_processor import OutputProcessor, Reply
from engine.genericity import randomized_genericity_trial
from engine.metric_graph import load_graph
from engine.spectral import ScanOptions


def get_info() -> Dict[str, str]:
    return {
        "keyword": "generic",
        "description": "simplicity and vertex non-vanishing of the first N eigenpairs over random length perturbations",
        "usage": "generic <graph> [--trials <t>] [--eps <e>] [--n <N>] [--seed <s>]",
        "example": "generic graphs/star3_nk.qg --trials 100 --eps 0.05 --n 12",
    }


def _parser() -> CommandParser:
    parser = CommandParser("generic")
    parser.add_argument("graph")
    parser.add_argument("--trials", type=nonnegative_int, default=settings.get("trials"))
    parser.add_argument("--eps", type=float, default=settings.get("eps"))
    parser.add_argument("--n", type=positive_int, default=settings.get("n"))
    parser.add_argument("--seed", type=int, default=settings.get("seed"))
    return parser


def execute(request_dict: Dict) -> Reply:
    args = _parser().parse_args(request_dict.get('args', []))
    g = load_graph(args.graph)
    summary = randomized_genericity_trial(
        g, args.trials, args.eps, args.n, args.seed,
        threads=request_dict.get('threads', 1),
        options=ScanOptions(),
        gap_threshold=settings.get("gap_threshold"),
    )

    trials = OutputProcessor.table(
        ("trial", "min_gap", "simple", "nonvanishing", "loop_states", "passed"),
        (
            (i, report.min_spectral_gap, report.simple, report.nonvanishing_ok, len(report.loop_states), report.passed)
            for i, report in enumerate(summary.reports)
        ),
    )
    totals = OutputProcessor.key_values([
        ("trials", summary.trials),
        ("passed", summary.passed),
        ("fraction", summary.fraction),
    ])
    return Reply(OutputProcessor.join(trials, totals), 0 if summary.passed == summary.trials else 2)
