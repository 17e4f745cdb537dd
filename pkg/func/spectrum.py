# spectrum.py - 特征值扫描命令

from typing import Dict, List

from core import settings
from core.arguments import CommandParser
from core.output_processor import OutputProcessor, Reply
from engine.metric_graph import load_graph
from engine.spectral import EigenvalueRecord, ScanOptions, scan_spectrum, secular_roots

SECULAR_K_MIN = 0.1
AGREEMENT_TOL = 1e-9


def get_info() -> Dict[str, str]:
    return {
        "keyword": "spectrum",
        "description": "eigenvalues with k in [0, kmax] and their multiplicities",
        "usage": "spectrum <graph> [--kmax <r>] [--compare]",
        "example": "spectrum graphs/circle.qg --kmax 3.5",
    }


def _parser() -> CommandParser:
    parser = CommandParser("spectrum")
    parser.add_argument("graph")
    parser.add_argument("--kmax", type=float, default=settings.get("kmax"))
    parser.add_argument("--compare", action="store_true",
                        help="also locate the roots of the secular determinant and compare")
    return parser


def compare_methods(direct: List[EigenvalueRecord], secular: List[EigenvalueRecord]) -> List[tuple]:
    """
    按k逐一配对两种方法的根，返回 (k_direct, k_secular, 重数一致) 行
    """
    positive = [record for record in direct if not record.negative and record.k > SECULAR_K_MIN]
    rows = []
    remaining = list(secular)
    for record in positive:
        match = min(remaining, key=lambda r: abs(r.k - record.k), default=None)
        if match is None or abs(match.k - record.k) > AGREEMENT_TOL * (1.0 + record.k):
            rows.append((record.k, None, False))
            continue
        remaining.remove(match)
        rows.append((record.k, match.k, match.multiplicity == record.multiplicity))
    rows.extend((None, extra.k, False) for extra in remaining)
    return rows


def execute(request_dict: Dict) -> Reply:
    args = _parser().parse_args(request_dict.get('args', []))
    g = load_graph(args.graph)
    options = ScanOptions(threads=request_dict.get('threads', 1))
    records = scan_spectrum(g, args.kmax, options)

    text = OutputProcessor.table(
        ("k", "lambda", "multiplicity"),
        ((record.k, record.lam, record.multiplicity) for record in records),
    )
    if not args.compare:
        return Reply(text)

    rows = compare_methods(records, secular_roots(g, args.kmax, options, k_min=SECULAR_K_MIN))
    agreement = OutputProcessor.table(("k_direct", "k_secular", "agree"), rows)
    exit_code = 0 if all(row[2] for row in rows) else 2
    return Reply(OutputProcessor.join(text, agreement), exit_code)
