import os
import sys

import pytest

# 添加项目根目录到Python路径
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from engine.metric_graph import load_graph  # noqa: E402

GRAPHS_DIR = os.path.join(project_root, 'graphs')

CORPUS = (
    "interval_dirichlet",
    "interval_nk",
    "circle",
    "figure8",
    "figure8_equal",
    "star3_dirichlet",
    "star3_nk",
    "mandarin3",
    "lollipop",
    "cycle_tail",
    "impure_loop",
)


def graph_path(name: str) -> str:
    return os.path.join(GRAPHS_DIR, f"{name}.qg")


@pytest.fixture
def corpus():
    """读取 graphs/ 目录下的图描述文件"""
    return lambda name: load_graph(graph_path(name))
