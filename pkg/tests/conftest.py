import os
from pathlib import Path

import pytest

from hammock.trees import DecisionTree, TreeEnsemble, ensemble_from_dict

DATA_DIR = Path(os.environ.get("HAMMOCK_DATA_DIR", Path(__file__).resolve().parents[1] / "data"))

# thresholds t1=0.5 on f1 (index 0) and t2=0.3 on f2 (index 1); leaves 1.3, -0.5, 0.4
EXAMPLE_NODES = [
    {"id": 0, "feature": 0, "threshold": 0.5, "left": 1, "right": 2},
    {"id": 1, "feature": 1, "threshold": 0.3, "left": 3, "right": 4},
    {"id": 2, "leaf": 0.4},
    {"id": 3, "leaf": 1.3},
    {"id": 4, "leaf": -0.5},
]

EXAMPLE_DOC = {"num_features": 2, "task": "regression", "base_score": 0.0,
            "trees": [{"nodes": EXAMPLE_NODES}]}


@pytest.fixture
def example_tree():
    return DecisionTree.from_nodes(EXAMPLE_NODES, 2)


@pytest.fixture
def example_ensemble():
    return ensemble_from_dict(EXAMPLE_DOC)


@pytest.fixture
def example_doc():
    return {**EXAMPLE_DOC, "trees": [{"nodes": [dict(n) for n in EXAMPLE_NODES]}]}


_acceptance_lines = []


@pytest.fixture
def acceptance_log():
    def record(criterion, ok, detail=""):
        _acceptance_lines.append(f"{'PASS' if ok else 'FAIL'}  {criterion}  {detail}".rstrip())
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
