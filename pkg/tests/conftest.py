import os
from pathlib import Path

import numpy as np
import pytest

from mebns.graph import Graph, convert_linqs, load_graph

CORA_DIR = Path(os.environ.get("MEBNS_CORA_DIR", Path(__file__).resolve().parents[1] / "data" / "cora"))


def path_graph(n, features=None):
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)], features)


def random_graph(rng, n, p=0.4, f=3):
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return Graph.from_edges(n, edges, rng.normal(size=(n, f)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def cora_files():
    """(edges, features) for the real Cora graph, or None when it is not on disk."""
    e, f = CORA_DIR / "edges.tsv", CORA_DIR / "features.csv"
    if e.exists() and f.exists():
        return e, f
    c, k = CORA_DIR / "cora.content", CORA_DIR / "cora.cites"
    if c.exists() and k.exists():
        return convert_linqs(c, k, CORA_DIR)
    return None


def load_cora():
    files = cora_files()
    if files is None:
        return None
    return load_graph(*files)


# -- acceptance verdicts -----------------------------------------------------------

ACCEPTANCE = []  # (criterion id, verdict, detail) in run order


class criterion:
    """Context manager recording one PASS/FAIL line for an acceptance criterion."""

    def __init__(self, cid, title):
        self.cid, self.title = cid, title
        self.details = []

    def note(self, text):
        self.details.append(str(text))

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        verdict = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.details)
        if exc is not None:
            msg = " ".join(str(exc).split())[:200]
            detail = f"{detail}; {msg}" if detail else msg
        line = f"criterion {self.cid} {verdict}: {self.title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE.append(line)
        print(line)
        return False


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
