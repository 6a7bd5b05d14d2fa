"""Packaged benchmark and example programs, plus the stress generator."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Dict, Optional, Tuple


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    file: str
    recursive: bool
    bench: bool
    expected: object  # concrete run result; None = don't check here


CORPUS: Tuple[CorpusEntry, ...] = (
    CorpusEntry("len", "len.scm", True, True, 3),
    CorpusEntry("rev-iter", "rev-iter.scm", True, True, 14),
    CorpusEntry("len-y", "len-y.scm", True, True, 3),
    CorpusEntry("tree-count", "tree-count.scm", True, True, 554),
    CorpusEntry("ins-sort", "ins-sort.scm", True, True, 10),
    CorpusEntry("dfs", "dfs.scm", True, True, 156),
    CorpusEntry("flatten", "flatten.scm", True, True, 20),
    CorpusEntry("sets", "sets.scm", True, True, 10),
    CorpusEntry("church-nums", "church-nums.scm", False, True, True),
    CorpusEntry("double-id", "double-id.scm", False, False, 2),
    CorpusEntry("app-id", "app-id.scm", False, False, 3),
    CorpusEntry("compose-same", "compose-same.scm", False, False, 7),
    CorpusEntry("fake-rebind", "fake-rebind.scm", False, False, "foo"),
    CorpusEntry("eta-id", "eta-id.scm", False, False, 2),
    CorpusEntry("eta-heap-id", "eta-heap-id.scm", False, False, 2),
)

#: Constants found per analysis (0CFA, 1CFA, CFA2) in the published
#: benchmark table; our re-authored corpus is checked against these.
PAPER_CONSTANTS: Dict[str, Tuple[int, int, int]] = {
    "len": (0, 0, 2),
    "rev-iter": (0, 0, 4),
    "len-y": (0, 0, 2),
    "tree-count": (2, 6, 10),
    "ins-sort": (0, 0, 4),
    "dfs": (8, 8, 16),
    "flatten": (0, 0, 5),
    "sets": (0, 0, 4),
    "church-nums": (0, 0, 0),
}


def entry(name: str) -> CorpusEntry:
    for e in CORPUS:
        if e.name == name:
            return e
    raise KeyError(name)


def bench_entries() -> Tuple[CorpusEntry, ...]:
    return tuple(e for e in CORPUS if e.bench)


def load(name: str) -> str:
    """Source text of a corpus program by name."""
    return (resources.files(__package__) / "corpus"
            / entry(name).file).read_text()


def witness(n: int) -> str:
    """Stress program of size n: each strong update on a two-lambda set
    doubles the live frame variants, so analysis work grows exponentially.
    """
    if n < 1:
        raise ValueError("witness size must be >= 1")
    lines = ["(let* ((merger (lambda (f) (lambda (z) f)))",
             "       (m0 (merger (lambda (x) x)))",
             "       (clos (merger (lambda (y) y)))"]
    for i in range(1, n + 1):
        lines.append(f"       (f{i} (clos 0))")
        lines.append(f"       (d{i} (f{i} 0))")
    lines.append("       )")
    lines.append("  0)")
    return "\n".join(lines)
