"""Analyzer tuning flags shared by the abstract, local, and workset layers."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class AnalyzerConfig:
    """Operating point of the pushdown analysis.

    stack_filtering: strong-update the operator binding in the caller
        frame when committing to one callee (default on).
    heap_widening: one global monotone heap with restart on growth,
        instead of per-state heaps (default off).
    branch_pruning: take only one arm when the test set is exactly
        {#t} or {#f} (default on; shared by every analysis for fairness).
    """

    stack_filtering: bool = True
    heap_widening: bool = False
    branch_pruning: bool = True


DEFAULT_CONFIG = AnalyzerConfig()
