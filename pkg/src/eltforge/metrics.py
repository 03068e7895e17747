"""Generation-variance and compile metrics over serialized pipelines.

Similarity is gestalt pattern matching (Ratcliff-Obershelp): the ratio
2*M/(|a|+|b|) where M is the total size of matching blocks found by recursive
longest-common-substring decomposition. The duplication Gini is the
mean-absolute-difference Gini coefficient over occurrence counts of unique
pipeline versions: 0 when every version is distinct or equally frequent,
approaching 1 as generations collapse onto a single dominant version.
"""

from __future__ import annotations

import statistics
from collections import Counter
from dataclasses import dataclass
from difflib import SequenceMatcher
from itertools import combinations
from typing import Any, Iterable, Sequence


class UsageError(ValueError):
    """A metric was called with inputs outside its contract."""


def gestalt_ratio(a: str, b: str) -> float:
    """Directional Ratcliff-Obershelp ratio: 2*M/(|a|+|b|).

    M is the total matched characters from recursive longest-common-substring
    decomposition, ties resolved to the block starting earliest in ``a`` then
    earliest in ``b``. Two empty strings compare as 1.0. autojunk stays off so
    long inputs are matched exactly.
    """
    return SequenceMatcher(None, a, b, autojunk=False).ratio()


def similarity(a: str, b: str) -> float:
    """Symmetric Ratcliff-Obershelp similarity of two strings, in [0, 1].

    The underlying matcher's tie-breaking is directional, so the argument
    order is canonicalized (lexicographically smaller string first) to make
    the metric a true symmetric function over unordered pairs.
    """
    if b < a:
        a, b = b, a
    return gestalt_ratio(a, b)


def duplication_gini(counts: Sequence[int]) -> float:
    """Mean-absolute-difference Gini over per-version occurrence counts.

    G = sum_i sum_j |c_i - c_j| / (2 * n^2 * mean), computed via the sorted
    closed form. All counts equal (including the all-distinct case where every
    count is 1) gives 0. Scale-invariant in the counts.
    """
    if not counts:
        raise UsageError("duplication_gini needs at least one count")
    if any(c < 1 for c in counts):
        raise UsageError("occurrence counts must be >= 1")
    n = len(counts)
    total = sum(counts)
    ordered = sorted(counts)
    weighted = sum((2 * (i + 1) - n - 1) * c for i, c in enumerate(ordered))
    return weighted / (n * total)


def cluster_versions(pipelines: Sequence[str]) -> list[int]:
    """Occurrence counts of distinct serializations, by exact byte equality."""
    return sorted(Counter(pipelines).values(), reverse=True)


@dataclass(frozen=True)
class VarianceReport:
    """Similarity and duplication statistics over N generations of one prompt."""

    avg_sim: float
    min_sim: float
    median_sim: float
    std_sim: float
    variance_col: float
    unique_versions: int
    duplication_gini: float
    n_pipelines: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "avg_sim": self.avg_sim,
            "min_sim": self.min_sim,
            "median_sim": self.median_sim,
            "std_sim": self.std_sim,
            "variance_col": self.variance_col,
            "unique_versions": self.unique_versions,
            "duplication_gini": self.duplication_gini,
            "n_pipelines": self.n_pipelines,
        }


def variance_report(pipelines: Sequence[str]) -> VarianceReport:
    """Aggregate pairwise-similarity stats over all N*(N-1)/2 unordered pairs.

    variance_col is defined as 1 - avg_sim (the identity the reported variance
    column satisfies), deliberately not a squared deviation; std_sim is the
    population standard deviation of the pairwise similarities.
    """
    if len(pipelines) < 2:
        raise UsageError("variance_report needs at least two pipelines")
    sims = [similarity(a, b) for a, b in combinations(pipelines, 2)]
    avg = statistics.fmean(sims)
    counts = cluster_versions(pipelines)
    return VarianceReport(
        avg_sim=avg,
        min_sim=min(sims),
        median_sim=statistics.median(sims),
        std_sim=statistics.pstdev(sims),
        variance_col=1 - avg,
        unique_versions=len(counts),
        duplication_gini=duplication_gini(counts),
        n_pipelines=len(pipelines),
    )


@dataclass(frozen=True)
class CompileStats:
    """Component- and pipeline-level compile success over a batch of runs."""

    per_run_fraction: tuple[float, ...]
    sc: float   # mean component pass fraction, as a percentage
    spc: float  # share of runs whose whole pipeline compiled, as a percentage
    edits_needed: int | None  # manually recorded, never computed

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_run_fraction": list(self.per_run_fraction),
            "sc": self.sc,
            "spc": self.spc,
            "edits_needed": self.edits_needed,
        }


def compile_stats(runs: Sequence[Any], edits: int | None = None) -> CompileStats:
    """Fold per-run compile reports into SC/SPC percentages.

    Accepts any objects exposing ``ok_fraction`` and ``pipeline_ok``.
    """
    if not runs:
        raise UsageError("compile_stats needs at least one run")
    fractions = tuple(float(r.ok_fraction) for r in runs)
    full = sum(1 for r in runs if r.pipeline_ok)
    return CompileStats(
        per_run_fraction=fractions,
        sc=100.0 * statistics.fmean(fractions),
        spc=100.0 * full / len(runs),
        edits_needed=edits,
    )


def format_variance_table(rows: Iterable[tuple[str, VarianceReport]]) -> str:
    """Aligned-column text table over (label, report) pairs."""
    header = (
        "Source", "Avg Sim", "Min Sim", "Median Sim", "Std Sim",
        "Variance", "Unique Versions", "Duplication Gini",
    )
    body = [
        (
            label,
            f"{r.avg_sim:.4f}", f"{r.min_sim:.4f}", f"{r.median_sim:.4f}",
            f"{r.std_sim:.4f}", f"{r.variance_col:.4f}",
            str(r.unique_versions), f"{r.duplication_gini:.4f}",
        )
        for label, r in rows
    ]
    return _format_table(header, body)


def _format_table(header: Sequence[str], body: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in header]
    for row in body:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)),
        "  ".join("-" * w for w in widths),
    ]
    for row in body:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)))
    return "\n".join(lines)
