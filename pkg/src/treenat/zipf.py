"""Rank-frequency tables, log-log Zipf fits, and paired Wilcoxon comparison."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateSampleError,
    EmptyCorpusError,
    InsufficientDataError,
    UnequalSamplesError,
)
from .trees import AstTree


@dataclass(frozen=True)
class RankRow:
    label: str
    count: int
    rank: int
    log_rank: float
    log_freq: float


@dataclass
class RankTable:
    rows: list[RankRow]

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class ZipfFit:
    slope: float
    intercept: float
    r_squared: float
    points_used: int


def _label_counts(trees: list[AstTree], inner_only: bool) -> dict[str, int]:
    counts: dict[str, int] = {}
    for tree in trees:
        for node in tree.nodes:
            if inner_only and node.is_leaf:
                continue
            counts[node.label] = counts.get(node.label, 0) + 1
    return counts


def rank_frequencies(trees: list[AstTree], inner_only: bool = True) -> RankTable:
    """Count labels across the corpus, rank by descending count.

    Frequencies are normalized by the total number of counted labels; both
    axes are logged base 10. Ties in count break lexicographically.
    """
    if not trees:
        raise EmptyCorpusError("rank_frequencies needs a non-empty corpus")
    counts = _label_counts(trees, inner_only)
    total = sum(counts.values())
    rows = []
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    for rank, (label, count) in enumerate(ordered, start=1):
        rows.append(RankRow(
            label=label,
            count=count,
            rank=rank,
            log_rank=math.log10(rank),
            log_freq=math.log10(count / total),
        ))
    return RankTable(rows=rows)


def fit_zipf(table: RankTable, drop_singletons: bool = True) -> ZipfFit:
    """Ordinary least squares of log-frequency on log-rank.

    With drop_singletons, rows with count == 1 (the long tail of single
    occurrences) are excluded before fitting.
    """
    rows = [r for r in table.rows if not (drop_singletons and r.count == 1)]
    if len(rows) < 2:
        raise InsufficientDataError(
            f"need >= 2 usable rows to fit, have {len(rows)}"
        )
    x = np.array([r.log_rank for r in rows])
    y = np.array([r.log_freq for r in rows])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return ZipfFit(slope=float(slope), intercept=float(intercept),
                   r_squared=max(0.0, min(1.0, r2)), points_used=len(rows))


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank test

_EXACT_LIMIT = 25


def _signed_ranks(diffs: np.ndarray) -> np.ndarray:
    """Average ranks of |d|, tie groups sharing their mean rank."""
    absd = np.abs(diffs)
    order = np.argsort(absd, kind="stable")
    ranks = np.empty(len(absd))
    i = 0
    while i < len(absd):
        j = i
        while j + 1 < len(absd) and absd[order[j + 1]] == absd[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(paired_a, paired_b) -> tuple[float, float]:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are discarded; ties get average ranks. Returns
    (W, p) where W = min(W+, W-). The p-value comes from the exact sign
    permutation distribution for n <= 25 and from a normal approximation
    with tie correction and continuity correction above that.
    """
    a = np.asarray(paired_a, dtype=float)
    b = np.asarray(paired_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise UnequalSamplesError("paired samples must be equal-length vectors")
    diffs = a - b
    diffs = diffs[diffs != 0.0]
    n = len(diffs)
    if n < 6:
        raise DegenerateSampleError(
            f"need >= 6 nonzero differences, have {n}"
        )
    ranks = _signed_ranks(diffs)
    w_plus = float(np.sum(ranks[diffs > 0]))
    total = n * (n + 1) / 2.0
    w_minus = total - w_plus
    w = min(w_plus, w_minus)

    if n <= _EXACT_LIMIT:
        p = _exact_two_sided_p(ranks, w_plus)
    else:
        mu = total / 2.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
        sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
        if sigma2 <= 0:
            raise DegenerateSampleError("zero variance after tie correction")
        # continuity correction pulls W+ half a rank toward the mean
        shift = w_plus - mu
        z = (shift - 0.5 * np.sign(shift)) / math.sqrt(sigma2)
        p = math.erfc(abs(z) / math.sqrt(2.0))
    return w, min(1.0, p)


def _exact_two_sided_p(ranks: np.ndarray, w_plus: float) -> float:
    """Exact p over all 2^n sign assignments, via counts on doubled ranks."""
    doubled = np.rint(ranks * 2).astype(np.int64)  # average ranks are halves
    max_sum = int(doubled.sum())
    counts = np.zeros(max_sum + 1, dtype=object)  # exact big-int counts
    counts[0] = 1
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:max_sum + 1 - r]
        counts = counts + shifted
    target = int(round(w_plus * 2))
    num_le = int(np.sum(counts[:target + 1]))
    num_ge = int(np.sum(counts[target:]))
    denom = 2 ** len(ranks)
    return 2.0 * min(num_le, num_ge) / denom


# ---------------------------------------------------------------------------
# Population comparison


def compare_populations(
    defective: list[AstTree],
    clean: list[AstTree],
    inner_only: bool = True,
) -> tuple[float, float, RankTable, RankTable]:
    """Paired Zipf comparison of two equally sized tree populations.

    Labels are ordered by their rank in the pooled population; each label
    present in both sub-populations contributes one pair of normalized
    log-frequencies, which feed the Wilcoxon signed-rank test. Returns
    (W, p, table_defective, table_clean) with rows in pooled-rank order.
    """
    if not defective or not clean:
        raise EmptyCorpusError("both populations must be non-empty")
    if len(defective) != len(clean):
        raise UnequalSamplesError(
            f"populations differ in size: {len(defective)} vs {len(clean)}"
        )
    pooled = rank_frequencies(list(defective) + list(clean), inner_only)
    counts_a = _label_counts(defective, inner_only)
    counts_b = _label_counts(clean, inner_only)
    total_a = sum(counts_a.values())
    total_b = sum(counts_b.values())

    rows_a, rows_b = [], []
    for row in pooled.rows:
        ca = counts_a.get(row.label)
        cb = counts_b.get(row.label)
        if ca is None or cb is None:
            continue  # a pair needs the label on both sides
        rows_a.append(RankRow(row.label, ca, row.rank,
                              row.log_rank, math.log10(ca / total_a)))
        rows_b.append(RankRow(row.label, cb, row.rank,
                              row.log_rank, math.log10(cb / total_b)))
    stat, p = wilcoxon_signed_rank(
        [r.log_freq for r in rows_a], [r.log_freq for r in rows_b]
    )
    return stat, p, RankTable(rows_a), RankTable(rows_b)


# ---------------------------------------------------------------------------
# CSV emission


def rank_table_csv(table: RankTable) -> str:
    lines = ["label,count,rank,log_rank,log_freq"]
    for r in table.rows:
        lines.append(f"{r.label},{r.count},{r.rank},{r.log_rank:.6f},{r.log_freq:.6f}")
    return "\n".join(lines) + "\n"


def zipf_fit_csv(fit: ZipfFit) -> str:
    header = "slope,intercept,r_squared,points_used"
    row = f"{fit.slope:.6f},{fit.intercept:.6f},{fit.r_squared:.6f},{fit.points_used}"
    return header + "\n" + row + "\n"
