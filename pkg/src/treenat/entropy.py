"""Cross-validated self-cross-entropy, length sweeps, n-gram baseline.

All entropies are reported in bits. Fold partitions depend only on
(seed, corpus size, fold count), so the tree model and the n-gram
baseline evaluate on identical splits when given the same seed.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import TooFewExamplesError, ZeroProbabilityError
from .model import TrainConfig, _forward_ids, train
from .rng import derive_rng, derive_seed
from .trees import AstTree, filter_corpus, leaf_sequence, make_masked_example
from .vocab import Vocabulary

START_TOKEN = "<s>"
END_TOKEN = "</s>"


@dataclass(frozen=True)
class FoldResult:
    fold: int
    entropy_bits: float
    n_examples: int


@dataclass
class EntropyReport:
    per_fold: list[FoldResult]
    mean: float
    std: float
    k: int
    model_tag: str

    @property
    def is_gap(self) -> bool:
        """True when the corpus was too small at this k to evaluate."""
        return not self.per_fold


def gap_report(k: int, model_tag: str) -> EntropyReport:
    return EntropyReport(per_fold=[], mean=float("nan"), std=float("nan"),
                         k=k, model_tag=model_tag)


def self_cross_entropy(predictions) -> float:
    """Mean negative log2 of the probabilities assigned to true targets."""
    ps = np.asarray(list(predictions), dtype=float)
    if ps.size == 0:
        raise ValueError("no predictions given")
    if np.any(ps <= 0.0):
        raise ZeroProbabilityError("a target received probability <= 0")
    if np.any(ps > 1.0):
        raise ValueError("probabilities above 1 are not probabilities")
    return float(-np.mean(np.log2(ps)))


def partition_folds(n_items: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded random partition into near-equal disjoint index groups."""
    perm = derive_rng(seed, "folds").permutation(n_items)
    base = n_items // folds
    sizes = [base + (1 if i < n_items % folds else 0) for i in range(folds)]
    groups = []
    at = 0
    for size in sizes:
        groups.append(np.sort(perm[at:at + size]))
        at += size
    return groups


def _report(fold_rows: list[FoldResult], k: int, model_tag: str) -> EntropyReport:
    values = [r.entropy_bits for r in fold_rows]
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return EntropyReport(per_fold=fold_rows, mean=mean, std=std, k=k,
                         model_tag=model_tag)


def cross_validate(
    corpus: list[AstTree],
    vocab: Vocabulary,
    config: TrainConfig,
    k: int,
    folds: int = 5,
    model_tag: str | None = None,
) -> EntropyReport:
    """Train on folds-1 groups, score masked targets on the held-out group.

    Held-out masks are drawn once per fold from a fold-specific stream, so
    the evaluation set is stable; training masks are re-drawn every epoch
    inside train().
    """
    if len(corpus) < folds:
        raise TooFewExamplesError(f"{len(corpus)} trees < {folds} folds")
    tag = model_tag or f"treelstm-k{k}"
    groups = partition_folds(len(corpus), folds, config.seed)
    rows = []
    for fold, held_out in enumerate(groups):
        held = set(int(i) for i in held_out)
        train_corpus = [t for i, t in enumerate(corpus) if i not in held]
        fold_config = replace(config, seed=derive_seed(config.seed, "fold", fold) % (2 ** 63))
        checkpoint = train(train_corpus, vocab, fold_config, k)
        eval_rng = derive_rng(config.seed, "eval-mask", fold)
        probs = []
        for i in held_out:
            example = make_masked_example(corpus[int(i)], vocab, eval_rng)
            cache = _forward_ids(example.tree, example.label_ids, checkpoint.params)
            probs.append(math.exp(cache.log_probs[example.target_token]))
        rows.append(FoldResult(fold=fold, entropy_bits=self_cross_entropy(probs),
                               n_examples=len(probs)))
    return _report(rows, k, tag)


def length_sweep(
    corpus: list[AstTree],
    vocab: Vocabulary,
    config: TrainConfig,
    ks: list[int],
    folds: int = 5,
) -> list[EntropyReport]:
    """filter_corpus + cross_validate per k; too-small corpora become gaps."""
    if not ks:
        raise ValueError("ks must be non-empty")
    if list(ks) != sorted(ks):
        raise ValueError("ks must be ascending")
    reports = []
    for k in ks:
        kept = filter_corpus(corpus, k)
        if len(kept) < folds:
            reports.append(gap_report(k, f"treelstm-k{k}"))
        else:
            reports.append(cross_validate(kept, vocab, config, k, folds))
    return reports


# ---------------------------------------------------------------------------
# Interpolated n-gram baseline


class NgramModel:
    """Next-token model: uniform mixture of orders 1..n over leaf sequences.

    Each order contributes its maximum-likelihood estimate; an order whose
    history was never seen falls back to the longest seen suffix. The
    unigram floor uses add-one smoothing over a fixed token space, so every
    token in the space has nonzero probability and each mixture component
    is a proper distribution over it.
    """

    def __init__(self, order: int, token_space: list[str]):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.order = order
        self.token_space = sorted(token_space)
        self.lambdas = [1.0 / order] * order
        self.context_counts: list[dict[tuple, dict[str, int]]] = [
            {} for _ in range(order)
        ]
        self.unigram_total = 0

    def fit(self, sequences: list[list[str]]) -> "NgramModel":
        for seq in sequences:
            padded = [START_TOKEN] * (self.order - 1) + list(seq) + [END_TOKEN]
            for pos in range(self.order - 1, len(padded)):
                token = padded[pos]
                for o in range(1, self.order + 1):
                    history = tuple(padded[pos - o + 1:pos])
                    table = self.context_counts[o - 1].setdefault(history, {})
                    table[token] = table.get(token, 0) + 1
        self.unigram_total = sum(self.context_counts[0].get((), {}).values())
        return self

    def _order_prob(self, order: int, history: tuple, token: str) -> float:
        for o in range(order, 1, -1):
            table = self.context_counts[o - 1].get(history[len(history) - (o - 1):])
            if table:
                return table.get(token, 0) / sum(table.values())
        unigrams = self.context_counts[0].get((), {})
        v = len(self.token_space)
        return (unigrams.get(token, 0) + 1) / (self.unigram_total + v)

    def probability(self, history, token: str) -> float:
        history = tuple(history)[-(self.order - 1):] if self.order > 1 else ()
        return sum(
            lam * self._order_prob(o + 1, history, token)
            for o, lam in enumerate(self.lambdas)
        )

    def sequence_log2(self, seq: list[str]) -> tuple[float, int]:
        """Total -log2 probability and token count, end sentinel included."""
        padded = [START_TOKEN] * (self.order - 1) + list(seq) + [END_TOKEN]
        total = 0.0
        count = 0
        for pos in range(self.order - 1, len(padded)):
            p = self.probability(padded[pos - self.order + 1:pos], padded[pos])
            if p <= 0.0:
                raise ZeroProbabilityError("n-gram assigned zero probability")
            total -= math.log2(p)
            count += 1
        return total, count


def ngram_baseline(
    corpus: list[AstTree],
    vocab: Vocabulary,
    n: int,
    folds: int = 5,
    seed: int = 0,
) -> EntropyReport:
    """Per-token next-token cross-entropy of the interpolated n-gram model.

    Uses the same fold partition as cross_validate for the same seed, so
    the two reports form a paired comparison.
    """
    if len(corpus) < folds:
        raise TooFewExamplesError(f"{len(corpus)} trees < {folds} folds")
    sequences = [leaf_sequence(t) for t in corpus]
    token_space = sorted({tok for seq in sequences for tok in seq} | {END_TOKEN})
    groups = partition_folds(len(corpus), folds, seed)
    rows = []
    for fold, held_out in enumerate(groups):
        held = set(int(i) for i in held_out)
        model = NgramModel(n, token_space).fit(
            [s for i, s in enumerate(sequences) if i not in held]
        )
        total = 0.0
        count = 0
        for i in held_out:
            bits, tokens = model.sequence_log2(sequences[int(i)])
            total += bits
            count += tokens
        rows.append(FoldResult(fold=fold, entropy_bits=total / count,
                               n_examples=len(held_out)))
    k = max(len(s) for s in sequences)
    return _report(rows, k, f"ngram-{n}")


# ---------------------------------------------------------------------------
# CSV emission


def report_rows_csv(reports: list[EntropyReport]) -> str:
    lines = ["model_tag,k,fold,entropy_bits,n_examples"]
    for rep in reports:
        for row in rep.per_fold:
            lines.append(
                f"{rep.model_tag},{rep.k},{row.fold},{row.entropy_bits:.6f},{row.n_examples}"
            )
    return "\n".join(lines) + "\n"


def report_summary_csv(reports: list[EntropyReport]) -> str:
    lines = ["model_tag,k,mean_bits,std_bits,n_folds"]
    for rep in reports:
        if rep.is_gap:
            lines.append(f"{rep.model_tag},{rep.k},,,0")
        else:
            lines.append(
                f"{rep.model_tag},{rep.k},{rep.mean:.6f},{rep.std:.6f},{len(rep.per_fold)}"
            )
    return "\n".join(lines) + "\n"


def plot_data_csv(reports: list[EntropyReport]) -> str:
    """(k, mean, std) triples per model tag; gaps are skipped."""
    lines = ["model_tag,k,mean_bits,std_bits"]
    for rep in reports:
        if not rep.is_gap:
            lines.append(f"{rep.model_tag},{rep.k},{rep.mean:.6f},{rep.std:.6f}")
    return "\n".join(lines) + "\n"
