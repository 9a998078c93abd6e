"""Just-in-time defect prediction from learned tree embeddings.

Commits arrive with precomputed defect labels and method-level trees; the
pipeline embeds each method, trains a random forest per longitudinal fold
(past commits only), optionally cleans the majority class with edited
nearest neighbours, and taints a commit whenever any of its methods is
flagged. Metrics are computed at commit granularity.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CheckpointMismatchError,
    EmptyCommitError,
    LengthMismatchError,
    MissingClassError,
    TooFewCommitsError,
)
from .model import ModelCheckpoint, embed_tree
from .rng import derive_rng, derive_seed
from .trees import AstTree


@dataclass
class CommitRecord:
    commit_id: str
    timestamp: int
    methods: list[tuple[str, AstTree]]
    label: bool
    provenance: str = ""


@dataclass
class LabeledVector:
    features: np.ndarray
    label: bool
    commit_id: str
    method_id: str
    timestamp: int


def _chronological_key(commit) -> tuple:
    return (commit.timestamp, commit.commit_id)


def longitudinal_split(commits, folds: int = 5) -> list[tuple[range, range]]:
    """Expanding-prefix folds: train on the first 20%..80%, test the next 10%.

    Fold i trains on the first floor((0.2 + 0.6 * i / (folds - 1)) * N)
    commits and tests on the following floor(0.1 * N). Inputs must already
    be in chronological order (timestamp, then commit id).
    """
    n = len(commits)
    if n < 10:
        raise TooFewCommitsError(f"need >= 10 commits for a split, have {n}")
    keys = [_chronological_key(c) for c in commits]
    if keys != sorted(keys):
        raise ValueError("commits must be sorted chronologically")
    test_size = int(0.1 * n)
    out = []
    for i in range(folds):
        frac = 0.2 + (0.6 * i / (folds - 1) if folds > 1 else 0.0)
        cut = int(frac * n)
        out.append((range(0, cut), range(cut, cut + test_size)))
    return out


def featurize(commits: list[CommitRecord], checkpoint: ModelCheckpoint,
              feature_k: int = 30) -> list[LabeledVector]:
    """One embedding vector per method tree; the commit label is inherited."""
    if checkpoint.max_len != feature_k:
        raise CheckpointMismatchError(
            f"checkpoint was trained with k={checkpoint.max_len}, need k={feature_k}"
        )
    vectors = []
    for commit in commits:
        for method_id, tree in commit.methods:
            vectors.append(LabeledVector(
                features=embed_tree(tree, checkpoint),
                label=commit.label,
                commit_id=commit.commit_id,
                method_id=method_id,
                timestamp=commit.timestamp,
            ))
    return vectors


# ---------------------------------------------------------------------------
# Edited nearest neighbours


def enn_undersample(data: list[LabeledVector], k: int = 3) -> list[LabeledVector]:
    """Drop majority-class samples contradicted by their k nearest neighbours.

    A majority sample is removed when a strict majority of its k nearest
    neighbours (Euclidean, self excluded, over the whole data set) carries
    the other label. Minority samples are never touched. The majority
    class is the more frequent one; on a tie the negative class is edited.
    """
    labels = np.array([d.label for d in data], dtype=bool)
    n = len(data)
    if n == 0 or labels.all() or not labels.any():
        raise MissingClassError("ENN needs both classes present")
    if n - 1 < k:
        raise ValueError(f"need at least {k + 1} samples for {k} neighbours")
    n_pos = int(labels.sum())
    majority = n_pos > n - n_pos  # ties edit the negative class
    x = np.stack([np.asarray(d.features, dtype=float) for d in data])

    sq_norms = np.einsum("ij,ij->i", x, x)
    keep = np.ones(n, dtype=bool)
    chunk = 512
    for start in range(0, n, chunk):
        rows = slice(start, min(start + chunk, n))
        d2 = sq_norms[rows, None] - 2.0 * (x[rows] @ x.T) + sq_norms[None, :]
        for local, i in enumerate(range(rows.start, rows.stop)):
            if labels[i] != majority:
                continue
            dist = d2[local].copy()
            dist[i] = np.inf  # exclude self
            neighbours = np.argsort(dist, kind="stable")[:k]
            disagree = int(np.sum(labels[neighbours] != labels[i]))
            if disagree > k / 2:
                keep[i] = False
    return [d for d, kept in zip(data, keep) if kept]


# ---------------------------------------------------------------------------
# Random forest


@dataclass
class DecisionTree:
    """CART nodes in parallel arrays; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    votes: np.ndarray  # n_nodes x 2: (negative, positive) sample counts

    def predict_votes(self, x: np.ndarray) -> np.ndarray:
        node = 0
        while self.feature[node] >= 0:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return self.votes[node]

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        """Leaf majority vote per row (ties vote negative)."""
        nodes = np.zeros(len(x), dtype=np.int64)
        while True:
            feats = self.feature[nodes]
            active = feats >= 0
            if not active.any():
                break
            rows = np.nonzero(active)[0]
            go_left = x[rows, feats[rows]] <= self.threshold[nodes[rows]]
            nodes[rows] = np.where(go_left, self.left[nodes[rows]], self.right[nodes[rows]])
        leaf_votes = self.votes[nodes]
        return leaf_votes[:, 1] > leaf_votes[:, 0]


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    seed: int
    n_features: int


def _best_split(values: np.ndarray, labels: np.ndarray):
    """Lowest weighted Gini split over the given feature columns.

    Returns (column, threshold) or None when no column can be split.
    """
    m = values.shape[0]
    order = np.argsort(values, axis=0, kind="stable")
    sv = np.take_along_axis(values, order, axis=0)
    sy = labels[order].astype(np.float64)
    pos_left = np.cumsum(sy, axis=0)[:-1]          # (m-1) x f
    ln = np.arange(1, m, dtype=np.float64)[:, None]
    rn = m - ln
    pos_right = pos_left[-1] + sy[-1] - pos_left if m > 1 else pos_left
    total_pos = pos_left[-1] + sy[-1]
    pos_right = total_pos - pos_left
    pl = pos_left / ln
    pr = pos_right / rn
    gini = ln * (2.0 * pl * (1.0 - pl)) + rn * (2.0 * pr * (1.0 - pr))
    gini[sv[1:] <= sv[:-1]] = np.inf               # no cut between equal values
    flat = int(np.argmin(gini))
    if not np.isfinite(gini.flat[flat]):
        return None
    row, col = divmod(flat, values.shape[1])
    threshold = 0.5 * (sv[row, col] + sv[row + 1, col])
    return col, float(threshold)


def _grow_tree(x: np.ndarray, y: np.ndarray, rng: np.random.Generator,
               mtry: int) -> DecisionTree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    votes: list[tuple[int, int]] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        votes.append((0, 0))
        return len(feature) - 1

    d = x.shape[1]
    stack = [(new_node(), np.arange(len(y)))]
    while stack:
        node, idx = stack.pop()
        ys = y[idx]
        n_pos = int(ys.sum())
        votes[node] = (len(ys) - n_pos, n_pos)
        if n_pos == 0 or n_pos == len(ys) or len(ys) < 2:
            continue
        feats = rng.choice(d, size=mtry, replace=False)
        split = _best_split(x[np.ix_(idx, feats)], ys)
        if split is None:
            continue  # all candidate features constant on this node
        col, thr = split
        f = int(feats[col])
        mask = x[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node()
        right[node] = new_node()
        stack.append((left[node], idx[mask]))
        stack.append((right[node], idx[~mask]))
    return DecisionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        votes=np.array(votes, dtype=np.int64),
    )


def forest_train(data: list[LabeledVector], n_trees: int = 200,
                 seed: int = 0) -> ForestModel:
    """Bootstrap-bagged CART forest: Gini splits, sqrt(d) feature candidates,
    grown until pure or below two samples. Each tree draws from its own
    (seed, tree index) stream, so parallel and serial training agree.
    """
    if len(data) < 2:
        raise ValueError("need at least two samples to train")
    y = np.array([d.label for d in data], dtype=bool)
    if y.all() or not y.any():
        raise MissingClassError("training data must contain both classes")
    x = np.stack([np.asarray(d.features, dtype=float) for d in data])
    n, d = x.shape
    mtry = max(1, int(math.sqrt(d)))
    trees = []
    for t in range(n_trees):
        rng = derive_rng(seed, "tree", t)
        boot = rng.integers(0, n, size=n)
        trees.append(_grow_tree(x[boot], y[boot], rng, mtry))
    return ForestModel(trees=trees, seed=seed, n_features=d)


def forest_predict(model: ForestModel, vector) -> tuple[bool, float]:
    """Majority vote across trees; exact ties resolve to negative."""
    x = np.asarray(vector, dtype=float)
    if x.shape != (model.n_features,):
        raise LengthMismatchError(
            f"vector has {x.shape}, model expects ({model.n_features},)"
        )
    positive = 0
    for tree in model.trees:
        votes = tree.predict_votes(x)
        positive += int(votes[1] > votes[0])
    fraction = positive / len(model.trees)
    return positive > len(model.trees) / 2, fraction


def forest_predict_batch(model: ForestModel, x: np.ndarray) -> np.ndarray:
    tallies = np.zeros(len(x), dtype=np.int64)
    for tree in model.trees:
        tallies += tree.predict_batch(x)
    return tallies > len(model.trees) / 2


def taint_commit(method_predictions: list[bool]) -> bool:
    """A single flagged method taints the whole commit."""
    if not method_predictions:
        raise EmptyCommitError("commit carries no method predictions")
    return any(method_predictions)


# ---------------------------------------------------------------------------
# Metrics


@dataclass
class FoldMetrics:
    fold: object  # 0..folds-1 or "overall"
    undersampled: bool
    acc_balanced: float
    acc_plain: float
    precision: float
    recall: float
    f1: float
    mcc: float
    n_commits: int = 0
    n_defective: int = 0


def metrics(y_true, y_pred, fold="overall", undersampled: bool = False) -> FoldMetrics:
    """Confusion-matrix metrics on the positive (defect) class.

    Any zero denominator yields 0 for that metric, keeping the row total.
    """
    yt = list(y_true)
    yp = list(y_pred)
    if len(yt) != len(yp):
        raise LengthMismatchError(f"{len(yt)} labels vs {len(yp)} predictions")
    if not yt:
        raise ValueError("metrics need at least one prediction")
    tp = sum(1 for t, p in zip(yt, yp) if t and p)
    tn = sum(1 for t, p in zip(yt, yp) if not t and not p)
    fp = sum(1 for t, p in zip(yt, yp) if not t and p)
    fn = sum(1 for t, p in zip(yt, yp) if t and not p)

    def ratio(num, den):
        return num / den if den else 0.0

    tpr = ratio(tp, tp + fn)
    tnr = ratio(tn, tn + fp)
    precision = ratio(tp, tp + fp)
    recall = tpr
    f1 = ratio(2 * precision * recall, precision + recall)
    mcc_den = math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    mcc = (tp * tn - fp * fn) / mcc_den if mcc_den else 0.0
    return FoldMetrics(
        fold=fold,
        undersampled=undersampled,
        acc_balanced=(tpr + tnr) / 2.0,
        acc_plain=(tp + tn) / len(yt),
        precision=precision,
        recall=recall,
        f1=f1,
        mcc=mcc,
        n_commits=len(yt),
        n_defective=tp + fn,
    )


# ---------------------------------------------------------------------------
# Pipeline


@dataclass
class _CommitGroup:
    commit_id: str
    timestamp: int
    label: bool
    vector_rows: list[int] = field(default_factory=list)


def _group_vectors(vectors: list[LabeledVector]) -> list[_CommitGroup]:
    groups: dict[str, _CommitGroup] = {}
    for row, vec in enumerate(vectors):
        g = groups.get(vec.commit_id)
        if g is None:
            g = _CommitGroup(vec.commit_id, vec.timestamp, vec.label)
            groups[vec.commit_id] = g
        g.vector_rows.append(row)
    return sorted(groups.values(), key=_chronological_key)


def jit_metrics_from_vectors(
    vectors: list[LabeledVector],
    undersample: bool,
    seed: int,
    folds: int = 5,
    n_trees: int = 200,
    enn_k: int = 3,
) -> list[FoldMetrics]:
    """Longitudinal fold evaluation over pre-featurized method vectors."""
    groups = _group_vectors(vectors)
    splits = longitudinal_split(groups, folds)
    x = np.stack([np.asarray(v.features, dtype=float) for v in vectors])

    rows: list[FoldMetrics] = []
    pooled_true: list[bool] = []
    pooled_pred: list[bool] = []
    for fold, (train_range, test_range) in enumerate(splits):
        train_vecs = [vectors[r] for ci in train_range for r in groups[ci].vector_rows]
        if undersample:
            train_vecs = enn_undersample(train_vecs, k=enn_k)
        forest = forest_train(train_vecs, n_trees=n_trees,
                              seed=derive_seed(seed, "fold", fold) % (2 ** 63))
        y_true, y_pred = [], []
        for ci in test_range:
            group = groups[ci]
            flags = forest_predict_batch(forest, x[group.vector_rows])
            y_true.append(group.label)
            y_pred.append(taint_commit(list(flags)))
        rows.append(metrics(y_true, y_pred, fold=fold, undersampled=undersample))
        pooled_true.extend(y_true)
        pooled_pred.extend(y_pred)
    rows.append(metrics(pooled_true, pooled_pred, fold="overall",
                        undersampled=undersample))
    return rows


def run_jit_pipeline(
    commits: list[CommitRecord],
    checkpoint: ModelCheckpoint,
    undersample: bool,
    seed: int,
    feature_k: int = 30,
    folds: int = 5,
    n_trees: int = 200,
    enn_k: int = 3,
) -> list[FoldMetrics]:
    """Full commit pipeline: embed, split, (ENN), forest, taint, score."""
    ordered = sorted(commits, key=_chronological_key)
    vectors = featurize(ordered, checkpoint, feature_k)
    return jit_metrics_from_vectors(
        vectors, undersample, seed, folds=folds, n_trees=n_trees, enn_k=enn_k
    )


# ---------------------------------------------------------------------------
# CSV emission


def metrics_csv(rows: list[FoldMetrics]) -> str:
    lines = ["fold,undersampled,acc_balanced,acc_plain,precision,recall,f1,mcc,"
             "n_commits,n_defective"]
    for r in rows:
        lines.append(
            f"{r.fold},{int(r.undersampled)},{r.acc_balanced:.6f},{r.acc_plain:.6f},"
            f"{r.precision:.6f},{r.recall:.6f},{r.f1:.6f},{r.mcc:.6f},"
            f"{r.n_commits},{r.n_defective}"
        )
    return "\n".join(lines) + "\n"


def write_vectors_csv(vectors: list[LabeledVector], path) -> None:
    dim = len(vectors[0].features) if vectors else 0
    header = "commit_id,method_id,timestamp,label," + ",".join(
        f"f{i}" for i in range(dim)
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for v in vectors:
            feats = ",".join(repr(float(f)) for f in v.features)
            fh.write(f"{v.commit_id},{v.method_id},{v.timestamp},{int(v.label)},{feats}\n")


def read_vectors_csv(path) -> list[LabeledVector]:
    vectors = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("commit_id,method_id,timestamp,label"):
            raise ValueError("unrecognized vectors CSV header")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            vectors.append(LabeledVector(
                features=np.array([float(p) for p in parts[4:]]),
                label=bool(int(parts[3])),
                commit_id=parts[0],
                method_id=parts[1],
                timestamp=int(parts[2]),
            ))
    return vectors
