"""Child-Sum TreeLSTM language model over masked trees.

Every node embeds its label and runs one cell bottom-up:

    h~_j = sum_k h_k                      (children hidden states)
    i_j  = sigmoid(W_i x_j + U_i h~_j + b_i)
    f_jk = sigmoid(W_f x_j + U_f h_k + b_f)   one forget gate per child
    o_j  = sigmoid(W_o x_j + U_o h~_j + b_o)
    u_j  = tanh   (W_u x_j + U_u h~_j + b_u)
    c_j  = i_j * u_j + sum_k f_jk * c_k
    h_j  = o_j * tanh(c_j)

A leaf has no children, so h~ is zero and c = i * u. A two-layer head
(tanh hidden, linear output over the vocabulary) reads the root hidden
state; softmax over its logits is the token distribution. Gradients are
exact reverse-mode derivatives of the recursion, written out by hand so
training carries no framework dependency.
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyCorpusError,
    NonFiniteGradientError,
    UnencodableLabelError,
)
from .rng import derive_rng
from .trees import AstTree, MaskedExample, make_masked_example
from .vocab import Vocabulary


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.025
    weight_decay: float = 0.0001
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    embed_dim: int = 150
    hidden_dim: int = 75
    head_dim: int = 25
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class ModelParams:
    """All learnable tensors; shapes fixed by (vocab, d_e, d_h, d_head)."""

    embed: np.ndarray  # |V| x d_e
    w_i: np.ndarray    # d_h x d_e
    w_f: np.ndarray
    w_o: np.ndarray
    w_u: np.ndarray
    u_i: np.ndarray    # d_h x d_h
    u_f: np.ndarray
    u_o: np.ndarray
    u_u: np.ndarray
    b_i: np.ndarray    # d_h
    b_f: np.ndarray
    b_o: np.ndarray
    b_u: np.ndarray
    head_w1: np.ndarray  # d_head x d_h
    head_b1: np.ndarray  # d_head
    head_w2: np.ndarray  # |V| x d_head
    head_b2: np.ndarray  # |V|

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.embed.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w_i.shape[0]

    def validate_shapes(self) -> None:
        v, de = self.embed.shape
        dh = self.w_i.shape[0]
        dhead = self.head_w1.shape[0]
        expect = {
            "w_i": (dh, de), "w_f": (dh, de), "w_o": (dh, de), "w_u": (dh, de),
            "u_i": (dh, dh), "u_f": (dh, dh), "u_o": (dh, dh), "u_u": (dh, dh),
            "b_i": (dh,), "b_f": (dh,), "b_o": (dh,), "b_u": (dh,),
            "head_w1": (dhead, dh), "head_b1": (dhead,),
            "head_w2": (v, dhead), "head_b2": (v,),
        }
        for name, shape in expect.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise DimensionMismatchError(f"{name}: expected {shape}, got {actual}")
        for name, tensor in self.tensors().items():
            if not np.all(np.isfinite(tensor)):
                raise ValueError(f"{name} contains non-finite values")


def init_params(vocab_size: int, config: TrainConfig, rng: np.random.Generator) -> ModelParams:
    """Uniform +-1/sqrt(fan_in) weights, zero biases."""
    de, dh, dhead = config.embed_dim, config.hidden_dim, config.head_dim

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return ModelParams(
        embed=uniform((vocab_size, de), de),
        w_i=uniform((dh, de), de), w_f=uniform((dh, de), de),
        w_o=uniform((dh, de), de), w_u=uniform((dh, de), de),
        u_i=uniform((dh, dh), dh), u_f=uniform((dh, dh), dh),
        u_o=uniform((dh, dh), dh), u_u=uniform((dh, dh), dh),
        b_i=np.zeros(dh), b_f=np.zeros(dh), b_o=np.zeros(dh), b_u=np.zeros(dh),
        head_w1=uniform((dhead, dh), dh), head_b1=np.zeros(dhead),
        head_w2=uniform((vocab_size, dhead), dhead), head_b2=np.zeros(vocab_size),
    )


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# ---------------------------------------------------------------------------
# Forward


def cell_forward(x, children, params: ModelParams):
    """One cell: (x_j, [(h_k, c_k), ...]) -> (h_j, c_j).

    Children may come in any order; the sums make the result invariant.
    """
    x = np.asarray(x, dtype=float)
    dh, de = params.w_i.shape
    if x.shape != (de,):
        raise DimensionMismatchError(f"x: expected ({de},), got {x.shape}")
    h_tilde = np.zeros(dh)
    for h_k, c_k in children:
        if np.shape(h_k) != (dh,) or np.shape(c_k) != (dh,):
            raise DimensionMismatchError("child state has wrong dimension")
        h_tilde = h_tilde + np.asarray(h_k, dtype=float)
    i = _sigmoid(params.w_i @ x + params.u_i @ h_tilde + params.b_i)
    o = _sigmoid(params.w_o @ x + params.u_o @ h_tilde + params.b_o)
    u = np.tanh(params.w_u @ x + params.u_u @ h_tilde + params.b_u)
    c = i * u
    for h_k, c_k in children:
        f_k = _sigmoid(params.w_f @ x + params.u_f @ np.asarray(h_k, dtype=float) + params.b_f)
        c = c + f_k * np.asarray(c_k, dtype=float)
    h = o * np.tanh(c)
    return h, c


class _TreeCache:
    """Everything the backward pass needs from one tree's forward pass."""

    __slots__ = (
        "tree", "ids", "order", "x", "hsum", "gate_i", "gate_o", "gate_u",
        "f_gates", "c", "tanh_c", "h", "hidden", "logits", "log_probs",
    )


def _check_ids(ids: np.ndarray, vocab_size: int) -> None:
    if len(ids) and (ids.min() < 0 or ids.max() >= vocab_size):
        raise UnencodableLabelError(
            f"label id outside embedding table of size {vocab_size}"
        )


def _forward_ids(tree: AstTree, ids: np.ndarray, params: ModelParams) -> _TreeCache:
    _check_ids(ids, params.vocab_size)
    dh = params.hidden_dim
    n = len(tree.nodes)
    cache = _TreeCache()
    cache.tree = tree
    cache.ids = ids
    cache.order = tree.postorder()

    x = params.embed[ids]
    # input contributions for all nodes at once; i/o/u stacked, f separate
    w_iou = np.concatenate([params.w_i, params.w_o, params.w_u], axis=0)
    b_iou = np.concatenate([params.b_i, params.b_o, params.b_u])
    u_iou = np.concatenate([params.u_i, params.u_o, params.u_u], axis=0)
    xw_iou = x @ w_iou.T + b_iou
    xw_f = x @ params.w_f.T + params.b_f

    hsum = np.zeros((n, dh))
    gate_i = np.empty((n, dh))
    gate_o = np.empty((n, dh))
    gate_u = np.empty((n, dh))
    f_gates: list[np.ndarray | None] = [None] * n
    c = np.empty((n, dh))
    h = np.empty((n, dh))

    nodes = tree.nodes
    for j in cache.order:
        children = nodes[j].children
        if children:
            h_kids = h[children]
            hs = h_kids.sum(axis=0)
            hsum[j] = hs
            a = xw_iou[j] + u_iou @ hs
        else:
            a = xw_iou[j]
        i_j = _sigmoid(a[:dh])
        o_j = _sigmoid(a[dh:2 * dh])
        u_j = np.tanh(a[2 * dh:])
        c_j = i_j * u_j
        if children:
            f_j = _sigmoid(xw_f[j] + h_kids @ params.u_f.T)
            f_gates[j] = f_j
            c_j = c_j + (f_j * c[children]).sum(axis=0)
        gate_i[j], gate_o[j], gate_u[j] = i_j, o_j, u_j
        c[j] = c_j
        h[j] = o_j * np.tanh(c_j)

    cache.x = x
    cache.hsum = hsum
    cache.gate_i, cache.gate_o, cache.gate_u = gate_i, gate_o, gate_u
    cache.f_gates = f_gates
    cache.c = c
    cache.tanh_c = np.tanh(c)
    cache.h = h

    root_h = h[tree.root]
    cache.hidden = np.tanh(params.head_w1 @ root_h + params.head_b1)
    cache.logits = params.head_w2 @ cache.hidden + params.head_b2
    shifted = cache.logits - cache.logits.max()
    cache.log_probs = shifted - np.log(np.exp(shifted).sum())
    return cache


def tree_forward(example: MaskedExample, params: ModelParams):
    """Bottom-up evaluation of the whole masked tree.

    Returns (logits over the vocabulary, root hidden state).
    """
    cache = _forward_ids(example.tree, example.label_ids, params)
    return cache.logits, cache.h[example.tree.root]


def embed_tree(tree: AstTree, checkpoint: "ModelCheckpoint") -> np.ndarray:
    """Root hidden state of the unmasked tree; UNK fallback for new labels."""
    vocab = checkpoint.vocab
    ids = np.fromiter((vocab.encode(nd.label) for nd in tree.nodes),
                      dtype=np.int64, count=len(tree.nodes))
    cache = _forward_ids(tree, ids, checkpoint.params)
    return cache.h[tree.root].copy()


# ---------------------------------------------------------------------------
# Backward


def _backward_tree(cache: _TreeCache, target: int, params: ModelParams, grads) -> float:
    """Accumulate d(-log p[target])/d(theta) into grads; returns the nll."""
    tree = cache.tree
    dh = params.hidden_dim
    n = len(tree.nodes)
    nll = -cache.log_probs[target]

    dlogits = np.exp(cache.log_probs)
    dlogits[target] -= 1.0
    grads["head_w2"] += np.outer(dlogits, cache.hidden)
    grads["head_b2"] += dlogits
    dhidden = params.head_w2.T @ dlogits
    dz1 = dhidden * (1.0 - cache.hidden ** 2)
    grads["head_w1"] += np.outer(dz1, cache.h[tree.root])
    grads["head_b1"] += dz1

    d_h = np.zeros((n, dh))
    d_c = np.zeros((n, dh))
    d_h[tree.root] = params.head_w1.T @ dz1

    da_i = np.zeros((n, dh))
    da_o = np.zeros((n, dh))
    da_u = np.zeros((n, dh))
    daf_node = np.zeros((n, dh))

    nodes = tree.nodes
    i_g, o_g, u_g = cache.gate_i, cache.gate_o, cache.gate_u
    for j in reversed(cache.order):
        gh = d_h[j]
        tc = cache.tanh_c[j]
        o_j = o_g[j]
        do = gh * tc
        da_o[j] = do * o_j * (1.0 - o_j)
        gc = d_c[j] + gh * o_j * (1.0 - tc * tc)
        i_j, u_j = i_g[j], u_g[j]
        da_i[j] = gc * u_j * i_j * (1.0 - i_j)
        da_u[j] = gc * i_j * (1.0 - u_j * u_j)
        children = nodes[j].children
        if children:
            f_j = cache.f_gates[j]
            df = gc * cache.c[children]          # broadcast over child rows
            daf = df * f_j * (1.0 - f_j)
            daf_node[j] = daf.sum(axis=0)
            grads["u_f"] += daf.T @ cache.h[children]
            d_c[children] += gc * f_j
            dh_tilde = (params.u_i.T @ da_i[j]
                        + params.u_o.T @ da_o[j]
                        + params.u_u.T @ da_u[j])
            d_h[children] += dh_tilde + daf @ params.u_f
    # batched parameter contributions over all nodes
    grads["w_i"] += da_i.T @ cache.x
    grads["w_o"] += da_o.T @ cache.x
    grads["w_u"] += da_u.T @ cache.x
    grads["w_f"] += daf_node.T @ cache.x
    grads["u_i"] += da_i.T @ cache.hsum
    grads["u_o"] += da_o.T @ cache.hsum
    grads["u_u"] += da_u.T @ cache.hsum
    grads["b_i"] += da_i.sum(axis=0)
    grads["b_o"] += da_o.sum(axis=0)
    grads["b_u"] += da_u.sum(axis=0)
    grads["b_f"] += daf_node.sum(axis=0)
    dx = da_i @ params.w_i + da_o @ params.w_o + da_u @ params.w_u + daf_node @ params.w_f
    np.add.at(grads["embed"], cache.ids, dx)
    return float(nll)


def loss_and_gradients(batch: list[MaskedExample], params: ModelParams):
    """Mean negative log-likelihood (nats) and its exact gradients."""
    if not batch:
        raise ValueError("batch must be non-empty")
    grads = {name: np.zeros_like(t) for name, t in params.tensors().items()}
    total = 0.0
    for example in batch:
        cache = _forward_ids(example.tree, example.label_ids, params)
        total += _backward_tree(cache, example.target_token, params, grads)
    scale = 1.0 / len(batch)
    for g in grads.values():
        g *= scale
    return total * scale, grads


# ---------------------------------------------------------------------------
# Optimizer


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls(
            m={k: np.zeros_like(t) for k, t in params.tensors().items()},
            v={k: np.zeros_like(t) for k, t in params.tensors().items()},
        )


def adam_step(params: ModelParams, grads, state: AdamState, config: TrainConfig):
    """One Adam update with bias correction; L2 weight decay folded into g."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in {name}")
    state.step += 1
    t = state.step
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    tensors = params.tensors()
    for name, theta in tensors.items():
        g = grads[name] + config.weight_decay * theta
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        theta -= config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


# ---------------------------------------------------------------------------
# Training and checkpointing


@dataclass
class ModelCheckpoint:
    params: ModelParams
    vocab: Vocabulary
    config: TrainConfig
    max_len: int
    loss_history: list[float] = field(default_factory=list)
    version: int = 1

    @property
    def vocab_hash(self) -> str:
        return self.vocab.content_hash()


def train(corpus: list[AstTree], vocab: Vocabulary, config: TrainConfig,
          max_len: int) -> ModelCheckpoint:
    """Masked-token training: one fresh example per tree per epoch.

    Examples are re-masked and re-shuffled each epoch with per-epoch
    sub-streams of config.seed, so a run is fully determined by its seed.
    """
    if not corpus:
        raise EmptyCorpusError("cannot train on an empty corpus")
    for tree in corpus:
        if len(tree.leaves()) > max_len:
            raise ValueError(
                f"tree {tree.source_id!r} exceeds max_len={max_len}; filter first"
            )
    params = init_params(len(vocab), config, derive_rng(config.seed, "init"))
    state = AdamState.zeros(params)
    history: list[float] = []
    n = len(corpus)
    for epoch in range(config.epochs):
        mask_rng = derive_rng(config.seed, "mask", epoch)
        examples = [make_masked_example(t, vocab, mask_rng) for t in corpus]
        order = derive_rng(config.seed, "shuffle", epoch).permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = [examples[k] for k in order[start:start + config.batch_size]]
            loss, grads = loss_and_gradients(batch, params)
            adam_step(params, grads, state, config)
            epoch_loss += loss * len(batch)
        history.append(epoch_loss / n)
    return ModelCheckpoint(params=params, vocab=vocab, config=config,
                           max_len=max_len, loss_history=history)


_MAGIC = b"TREENAT-CKPT v1\n"


def save_checkpoint(checkpoint: ModelCheckpoint, path) -> None:
    """Versioned container: JSON header + row-major little-endian float64."""
    tensors = checkpoint.params.tensors()
    header = {
        "version": checkpoint.version,
        "config": asdict(checkpoint.config),
        "max_len": checkpoint.max_len,
        "vocab_hash": checkpoint.vocab_hash,
        "loss_history": checkpoint.loss_history,
        "tensors": [[name, list(t.shape)] for name, t in tensors.items()],
        "vocab_entries": checkpoint.vocab.entries[2:],
        "vocab_counts": checkpoint.vocab.counts[2:],
    }
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        for tensor in tensors.values():
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelCheckpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        header = json.loads(fh.readline().decode("utf-8"))
        arrays = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError("truncated checkpoint tensor data")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    from .vocab import MASK_TOKEN, UNK_TOKEN  # reserved slots are implicit

    vocab = Vocabulary(
        entries=[MASK_TOKEN, UNK_TOKEN] + list(header["vocab_entries"]),
        counts=[0, 0] + [int(c) for c in header["vocab_counts"]],
    )
    params = ModelParams(**arrays)
    params.validate_shapes()
    checkpoint = ModelCheckpoint(
        params=params,
        vocab=vocab,
        config=TrainConfig(**header["config"]),
        max_len=int(header["max_len"]),
        loss_history=[float(x) for x in header["loss_history"]],
        version=int(header["version"]),
    )
    if checkpoint.vocab_hash != header["vocab_hash"]:
        raise ValueError("vocabulary hash mismatch in checkpoint")
    return checkpoint
