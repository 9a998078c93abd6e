"""AST data model: rooted ordered labeled trees, serialization, masking.

Leaves carry source tokens, inner nodes carry grammar labels. Trees are
stored as a flat node array indexed by dense integer ids, which keeps
traversals cheap and makes structural sharing between a tree and its
masked copies straightforward.

Serialized form is one line per tree: ``(Label child child ...)`` where a
leaf is a double-quoted token and an inner node is a parenthesised list
starting with its label. Labels that contain whitespace, parentheses,
quotes or backslashes are quoted as well. Parsing the output reproduces
the tree exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTreeError, NotALeafError, TreeFormatError

MASK_TOKEN = "<MASK>"
UNK_TOKEN = "<UNK>"


@dataclass
class AstNode:
    label: str
    parent: int | None
    children: list[int] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class AstTree:
    nodes: list[AstNode]
    root: int
    source_id: str = ""
    _postorder: list[int] | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.nodes)

    def postorder(self) -> list[int]:
        """Node ids with every child before its parent; cached."""
        if self._postorder is None:
            out: list[int] = []
            stack = [(self.root, False)]
            while stack:
                node, expanded = stack.pop()
                if expanded:
                    out.append(node)
                else:
                    stack.append((node, True))
                    for child in reversed(self.nodes[node].children):
                        stack.append((child, False))
            self._postorder = out
        return self._postorder

    def leaves(self) -> list[int]:
        return [i for i in self.preorder() if self.nodes[i].is_leaf]

    def preorder(self) -> list[int]:
        out: list[int] = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            stack.extend(reversed(self.nodes[node].children))
        return out

    def depth(self) -> int:
        """Longest root-to-leaf path counted in nodes."""
        depths = {self.root: 1}
        best = 1
        for i in self.preorder():
            d = depths[i]
            best = max(best, d)
            for c in self.nodes[i].children:
                depths[c] = d + 1
        return best

    def subtree_ids(self, node: int) -> list[int]:
        out = []
        stack = [node]
        while stack:
            i = stack.pop()
            out.append(i)
            stack.extend(self.nodes[i].children)
        return out

    def validate(self) -> None:
        """Check the tree property: one root, consistent parents, no cycles."""
        n = len(self.nodes)
        if n == 0:
            raise TreeFormatError("tree has no nodes")
        if not 0 <= self.root < n:
            raise TreeFormatError("root id out of range")
        if self.nodes[self.root].parent is not None:
            raise TreeFormatError("root must have no parent")
        seen = set()
        for i in self.preorder():
            if i in seen:
                raise TreeFormatError("cycle or shared node detected")
            seen.add(i)
            for c in self.nodes[i].children:
                if not 0 <= c < n or self.nodes[c].parent != i:
                    raise TreeFormatError(f"bad parent link at node {c}")
            if not self.nodes[i].label:
                raise TreeFormatError(f"empty label at node {i}")
        if len(seen) != n:
            raise TreeFormatError("unreachable nodes present")


def structurally_equal(a: AstTree, b: AstTree) -> bool:
    """Same shape and labels, ignoring node-id numbering and source_id."""
    def key(tree: AstTree, node: int):
        stack = [(node, False)]
        out = []
        while stack:
            i, done = stack.pop()
            nd = tree.nodes[i]
            if done or nd.is_leaf:
                out.append((nd.label, len(nd.children)))
            else:
                stack.append((i, True))
                for c in reversed(nd.children):
                    stack.append((c, False))
        return out

    return key(a, a.root) == key(b, b.root)


def leaf_sequence(tree: AstTree) -> list[str]:
    """Left-to-right leaf tokens t_1..t_n."""
    return [tree.nodes[i].label for i in tree.leaves()]


def branching_lca(tree: AstTree, leaf: int) -> int:
    """Nearest ancestor of `leaf` with at least two children.

    Falls back to the root when every ancestor is unary (the whole path is
    a chain), which keeps the operation total.
    """
    node = tree.nodes[leaf]
    if not node.is_leaf:
        raise NotALeafError(f"node {leaf} has children")
    cur = node.parent
    while cur is not None:
        if len(tree.nodes[cur].children) >= 2:
            return cur
        cur = tree.nodes[cur].parent
    return tree.root


# ---------------------------------------------------------------------------
# Serialization


_SAFE_ATOM = frozenset(
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
    "_.:,;+-*/%<>=!&|^~?@#$[]'`"
)


def _atom(label: str) -> str:
    if label and all(ch in _SAFE_ATOM for ch in label):
        return label
    return _quote(label)


def _quote(s: str) -> str:
    out = s.replace("\\", "\\\\").replace('"', '\\"')
    out = out.replace("\n", "\\n").replace("\r", "\\r")
    return f'"{out}"'


def serialize_tree(tree: AstTree) -> str:
    """One-line canonical nested form; inverse of deserialize_tree."""
    parts: list[str] = []
    stack: list[tuple[int, bool]] = [(tree.root, False)]
    while stack:
        node, closing = stack.pop()
        if closing:
            parts.append(")")
            continue
        nd = tree.nodes[node]
        if nd.is_leaf:
            parts.append(_quote(nd.label))
        else:
            parts.append("(" + _atom(nd.label))
            stack.append((node, True))
            for c in reversed(nd.children):
                stack.append((c, False))
    out: list[str] = []
    for p in parts:
        if out and p != ")":
            out.append(" ")
        out.append(p)
    return "".join(out)


def _tokenize_sexpr(text: str):
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in " \t":
            i += 1
        elif ch in "()":
            yield ch, i
            i += 1
        elif ch == '"':
            j = i + 1
            buf = []
            while j < n and text[j] != '"':
                if text[j] == "\\":
                    j += 1
                    if j >= n:
                        raise TreeFormatError(f"dangling escape at {j}")
                    buf.append({"n": "\n", "r": "\r"}.get(text[j], text[j]))
                else:
                    buf.append(text[j])
                j += 1
            if j >= n:
                raise TreeFormatError(f"unterminated string at {i}")
            yield ("str", "".join(buf)), i
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in ' \t()"':
                j += 1
            yield ("atom", text[i:j]), i
            i = j


def deserialize_tree(text: str, source_id: str = "") -> AstTree:
    """Parse one serialized line back into an AstTree."""
    nodes: list[AstNode] = []
    stack: list[int] = []  # open inner nodes
    root: int | None = None

    def attach(idx: int) -> None:
        nonlocal root
        if stack:
            nodes[idx].parent = stack[-1]
            nodes[stack[-1]].children.append(idx)
        elif root is None:
            root = idx
        else:
            raise TreeFormatError("multiple top-level trees on one line")

    tokens = _tokenize_sexpr(text)
    for tok, pos in tokens:
        if tok == "(":
            for tok2, pos2 in tokens:
                if isinstance(tok2, tuple):
                    kind, value = tok2
                    if not value:
                        raise TreeFormatError(f"empty label at {pos2}")
                    nodes.append(AstNode(label=value, parent=None))
                    attach(len(nodes) - 1)
                    stack.append(len(nodes) - 1)
                    break
                raise TreeFormatError(f"expected label after '(' at {pos}")
            else:
                raise TreeFormatError(f"expected label after '(' at {pos}")
        elif tok == ")":
            if not stack:
                raise TreeFormatError(f"unbalanced ')' at {pos}")
            closed = stack.pop()
            if not nodes[closed].children:
                raise TreeFormatError(
                    f"inner node '{nodes[closed].label}' has no children at {pos}"
                )
        else:
            kind, value = tok
            if kind == "atom":
                raise TreeFormatError(f"bare atom outside '(' at {pos}: {value!r}")
            if not value:
                raise TreeFormatError(f"empty token at {pos}")
            nodes.append(AstNode(label=value, parent=None))
            attach(len(nodes) - 1)
    if stack:
        raise TreeFormatError("unbalanced '(': missing close")
    if root is None:
        raise TreeFormatError("empty tree text")
    tree = AstTree(nodes=nodes, root=root, source_id=source_id)
    tree.validate()
    return tree


# ---------------------------------------------------------------------------
# Masking


@dataclass
class MaskedExample:
    """A tree with one hidden prediction target.

    All labels in the subtree rooted at the target's branching ancestor are
    replaced by MASK, as is any other occurrence of the target token in the
    tree, so the target string never survives as model input. Shape is kept.
    """

    tree: AstTree
    target_leaf: int
    target_token: int
    masked_subtree_root: int
    label_ids: np.ndarray  # vocab ids of the masked tree, aligned to node ids


def make_masked_example(tree: AstTree, vocab, rng) -> MaskedExample:
    """Pick a uniform random target leaf and mask its leakage region."""
    leaves = tree.leaves()
    if not leaves:
        raise EmptyTreeError("tree has no leaves")
    target = leaves[int(rng.integers(len(leaves)))]
    target_label = tree.nodes[target].label
    region_root = branching_lca(tree, target)
    masked = set(tree.subtree_ids(region_root))
    # no-leakage: hide every other occurrence of the target token as well
    for i, node in enumerate(tree.nodes):
        if node.label == target_label:
            masked.add(i)

    new_nodes = [
        AstNode(label=MASK_TOKEN if i in masked else nd.label,
                parent=nd.parent, children=nd.children)
        for i, nd in enumerate(tree.nodes)
    ]
    masked_tree = AstTree(nodes=new_nodes, root=tree.root, source_id=tree.source_id)
    masked_tree._postorder = tree.postorder()
    ids = np.fromiter(
        (vocab.encode(nd.label) for nd in new_nodes), dtype=np.int64, count=len(new_nodes)
    )
    return MaskedExample(
        tree=masked_tree,
        target_leaf=target,
        target_token=vocab.encode(target_label),
        masked_subtree_root=region_root,
        label_ids=ids,
    )


# ---------------------------------------------------------------------------
# Corpus filtering


@dataclass(frozen=True)
class TrivialityRule:
    """Degenerate-tree detector.

    A tree is trivial when it is a near-pure chain
    (depth - 1 >= chain_ratio * node count) or when a single child of the
    root dominates at least `dominance_ratio` of all nodes while every
    other root child is a bare leaf (one opaque block holding everything).
    """

    chain_ratio: float = 0.9
    dominance_ratio: float = 0.95

    def is_trivial(self, tree: AstTree) -> bool:
        n = len(tree.nodes)
        if tree.depth() - 1 >= self.chain_ratio * n:
            return True
        # Dominance clause needs siblings to compare against; a unary root is
        # an ordinary wrapper and is judged by the chain clause alone.
        root_children = tree.nodes[tree.root].children
        if len(root_children) >= 2:
            sizes = [len(tree.subtree_ids(c)) for c in root_children]
            for i, c in enumerate(root_children):
                others_leaves = all(
                    tree.nodes[o].is_leaf for j, o in enumerate(root_children) if j != i
                )
                if sizes[i] >= self.dominance_ratio * n and others_leaves:
                    return True
        return False


DEFAULT_TRIVIALITY = TrivialityRule()


def filter_corpus(
    trees: list[AstTree],
    max_len: int,
    triviality: TrivialityRule = DEFAULT_TRIVIALITY,
) -> list[AstTree]:
    """Keep trees with at most max_len leaves that are not trivial; stable order."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    return [
        t for t in trees
        if len(t.leaves()) <= max_len and not triviality.is_trivial(t)
    ]
