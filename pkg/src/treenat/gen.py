"""Random toy-language program generation and shuffled control corpora."""

from dataclasses import dataclass

import numpy as np

from .toylang import parse_toy
from .trees import AstNode, AstTree

_FN_NAMES = (
    "main", "init", "step", "calc", "scan", "emit", "next", "pick",
    "fold", "push", "trim", "grow", "mark", "seek", "join", "rank",
)
_VAR_NAMES = (
    "a", "b", "c", "x", "y", "z", "i", "j", "n", "m", "k", "t",
    "p", "q", "r", "s", "u", "v", "w", "d", "e", "g", "h", "o",
)


@dataclass(frozen=True)
class CorpusSpec:
    """Size/shape knobs for generated programs."""

    size: int
    functions_min: int = 1
    functions_max: int = 1
    stmts_min: int = 1
    stmts_max: int = 4
    max_expr_depth: int = 2
    ident_pool: int = 12
    number_pool: int = 20
    reuse_prob: float = 0.6  # prefer an in-scope name over a literal


class _ProgramWriter:
    def __init__(self, spec: CorpusSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        self.fn_names: list[str] = []

    def pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def number(self) -> str:
        return str(int(self.rng.integers(self.spec.number_pool)))

    def terminal(self, scope: list[str]) -> str:
        r = self.rng.random()
        if scope and r < self.spec.reuse_prob:
            return self.pick(scope)
        if r < self.spec.reuse_prob + 0.08:
            return self.pick(("true", "false"))
        return self.number()

    def expr(self, scope: list[str], depth: int) -> str:
        if depth <= 0 or self.rng.random() < 0.35:
            return self.terminal(scope)
        kind = self.rng.random()
        if kind < 0.45:
            op = self.pick(("+", "-", "*", "/", "%"))
            return f"{self.expr(scope, depth - 1)} {op} {self.expr(scope, depth - 1)}"
        if kind < 0.60:
            op = self.pick(("==", "!=", "<", ">", "<=", ">="))
            return f"{self.expr(scope, depth - 1)} {op} {self.expr(scope, depth - 1)}"
        if kind < 0.68:
            op = self.pick(("&&", "||"))
            return f"{self.expr(scope, depth - 1)} {op} {self.expr(scope, depth - 1)}"
        if kind < 0.76:
            return f"-{self.terminal(scope)}"
        if kind < 0.86 and self.fn_names:
            callee = self.pick(self.fn_names)
            n_args = int(self.rng.integers(0, 3))
            args = ", ".join(self.expr(scope, 0) for _ in range(n_args))
            return f"{callee}({args})"
        return f"({self.expr(scope, depth - 1)})"

    def condition(self, scope: list[str]) -> str:
        op = self.pick(("==", "!=", "<", ">", "<=", ">="))
        return f"{self.terminal(scope)} {op} {self.terminal(scope)}"

    def statement(self, scope: list[str], depth: int) -> str:
        names = _VAR_NAMES[: self.spec.ident_pool]
        kind = self.rng.random()
        d = self.spec.max_expr_depth
        if kind < 0.30:
            name = self.pick(names)
            stmt = f"let {name} = {self.expr(scope, d)};"
            if name not in scope:
                scope.append(name)
            return stmt
        if kind < 0.55 and scope:
            return f"{self.pick(scope)} = {self.expr(scope, d)};"
        if kind < 0.68 and depth > 0:
            body = self.statement(scope, depth - 1)
            return f"if ({self.condition(scope)}) {{ {body} }}"
        if kind < 0.76 and depth > 0 and scope:
            var = self.pick(scope)
            body = f"{var} = {var} - 1;"
            return f"while ({self.condition(scope)}) {{ {body} }}"
        if kind < 0.86:
            return f"{self.expr(scope, d)};"
        return f"return {self.expr(scope, d)};"

    def function(self, name: str) -> str:
        names = _VAR_NAMES[: self.spec.ident_pool]
        n_params = int(self.rng.integers(0, 3))
        params = [str(p) for p in self.rng.choice(names, size=n_params, replace=False)]
        scope = list(params)
        n_stmts = int(self.rng.integers(self.spec.stmts_min, self.spec.stmts_max + 1))
        stmts = [self.statement(scope, 1) for _ in range(n_stmts)]
        stmts.append(f"return {self.terminal(scope)};")
        body = " ".join(stmts)
        return f"fn {name}({', '.join(params)}) {{ {body} }}"

    def program(self) -> str:
        n_funcs = int(self.rng.integers(self.spec.functions_min, self.spec.functions_max + 1))
        n_funcs = min(n_funcs, len(_FN_NAMES))
        self.fn_names = [str(f) for f in self.rng.choice(_FN_NAMES, size=n_funcs, replace=False)]
        return "\n".join(self.function(name) for name in self.fn_names)


def generate_program(spec: CorpusSpec, rng: np.random.Generator) -> str:
    """One random toy-language source text."""
    return _ProgramWriter(spec, rng).program()


def generate_corpus(spec: CorpusSpec, rng: np.random.Generator) -> list[AstTree]:
    """`spec.size` random programs, parsed; source_id is the running index."""
    if spec.size < 1:
        raise ValueError("corpus size must be >= 1")
    trees = []
    for i in range(spec.size):
        source = generate_program(spec, rng)
        trees.append(parse_toy(source, source_id=f"gen-{i}"))
    return trees


def shuffle_leaf_tokens(trees: list[AstTree], rng: np.random.Generator) -> list[AstTree]:
    """Control corpus: permute all leaf tokens globally across the corpus.

    Tree shapes, inner labels, corpus size and the token multiset (hence
    the vocabulary) are preserved; any dependence of a token on its
    structural context is destroyed.
    """
    positions = [(ti, leaf) for ti, tree in enumerate(trees) for leaf in tree.leaves()]
    tokens = [trees[ti].nodes[leaf].label for ti, leaf in positions]
    perm = rng.permutation(len(tokens))
    shuffled: list[AstTree] = []
    for tree in trees:
        nodes = [AstNode(label=nd.label, parent=nd.parent, children=list(nd.children))
                 for nd in tree.nodes]
        shuffled.append(AstTree(nodes=nodes, root=tree.root,
                                source_id=tree.source_id + "-shuffled"))
    for slot, (ti, leaf) in enumerate(positions):
        shuffled[ti].nodes[leaf].label = tokens[perm[slot]]
    return shuffled
