"""Label/token vocabulary with reserved MASK and UNK ids."""

import hashlib
from dataclasses import dataclass, field

from .errors import EmptyCorpusError
from .trees import AstTree, MASK_TOKEN, UNK_TOKEN

MASK_ID = 0
UNK_ID = 1


@dataclass
class Vocabulary:
    """Dense bidirectional string <-> id map.

    Ids 0 and 1 are reserved for MASK and UNK; corpus labels start at 2 and
    are ordered by descending count with a lexicographic tie-break, so the
    same corpus always yields the same ids.
    """

    entries: list[str]
    counts: list[int]
    _index: dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self._index:
            self._index = {s: i for i, s in enumerate(self.entries)}

    def __len__(self) -> int:
        return len(self.entries)

    def encode(self, label: str) -> int:
        return self._index.get(label, UNK_ID)

    def decode(self, idx: int) -> str:
        return self.entries[idx]

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def content_hash(self) -> str:
        payload = "\n".join(f"{s}\t{c}" for s, c in zip(self.entries, self.counts))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def build_vocabulary(trees: list[AstTree]) -> Vocabulary:
    """Count every label (inner and leaf) across the corpus and assign ids."""
    if not trees:
        raise EmptyCorpusError("cannot build a vocabulary from an empty corpus")
    counts: dict[str, int] = {}
    for tree in trees:
        for node in tree.nodes:
            counts[node.label] = counts.get(node.label, 0) + 1
    for reserved in (MASK_TOKEN, UNK_TOKEN):
        if reserved in counts:
            raise ValueError(f"reserved label {reserved!r} occurs in the corpus")
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    entries = [MASK_TOKEN, UNK_TOKEN] + [s for s, _ in ordered]
    return Vocabulary(entries=entries, counts=[0, 0] + [c for _, c in ordered])


def save_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s, c in zip(vocab.entries[2:], vocab.counts[2:]):
            fh.write(f"{s}\t{c}\n")


def load_vocabulary(path) -> Vocabulary:
    entries = [MASK_TOKEN, UNK_TOKEN]
    counts = [0, 0]
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            label, _, count = line.rpartition("\t")
            entries.append(label)
            counts.append(int(count))
    return Vocabulary(entries=entries, counts=counts)
