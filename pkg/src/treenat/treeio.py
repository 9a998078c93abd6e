"""Interchange file formats.

Trees: UTF-8 text, one serialized tree per line (``.trees``). A sidecar
``<name>.meta`` maps 1-based line numbers to source ids
(``lineno<TAB>source_id``); absent a sidecar, source ids default to
``line<N>``.

Commits: JSON lines, one record each, with method trees referenced by
1-based line number into a companion ``.trees`` file::

    {"commit_id": str, "timestamp": int, "label": 0|1,
     "provenance": str, "methods": [{"method_id": str, "tree": int}, ...]}

The provenance field records where the defect labels came from (for mined
corpora, the mining tool and parameters).
"""

import json
import os

from .trees import AstTree, deserialize_tree, serialize_tree


def write_trees(trees: list[AstTree], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tree in trees:
            fh.write(serialize_tree(tree) + "\n")
    meta = str(path) + ".meta"
    with open(meta, "w", encoding="utf-8", newline="\n") as fh:
        for i, tree in enumerate(trees, start=1):
            fh.write(f"{i}\t{tree.source_id}\n")


def read_trees(path) -> list[AstTree]:
    source_ids: dict[int, str] = {}
    meta = str(path) + ".meta"
    if os.path.exists(meta):
        with open(meta, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                num, _, sid = line.partition("\t")
                source_ids[int(num)] = sid
    trees = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            trees.append(deserialize_tree(line, source_id=source_ids.get(i, f"line{i}")))
    return trees


def write_commits(commits, path) -> tuple[str, str]:
    """Write commit records plus their method trees; returns both paths."""
    trees_path = str(path) + ".trees"
    all_trees: list[AstTree] = []
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for commit in commits:
            methods = []
            for method_id, tree in commit.methods:
                all_trees.append(tree)
                methods.append({"method_id": method_id, "tree": len(all_trees)})
            record = {
                "commit_id": commit.commit_id,
                "timestamp": commit.timestamp,
                "label": int(commit.label),
                "provenance": commit.provenance,
                "methods": methods,
            }
            fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
    write_trees(all_trees, trees_path)
    return str(path), trees_path


def read_commits(path, trees_path=None):
    """Load commit records; method trees resolved from the companion file."""
    from .defects import CommitRecord

    if trees_path is None:
        trees_path = str(path) + ".trees"
    trees = read_trees(trees_path)
    commits = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            methods = []
            for m in rec["methods"]:
                idx = int(m["tree"])
                if not 1 <= idx <= len(trees):
                    raise ValueError(f"tree reference {idx} out of range")
                methods.append((m["method_id"], trees[idx - 1]))
            commits.append(CommitRecord(
                commit_id=rec["commit_id"],
                timestamp=int(rec["timestamp"]),
                methods=methods,
                label=bool(rec["label"]),
                provenance=rec.get("provenance", ""),
            ))
    return commits
