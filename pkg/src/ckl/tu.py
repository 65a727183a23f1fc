"""Reader and writer for the TU flat-file graph dataset layout.

A dataset named NAME in directory D consists of:

    D/NAME_A.txt                one directed edge "i, j" per line, 1-based
    D/NAME_graph_indicator.txt  graph id (1-based) of node i on line i
    D/NAME_graph_labels.txt     class label of graph g on line g
    D/NAME_node_labels.txt      optional discrete node label per line
    D/NAME_node_attributes.txt  optional comma-separated float vector per line

Integers may be separated by commas and/or whitespace. On load, indices
become 0-based, the two directed copies of an edge collapse into one
undirected edge, and graph labels are remapped onto a contiguous
[0, num_classes) range by sorted original value. Node features come from
the attributes file when present, else a one-hot encoding of node labels,
else a constant 1.0 column.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .graphs import Dataset, Graph

REQUIRED_SUFFIXES = ("_A.txt", "_graph_indicator.txt", "_graph_labels.txt")


class TuLoadError(Exception):
    """Raised when the flat files are missing or malformed."""


def _int_fields(line: str) -> list[int]:
    return [int(tok) for tok in line.replace(",", " ").split()]


def _read_lines(path: Path) -> list[str]:
    return [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]


def load_tu_dataset(dir_path: str | Path, name: str) -> Dataset:
    root = Path(dir_path)
    paths = {suffix: root / f"{name}{suffix}" for suffix in REQUIRED_SUFFIXES}
    for suffix, path in paths.items():
        if not path.exists():
            raise TuLoadError(f"missing required file: {path}")

    indicator_path = paths["_graph_indicator.txt"]
    node_graph: list[int] = []
    for lineno, line in enumerate(_read_lines(indicator_path), start=1):
        try:
            (gid,) = _int_fields(line)
        except ValueError:
            raise TuLoadError(f"{indicator_path}:{lineno}: expected one integer") from None
        if gid < 1:
            raise TuLoadError(f"{indicator_path}:{lineno}: graph id must be >= 1")
        node_graph.append(gid)
    if not node_graph:
        raise TuLoadError(f"{indicator_path}: no nodes listed")
    num_nodes_total = len(node_graph)
    graph_ids = sorted(set(node_graph))

    # global 1-based node index -> (graph position, local 0-based index)
    gid_to_pos = {gid: pos for pos, gid in enumerate(graph_ids)}
    local_index: list[tuple[int, int]] = []
    counters = {gid: 0 for gid in graph_ids}
    for gid in node_graph:
        local_index.append((gid_to_pos[gid], counters[gid]))
        counters[gid] += 1
    graph_sizes = [counters[gid] for gid in graph_ids]

    edges_per_graph: list[set[tuple[int, int]]] = [set() for _ in graph_ids]
    a_path = paths["_A.txt"]
    for lineno, line in enumerate(_read_lines(a_path), start=1):
        fields = _int_fields(line)
        if len(fields) != 2:
            raise TuLoadError(f"{a_path}:{lineno}: expected two integers")
        u, v = fields
        if not (1 <= u <= num_nodes_total and 1 <= v <= num_nodes_total):
            raise TuLoadError(f"{a_path}:{lineno}: node index out of range")
        if u == v:
            raise TuLoadError(f"{a_path}:{lineno}: self-loop on node {u}")
        (gu, lu), (gv, lv) = local_index[u - 1], local_index[v - 1]
        if gu != gv:
            raise TuLoadError(f"{a_path}:{lineno}: edge crosses graph boundary")
        edges_per_graph[gu].add((lu, lv) if lu < lv else (lv, lu))

    labels_path = paths["_graph_labels.txt"]
    raw_labels: list[int] = []
    for lineno, line in enumerate(_read_lines(labels_path), start=1):
        try:
            (lab,) = _int_fields(line)
        except ValueError:
            raise TuLoadError(f"{labels_path}:{lineno}: expected one integer") from None
        raw_labels.append(lab)
    if len(raw_labels) != len(graph_ids):
        raise TuLoadError(
            f"{labels_path}: {len(raw_labels)} labels for {len(graph_ids)} graphs"
        )
    label_map = {lab: i for i, lab in enumerate(sorted(set(raw_labels)))}
    class_labels = [label_map[lab] for lab in raw_labels]

    node_labels_path = root / f"{name}_node_labels.txt"
    node_labels: list[int] | None = None
    if node_labels_path.exists():
        raw = []
        for lineno, line in enumerate(_read_lines(node_labels_path), start=1):
            try:
                (lab,) = _int_fields(line)
            except ValueError:
                raise TuLoadError(
                    f"{node_labels_path}:{lineno}: expected one integer"
                ) from None
            raw.append(lab)
        if len(raw) != num_nodes_total:
            raise TuLoadError(
                f"{node_labels_path}: {len(raw)} labels for {num_nodes_total} nodes"
            )
        remap = {lab: i for i, lab in enumerate(sorted(set(raw)))}
        node_labels = [remap[lab] for lab in raw]

    attrs_path = root / f"{name}_node_attributes.txt"
    attributes: np.ndarray | None = None
    if attrs_path.exists():
        rows: list[list[float]] = []
        arity: int | None = None
        for lineno, line in enumerate(_read_lines(attrs_path), start=1):
            try:
                row = [float(tok) for tok in line.replace(",", " ").split()]
            except ValueError:
                raise TuLoadError(f"{attrs_path}:{lineno}: malformed float") from None
            if arity is None:
                arity = len(row)
            elif len(row) != arity:
                raise TuLoadError(
                    f"{attrs_path}:{lineno}: expected {arity} attributes, got {len(row)}"
                )
            rows.append(row)
        if len(rows) != num_nodes_total:
            raise TuLoadError(
                f"{attrs_path}: {len(rows)} rows for {num_nodes_total} nodes"
            )
        attributes = np.asarray(rows, dtype=np.float64)

    if attributes is not None:
        features = attributes
    elif node_labels is not None:
        dim = max(node_labels) + 1
        features = np.zeros((num_nodes_total, dim))
        features[np.arange(num_nodes_total), node_labels] = 1.0
    else:
        features = np.ones((num_nodes_total, 1))

    node_rows: list[list[int]] = [[] for _ in graph_ids]
    for global_idx, (gpos, _) in enumerate(local_index):
        node_rows[gpos].append(global_idx)

    graphs = []
    for gpos, size in enumerate(graph_sizes):
        rows = node_rows[gpos]
        labels = None
        if node_labels is not None:
            labels = [node_labels[r] for r in rows]
        graphs.append(
            Graph(
                size,
                sorted(edges_per_graph[gpos]),
                features[rows],
                labels,
                class_labels[gpos],
            )
        )
    return Dataset(graphs, num_classes=len(label_map), name=name)


def write_tu_dataset(dir_path: str | Path, ds: Dataset) -> None:
    """Write a dataset back out in the flat-file layout (both edge directions)."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    name = ds.name or "dataset"

    a_lines: list[str] = []
    indicator: list[str] = []
    label_lines: list[str] = []
    node_label_lines: list[str] = []
    attr_lines: list[str] = []
    offset = 0
    has_node_labels = all(g.node_labels is not None for g in ds.graphs)
    for gi, g in enumerate(ds.graphs, start=1):
        for u, v in g.edges:
            a_lines.append(f"{offset + u + 1}, {offset + v + 1}")
            a_lines.append(f"{offset + v + 1}, {offset + u + 1}")
        indicator.extend([str(gi)] * g.num_nodes)
        label_lines.append(str(g.class_label if g.class_label is not None else 0))
        if has_node_labels:
            node_label_lines.extend(str(x) for x in g.node_labels)
        for row in g.node_features:
            attr_lines.append(", ".join(repr(float(x)) for x in row))
        offset += g.num_nodes

    def dump(suffix: str, lines: list[str]) -> None:
        (root / f"{name}{suffix}").write_text("\n".join(lines) + "\n", encoding="utf-8")

    dump("_A.txt", a_lines)
    dump("_graph_indicator.txt", indicator)
    dump("_graph_labels.txt", label_lines)
    if has_node_labels:
        dump("_node_labels.txt", node_label_lines)
    dump("_node_attributes.txt", attr_lines)
