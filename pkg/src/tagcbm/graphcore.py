"""Text-attributed graph data model, ego-network extraction and GraphML I/O."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping
from xml.parsers import expat
from xml.sax.saxutils import escape

import numpy as np

from . import _kernels

DEFAULT_HOPS = 2
DEFAULT_MAX_NEIGHBORS = 20


class GraphInputError(ValueError):
    """Invalid graph, node id or payload."""


class GraphMLError(ValueError):
    """Malformed GraphML document; carries the 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


def _edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


def normalize_edges(pairs: Iterable[Iterable[int]], n: int | None = None) -> frozenset[tuple[int, int]]:
    """Symmetrize directed pairs into unordered edges, rejecting self-loops."""
    out = set()
    for pair in pairs:
        u, v = (int(x) for x in pair)
        if u == v:
            raise GraphInputError(f"self-loop on node {u}")
        if n is not None and not (0 <= u < n and 0 <= v < n):
            raise GraphInputError(f"edge ({u}, {v}) references a node outside [0, {n})")
        out.add(_edge(u, v))
    return frozenset(out)


@dataclass(frozen=True)
class NodeRecord:
    id: int
    text: str
    label: int | None = None

    def __post_init__(self):
        if self.text is None:
            raise GraphInputError(f"node {self.id} has no text")


@dataclass(frozen=True)
class TextAttributedGraph:
    nodes: tuple[NodeRecord, ...]
    edges: frozenset[tuple[int, int]]
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        n = len(self.nodes)
        for i, node in enumerate(self.nodes):
            if node.id != i:
                raise GraphInputError(f"node ids must be dense in [0, {n}); got {node.id} at position {i}")
            if node.label is not None and not (0 <= node.label < len(self.class_names)):
                raise GraphInputError(f"node {i} label {node.label} outside [0, {len(self.class_names)})")
        edges = frozenset(self.edges)
        for u, v in edges:
            if u >= v:
                raise GraphInputError(f"edge ({u}, {v}) is not in canonical (u < v) form")
            if v >= n or u < 0:
                raise GraphInputError(f"edge ({u}, {v}) references a node outside [0, {n})")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def build(cls, texts: Iterable[str], edges: Iterable[Iterable[int]],
              labels: Iterable[int | None] | None = None,
              class_names: Iterable[str] = ()) -> "TextAttributedGraph":
        """Construct from parallel arrays; directed edges are symmetrized."""
        texts = list(texts)
        labels = [None] * len(texts) if labels is None else list(labels)
        if len(labels) != len(texts):
            raise GraphInputError("labels and texts differ in length")
        nodes = tuple(NodeRecord(i, t, None if y is None else int(y))
                      for i, (t, y) in enumerate(zip(texts, labels)))
        return cls(nodes, normalize_edges(edges, len(nodes)), tuple(class_names))

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @cached_property
    def texts(self) -> tuple[str, ...]:
        return tuple(node.text for node in self.nodes)

    @cached_property
    def labels(self) -> np.ndarray:
        """Label per node, -1 where unlabeled."""
        return np.array([-1 if nd.label is None else nd.label for nd in self.nodes], dtype=np.int64)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Symmetric adjacency as (indptr, indices) with sorted neighbor lists."""
        return _csr_from_edges(self.num_nodes, self.edges)

    def neighbors(self, u: int) -> np.ndarray:
        indptr, indices = self.csr
        return indices[indptr[u]:indptr[u + 1]]

    def with_edges(self, edges: Iterable[tuple[int, int]]) -> "TextAttributedGraph":
        return TextAttributedGraph(self.nodes, normalize_edges(edges, self.num_nodes), self.class_names)

    def check_node(self, u) -> int:
        if isinstance(u, (bool, np.bool_)) or not isinstance(u, (int, np.integer)):
            raise GraphInputError(f"node id must be an integer, got {u!r}")
        if not 0 <= u < self.num_nodes:
            raise GraphInputError(f"node id {u} outside [0, {self.num_nodes})")
        return int(u)

    # JSON dataset format: {nodes: [{id, text, label}], edges: [[u, v]], class_names: [...]}

    def to_json(self) -> dict:
        return {
            "nodes": [{"id": nd.id, "text": nd.text, "label": nd.label} for nd in self.nodes],
            "edges": [list(e) for e in sorted(self.edges)],
            "class_names": list(self.class_names),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "TextAttributedGraph":
        try:
            raw = sorted(obj["nodes"], key=lambda r: int(r["id"]))
            nodes = tuple(NodeRecord(int(r["id"]), r["text"], None if r.get("label") is None else int(r["label"]))
                          for r in raw)
            class_names = tuple(obj.get("class_names", ()))
            edges = normalize_edges(obj.get("edges", ()), len(nodes))
        except (KeyError, TypeError) as exc:
            raise GraphInputError(f"malformed dataset object: {exc}") from exc
        return cls(nodes, edges, class_names)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False, indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TextAttributedGraph":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _csr_from_edges(n: int, edges) -> tuple[np.ndarray, np.ndarray]:
    if not edges:
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    e = np.array(sorted(edges), dtype=np.int64)
    src = np.concatenate([e[:, 0], e[:, 1]])
    dst = np.concatenate([e[:, 1], e[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return indptr, dst


@dataclass(frozen=True)
class EgoNetwork:
    center: int
    nodes: frozenset[int]
    edges: frozenset[tuple[int, int]]
    hop_radius: int = DEFAULT_HOPS
    sorted_nodes: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", frozenset(int(u) for u in self.nodes))
        object.__setattr__(self, "edges", frozenset(self.edges))
        if self.center not in self.nodes:
            raise GraphInputError("ego-network must contain its center")
        for u, v in self.edges:
            if u >= v or u not in self.nodes or v not in self.nodes:
                raise GraphInputError(f"edge ({u}, {v}) is not a canonical edge inside the node set")
        object.__setattr__(self, "sorted_nodes", tuple(sorted(self.nodes)))

    @property
    def center_index(self) -> int:
        """Position of the center in ``sorted_nodes``."""
        return self.sorted_nodes.index(self.center)

    @cached_property
    def local_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Adjacency over ``sorted_nodes`` positions."""
        pos = {u: i for i, u in enumerate(self.sorted_nodes)}
        return _csr_from_edges(len(pos), {(pos[u], pos[v]) for u, v in self.edges})


def khop_ball(graph: TextAttributedGraph, center: int, k: int) -> np.ndarray:
    """Sorted ids of every node within ``k`` hops of ``center``."""
    indptr, indices = graph.csr
    dist = _kernels.khop_distances(indptr, indices, center, k)
    return np.flatnonzero(dist >= 0)


def induced_edges(edges: Iterable[tuple[int, int]], nodes) -> frozenset[tuple[int, int]]:
    keep = set(nodes)
    return frozenset(e for e in edges if e[0] in keep and e[1] in keep)


def ego_network(graph: TextAttributedGraph, center: int, k: int = DEFAULT_HOPS,
                max_neighbors: int | None = DEFAULT_MAX_NEIGHBORS, seed: int = 0) -> EgoNetwork:
    """Induced k-hop subgraph around ``center``.

    When more than ``max_neighbors`` non-center nodes lie within ``k`` hops, a
    seeded uniform sample of exactly ``max_neighbors`` of them is kept
    (``None`` disables the cap). Sampling is per ego-network, not per hop, so
    a capped 2-hop network can contain nodes whose bridge was not sampled.
    """
    center = graph.check_node(center)
    if k < 0:
        raise GraphInputError("hop radius must be non-negative")
    if max_neighbors is not None and max_neighbors < 0:
        raise GraphInputError("max_neighbors must be non-negative")
    ball = khop_ball(graph, center, k)
    others = ball[ball != center]
    if max_neighbors is not None and others.size > max_neighbors:
        rng = np.random.default_rng(seed)
        others = np.sort(rng.choice(others, size=max_neighbors, replace=False))
    nodes = frozenset(others.tolist()) | {center}
    edges = _ego_edges(graph, nodes)
    return EgoNetwork(center, nodes, edges, k)


def _ego_edges(graph: TextAttributedGraph, nodes: frozenset[int]) -> frozenset[tuple[int, int]]:
    indptr, indices = graph.csr
    out = set()
    for u in nodes:
        for v in indices[indptr[u]:indptr[u + 1]]:
            v = int(v)
            if u < v and v in nodes:
                out.add((u, v))
    return frozenset(out)


# --- GraphML subset -----------------------------------------------------------

_GRAPHML_NS = "http://graphml.graphdrawing.org/xmlns"
_XML_FORBIDDEN = {c for c in range(0x20) if c not in (0x09, 0x0A, 0x0D)}


def _escape_text(text: str) -> str:
    bad = [c for c in text if ord(c) in _XML_FORBIDDEN or 0xD800 <= ord(c) <= 0xDFFF or ord(c) in (0xFFFE, 0xFFFF)]
    if bad:
        raise GraphInputError(f"text contains characters not representable in XML: {bad[:3]!r}")
    # \r would be normalized away by any XML parser, so keep it as a reference
    return escape(text).replace("\r", "&#13;")


def to_graphml(subgraph: EgoNetwork, texts: Mapping[int, str] | list[str] | tuple[str, ...]) -> str:
    """Serialize an ego-network with node texts as a deterministic GraphML document."""
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<graphml xmlns="{_GRAPHML_NS}">',
        '  <key id="text" for="node" attr.name="text" attr.type="string"/>',
        f'  <graph id="ego_n{subgraph.center}" edgedefault="undirected">',
    ]
    for u in subgraph.sorted_nodes:
        try:
            text = texts[u]
        except (KeyError, IndexError):
            raise GraphInputError(f"no text for node {u}") from None
        if text is None:
            raise GraphInputError(f"no text for node {u}")
        lines.append(f'    <node id="n{u}"><data key="text">{_escape_text(text)}</data></node>')
    for u, v in sorted(subgraph.edges):
        lines.append(f'    <edge source="n{u}" target="n{v}"/>')
    lines.append("  </graph>")
    lines.append("</graphml>")
    return "\n".join(lines) + "\n"


def _node_ref(ref: str | None, where) -> int:
    if not ref or not ref.startswith("n") or not ref[1:].isdigit():
        raise GraphMLError(f"bad node reference {ref!r}", *where)
    return int(ref[1:])


class _GraphMLReader:
    def __init__(self):
        self.parser = expat.ParserCreate(namespace_separator=" ")
        self.parser.StartElementHandler = self.start
        self.parser.EndElementHandler = self.end
        self.parser.CharacterDataHandler = self.chars
        self.stack: list[str] = []
        self.center: int | None = None
        self.texts: dict[int, str] = {}
        self.edges: set[tuple[int, int]] = set()
        self.current: int | None = None
        self.buf: list[str] | None = None

    @property
    def where(self):
        return self.parser.CurrentLineNumber, self.parser.CurrentColumnNumber + 1

    def start(self, name, attrs):
        local = name.split(" ")[-1]
        parent = self.stack[-1] if self.stack else None
        expected = {None: "graphml", "graphml": ("key", "graph"), "graph": ("node", "edge"), "node": "data"}
        allowed = expected.get(parent, ())
        if local not in (allowed if isinstance(allowed, tuple) else (allowed,)):
            raise GraphMLError(f"unexpected element <{local}> inside <{parent}>", *self.where)
        if local == "key":
            if attrs.get("id") != "text":
                raise GraphMLError(f"unsupported key {attrs.get('id')!r}", *self.where)
        elif local == "graph":
            if self.center is not None:
                raise GraphMLError("more than one <graph>", *self.where)
            if attrs.get("edgedefault") != "undirected":
                raise GraphMLError("graph must be undirected", *self.where)
            gid = attrs.get("id", "")
            if not gid.startswith("ego_"):
                raise GraphMLError(f"graph id {gid!r} does not name a center", *self.where)
            self.center = _node_ref(gid[4:], self.where)
        elif local == "node":
            u = _node_ref(attrs.get("id"), self.where)
            if u in self.texts:
                raise GraphMLError(f"duplicate node n{u}", *self.where)
            self.current = u
        elif local == "data":
            if attrs.get("key") != "text":
                raise GraphMLError(f"unsupported data key {attrs.get('key')!r}", *self.where)
            self.buf = []
        elif local == "edge":
            u = _node_ref(attrs.get("source"), self.where)
            v = _node_ref(attrs.get("target"), self.where)
            if u == v:
                raise GraphMLError("self-loop edge", *self.where)
            e = _edge(u, v)
            if e in self.edges:
                raise GraphMLError(f"duplicate edge n{u}-n{v}", *self.where)
            self.edges.add(e)
        self.stack.append(local)

    def end(self, name):
        local = self.stack.pop()
        if local == "data":
            self.texts[self.current] = "".join(self.buf)
            self.buf = None
        elif local == "node":
            if self.current not in self.texts:
                raise GraphMLError(f"node n{self.current} has no text", *self.where)
            self.current = None

    def chars(self, data):
        if self.buf is not None:
            self.buf.append(data)
        elif data.strip():
            raise GraphMLError("unexpected character data", *self.where)


def from_graphml(doc: str) -> tuple[EgoNetwork, dict[int, str]]:
    """Parse a document written by :func:`to_graphml`.

    The hop radius is not stored in the document; it is recovered as the
    center's eccentricity within the parsed edge set.
    """
    reader = _GraphMLReader()
    try:
        reader.parser.Parse(doc.encode("utf-8"), True)
    except expat.ExpatError as exc:
        raise GraphMLError(expat.errors.messages[exc.code], exc.lineno, exc.offset + 1) from None
    if reader.center is None:
        raise GraphMLError("document has no <graph>", 1, 1)
    nodes = frozenset(reader.texts)
    for u, v in reader.edges:
        if u not in nodes or v not in nodes:
            raise GraphMLError(f"edge n{u}-n{v} references an undeclared node", 1, 1)
    if reader.center not in nodes:
        raise GraphMLError(f"center n{reader.center} is not a node", 1, 1)
    radius = _eccentricity(reader.center, nodes, reader.edges)
    ego = EgoNetwork(reader.center, nodes, frozenset(reader.edges), radius)
    return ego, dict(sorted(reader.texts.items()))


def _eccentricity(center: int, nodes, edges) -> int:
    adj: dict[int, list[int]] = {u: [] for u in nodes}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {center: 0}
    frontier = [center]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in seen:
                    seen[v] = seen[u] + 1
                    nxt.append(v)
        frontier = nxt
    return max(seen.values())
