"""Image relationship graph construction.

For a post with K segments the graph has K+1 nodes: node 0 is the
original image, nodes 1..K the generated images in segment order.  Edges
come from three heuristics: a central star connecting node 0 to every
generated node, a temporal chain following segment order, and dependency
edges obtained by merging a token-level parse into segment nodes.  Edge
provenance is kept as metadata; the adjacency itself is unweighted.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .segmentation import PUNCTUATION_TOKENS, SegmentSet

CENTRAL = "central"
TEMPORAL = "temporal"
DEPENDENCY = "dependency"

Edge = tuple[int, int]


@dataclass(frozen=True)
class DependencyEdges:
    """Token-level parse edges (head index, dependent index)."""

    edges: tuple[Edge, ...]

    def __post_init__(self):
        for h, d in self.edges:
            if h == d:
                raise ContractError(f"self-edge on token {h}")
            if h < 0 or d < 0:
                raise ContractError(f"negative token index in edge ({h}, {d})")


@dataclass(frozen=True)
class FusionGraph:
    """Adjacency Λ (0/1, symmetric, no self-loops stored) plus node features H."""

    adjacency: np.ndarray
    features: np.ndarray
    provenance: dict[Edge, frozenset[str]] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]


def build_central(k: int) -> set[Edge]:
    """Star edges {(0, j)} joining every generated image to the original."""
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    return {(0, j) for j in range(1, k + 1)}


def build_temporal(k: int) -> set[Edge]:
    """Chain edges {(j, j+1)} over generated images in segment order."""
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    return {(j, j + 1) for j in range(1, k)}


def build_dependency(dep: DependencyEdges, segments: SegmentSet) -> set[Edge]:
    """Merge token-level parse edges into segment-level edges.

    Tokens map to their segment's node (1-based); edges inside one segment
    vanish, duplicates collapse, and node 0 is never touched.
    """
    boundaries = []
    pos = 0
    for seg in segments.segments:
        pos += len(seg)
        boundaries.append(pos)
    token_count = segments.source_token_count

    def node_of(token_index: int) -> int:
        if token_index >= token_count:
            raise ContractError(
                f"token index {token_index} out of range for {token_count} tokens"
            )
        for seg_idx, end in enumerate(boundaries):
            if token_index < end:
                return seg_idx + 1
        raise AssertionError("unreachable")

    out: set[Edge] = set()
    for h, d in dep.edges:
        a, b = node_of(h), node_of(d)
        if a != b:
            out.add((min(a, b), max(a, b)))
    return out


def assemble_graph(
    h_v: np.ndarray,
    h_g: list[np.ndarray],
    dep: DependencyEdges | None,
    segments: SegmentSet,
) -> FusionGraph:
    """Union the three edge heuristics and stack node features.

    Dependency edges are omitted when no parse is supplied.
    """
    k = segments.k
    if len(h_g) != k:
        raise ContractError(f"got {len(h_g)} generated features for K={k}")
    h_v = np.asarray(h_v, dtype=np.float64)
    d = h_v.shape[0]
    for j, g in enumerate(h_g):
        if np.asarray(g).shape != (d,):
            raise ContractError(f"feature dim mismatch at generated node {j + 1}")

    tagged = [(build_central(k), CENTRAL), (build_temporal(k), TEMPORAL)]
    if dep is not None:
        tagged.append((build_dependency(dep, segments), DEPENDENCY))

    adjacency = np.zeros((k + 1, k + 1))
    provenance: dict[Edge, set[str]] = {}
    for edges, tag in tagged:
        for a, b in edges:
            adjacency[a, b] = 1.0
            adjacency[b, a] = 1.0
            provenance.setdefault((a, b), set()).add(tag)

    features = np.vstack([h_v] + [np.asarray(g, dtype=np.float64) for g in h_g])
    return FusionGraph(
        adjacency=adjacency,
        features=features,
        provenance={e: frozenset(tags) for e, tags in provenance.items()},
    )


def normalize_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Symmetric normalization with self-loops: D^{-1/2} (Λ + I) D^{-1/2}."""
    lam = np.asarray(adjacency, dtype=np.float64) + np.eye(adjacency.shape[0])
    d_inv_sqrt = 1.0 / np.sqrt(lam.sum(axis=1))
    return lam * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


def fallback_dependency_edges(text) -> DependencyEdges:
    """Parser-free stand-in: adjacent-token edges within punctuation clauses."""
    tokens = tuple(text)
    edges = []
    for i in range(len(tokens) - 1):
        if tokens[i] in PUNCTUATION_TOKENS or tokens[i + 1] in PUNCTUATION_TOKENS:
            continue
        edges.append((i, i + 1))
    return DependencyEdges(tuple(edges))


class SubprocessParserAdapter:
    """External dependency parser spoken to over JSON stdin/stdout.

    One request per invocation: ``{"tokens": [...]}`` in, ``{"edges":
    [[head, dependent], ...]}`` out.
    """

    def __init__(self, command: list[str], timeout: float = 60.0):
        self.command = list(command)
        self.timeout = timeout

    def parse(self, text) -> DependencyEdges:
        request = json.dumps({"tokens": list(text)})
        proc = subprocess.run(
            self.command,
            input=request.encode("utf-8"),
            capture_output=True,
            timeout=self.timeout,
        )
        if proc.returncode != 0:
            raise ContractError(
                f"parser {self.command[0]} exited {proc.returncode}: "
                f"{proc.stderr.decode('utf-8', 'replace')[:500]}"
            )
        payload = json.loads(proc.stdout.decode("utf-8"))
        return DependencyEdges(tuple((int(h), int(d)) for h, d in payload["edges"]))
