"""Superpixel segmentation of a cube by greedy edge selection on the pixel lattice.

Pixels form a 4-connected lattice whose edge weights are a Gaussian kernel
of the spectral angle between neighboring pixel spectra. Edges are selected
greedily to maximize

    H(A) + lambda * B(A)

where H(A) is the entropy rate of the random walk that moves only along
selected edges (stationary distribution fixed by the full graph's vertex
strengths; unselected weight stays in self-loops) and B(A) is the entropy
of the component-size distribution minus the component count, which pushes
toward balanced cluster sizes. Both terms have non-increasing marginal
gains as the selected set grows, so gains cached in a max-heap only need
re-evaluation when popped (lazy greedy). Selection stops when exactly K
connected components remain; cycle-closing edges change neither term's
structure and are skipped.

Natural log throughout; 0*log(0) is taken as 0.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cube import HyperCube

__all__ = [
    "LatticeGraph",
    "SuperpixelMap",
    "GreedyTrace",
    "lattice_edges",
    "build_graph",
    "segment",
    "relabel_canonical",
    "objective_value",
    "validate_partition",
    "write_label_map_pgm",
    "write_label_map_raw",
    "read_label_map_raw",
]

# Fallback kernel bandwidth (radians) when the median edge angle vanishes,
# e.g. on piecewise-constant scenes where most neighbors are identical.
_SIGMA_FALLBACK = 0.1


@dataclass(frozen=True, eq=False)
class LatticeGraph:
    """4-connected pixel lattice with one similarity weight per edge.

    Vertices are row-major pixel indices. Edges are enumerated pixel by
    pixel in row-major order, east neighbor before south neighbor, and
    stored once with u < v.
    """

    height: int
    width: int
    edges_u: np.ndarray
    edges_v: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.edges_u, dtype=np.int64)
        v = np.asarray(self.edges_v, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        expected = self.height * (self.width - 1) + self.width * (self.height - 1)
        if not (u.shape == v.shape == w.shape) or u.ndim != 1:
            raise ValueError("edge arrays must be 1-D and equally sized")
        if u.size != expected:
            raise ValueError(f"lattice of {self.height}x{self.width} needs {expected} edges, got {u.size}")
        if not np.all(np.isfinite(w)) or (w.size and w.min() < 0.0):
            raise ValueError("edge weights must be finite and non-negative")
        for arr in (u, v, w):
            arr.flags.writeable = False
        object.__setattr__(self, "edges_u", u)
        object.__setattr__(self, "edges_v", v)
        object.__setattr__(self, "weights", w)

    @property
    def n_vertices(self) -> int:
        return self.height * self.width

    @property
    def n_edges(self) -> int:
        return self.edges_u.size

    def vertex_strengths(self) -> np.ndarray:
        """Sum of incident edge weights per vertex."""
        strengths = np.zeros(self.n_vertices, dtype=np.float64)
        np.add.at(strengths, self.edges_u, self.weights)
        np.add.at(strengths, self.edges_v, self.weights)
        return strengths


@dataclass(frozen=True, eq=False)
class SuperpixelMap:
    """Total partition of an image into K labeled regions."""

    labels: np.ndarray
    k: int

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        if labels.ndim != 2:
            raise ValueError("labels must be a 2-D array")
        if self.k < 1:
            raise ValueError("K must be >= 1")
        present = np.unique(labels)
        if present[0] < 0 or present[-1] >= self.k or present.size != self.k:
            raise ValueError(f"labels must cover exactly the range [0, {self.k})")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class GreedyTrace:
    """Selection record: (edge index, gain) per accepted edge, plus the final objective."""

    edges: tuple[tuple[int, float], ...]
    final_objective: float
    lam: float


def lattice_edges(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Endpoint arrays of the 4-neighbor lattice in canonical edge order."""
    idx = np.arange(height * width, dtype=np.int64).reshape(height, width)
    east_u = idx[:, :-1].ravel()
    east_v = idx[:, 1:].ravel()
    south_u = idx[:-1, :].ravel()
    south_v = idx[1:, :].ravel()
    u = np.concatenate([east_u, south_u])
    v = np.concatenate([east_v, south_v])
    # canonical order: per pixel, east before south
    order = np.argsort(np.concatenate([2 * east_u, 2 * south_u + 1]), kind="stable")
    return u[order], v[order]


def _edge_angles(cube: HyperCube, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # Half-angle form of the spectral angle: exact 0 for identical spectra,
    # where arccos of a rounded cosine would wobble at the 1e-8 level.
    flat = cube.data.reshape(-1, cube.bands).astype(np.float64)
    norms = np.linalg.norm(flat, axis=1)
    if norms.min(initial=np.inf) == 0.0:
        raise ValueError("cube contains an all-zero pixel spectrum; spectral angle is undefined")
    unit = flat / norms[:, None]
    diff = np.linalg.norm(unit[u] - unit[v], axis=1)
    summ = np.linalg.norm(unit[u] + unit[v], axis=1)
    return 2.0 * np.arctan2(diff, summ)


def build_graph(cube: HyperCube, sigma: float | None = None) -> LatticeGraph:
    """Weight each lattice edge by exp(-angle^2 / (2 sigma^2)).

    ``sigma`` defaults to the median spectral angle over all lattice edges
    of this cube (with a small fallback when that median is zero), so the
    kernel adapts to the image's own contrast.
    """
    u, v = lattice_edges(cube.height, cube.width)
    angles = _edge_angles(cube, u, v)
    if sigma is None:
        sigma = float(np.median(angles)) if angles.size else _SIGMA_FALLBACK
        if sigma < 1e-12:
            sigma = _SIGMA_FALLBACK
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    weights = np.exp(-(angles**2) / (2.0 * sigma * sigma))
    return LatticeGraph(height=cube.height, width=cube.width, edges_u=u, edges_v=v, weights=weights)


def _xlogx(x: float) -> float:
    return x * math.log(x) if x > 0.0 else 0.0


def _find(parent: list[int], x: int) -> int:
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


def segment(graph: LatticeGraph, k: int, lam: float | None = None) -> tuple[SuperpixelMap, GreedyTrace]:
    """Greedily merge lattice components until exactly ``k`` remain.

    ``lam`` weights the size-balancing term against the entropy-rate term;
    when omitted it is set to half the ratio of the largest single-edge
    entropy gain to the largest single-edge balancing gain, both measured
    on the empty selection. Exact gain ties break toward the heavier edge,
    then the smaller edge index, making the output deterministic.

    Returns the label map (labels numbered by each component's first
    row-major pixel) and the greedy trace.
    """
    n = graph.n_vertices
    if not 1 <= k <= n:
        raise ValueError(f"K must lie in [1, {n}], got {k}")
    if lam is not None and lam < 0.0:
        raise ValueError("lambda must be non-negative")

    strengths = graph.vertex_strengths()
    total = float(strengths.sum())
    wn = graph.weights / total if total > 0.0 else np.zeros_like(graph.weights)

    u_l = graph.edges_u.tolist()
    v_l = graph.edges_v.tolist()
    w_l = wn.tolist()
    incident: list[list[int]] = [[] for _ in range(n)]
    for e in range(graph.n_edges):
        incident[u_l[e]].append(e)
        incident[v_l[e]].append(e)
    chosen = bytearray(graph.n_edges)
    parent = list(range(n))
    size = [1] * n
    inv_n = 1.0 / n

    def entropy_gain(e: int, u: int, v: int, w: float) -> float:
        # Each endpoint contributes f(L) - (f(L - w) + f(w)) with f = x*log(x),
        # where L is the vertex's unselected incident mass. Both masses are
        # formed by summing the surviving incident weights in index order,
        # never by running subtraction: states whose gains tie in real
        # arithmetic (e.g. two chain-extending edges around a free vertex)
        # then tie bitwise too, and the deterministic tie-break below decides.
        gain = 0.0
        for vtx in (u, v):
            mass = 0.0
            rest = 0.0
            for j in incident[vtx]:
                if not chosen[j]:
                    wj = w_l[j]
                    mass += wj
                    if j != e:
                        rest += wj
            gain += _xlogx(mass) - (_xlogx(rest) + _xlogx(w))
        return gain

    def balance_gain(ru: int, rv: int) -> float:
        a = size[ru] * inv_n
        b = size[rv] * inv_n
        return _xlogx(a) + _xlogx(b) - _xlogx(a + b) + 1.0

    b0 = 1.0 - 2.0 * math.log(2.0) / n if n >= 2 else 0.0
    seeds = [entropy_gain(e, u_l[e], v_l[e], w_l[e]) for e in range(graph.n_edges)]
    if lam is None:
        lam = 0.5 * max(seeds) / b0 if (seeds and b0 > 0.0) else 0.0

    # heap entries order by gain desc, then edge weight desc, then index asc.
    # The weight tie-break matters: at a degree-2 vertex the entropy gain is
    # symmetric in (w, L - w), so a weak boundary edge ties a strong interior
    # edge exactly; preferring the heavier edge keeps merges inside
    # homogeneous regions. Ties are exact-equality only, so the reachable
    # objective is unaffected.
    heap: list[tuple[float, float, int]] = [
        (-(seeds[e] + lam * b0), -w_l[e], e) for e in range(graph.n_edges)
    ]
    heapq.heapify(heap)

    selected: list[tuple[int, float]] = []
    count = n
    while count > k:
        if not heap:
            raise ValueError("graph has fewer merge opportunities than needed to reach K components")
        neg_gain, neg_w, e = heapq.heappop(heap)
        u = u_l[e]
        v = v_l[e]
        ru = _find(parent, u)
        rv = _find(parent, v)
        if ru == rv:
            continue  # cycle edge: no structural effect, drop for good
        gain = entropy_gain(e, u, v, w_l[e]) + lam * balance_gain(ru, rv)
        if heap and (-gain, neg_w, e) > heap[0]:
            heapq.heappush(heap, (-gain, neg_w, e))
            continue
        # accept: merge components, retire the edge from both endpoints
        if size[ru] < size[rv]:
            ru, rv = rv, ru
        parent[rv] = ru
        size[ru] += size[rv]
        chosen[e] = 1
        selected.append((e, gain))
        count -= 1

    labels = np.empty(n, dtype=np.int32)
    order: dict[int, int] = {}
    for px in range(n):
        root = _find(parent, px)
        labels[px] = order.setdefault(root, len(order))
    label_map = SuperpixelMap(labels=labels.reshape(graph.height, graph.width), k=k)
    final = objective_value(graph, [e for e, _ in selected], lam)
    return label_map, GreedyTrace(edges=tuple(selected), final_objective=final, lam=lam)


def objective_value(graph: LatticeGraph, selected_edges, lam: float) -> float:
    """Evaluate H(A) + lambda * B(A) from scratch for a selected edge set."""
    n = graph.n_vertices
    strengths = graph.vertex_strengths()
    total = float(strengths.sum())
    incident: list[list[float]] = [[] for _ in range(n)]
    parent = list(range(n))
    for e in selected_edges:
        u = int(graph.edges_u[e])
        v = int(graph.edges_v[e])
        w = float(graph.weights[e])
        incident[u].append(w)
        incident[v].append(w)
        ru, rv = _find(parent, u), _find(parent, v)
        if ru != rv:
            parent[rv] = ru

    entropy_rate = 0.0
    if total > 0.0:
        for i in range(n):
            s = float(strengths[i])
            if s <= 0.0:
                continue
            mu = s / total
            walk = 0.0
            p_sum = 0.0
            for w in incident[i]:
                p = w / s
                walk -= _xlogx(p)
                p_sum += p
            walk -= _xlogx(max(1.0 - p_sum, 0.0))
            entropy_rate += mu * walk

    sizes: dict[int, int] = {}
    for i in range(n):
        root = _find(parent, i)
        sizes[root] = sizes.get(root, 0) + 1
    balance = -sum(_xlogx(c / n) for c in sizes.values()) - len(sizes)
    return entropy_rate + lam * balance


def relabel_canonical(label_map: SuperpixelMap | np.ndarray) -> SuperpixelMap:
    """Renumber labels so first row-major occurrences appear in increasing order.

    Accepts a map or a raw 2-D integer array (whose labels may be any
    distinct values, e.g. gray levels from an imported image); the region
    partition is unchanged.
    """
    arr = label_map.labels if isinstance(label_map, SuperpixelMap) else np.asarray(label_map)
    if arr.ndim != 2:
        raise ValueError("labels must be a 2-D array")
    flat = arr.ravel()
    uniq, inverse = np.unique(flat, return_inverse=True)
    first = np.full(uniq.size, flat.size, dtype=np.int64)
    np.minimum.at(first, inverse, np.arange(flat.size))
    rank = np.empty(uniq.size, dtype=np.int32)
    rank[np.argsort(first)] = np.arange(uniq.size, dtype=np.int32)
    return SuperpixelMap(labels=rank[inverse].reshape(arr.shape), k=uniq.size)


def _component_count(labels: np.ndarray) -> int:
    """Number of 4-connected same-label components, via union-find over neighbor pairs."""
    h, w = labels.shape
    n = h * w
    parent = list(range(n))
    idx = np.arange(n).reshape(h, w)
    pairs = []
    same_east = labels[:, :-1] == labels[:, 1:]
    pairs.append((idx[:, :-1][same_east], idx[:, 1:][same_east]))
    same_south = labels[:-1, :] == labels[1:, :]
    pairs.append((idx[:-1, :][same_south], idx[1:, :][same_south]))
    for us, vs in pairs:
        for u, v in zip(us.tolist(), vs.tolist()):
            ru, rv = _find(parent, u), _find(parent, v)
            if ru != rv:
                parent[rv] = ru
    return len({_find(parent, i) for i in range(n)})


def validate_partition(label_map: SuperpixelMap) -> None:
    """Raise unless every label's pixel set is 4-connected (K components total)."""
    count = _component_count(label_map.labels)
    if count != label_map.k:
        raise ValueError(f"label map has {count} connected components but K={label_map.k}")


def write_label_map_pgm(label_map: SuperpixelMap, path: str | Path) -> None:
    """Export as 16-bit binary PGM plus a ``<path>.txt`` sidecar mapping gray values to labels."""
    if label_map.k > 65536:
        raise ValueError("PGM export supports at most 65536 labels")
    path = Path(path)
    height, width = label_map.labels.shape
    header = f"P5\n{width} {height}\n65535\n".encode()
    path.write_bytes(header + label_map.labels.astype(">u2").tobytes())
    sidecar = Path(str(path) + ".txt")
    lines = ["# gray label"] + [f"{lab} {lab}" for lab in range(label_map.k)]
    sidecar.write_text("\n".join(lines) + "\n")


def write_label_map_raw(label_map: SuperpixelMap, path: str | Path) -> None:
    """Export as little-endian int32: header (height, width, K), then row-major labels."""
    header = np.array([label_map.height, label_map.width, label_map.k], dtype="<i4")
    Path(path).write_bytes(header.tobytes() + label_map.labels.astype("<i4").tobytes())


def read_label_map_raw(path: str | Path) -> SuperpixelMap:
    blob = Path(path).read_bytes()
    if len(blob) < 12:
        raise ValueError("label map file too short for its header")
    height, width, k = (int(x) for x in np.frombuffer(blob[:12], dtype="<i4"))
    labels = np.frombuffer(blob, dtype="<i4", offset=12)
    if labels.size != height * width:
        raise ValueError("label map payload does not match its header dimensions")
    return SuperpixelMap(labels=labels.reshape(height, width).copy(), k=k)
