"""Prefractal graph construction and geometry.

Two families are supported:

* gasket(d, n): stage-n Sierpinski gasket graph in d >= 2 dimensions.
  Vertices are integer d-tuples, the coefficients with respect to the d
  simplex edge vectors, so a unit simplex has vertices {0, e_1, ..., e_d}.
  Stage n is built by glueing d+1 translated copies of stage n-1 at the
  junction vertices; all geometry is exact integer arithmetic.

* carpet(l_F, pattern, n): stage-n generalised Sierpinski carpet graph.
  Vertices are lower-left corners of the retained unit cubes, edges join
  pairs at L1 distance 1.

Conductances are assigned per template position (gasket: one value per
edge direction of the unit simplex, replicated to every copy; carpet: one
value per axis), which keeps them uniformly elliptic by construction.

The finite stage stands in for the infinite graph.  ``dist_to_boundary``
exposes how far each vertex is from the set of vertices whose infinite-
graph neighbourhood the finite stage fails to represent; experiments use
it to enforce safety margins.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FractalGraph",
    "ValidationReport",
    "build_gasket",
    "build_carpet",
    "validate_carpet_pattern",
    "standard_carpet_pattern",
    "save_graph",
    "load_graph",
]

DEFAULT_VERTEX_CAP = 5_000_000


class GraphSizeError(ValueError):
    """Requested stage exceeds the configured vertex cap."""


class PatternError(ValueError):
    """Carpet pattern failed validation."""


# ---------------------------------------------------------------------------
# construction helpers


def _simplex_template(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Vertices {0, e_1..e_d} and the (d+1 choose 2) edges of the unit simplex."""
    verts = np.zeros((d + 1, d), dtype=np.int64)
    for i in range(d):
        verts[i + 1, i] = 1
    edges = np.array(
        [(i, j) for i in range(d + 1) for j in range(i + 1, d + 1)], dtype=np.int64
    )
    return verts, edges


def _canonical_direction(delta: np.ndarray) -> tuple[int, ...]:
    """Sign-canonical edge direction, used to key template conductances."""
    for x in delta:
        if x > 0:
            return tuple(int(v) for v in delta)
        if x < 0:
            return tuple(-int(v) for v in delta)
    raise ValueError("zero edge direction")


def _gasket_edges(d: int, n: int) -> np.ndarray:
    """Edge array of shape (E, 2, d) for the stage-n gasket, junctions identified."""
    tverts, tedges = _simplex_template(d)
    edges = tverts[tedges]  # (E0, 2, d)
    for stage in range(1, n + 1):
        offsets = (2 ** (stage - 1)) * tverts  # (d+1, d)
        edges = (offsets[:, None, None, :] + edges[None, :, :, :]).reshape(-1, 2, d)
    # identifying junction vertices cannot duplicate edges (copies share single
    # vertices), but dedup anyway so the invariant never depends on that fact
    flat = edges.reshape(len(edges), 2 * d)
    order = np.lexsort(flat.T[::-1])
    flat = flat[order]
    keep = np.ones(len(flat), dtype=bool)
    keep[1:] = np.any(flat[1:] != flat[:-1], axis=1)
    return flat[keep].reshape(-1, 2, d)


def _carpet_corners(pattern: np.ndarray, l_f: int, n: int) -> np.ndarray:
    """Lower-left corners of the retained unit cubes at stage n."""
    corners = pattern.copy()
    for _ in range(n - 1):
        corners = (l_f * corners[:, None, :] + pattern[None, :, :]).reshape(
            -1, pattern.shape[1]
        )
    return corners


def _conductance_template(
    kind: str,
    d: int,
    spec,
    c_lambda: float,
    rng: np.random.Generator | None,
) -> dict[tuple[int, ...], float]:
    """Template-position -> conductance map.

    spec: "unit", a positive float (constant), or "random" (i.i.d. uniform on
    [1/C_lambda, C_lambda] per template position, seeded).
    """
    if kind == "gasket":
        tverts, tedges = _simplex_template(d)
        keys = [_canonical_direction(tverts[j] - tverts[i]) for i, j in tedges]
    else:  # carpet: one template value per axis
        keys = [_canonical_direction(np.eye(d, dtype=np.int64)[i]) for i in range(d)]

    if spec == "unit":
        values = [1.0] * len(keys)
    elif spec == "random":
        if rng is None:
            raise ValueError("conductances='random' requires a generator")
        values = list(rng.uniform(1.0 / c_lambda, c_lambda, size=len(keys)))
    else:
        val = float(spec)
        if not (1.0 / c_lambda <= val <= c_lambda):
            raise ValueError("constant conductance outside [1/C_lambda, C_lambda]")
        values = [val] * len(keys)
    return dict(zip(keys, values))


# ---------------------------------------------------------------------------
# the graph object


@dataclass
class FractalGraph:
    """Immutable weighted prefractal graph.

    Attributes
    ----------
    kind : "gasket" or "carpet"
    d : ambient dimension
    stage : construction stage n
    coords : (V, d) int64 vertex coordinates
    indptr, indices, cond : CSR adjacency with symmetric conductances
    lam : per-vertex weight, lam[x] = sum of incident conductances
    """

    kind: str
    d: int
    stage: int
    coords: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    cond: np.ndarray
    C_lambda: float
    conductance_spec: str = "unit"
    l_f: int | None = None
    m_f: int | None = None
    pattern: tuple[tuple[int, ...], ...] | None = None
    _index: dict = field(default_factory=dict, repr=False)
    _caches: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.degree = np.diff(self.indptr).astype(np.int64)
        rows = np.repeat(np.arange(self.n_vertices), self.degree)
        self.lam = np.zeros(self.n_vertices)
        np.add.at(self.lam, rows, self.cond)
        # padded neighbour table + cumulative jump law (rates lam_xy / lam_x)
        maxdeg = int(self.degree.max()) if self.n_vertices else 0
        cols = np.arange(len(self.indices)) - np.repeat(self.indptr[:-1], self.degree)
        self.nbr_pad = np.zeros((self.n_vertices, maxdeg), dtype=np.int64)
        self.nbr_pad[rows, cols] = self.indices
        cum = np.ones((self.n_vertices, maxdeg))
        cs = np.cumsum(self.cond)
        row_cs = cs - np.repeat(cs[self.indptr[:-1]] - self.cond[self.indptr[:-1]], self.degree)
        cum[rows, cols] = row_cs / self.lam[rows]
        cum[np.arange(self.n_vertices), self.degree - 1] = 1.0
        self.jump_cum = cum

    # -- basic queries ------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.coords)

    @property
    def n_edges(self) -> int:
        return len(self.indices) // 2

    @property
    def side(self) -> int:
        base = 2 if self.kind == "gasket" else self.l_f
        return base**self.stage

    @property
    def index(self) -> dict:
        if not self._index:
            self._index.update(
                (tuple(c), i) for i, c in enumerate(self.coords.tolist())
            )
        return self._index

    def vertex_id(self, coord) -> int:
        try:
            return self.index[tuple(int(c) for c in coord)]
        except KeyError:
            raise KeyError(f"vertex {tuple(coord)} not in graph") from None

    def has_vertex(self, coord) -> bool:
        return tuple(int(c) for c in coord) in self.index

    def neighbours(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.neighbours(u)

    def conductance(self, u: int, v: int) -> float:
        row = self.neighbours(u)
        hit = np.nonzero(row == v)[0]
        if len(hit) == 0:
            raise KeyError(f"no edge {u}-{v}")
        return float(self.cond[self.indptr[u] + hit[0]])

    # -- BFS geometry ---------------------------------------------------------

    def _frontier_neighbours(self, frontier: np.ndarray) -> np.ndarray:
        counts = self.degree[frontier]
        total = int(counts.sum())
        if total == 0:
            return np.empty(0, dtype=np.int64)
        ends = np.cumsum(counts)
        ptr = (
            np.arange(total)
            - np.repeat(ends - counts, counts)
            + np.repeat(self.indptr[frontier], counts)
        )
        return self.indices[ptr]

    def bfs_distances(self, sources, cap: int | None = None) -> np.ndarray:
        """Multi-source BFS distances; unreached vertices get -1."""
        dist = np.full(self.n_vertices, -1, dtype=np.int64)
        frontier = np.unique(np.asarray(list(sources), dtype=np.int64))
        dist[frontier] = 0
        r = 0
        while len(frontier):
            if cap is not None and r >= cap:
                break
            nxt = np.unique(self._frontier_neighbours(frontier))
            nxt = nxt[dist[nxt] < 0]
            dist[nxt] = r + 1
            frontier = nxt
            r += 1
        return dist

    def graph_distance(self, x: int, y: int) -> int:
        """BFS graph distance between two vertices."""
        if not (0 <= x < self.n_vertices and 0 <= y < self.n_vertices):
            raise KeyError("vertex not in graph")
        if x == y:
            return 0
        dist = np.full(self.n_vertices, -1, dtype=np.int64)
        dist[x] = 0
        frontier = np.array([x], dtype=np.int64)
        r = 0
        while len(frontier):
            nxt = np.unique(self._frontier_neighbours(frontier))
            nxt = nxt[dist[nxt] < 0]
            if len(nxt) == 0:
                raise ValueError("target unreachable")
            dist[nxt] = r + 1
            if dist[y] >= 0:
                return int(dist[y])
            frontier = nxt
            r += 1
        raise ValueError("target unreachable")

    def ball(self, x: int, r: int) -> np.ndarray:
        """Vertex ids of B_r(x) = {y : d(x, y) <= r}."""
        dist = self.bfs_distances([x], cap=r)
        return np.nonzero((dist >= 0) & (dist <= r))[0]

    def volume_profile(self, x: int, r_max: int) -> np.ndarray:
        """Vol_r(x) for r = 0..r_max."""
        dist = self.bfs_distances([x], cap=r_max)
        counts = np.bincount(dist[dist >= 0], minlength=r_max + 1)
        return np.cumsum(counts[: r_max + 1])

    # -- structural vertex sets ----------------------------------------------

    def base_vertices(self) -> np.ndarray:
        """The canonical (d-1)-dimensional sub-prefractal through the origin.

        Fixed choice among the admissible ones: vertices on the first axis
        (all other coordinates zero), which realises the lower-dimensional
        gasket/carpet as a subgraph.
        """
        mask = np.all(self.coords[:, 1:] == 0, axis=1)
        return np.nonzero(mask)[0]

    def dist_to_base(self) -> np.ndarray:
        if "dist_base" not in self._caches:
            self._caches["dist_base"] = self.bfs_distances(self.base_vertices())
        return self._caches["dist_base"]

    def boundary_vertices(self) -> np.ndarray:
        """Vertices whose infinite-graph neighbourhood is not fully
        represented at this stage.

        Detected by degree deficit against the stage-(n+1) edge set; the
        union over stages only ever attaches further copies at vertices
        already deficient at stage n+1.
        """
        if "boundary" not in self._caches:
            if self.kind == "gasket":
                bigger_edges = _gasket_edges(self.d, self.stage + 1)
                bigger_deg: dict[tuple, int] = {}
                for a, b in bigger_edges.reshape(-1, 2, self.d).tolist():
                    ta, tb = tuple(a), tuple(b)
                    bigger_deg[ta] = bigger_deg.get(ta, 0) + 1
                    bigger_deg[tb] = bigger_deg.get(tb, 0) + 1
            else:
                pat = np.array(self.pattern, dtype=np.int64)
                corners = set(
                    map(tuple, _carpet_corners(pat, self.l_f, self.stage + 1).tolist())
                )
                unit = np.eye(self.d, dtype=np.int64)
                bigger_deg = {}
                for v in range(self.n_vertices):
                    c = self.coords[v]
                    deg = sum(
                        tuple(c + s * unit[i]) in corners
                        for i in range(self.d)
                        for s in (1, -1)
                    )
                    bigger_deg[tuple(c)] = deg
            out = [
                v
                for v in range(self.n_vertices)
                if bigger_deg.get(tuple(self.coords[v]), 0) > self.degree[v]
            ]
            self._caches["boundary"] = np.array(sorted(out), dtype=np.int64)
        return self._caches["boundary"]

    def dist_to_boundary(self) -> np.ndarray:
        if "dist_boundary" not in self._caches:
            b = self.boundary_vertices()
            if len(b) == 0:
                self._caches["dist_boundary"] = np.full(self.n_vertices, np.iinfo(np.int64).max)
            else:
                self._caches["dist_boundary"] = self.bfs_distances(b)
        return self._caches["dist_boundary"]

    # -- corner index sets -----------------------------------------------------

    def corner_index_set(self, side: int) -> np.ndarray:
        """Indices iota such that iota*side + (template of that side) is a
        subgraph; the gasket's corner set or its carpet analogue.

        Returns an (N, d) array of index coordinates.
        """
        if side > self.side:
            raise ValueError("side larger than graph")
        base = 2 if self.kind == "gasket" else self.l_f
        m = int(round(np.log(side) / np.log(base)))
        if base**m != side:
            raise ValueError(f"side must be a power of {base}")
        key = ("corners", side)
        if key not in self._caches:
            tmpl = _template_graph(self, m)
            cand_mask = np.all(self.coords % side == 0, axis=1)
            out = []
            for v in np.nonzero(cand_mask)[0]:
                iota = self.coords[v] // side
                if self._contains_template(iota * side, tmpl):
                    out.append(tuple(int(x) for x in iota))
            self._caches[key] = np.array(sorted(out), dtype=np.int64).reshape(-1, self.d)
        return self._caches[key]

    def _contains_template(self, offset, tmpl) -> bool:
        tverts, tedges = tmpl
        ids = []
        for tv in tverts:
            w = tuple(offset + tv)
            if w not in self.index:
                return False
            ids.append(self.index[w])
        ids = np.asarray(ids)
        for a, b in tedges:
            if not self.has_edge(int(ids[a]), int(ids[b])):
                return False
        return True

    def tile_vertices(self, iota, side: int) -> np.ndarray:
        """Vertex ids of the tile iota*side + (side template)."""
        tverts, _ = _template_graph(self, int(round(np.log(side) / np.log(2 if self.kind == "gasket" else self.l_f))))
        offset = np.asarray(iota, dtype=np.int64) * side
        return np.array([self.vertex_id(offset + tv) for tv in tverts], dtype=np.int64)


def _template_graph(g: FractalGraph, m: int):
    """(vertices, edges) of the stage-m template for g's kind, cached on g."""
    key = ("template", m)
    if key not in g._caches:
        if g.kind == "gasket":
            if m == 0:
                tverts, tedges_idx = _simplex_template(g.d)
                g._caches[key] = (tverts, tedges_idx)
            else:
                e = _gasket_edges(g.d, m)
                verts = np.unique(e.reshape(-1, g.d), axis=0)
                vid = {tuple(c): i for i, c in enumerate(verts.tolist())}
                eidx = np.array(
                    [(vid[tuple(a)], vid[tuple(b)]) for a, b in e.reshape(-1, 2, g.d).tolist()],
                    dtype=np.int64,
                )
                g._caches[key] = (verts, eidx)
        else:
            pat = np.array(g.pattern, dtype=np.int64)
            verts = (
                _carpet_corners(pat, g.l_f, m)
                if m >= 1
                else np.zeros((1, g.d), dtype=np.int64)
            )
            vid = {tuple(c): i for i, c in enumerate(verts.tolist())}
            eidx = []
            unit = np.eye(g.d, dtype=np.int64)
            for c, i in vid.items():
                for ax in range(g.d):
                    w = tuple(np.asarray(c) + unit[ax])
                    if w in vid:
                        eidx.append((i, vid[w]))
            g._caches[key] = (verts, np.array(eidx, dtype=np.int64).reshape(-1, 2))
    return g._caches[key]


# ---------------------------------------------------------------------------
# builders


def _coord_keys(coords: np.ndarray, span: int) -> np.ndarray:
    """Collision-free int64 key per coordinate row (coords in [0, span))."""
    d = coords.shape[1]
    strides = span ** np.arange(d - 1, -1, -1, dtype=np.int64)
    return coords @ strides


def _assemble(
    kind, d, stage, edge_coords, tmpl_cond, c_lambda, spec, verts=None, **meta
) -> FractalGraph:
    span = int(edge_coords.max()) + 2
    if verts is None:
        vkeys_all = np.unique(_coord_keys(edge_coords.reshape(-1, d), span))
        strides = span ** np.arange(d - 1, -1, -1, dtype=np.int64)
        verts = np.empty((len(vkeys_all), d), dtype=np.int64)
        rem = vkeys_all
        for i, s in enumerate(strides):
            verts[:, i], rem = np.divmod(rem, s)
    order = np.argsort(_coord_keys(verts, span), kind="stable")
    verts = verts[order]
    sorted_keys = _coord_keys(verts, span)
    a = np.searchsorted(sorted_keys, _coord_keys(edge_coords[:, 0], span))
    b = np.searchsorted(sorted_keys, _coord_keys(edge_coords[:, 1], span))
    deltas = edge_coords[:, 1] - edge_coords[:, 0]
    dkeys = _coord_keys(deltas + 1, 3)
    uniq_k, inv = np.unique(dkeys, return_inverse=True)
    first = np.zeros(len(uniq_k), dtype=np.int64)
    first[inv] = np.arange(len(inv))
    dvals = np.array([tmpl_cond[_canonical_direction(deltas[i])] for i in first])
    w = dvals[inv]

    src = np.concatenate([a, b])
    dst = np.concatenate([b, a])
    ww = np.concatenate([w, w])
    order = np.lexsort((dst, src))
    src, dst, ww = src[order], dst[order], ww[order]
    indptr = np.zeros(len(verts) + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    return FractalGraph(
        kind=kind,
        d=d,
        stage=stage,
        coords=verts,
        indptr=indptr,
        indices=dst,
        cond=ww,
        C_lambda=c_lambda,
        conductance_spec=str(spec),
        **meta,
    )


def build_gasket(
    d: int,
    n: int,
    conductances="unit",
    *,
    C_lambda: float = 1.0,
    rng: np.random.Generator | None = None,
    vertex_cap: int = DEFAULT_VERTEX_CAP,
) -> FractalGraph:
    """Stage-n d-dimensional gasket graph with per-template-edge conductances."""
    if d < 2:
        raise ValueError("gasket requires d >= 2")
    if n < 0:
        raise ValueError("stage must be >= 0")
    approx_vertices = (d + 1) ** (n + 1)  # upper bound before junction dedup
    if approx_vertices > vertex_cap * (d + 1):
        raise GraphSizeError(
            f"stage {n} gasket would exceed vertex cap {vertex_cap}"
        )
    tmpl = _conductance_template("gasket", d, conductances, C_lambda, rng)
    edges = _gasket_edges(d, n)
    g = _assemble("gasket", d, n, edges, tmpl, C_lambda, conductances)
    if g.n_vertices > vertex_cap:
        raise GraphSizeError(f"{g.n_vertices} vertices exceed cap {vertex_cap}")
    return g


def standard_carpet_pattern(l_f: int = 3, d: int = 2) -> tuple[tuple[int, ...], ...]:
    """The centre-removed pattern (the classical carpet for l_f=3, d=2)."""
    if l_f % 2 == 0:
        raise ValueError("centre removal needs odd l_f")
    centre = ((l_f - 1) // 2,) * d
    cells = [c for c in itertools.product(range(l_f), repeat=d) if c != centre]
    return tuple(sorted(cells))


def full_carpet_pattern(l_f: int = 3, d: int = 2) -> tuple[tuple[int, ...], ...]:
    """Degenerate pattern keeping every sub-cube (the carpet becomes Z^d-like)."""
    return tuple(sorted(itertools.product(range(l_f), repeat=d)))


def build_carpet(
    l_f: int,
    pattern,
    n: int,
    conductances="unit",
    *,
    C_lambda: float = 1.0,
    rng: np.random.Generator | None = None,
    vertex_cap: int = DEFAULT_VERTEX_CAP,
    validate: bool = True,
) -> FractalGraph:
    """Stage-n generalised carpet graph on the lower-left corner vertices."""
    if n < 1:
        raise ValueError("carpet stage must be >= 1")
    pattern = tuple(sorted(tuple(int(x) for x in c) for c in pattern))
    d = len(pattern[0])
    if validate:
        report = validate_carpet_pattern(pattern, l_f, d)
        if not report.ok:
            raise PatternError(
                "pattern failed: " + "; ".join(report.failures)
            )
    m_f = len(pattern)
    if m_f**n > vertex_cap:
        raise GraphSizeError(f"stage {n} carpet would exceed vertex cap {vertex_cap}")
    pat = np.array(pattern, dtype=np.int64)
    corners = _carpet_corners(pat, l_f, n)
    span = l_f**n + 2
    keys = np.sort(_coord_keys(corners, span))
    pieces = []
    for ax in range(d):
        shifted = corners.copy()
        shifted[:, ax] += 1
        skeys = _coord_keys(shifted, span)
        pos = np.searchsorted(keys, skeys)
        pos[pos >= len(keys)] = 0
        hit = keys[pos] == skeys
        pieces.append(np.stack([corners[hit], shifted[hit]], axis=1))
    edge_coords = np.concatenate(pieces)
    tmpl = _conductance_template("carpet", d, conductances, C_lambda, rng)
    return _assemble(
        "carpet", d, n, edge_coords, tmpl, C_lambda, conductances,
        verts=corners, l_f=l_f, m_f=m_f, pattern=pattern,
    )


# ---------------------------------------------------------------------------
# carpet pattern validation (H1-H4)


@dataclass
class ValidationReport:
    h1_symmetry: bool
    h2_connected: bool
    h3_non_diagonal: bool
    h4_border: bool
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures


def _hypercube_isometries(d: int):
    """All 2^d * d! signed permutations acting on sub-cube indices."""
    for perm in itertools.permutations(range(d)):
        for signs in itertools.product((1, -1), repeat=d):
            yield perm, signs


def _face_components(cells: set, d: int) -> int:
    unit = np.eye(d, dtype=np.int64)
    seen = set()
    comps = 0
    for start in cells:
        if start in seen:
            continue
        comps += 1
        stack = [start]
        seen.add(start)
        while stack:
            c = stack.pop()
            for ax in range(d):
                for s in (1, -1):
                    w = tuple(np.asarray(c) + s * unit[ax])
                    if w in cells and w not in seen:
                        seen.add(w)
                        stack.append(w)
    return comps


def validate_carpet_pattern(pattern, l_f: int, d: int) -> ValidationReport:
    """Check the four carpet-pattern conditions and report each one.

    H1 symmetry under all hypercube isometries, H2 interior connectivity
    with a wall-to-wall crossing, H3 non-diagonality on every 2x..x2
    sub-block, H4 inclusion of the bottom first-axis row.
    """
    cells = {tuple(int(x) for x in c) for c in pattern}
    if not cells:
        raise ValueError("pattern is empty")
    if any(len(c) != d for c in cells):
        raise ValueError("pattern dimension mismatch")
    if any(not (0 <= x < l_f) for c in cells for x in c):
        raise ValueError("pattern cell outside {0..l_f-1}^d")
    failures = []

    h1 = True
    for perm, signs in _hypercube_isometries(d):
        mapped = {
            tuple(
                (c[perm[i]] if signs[i] == 1 else l_f - 1 - c[perm[i]])
                for i in range(d)
            )
            for c in cells
        }
        if mapped != cells:
            h1 = False
            break
    if not h1:
        failures.append("H1: pattern not preserved by all hypercube isometries")

    h2 = _face_components(cells, d) == 1
    if h2:
        h2 = any(c[0] == 0 for c in cells) and any(c[0] == l_f - 1 for c in cells)
    if not h2:
        failures.append("H2: interior not connected or no wall-to-wall crossing")

    h3 = True
    for anchor in itertools.product(range(l_f - 1), repeat=d):
        block = {
            tuple(np.asarray(anchor) + off)
            for off in itertools.product((0, 1), repeat=d)
        }
        inside = block & cells
        if inside and _face_components(inside, d) != 1:
            h3 = False
            break
    if not h3:
        failures.append("H3: some 2^d sub-block intersects the pattern disconnectedly")

    h4 = all((i,) + (0,) * (d - 1) in cells for i in range(l_f))
    if not h4:
        failures.append("H4: bottom first-axis segment not contained in pattern")

    return ValidationReport(h1, h2, h3, h4, failures)


# ---------------------------------------------------------------------------
# line-oriented text format


def save_graph(g: FractalGraph, path) -> None:
    """Write the graph in the line-oriented text format."""
    with open(path, "w") as fh:
        if g.kind == "gasket":
            fh.write(f"gasket d={g.d} n={g.stage} C_lambda={g.C_lambda!r}\n")
        else:
            pat = ";".join(",".join(map(str, c)) for c in g.pattern)
            fh.write(
                f"carpet d={g.d} n={g.stage} l_F={g.l_f} m_F={g.m_f} "
                f"C_lambda={g.C_lambda!r} pattern={pat}\n"
            )
        fh.write(f"V {g.n_vertices}\n")
        for c in g.coords:
            fh.write(" ".join(map(str, c)) + "\n")
        fh.write(f"E {g.n_edges}\n")
        for u in range(g.n_vertices):
            for k in range(g.indptr[u], g.indptr[u + 1]):
                v = g.indices[k]
                if u < v:
                    fh.write(f"{u} {v} {float(g.cond[k])!r}\n")


def load_graph(path) -> FractalGraph:
    """Read a graph written by :func:`save_graph`."""
    with open(path) as fh:
        header = fh.readline().split()
        meta = dict(kv.split("=", 1) for kv in header[1:])
        kind = header[0]
        d = int(meta["d"])
        nv = int(fh.readline().split()[1])
        coords = np.array(
            [list(map(int, fh.readline().split())) for _ in range(nv)], dtype=np.int64
        )
        ne = int(fh.readline().split()[1])
        ea = np.empty(ne, dtype=np.int64)
        eb = np.empty(ne, dtype=np.int64)
        ew = np.empty(ne)
        for i in range(ne):
            parts = fh.readline().split()
            ea[i], eb[i], ew[i] = int(parts[0]), int(parts[1]), float(parts[2])
    src = np.concatenate([ea, eb])
    dst = np.concatenate([eb, ea])
    ww = np.concatenate([ew, ew])
    order = np.lexsort((dst, src))
    src, dst, ww = src[order], dst[order], ww[order]
    indptr = np.zeros(nv + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    kwargs = {}
    if kind == "carpet":
        kwargs["l_f"] = int(meta["l_F"])
        kwargs["m_f"] = int(meta["m_F"])
        kwargs["pattern"] = tuple(
            tuple(int(x) for x in c.split(",")) for c in meta["pattern"].split(";")
        )
    return FractalGraph(
        kind=kind,
        d=d,
        stage=int(meta["n"]),
        coords=coords,
        indptr=indptr,
        indices=dst,
        cond=ww,
        C_lambda=float(meta["C_lambda"]),
        **kwargs,
    )
