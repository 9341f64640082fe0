"""Good/bad cell classification, hills, mountains, Lipschitz cutsets and
the multi-scale path machinery.

Everything operates on a finite Window of scale-1 cells.  "Infinity" is
the window escape boundary (cells at maximal height); truncation by the
window edge is always an explicit flag, never silent.  Brute-force
oracles for the graph searches live in the test-suite; here each
operation implements the constructive definitions:

* d-paths move to adjacent cells, either increasing (target bad, height
  not decreasing) or diagonal (height strictly decreasing, any state);
  carpets use *-neighbour moves.
* A hill is the d-path closure of a bad base cell, a mountain the union
  of hills containing a given base cell.
* F is the external boundary of the mountain union plus the untouched
  base cells; the minimal cutset keeps exactly the F-cells with an F-free
  connection to the base on one side and to the escape boundary on the
  other -- the constructive characterisation of minimality.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import ConfinementOracle
from .tessellation import Cell, Tessellation, Window

__all__ = [
    "CellGrid",
    "CellPath",
    "CutsetResult",
    "EventPlugin",
    "FieldView",
    "RestrictionViolation",
    "TruncationError",
    "always_true_plugin",
    "bernoulli_plugin",
    "density_plugin",
    "classify_window",
    "eval_multiscale_indicators",
    "hills_and_mountains",
    "build_cutset",
    "minimal_cutset",
    "escape_cells",
    "cutset_blocks_escape",
    "removal_opens_escape",
    "temporal_lipschitz_ok",
    "interior_cells",
    "honest_bernoulli_instance",
    "check_scd_path",
    "DiagonalStructure",
    "CellPath",
    "find_bad_path",
    "lift_to_scd",
    "exact_counts",
    "check_surround",
    "dci_cluster",
    "estimate_nu_e",
]


class RestrictionViolation(RuntimeError):
    """An event plugin read outside its declared view."""


class TruncationError(RuntimeError):
    """A truncated hill touched the evaluation core."""


# ---------------------------------------------------------------------------
# event plugins and the restricted field view


class FieldView:
    """The data an event restricted to a super-cell may legally see: the
    particles located in the region at the view start, their paths and
    recovery marks during the view's time window.  Any read outside the
    window raises RestrictionViolation."""

    def __init__(self, field, vertices, t_lo: float, t_hi: float):
        self._field = field
        self.vertices = frozenset(int(v) for v in vertices)
        self.t_lo = float(t_lo)
        self.t_hi = float(t_hi)
        if t_lo < field.t0 - 1e-12 or t_hi > field.t1 + 1e-12:
            raise ValueError("view window exceeds the sampled field window")
        self._pids = [
            pid
            for pid in range(field.n_particles)
            if int(field.particle(pid).position(t_lo)) in self.vertices
        ]

    def __len__(self) -> int:
        return len(self._pids)

    def _check_time(self, t: float):
        if not (self.t_lo - 1e-12 <= t <= self.t_hi + 1e-12):
            raise RestrictionViolation(
                f"time {t} outside view window [{self.t_lo}, {self.t_hi}]"
            )

    def position(self, i: int, t: float) -> int:
        self._check_time(t)
        return self._field.particle(self._pids[i]).position(t)

    def start_position(self, i: int) -> int:
        return self.position(i, self.t_lo)

    def path(self, i: int):
        """(times, targets) clipped to the view window."""
        p = self._field.particle(self._pids[i])
        jt, jv = p.jump_times, p.jump_targets
        sel = (jt >= self.t_lo) & (jt <= self.t_hi)
        return jt[sel], jv[sel]

    def visited(self, i: int, t0: float, t1: float) -> np.ndarray:
        self._check_time(t0)
        self._check_time(t1)
        return self._field.particle(self._pids[i]).visited_between(t0, t1)

    def marks(self, i: int, t0: float, t1: float, rate: float | None = None) -> np.ndarray:
        self._check_time(t0)
        self._check_time(t1)
        return self._field.particle(self._pids[i]).marks_in(t0, t1, rate)

    def count_at(self, t: float, vertices) -> int:
        self._check_time(t)
        vs = set(int(v) for v in vertices)
        return sum(1 for i in range(len(self)) if self.position(i, t) in vs)

    def lam_sum(self, vertices) -> float:
        return float(self._field.g.lam[np.asarray(list(vertices), dtype=np.int64)].sum())


@dataclass
class EventPlugin:
    """A cell event E(iota, tau), restricted to the eta super-cell.

    ``evaluate(view, cell, tess) -> bool`` decides the event from the view
    only.  ``time_anchor`` shifts the view's start by that many intervals
    (events that look one interval back declare -1).  ``increasing`` is the
    registered monotonicity; synthetic test plugins may be non-increasing
    and say so.
    """

    name: str
    eta: int
    evaluate: object
    increasing: bool = True
    time_anchor: int = 0


def always_true_plugin(eta: int = 1) -> EventPlugin:
    return EventPlugin("always-true", eta, lambda view, cell, tess: True)


def bernoulli_plugin(p: float, seed: int, eta: int = 1) -> EventPlugin:
    """Deterministic i.i.d. Bernoulli(p) goodness per cell; synthetic, not
    increasing (provenance records this)."""

    def evaluate(view, cell, tess):
        key = f"{seed}:{cell.k}:{cell.iota}:{cell.tau}".encode()
        h = int.from_bytes(hashlib.sha256(key).digest()[:8], "little")
        return (h / 2**64) >= p  # event holds with prob 1-p -> bad fraction p

    return EventPlugin("bernoulli", eta, evaluate, increasing=False)


def density_plugin(epsilon: float, mu0: float, eta: int = 1) -> EventPlugin:
    """Every tile of the super-tile holds at least (1-eps) mu0 sum(lam)
    particles at the view start; increasing by construction."""

    def evaluate(view, cell, tess):
        for iota in tess.super_tile(cell.iota, eta):
            tile = tess.tile_vertices(1, iota)
            need = (1 - epsilon) * mu0 * view.lam_sum(tile)
            if view.count_at(view.t_lo, tile) < need:
                return False
        return True

    return EventPlugin("density", eta, evaluate)


# ---------------------------------------------------------------------------
# the grid


@dataclass
class CellGrid:
    """Per-cell states over a window: scale-1 badness, multi-scale A_k bits
    and their provenance."""

    window: Window
    bad: dict = dc_field(default_factory=dict)  # Cell -> bool (scale 1)
    A: dict = dc_field(default_factory=dict)  # (k, iota, tau) -> 0/1
    provenance: dict = dc_field(default_factory=dict)

    @property
    def tess(self) -> Tessellation:
        return self.window.tess

    def is_bad(self, c: Cell) -> bool:
        return self.bad.get(c, False)

    def multiscale_bad(self, k: int, iota, tau) -> bool:
        return self.A.get((k, tuple(iota), tau), 1) == 0

    def bad_ancestry(self, c: Cell) -> bool:
        """A(iota, tau) = 0: some ancestor scale is multi-scale bad."""
        tess = self.tess
        kappa = self.tess.params.kappa
        for k in range(1, kappa + 1):
            ik = tess.ancestor_space(1, k - 1, c.iota)
            tk = tess.ancestor_time(1, k - 1, c.tau)
            if self.multiscale_bad(k, ik, tk):
                return True
        return False


def classify_window(field, window: Window, plugin: EventPlugin) -> CellGrid:
    """Evaluate the plugin on every window cell through its restricted view."""
    tess = window.tess
    grid = CellGrid(window)
    beta = tess.params.beta(1)
    for c in window.cells():
        sup_tiles = tess.super_tile(c.iota, plugin.eta)
        verts = np.concatenate([tess.tile_vertices(1, i) for i in sup_tiles])
        t_lo = (c.tau + plugin.time_anchor) * beta
        t_hi = t_lo + plugin.eta * beta
        view = FieldView(field, verts, t_lo, t_hi)
        good = bool(plugin.evaluate(view, c, tess))
        grid.bad[c] = not good
        grid.provenance[c] = plugin.name
    return grid


# ---------------------------------------------------------------------------
# multi-scale indicators


def _tile_threshold(tess, k: int, coeff: float):
    g = tess.g
    mu0 = tess.cfg.mu0

    def fn(tile):
        return coeff * mu0 * g.lam[tile].sum()

    return fn


def eval_multiscale_indicators(
    field,
    grid: CellGrid,
    event_plugin: EventPlugin | None = None,
    assert_implications: bool = True,
) -> CellGrid:
    """Evaluate D_k / D_k^ext / D_k^base and the A_k bits for every ancestor
    of the window's scale-1 cells, k = 1..kappa (kappa at most 3).

    The per-cell assertions are the two implications that the construction
    must satisfy identically: the ext event one scale up forces the base
    event, and good ancestry forces the scale-one event.
    """
    window = grid.window
    tess = window.tess
    p = tess.params
    g = tess.g
    kappa = p.kappa
    if kappa < 2:
        raise ValueError("indicator evaluation needs kappa >= 2")
    if kappa > 3:
        raise ValueError("indicator evaluation is desk-scale: kappa <= 3")
    oracle = ConfinementOracle(g)
    dmemo: dict = {}
    pos_cache: dict = {}
    conf_cache: dict = {}

    # the deepest time the base events reach back to, and their forward end
    taus = [tess.ancestor_time(1, kappa - 1, t) for t in window.taus]
    t_lo_need = (min(taus)) * p.beta(kappa)
    t_hi_need = (max(taus) + 2) * p.beta(kappa)
    if t_lo_need < field.t0 or t_hi_need > field.t1:
        raise ValueError(
            f"field window [{field.t0}, {field.t1}] too small; indicators "
            f"need [{t_lo_need}, {t_hi_need}]"
        )

    def positions(t0: float) -> np.ndarray:
        if t0 not in pos_cache:
            pos_cache[t0] = field.positions_at(t0)
        return pos_cache[t0]

    def conf_counts(t0: float, t1: float, r: int) -> np.ndarray:
        """Per-vertex counts at t0 of particles confined through [t0, t1]."""
        key = (t0, t1, r)
        if key not in conf_cache:
            pos = positions(t0)
            ok = np.fromiter(
                (
                    oracle.confined(field.particle(pid), t0, t1, r)
                    for pid in range(field.n_particles)
                ),
                dtype=bool,
                count=field.n_particles,
            )
            conf_cache[key] = np.bincount(pos[ok], minlength=g.n_vertices)
        return conf_cache[key]

    def tiles_ok(counts, tiles, coeff) -> bool:
        for tile in tiles:
            if counts[tile].sum() < coeff * tess.cfg.mu0 * g.lam[tile].sum():
                return False
        return True

    def d_ext(k, iota, tau) -> int:
        key = ("ext", k, iota, tau)
        if key not in dmemo:
            t0 = tau * p.beta(k)
            counts = conf_counts(
                t0, (tau + 2) * p.beta(k), int(p.b(k - 1)) * p.side(k - 1)
            )
            tiles = [tess.tile_vertices(k - 1, i) for i in tess.ext_set(k, iota)]
            dmemo[key] = int(tiles_ok(counts, tiles, 1 - p.frak_d[k]))
        return dmemo[key]

    def d_base(k, iota, tau) -> int:
        key = ("base", k, iota, tau)
        if key not in dmemo:
            t0 = tess.gamma1(k, tau) * p.beta(k + 1)
            counts = conf_counts(t0, tau * p.beta(k), int(p.b(k)) * p.side(k))
            tiles = [tess.tile_vertices(k, i) for i in tess.base_set(k, iota)]
            dmemo[key] = int(tiles_ok(counts, tiles, 1 - p.frak_d[k + 1]))
        return dmemo[key]

    for c in window.cells():
        for k in range(1, kappa + 1):
            ik = tess.ancestor_space(1, k - 1, c.iota)
            tk = tess.ancestor_time(1, k - 1, c.tau)
            key = (k, ik, tk)
            if key in grid.A:
                continue
            if k == kappa:
                a = d_ext(k, ik, tk)
            elif k == 1:
                ind_e = 0 if grid.is_bad(Cell(1, ik, tk)) else 1
                a = max(ind_e, 1 - d_base(1, ik, tk))
            else:
                a = max(d_ext(k, ik, tk), 1 - d_base(k, ik, tk))
            grid.A[key] = a
            grid.provenance[key] = "indicators"

    if assert_implications:
        for c in window.cells():
            for k in range(1, kappa):
                ik = tess.ancestor_space(1, k - 1, c.iota)
                tk = tess.ancestor_time(1, k - 1, c.tau)
                up_i = tess.parent_index(k, ik)
                up_t = tess.gamma1(k, tk)
                # (5.23): D_{k+1}^ext = 1 forces D_k^base = 1
                if d_ext(k + 1, up_i, up_t) == 1:
                    assert d_base(k, ik, tk) == 1, (
                        f"(5.23) violated at k={k}, iota={ik}, tau={tk}"
                    )
            # Lemma 5.3: good ancestry forces the scale-one event
            if not grid.bad_ancestry(c):
                assert not grid.is_bad(c), f"Lemma 5.3 violated at {c}"
    return grid


def estimate_nu_e(
    field_sampler,
    window: Window,
    plugin: EventPlugin,
    cell: Cell,
    r: int,
    t: float,
    replicas: int,
) -> float:
    """Conditional Monte Carlo estimate of the event probability nu_E:
    frequency of E over fields predicate-thinned to the particles confined
    in B_r through [0, t].  ``field_sampler(rep) -> ParticleField``."""
    from .fields import thin

    hits = 0
    for rep in range(replicas):
        f = field_sampler(rep)
        oracle = ConfinementOracle(f.g)
        confined = thin(f, lambda p: oracle.confined(p, f.t0, min(f.t0 + t, f.t1), r))
        grid = classify_window(confined, window, plugin)
        hits += 0 if grid.is_bad(cell) else 1
    return hits / replicas


# ---------------------------------------------------------------------------
# d-path moves, hills, mountains


def _move_candidates(window: Window, c: Cell):
    """Legal d-path step targets (gasket: adjacent; carpet: *-neighbours),
    split into in-window cells and valid out-of-window cells."""
    tess = window.tess
    cands = (
        window.star_candidates(c) if tess.kind == "carpet" else window._adjacent_candidates(c)
    )
    ins = [x for x in cands if window.in_window(x)]
    outs = [x for x in cands if not window.in_window(x)]
    return ins, outs


def hills_and_mountains(grid: CellGrid):
    """Forward d-path closures of the bad base cells.

    Returns (hills, mountains, truncated): hills maps each base cell to its
    hill (empty for good cells); mountains maps base cells to the union of
    hills containing them; truncated is the set of base cells whose hill
    ran into the window edge.
    """
    window = grid.window
    hills: dict[Cell, set] = {}
    truncated: set = set()
    for u in window.l1_cells():
        if not grid.is_bad(u):
            hills[u] = set()
            continue
        reach = {u}
        queue = deque([u])
        trunc = False
        while queue:
            c = queue.popleft()
            hc = window.height_of(c)
            ins, outs = _move_candidates(window, c)
            for n in ins:
                if n in reach:
                    continue
                hn = window.height_of(n)
                diagonal = hn < hc
                increasing = grid.is_bad(n) and hn >= hc
                if diagonal or increasing:
                    reach.add(n)
                    queue.append(n)
            if outs:
                # any valid out-of-window neighbour could extend the hill
                trunc = True
        hills[u] = reach
        if trunc:
            truncated.add(u)
    mountains: dict[Cell, set] = {}
    for u in window.l1_cells():
        m = set()
        for v, h in hills.items():
            if u in h:
                m |= h
        mountains[u] = m
    return hills, mountains, truncated


@dataclass
class CutsetResult:
    hills: dict
    mountains: dict
    F: set
    F_minimal: set | None
    truncated: set
    diagnostics: dict = dc_field(default_factory=dict)


def _adjacent_in_window(window: Window, c: Cell):
    ins, _ = window.neighbours(c)
    return ins


def build_cutset(grid: CellGrid, hills=None, mountains=None, truncated=None,
                 allow_truncation: bool = False) -> CutsetResult:
    """F := ext-boundary(union of mountains) plus the untouched base cells."""
    window = grid.window
    if hills is None:
        hills, mountains, truncated = hills_and_mountains(grid)
    union = set()
    for h in hills.values():
        union |= h
    if truncated and not allow_truncation:
        raise TruncationError(
            f"{len(truncated)} truncated hill(s); enlarge the window"
        )
    boundary = set()
    for c in union:
        for n in _adjacent_in_window(window, c):
            if n not in union:
                boundary.add(n)
    F = boundary | {u for u in window.l1_cells() if u not in union}
    for c in F:
        assert not grid.is_bad(c), f"cutset cell {c} is bad"
    rad = {
        u: max((_cell_distance(window, u, v) for v in h), default=0)
        for u, h in hills.items()
        if h
    }
    return CutsetResult(hills, mountains, F, None, truncated or set(), {"rad": rad})


def _cell_distance(window: Window, a: Cell, b: Cell) -> int:
    # coarse product metric: index-grid distance plus time offset
    tess = window.tess
    ds = 0 if a.iota == b.iota else tess.index_distance(a.iota, b.iota)
    return ds + abs(a.tau - b.tau)


def escape_cells(window: Window, escape_height: int | None = None) -> set:
    """The window's stand-in for "distance to the base going to infinity":
    cells at height at least ``escape_height`` (default: the maximum)."""
    h = window.max_height() if escape_height is None else escape_height
    out = {c for c in window.cells() if window.height_of(c) >= h}
    if not out:
        raise ValueError("window has no escape boundary at that height")
    return out


def minimal_cutset(grid: CellGrid, F: set, escape_height: int | None = None) -> set:
    """The minimal sub-cutset via the two-reachability characterisation:
    keep u in F iff the base connects to a neighbour of u through the
    F-complement and a neighbour of u connects to the escape boundary
    through the F-complement."""
    window = grid.window
    escape = escape_cells(window, escape_height)
    l1 = set(window.l1_cells())
    free = {c for c in window.cells() if c not in F}
    reach_base = _component(window, [c for c in l1 if c in free], free)
    reach_escape = _component(window, [c for c in escape if c in free], free)
    if not reach_escape and not (escape & F):
        grid.provenance["degenerate_window"] = True

    out = set()
    for u in F:
        nbrs = _adjacent_in_window(window, u)
        base_ok = u in l1 or any(n in reach_base for n in nbrs)
        esc_ok = u in escape or any(n in reach_escape for n in nbrs)
        if base_ok and esc_ok:
            out.add(u)
    return out


def _component(window: Window, sources, allowed: set) -> set:
    seen = set(sources)
    queue = deque(sources)
    while queue:
        c = queue.popleft()
        for n in _adjacent_in_window(window, c):
            if n in allowed and n not in seen:
                seen.add(n)
                queue.append(n)
    return seen


def cutset_blocks_escape(grid: CellGrid, F: set, escape_height: int | None = None) -> bool:
    """Exhaustive recheck: every adjacency path from the base to the escape
    boundary intersects F."""
    window = grid.window
    escape = escape_cells(window, escape_height)
    free = {c for c in window.cells() if c not in F}
    reach = _component(window, [c for c in window.l1_cells() if c in free], free)
    return not (reach & escape)


def removal_opens_escape(grid: CellGrid, F_min: set, u: Cell, escape_height: int | None = None) -> bool:
    """Minimality witness: dropping u from the cutset opens an escape path."""
    window = grid.window
    escape = escape_cells(window, escape_height)
    allowed = {c for c in window.cells() if c not in F_min or c == u}
    sources = [c for c in window.l1_cells() if c in allowed]
    reach = _component(window, sources, allowed)
    return bool(reach & escape)


def temporal_lipschitz_ok(grid: CellGrid, F_min: set, u: Cell) -> bool:
    """Cor. 3.5 property at u: both time-neighbours of u admit an equal-or-
    adjacent tile whose cell lies in the minimal cutset."""
    window = grid.window
    tess = window.tess
    for dt in (-1, 1):
        found = False
        for iota in [u.iota] + [
            n.iota for n in _adjacent_in_window(window, Cell(1, u.iota, u.tau)) if n.tau == u.tau
        ]:
            if Cell(1, iota, u.tau + dt) in F_min:
                found = True
                break
        if not found:
            return False
    return True


def interior_cells(window: Window, margin_tau: int = 1) -> set:
    """Cells whose full adjacency neighbourhood lies in the window."""
    out = set()
    for c in window.cells():
        if not (window.tau_lo + margin_tau <= c.tau <= window.tau_hi - margin_tau):
            continue
        ins, outs = window.neighbours(c)
        if not outs:
            out.add(c)
    return out


def honest_bernoulli_instance(
    tess: Tessellation,
    p: float,
    seed: int,
    core_radius: int = 3,
    core_tau: int = 2,
    max_grow: int = 8,
):
    """Synthetic Bernoulli(p) badness on a core of cells, with the window
    grown until no hill touches the window edge.

    Badness is a deterministic hash of (seed, cell), so growing the window
    never changes the configuration: outside the core every cell is good.
    Returns (grid, hills, mountains).
    """

    def is_bad(c: Cell) -> bool:
        if abs(c.tau) > core_tau:
            return False
        if max(abs(int(x)) for x in c.iota) > core_radius:
            return False
        key = f"{seed}:{c.iota}:{c.tau}".encode()
        h = int.from_bytes(hashlib.sha256(key).digest()[:8], "little")
        return (h / 2**64) < p

    for extra in range(max_grow):
        pad = 2 + 2 * extra
        w = Window.build(
            tess, core_radius + pad, -(core_tau + pad), core_tau + pad
        )
        grid = CellGrid(w)
        for c in w.cells():
            grid.bad[c] = is_bad(c)
        hills, mountains, trunc = hills_and_mountains(grid)
        if not trunc:
            grid.provenance["core"] = (core_radius, core_tau)
            return grid, hills, mountains
    raise TruncationError("hills kept touching the window edge while growing")


# ---------------------------------------------------------------------------
# descending cones and diagonal connectivity (scale 1)


class DiagonalStructure:
    """Descending-move closures for every cell of a window; the primitive
    behind diagonal connections, D-paths and DCI-paths."""

    def __init__(self, grid: CellGrid):
        self.grid = grid
        self.window = grid.window
        self._cone: dict[Cell, frozenset] = {}

    def cone(self, c: Cell) -> frozenset:
        """Cells reachable from c by strictly height-decreasing moves,
        including c itself."""
        if c not in self._cone:
            reach = {c}
            queue = deque([c])
            while queue:
                x = queue.popleft()
                hx = self.window.height_of(x)
                ins, _ = _move_candidates(self.window, x)
                for n in ins:
                    if n not in reach and self.window.height_of(n) < hx:
                        reach.add(n)
                        queue.append(n)
            self._cone[c] = frozenset(reach)
        return self._cone[c]

    def diag_connected(self, u: Cell, v: Cell) -> bool:
        """A descending chain from u ends equal-or-adjacent to v."""
        if u == v:
            return True
        for w in self.cone(u):
            if w == v or self.window.tess.cells_adjacent(w, v):
                return True
        return False

    def diag_linked(self, u: Cell, v: Cell) -> bool:
        return v in self.cone(u)

    def single_diag(self, u: Cell, v: Cell) -> bool:
        return self.diag_connected(u, v) or self.diag_connected(v, u)

    def double_diag(self, u: Cell, v: Cell) -> bool:
        pool = self.cone(u) | self.cone(v)
        for w in pool:
            if (
                (self.diag_linked(u, w) or self.diag_linked(v, w))
                and self.diag_connected(u, w)
                and self.diag_connected(v, w)
            ):
                return True
        return False


# ---------------------------------------------------------------------------
# witness paths and the constructive lift


@dataclass
class CellPath:
    cells: list
    kind: str
    labels: list = dc_field(default_factory=list)
    witnesses: dict = dc_field(default_factory=dict)
    associations: dict = dc_field(default_factory=dict)


def _ball_membership(grid: CellGrid, v: Cell, t: float):
    """Cells of the window contained in B_t(S_1(iota_v)) x [tau_v b - t, tau_v b + t]."""
    window = grid.window
    tess = window.tess
    g = tess.g
    dist = g.bfs_distances(tess.tile_vertices(1, v.iota))
    beta = tess.params.beta(1)
    lo, hi = v.tau * beta - t, v.tau * beta + t

    def inside(c: Cell) -> bool:
        verts = tess.tile_vertices(1, c.iota)
        if dist[verts].max() > t:
            return False
        iv = tess.interval(1, c.tau)
        return lo <= iv.lo and iv.hi <= hi

    return inside


def find_bad_path(grid: CellGrid, v: Cell, t: float, kind: str = "D") -> CellPath | None:
    """Shortest witness path of misbehaving cells escaping the t-ball.

    kind "D": D-path (adjacent or diagonally connected moves) over cells
    with bad ancestry.  kind "DCI": DCI-path over bad cells; the start may
    be v itself or single-diagonally connected to v.
    """
    window = grid.window
    tess = window.tess
    diag = DiagonalStructure(grid)
    inside = _ball_membership(grid, v, t)

    if kind == "D":
        passes = grid.bad_ancestry
        if not passes(v):
            return None
        seeds = [v]
    elif kind == "DCI":
        passes = grid.is_bad
        seeds = [c for c in window.cells() if passes(c) and (c == v or diag.single_diag(v, c))]
    else:
        raise ValueError(f"unknown path kind {kind}")

    def moves(c: Cell):
        out = []
        for n in window.cells():
            if n == c:
                continue
            if kind == "D":
                ok = tess.cells_adjacent(c, n) or diag.diag_connected(c, n)
            else:
                ok = (
                    tess.cells_adjacent(c, n)
                    or diag.single_diag(c, n)
                    or diag.double_diag(c, n)
                )
            if ok:
                out.append(n)
        return out

    best: dict[Cell, tuple] = {}
    queue = deque()
    for s in seeds:
        if inside(s):
            best[s] = (s,)
            queue.append(s)
        elif passes(s):
            return CellPath([s], kind)  # escapes immediately
    while queue:
        c = queue.popleft()
        for n in moves(c):
            if n in best:
                continue
            if not passes(n):
                continue
            path = best[c] + (n,)
            if not inside(n):
                return CellPath(list(path), kind)
            best[n] = path
            queue.append(n)
    return None


def lift_to_scd(path: CellPath, grid: CellGrid) -> CellPath:
    """Constructive lift of a scale-1 path of bad-ancestry cells to an
    ScD-path of multi-scale bad cells.

    Ancestor substitution, descendant removal, greedy well-separation
    pruning with association (ties broken by scale-descending order, then
    original order), and finally a loop-erased walk of the per-position
    associations: consecutive association changes ride on an original
    adjacent-or-diagonal step, which is recorded as the witness pair for
    the support-connectivity check.
    """
    window = grid.window
    tess = window.tess
    kappa = tess.params.kappa
    n = len(path.cells)

    # substitute each original cell by its lowest multi-scale bad ancestor
    anc: list[Cell] = []
    for c in path.cells:
        kj = None
        for k in range(1, kappa + 1):
            ik = tess.ancestor_space(1, k - 1, c.iota)
            tk = tess.ancestor_time(1, k - 1, c.tau)
            if grid.multiscale_bad(k, ik, tk):
                kj = Cell(k, ik, tk)
                break
        if kj is None:
            raise ValueError(f"cell {c} has good ancestry; lift undefined")
        anc.append(kj)

    def is_descendant_eq(c: Cell, a: Cell) -> bool:
        if c.k > a.k:
            return False
        return (
            tess.ancestor_space(c.k, a.k - c.k, c.iota) == a.iota
            and tess.ancestor_time(c.k, a.k - c.k, c.tau) == a.tau
        )

    # descendant removal, keeping the covering member per original position
    members: list[Cell] = []
    cover: list[int] = []
    for j in range(n):
        hit = None
        for mi, m in enumerate(members):
            if is_descendant_eq(anc[j], m):
                hit = mi
                break
        if hit is None:
            members.append(anc[j])
            hit = len(members) - 1
        cover.append(hit)

    # greedy well-separation pruning over members, largest scales first
    order = sorted(range(len(members)), key=lambda i: (-members[i].k, i))
    assoc: dict[int, int] = {}
    remaining = list(order)
    while remaining:
        i = remaining.pop(0)
        assoc[i] = i
        keep = []
        for j in remaining:
            if tess.well_separated(members[i], members[j]):
                keep.append(j)
            else:
                assoc[j] = i
        remaining = keep

    # loop-erased association walk along the original path
    walk = [assoc[cover[j]] for j in range(n)]
    seq: list[int] = []
    wit_pairs: list = []
    pos: dict[int, int] = {}
    for j, a in enumerate(walk):
        if seq and seq[-1] == a:
            continue
        if a in pos:
            cut = pos[a]
            for rem in seq[cut + 1 :]:
                del pos[rem]
            seq = seq[: cut + 1]
            wit_pairs = wit_pairs[:cut]
        else:
            if seq:
                wit_pairs.append((path.cells[j - 1], path.cells[j]))
            pos[a] = len(seq)
            seq.append(a)
    return CellPath(
        [members[i] for i in seq],
        "ScD",
        witnesses={i: w for i, w in enumerate(wit_pairs)},
        associations={j: members[assoc[cover[j]]] for j in range(n)},
    )


def check_scd_path(path: CellPath, grid: CellGrid) -> list[str]:
    """Validate an ScD-path: pairwise well-separated; consecutive cells
    support adjacent or support connected with diagonals (checked through
    the recorded scale-1 witnesses).  Returns a list of violations."""
    tess = grid.window.tess
    diag = DiagonalStructure(grid)
    errs = []
    cells = path.cells
    for i in range(len(cells)):
        for j in range(i + 1, len(cells)):
            if not tess.well_separated(cells[i], cells[j]):
                errs.append(f"cells {i} and {j} not well-separated")
    for i in range(len(cells) - 1):
        if tess.support_adjacent(cells[i], cells[i + 1]):
            continue
        wit = path.witnesses.get(i)
        if wit is None:
            errs.append(f"step {i}: no support adjacency and no witness")
            continue
        w1, w2 = wit
        if not _cell_in_esup(tess, w1, cells[i]):
            errs.append(f"step {i}: witness {w1} outside extended support")
        if not _cell_in_esup(tess, w2, cells[i + 1]):
            errs.append(f"step {i}: witness {w2} outside extended support")
        if not (diag.diag_connected(w1, w2) or diag.diag_connected(w2, w1)
                or tess.cells_adjacent(w1, w2)):
            errs.append(f"step {i}: witnesses not diagonally connected")
    return errs


def _cell_in_esup(tess: Tessellation, c1: Cell, c2: Cell) -> bool:
    """Is the scale-1 cell c1 contained in R^Esup(c2)?"""
    region, interval = tess.r_esup(c2)
    sp_ok = tess.region_contains(region, (1, (c1.iota,)))
    return sp_ok and interval.contains(tess.interval(1, c1.tau))


# ---------------------------------------------------------------------------
# exact combinatorial counts


def exact_counts(grid: CellGrid, k_max: int = 2, h_max: int | None = None) -> dict:
    """Exact window enumeration of the path-counting quantities: the
    support-adjacency counts Phi_{k,k'}, the extended-support covers chi_k,
    and the diagonal-target counts A(h)."""
    window = grid.window
    tess = window.tess
    diag = DiagonalStructure(grid)
    cells_by_scale: dict[int, list] = {1: list(window.cells())}
    for k in range(2, k_max + 1):
        seen = set()
        out = []
        for c in cells_by_scale[1]:
            ik = tess.ancestor_space(1, k - 1, c.iota)
            tk = tess.ancestor_time(1, k - 1, c.tau)
            if (ik, tk) not in seen:
                seen.add((ik, tk))
                out.append(Cell(k, ik, tk))
        cells_by_scale[k] = out

    phi = {}
    for k in range(1, k_max + 1):
        for kp in range(1, k_max + 1):
            best = 0
            for c in cells_by_scale[k]:
                n = sum(
                    1
                    for o in cells_by_scale[kp]
                    if o != c and tess.support_adjacent(c, o)
                )
                best = max(best, n)
            phi[(k, kp)] = best

    chi = {}
    for k in range(1, k_max + 1):
        v = cells_by_scale[1][0]
        chi[k] = sum(1 for c in cells_by_scale[k] if _cell_in_esup(tess, v, c))

    hmax = h_max if h_max is not None else window.max_height()
    a_of_h = {}
    for h in range(0, hmax + 1):
        best = 0
        for u in cells_by_scale[1]:
            n = 0
            for v in cells_by_scale[1]:
                if v == u:
                    continue
                if abs(window.height_of(u) - window.height_of(v)) != h:
                    continue
                if diag.diag_connected(u, v):
                    n += 1
            best = max(best, n)
        a_of_h[h] = best
    return {"phi": phi, "chi": chi, "A": a_of_h}


# ---------------------------------------------------------------------------
# surround event and DCI clusters


def check_surround(grid: CellGrid, F: set, r: float) -> bool:
    """S(F, r): no adjacency path from the origin cell escapes past r
    without touching F."""
    window = grid.window
    origin = Cell(1, (0,) * window.tess.d, 0)
    if not window.in_window(origin):
        raise ValueError("window does not contain the origin cell")
    if origin in F:
        return True
    inside = _ball_membership(grid, origin, r)
    free = {c for c in window.cells() if c not in F}
    reach = _component(window, [origin], free)
    return all(inside(c) for c in reach)


def dci_cluster(grid: CellGrid, v: Cell) -> set:
    """K*_v: cells reachable from v by DCI-paths of bad cells."""
    window = grid.window
    tess = window.tess
    diag = DiagonalStructure(grid)
    if not grid.is_bad(v):
        return set()
    bad_cells = [c for c in window.cells() if grid.is_bad(c)]
    reach = {v}
    queue = deque([v])
    while queue:
        c = queue.popleft()
        for n in bad_cells:
            if n in reach:
                continue
            if (
                tess.cells_adjacent(c, n)
                or diag.single_diag(c, n)
                or diag.double_diag(c, n)
            ):
                reach.add(n)
                queue.append(n)
    return reach
