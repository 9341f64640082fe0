"""Multi-scale space-time tessellation.

Scale-k tiles are indexed by corner indices iota (vertices of a coarse
copy of the same prefractal); the tile occupies iota * B^{l_k} plus the
stage-l_k template, where B is 2 for gaskets and l_F for carpets.  All
region flavours (base, influence, extension, support, extended support)
are families of tile indices at their defining scale, with radii measured
in index units (tiles), and set algebra between scales goes through the
ancestor map rather than materialising vertex sets: a tile meets a
coarser region iff its ancestor lies in it or (gasket only) a corner-
sharing neighbour's ancestor does.

Time intervals carry open/closed endpoint flags so the printed interval
conventions are followed literally.

Toy parameter profiles cannot guarantee the nesting properties that hold
for "large enough" a and m, so ``verify_inclusions`` re-checks them
exhaustively on a window and reports the violating tuple instead of
proceeding silently.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field as dc_field
from typing import NamedTuple

import numpy as np

from .graphs import build_carpet, build_gasket

__all__ = [
    "ScaleConfig",
    "ScaleParams",
    "Cell",
    "Interval",
    "Tessellation",
    "Window",
    "derive_scale_params",
    "verify_inclusions",
]


class InclusionViolation(AssertionError):
    """A nesting property failed on the evaluated window."""


# ---------------------------------------------------------------------------
# parameters


@dataclass
class ScaleConfig:
    """Tessellation inputs under their usual symbol names.

    Exactly one of ``beta``/``C_mix`` is given; the other is derived.
    ``d_v``/``d_w`` are the dimensions in use (defaults are the gasket
    d=2 values); ``theta`` is the working fluctuation exponent (fitted or
    configured -- it has no known closed form) and ``c3`` the working
    confinement constant.  ``nu_e`` optionally feeds the second branch of
    the scale-one weight.
    """

    ell: int
    m: int
    a: int
    epsilon: float
    eta: int
    zeta: float
    kappa: int
    mu0: float
    theta: float
    base: int = 2  # 2 for gasket, l_F for carpet
    beta: float | None = None
    C_mix: float | None = None
    d_v: float | None = None
    d_w: float | None = None
    C_lambda: float = 1.0
    c3: float = 1.0
    nu_e: float | None = None

    def __post_init__(self):
        if self.d_v is None:
            self.d_v = math.log2(3) if self.base == 2 else math.log(8) / math.log(3)
        if self.d_w is None:
            self.d_w = math.log2(5)
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if min(self.ell, self.m, self.a, self.eta, self.kappa) < 1:
            raise ValueError("ell, m, a, eta, kappa must be positive integers")
        if (self.beta is None) == (self.C_mix is None):
            raise ValueError("give exactly one of beta, C_mix")
        if self.beta is None:
            self.beta = (
                self.C_mix
                * self.base ** (self.d_w * (self.ell - self.m))
                * self.epsilon ** (-4 / self.theta)
            )
        else:
            self.C_mix = (
                self.beta
                * self.epsilon ** (4 / self.theta)
                / self.base ** (self.d_w * (self.ell - self.m))
            )


@dataclass
class ScaleParams:
    """Derived per-scale sequences (index k runs 1..kappa, arrays padded to
    kappa+1 because supports and time ancestors reach one scale up)."""

    config: ScaleConfig
    ell_k: np.ndarray
    beta_k: np.ndarray
    b_k: np.ndarray
    frak_d: np.ndarray
    psi_k: np.ndarray
    H_k: np.ndarray
    warnings: list[str] = dc_field(default_factory=list)

    @property
    def kappa(self) -> int:
        return self.config.kappa

    def ell(self, k: int) -> int:
        return int(self.ell_k[k])

    def beta(self, k: int) -> float:
        return float(self.beta_k[k])

    def side(self, k: int) -> int:
        return self.config.base ** self.ell(k)

    def b(self, k: int) -> float:
        return float(self.b_k[k])

    def to_dict(self) -> dict:
        return {
            "ell_k": self.ell_k[1:].tolist(),
            "beta_k": self.beta_k[1:].tolist(),
            "b_k": self.b_k[1:].tolist(),
            "frak_d": self.frak_d[1:].tolist(),
            "psi_k": self.psi_k[1:].tolist(),
            "H_k": self.H_k[1 : self.kappa + 1].tolist(),
            "warnings": self.warnings,
        }


def derive_scale_params(config: ScaleConfig) -> ScaleParams:
    """Compute l_k, beta_k, b(k), d_k, psi_k, H_k for k = 1..kappa+1.

    Carpets substitute the base-2 exponentials with base l_F throughout.
    """
    cfg = config
    B, dw, dv, eps, th = cfg.base, cfg.d_w, cfg.d_v, cfg.epsilon, cfg.theta
    top = cfg.kappa + 1
    ks = np.arange(top + 1)

    ell_k = cfg.a * (ks - 1) ** 2 + cfg.m * (ks - 1) + cfg.ell
    ell_k[0] = cfg.ell - cfg.m

    beta_k = np.empty(top + 1)
    beta_k[0] = np.nan
    beta_k[1] = cfg.beta
    for k in range(2, top + 1):
        beta_k[k] = cfg.C_mix * (k**2 / eps) ** (4 / th) * float(B) ** (dw * ell_k[k - 1])

    b_k = cfg.a * ks.astype(float) ** (2 + 8 / (th * dw)) * cfg.m * float(B) ** cfg.m
    b_k[0] = np.nan

    frak_d = np.empty(top + 2)
    frak_d[0] = np.nan
    frak_d[1] = eps
    for k in range(1, top + 1):
        frak_d[k + 1] = frak_d[k] - eps / (2 * k**2)

    psi_k = np.empty(top + 1)
    psi_k[0] = np.nan
    first = eps**2 * cfg.mu0 * float(B) ** (dv * cfg.ell) / cfg.C_lambda
    if cfg.nu_e is not None:
        psi_k[1] = min(first, -math.log(1 - cfg.nu_e))
    else:
        psi_k[1] = first
    for k in range(2, top + 1):
        psi_k[k] = eps**2 * cfg.mu0 * float(B) ** (dv * ell_k[k - 1]) / k**4

    H_k = (3 * cfg.m + 1) * float(B) ** (cfg.a * ks.astype(float) ** 2 + cfg.m * ks)
    H_k[0] = np.nan

    warnings = []
    zeta_floor = (
        (cfg.c3 * math.log(8 * cfg.c3 / (3 * eps))) ** (dw - 1) * cfg.eta * cfg.beta
    ) ** (1 / dw) / cfg.ell
    if cfg.zeta < zeta_floor:
        warnings.append(
            f"zeta={cfg.zeta} below the confinement floor {zeta_floor:.4g} "
            f"for c3={cfg.c3}"
        )
    if b_k[1] < cfg.eta:
        raise ValueError(f"b(1)={b_k[1]:.3g} must be at least eta={cfg.eta}")
    assert np.all(np.diff(b_k[1:]) >= 0), "b(k) must be nondecreasing"
    lo = eps * (1 - math.pi**2 / 12)
    assert np.all((frak_d[1 : top + 2] > lo) & (frak_d[1 : top + 2] <= eps))
    return ScaleParams(cfg, ell_k, beta_k, b_k, frak_d, psi_k, H_k, warnings)


# ---------------------------------------------------------------------------
# time intervals


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = False

    def _has(self, x: float) -> bool:
        if x < self.lo or x > self.hi:
            return False
        if x == self.lo and not self.lo_closed:
            return False
        if x == self.hi and not self.hi_closed:
            return False
        return True

    def intersects(self, other: "Interval") -> bool:
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if lo > hi:
            return False
        if lo < hi:
            return True
        return self._has(lo) and other._has(lo)

    def contains(self, other: "Interval") -> bool:
        lo_ok = self.lo < other.lo or (
            self.lo == other.lo and (self.lo_closed or not other.lo_closed)
        )
        hi_ok = other.hi < self.hi or (
            other.hi == self.hi and (self.hi_closed or not other.hi_closed)
        )
        return lo_ok and hi_ok


class Cell(NamedTuple):
    """Space-time cell R_k(iota, tau)."""

    k: int
    iota: tuple
    tau: int


# ---------------------------------------------------------------------------
# the tessellation engine


class Tessellation:
    """Index-level geometry of the multi-scale tessellation.

    ``g`` is the physical graph; it is only consulted when scale-one tiles
    are materialised (particle counting, heights).  Index validity and
    index distances run on small per-scale coarse graphs that are grown on
    demand, so queries at large scales stay cheap.
    """

    def __init__(self, g, params: ScaleParams):
        self.g = g
        self.params = params
        self.cfg = params.config
        self.base = self.cfg.base
        self.kind = g.kind if g is not None else ("gasket" if self.base == 2 else "carpet")
        self.d = g.d if g is not None else 2
        self._coarse: dict[int, object] = {}  # scale -> coarse graph
        self._coarse_stage: dict[int, int] = {}
        self._valid_cache: dict[tuple, bool] = {}
        self._height_cache: dict[tuple, int] = {}
        self._region_cache: dict[tuple, tuple] = {}
        self._parent_cache: dict[tuple, tuple] = {}
        self._dist_base = None
        if self.kind == "gasket":
            tv = np.zeros((self.d + 1, self.d), dtype=np.int64)
            for i in range(self.d):
                tv[i + 1, i] = 1
            self._corner_offsets = tv

    # -- coarse graphs ------------------------------------------------------

    def _build_coarse(self, stage: int):
        if self.kind == "gasket":
            return build_gasket(self.d, stage)
        return build_carpet(
            self.g.l_f, self.g.pattern, stage, validate=False
        )

    def coarse(self, scale: int, extent: int = 0):
        """Coarse graph holding index coordinates at ``scale``; regrown when
        a query needs vertices beyond the current stage."""
        need = max(extent, 8)
        stage = self._coarse_stage.get(scale, 0)
        side = self.base**stage if stage else 0
        if scale not in self._coarse or side < 4 * need:
            stage = max(3, math.ceil(math.log(4 * need, self.base)))
            self._coarse[scale] = self._build_coarse(stage)
            self._coarse_stage[scale] = stage
        return self._coarse[scale]

    def _extent_of(self, *iotas) -> int:
        m = 1
        for i in iotas:
            m = max(m, int(max(abs(int(x)) for x in i)) + 1)
        return m

    # -- validity and local structure ----------------------------------------

    def valid_iota(self, k: int, iota) -> bool:
        """Is iota the corner index of a scale-k tile of the infinite graph?

        Scale plays no role for validity (the index universe is the same
        self-similar graph at every scale).
        """
        iota = tuple(int(x) for x in iota)
        key = iota
        if key in self._valid_cache:
            return self._valid_cache[key]
        if any(x < 0 for x in iota):
            self._valid_cache[key] = False
            return False
        cg = self.coarse(0, self._extent_of(iota))
        if not cg.has_vertex(iota):
            ok = False
        elif self.kind == "carpet":
            ok = True
        else:
            ok = self._unit_simplex_present(cg, iota)
        self._valid_cache[key] = ok
        return ok

    def _unit_simplex_present(self, cg, iota) -> bool:
        ids = []
        for off in self._corner_offsets:
            w = tuple(np.asarray(iota) + off)
            if not cg.has_vertex(w):
                return False
            ids.append(cg.vertex_id(w))
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                if not cg.has_edge(ids[i], ids[j]):
                    return False
        return True

    def index_distance(self, iota1, iota2) -> int:
        extent = self._extent_of(iota1, iota2)
        cg = self.coarse(0, extent)
        return cg.graph_distance(cg.vertex_id(iota1), cg.vertex_id(iota2))

    def indices_within(self, iota, radius: float) -> list[tuple]:
        """Valid tile indices within index distance ``radius`` of iota."""
        return self.indices_within_multi([iota], radius)

    def indices_within_multi(self, iotas, radius: float) -> list[tuple]:
        """Valid tile indices within ``radius`` of any of the given indices."""
        extent = self._extent_of(*iotas) + int(radius) + 2
        cg = self.coarse(0, extent)
        src = [cg.vertex_id(i) for i in iotas]
        dist = cg.bfs_distances(src, cap=int(radius))
        out = []
        for v in np.nonzero((dist >= 0) & (dist <= int(radius)))[0]:
            cand = tuple(int(x) for x in cg.coords[v])
            if self.valid_iota(0, cand):
                out.append(cand)
        return sorted(out)

    def tiles_touching(self, iota) -> list[tuple]:
        """Same-scale tile indices whose tiles intersect tile(iota).

        Gasket tiles meet at shared corner vertices; carpet tiles are
        pairwise disjoint.
        """
        iota = tuple(int(x) for x in iota)
        if self.kind == "carpet":
            return [iota]
        out = set()
        offs = self._corner_offsets
        for u in offs:
            for v in offs:
                cand = tuple(np.asarray(iota) + u - v)
                if self.valid_iota(0, cand):
                    out.add(cand)
        return sorted(out)

    def spatial_adjacent(self, iota1, iota2) -> bool:
        """d(S_k(iota1), S_k(iota2)) = 0 for gaskets; index distance 1 for
        carpets (tiles never share vertices there)."""
        iota1 = tuple(int(x) for x in iota1)
        iota2 = tuple(int(x) for x in iota2)
        if iota1 == iota2:
            return False
        if self.kind == "gasket":
            return iota2 in self.tiles_touching(iota1)
        return self.index_distance(iota1, iota2) == 1

    # -- hierarchy ------------------------------------------------------------

    def _ratio(self, k_child: int, k_parent: int) -> int:
        return self.base ** (self.params.ell(k_parent) - self.params.ell(k_child))

    def parent_index(self, k: int, iota) -> tuple:
        """pi_k^{(1)}: the scale-(k+1) tile containing S_k(iota)."""
        key = (k, tuple(iota))
        if key in self._parent_cache:
            return self._parent_cache[key]
        r = self._ratio(k, k + 1)
        iota = np.asarray(iota, dtype=np.int64)
        p = iota // r
        rem = iota - p * r
        if not self._offset_in_template(rem, r):
            raise ValueError(
                f"index {tuple(iota)} is not nested in a scale-{k + 1} tile"
            )
        out = tuple(int(x) for x in p)
        self._parent_cache[key] = out
        return out

    def _offset_in_template(self, rem, side) -> bool:
        """Is ``rem`` the corner of a unit tile of the side-``side`` template?"""
        if self.kind == "carpet":
            stage = round(math.log(side, self.base))
            cg = self.coarse(0, side + 2)
            # template corners of the side-B^stage block anchored at origin
            return cg.has_vertex(tuple(int(x) for x in rem)) and all(
                0 <= int(x) < side for x in rem
            )
        if any(int(x) < 0 or int(x) >= side for x in rem):
            return False
        return self.valid_iota(0, tuple(int(x) for x in rem))

    def ancestor_space(self, k: int, j: int, iota) -> tuple:
        """pi_k^{(j)}(iota)."""
        out = tuple(int(x) for x in iota)
        for step in range(j):
            out = self.parent_index(k + step, out)
        return out

    def children_indices(self, k: int, iota) -> list[tuple]:
        """Scale-(k-1) tile indices inside S_k(iota)."""
        r = self._ratio(k - 1, k)
        anchor = np.asarray(iota, dtype=np.int64) * r
        if self.kind == "gasket":
            tmpl = self._gasket_block_corners(r)
        else:
            tmpl = self._carpet_block_corners(r)
        return [tuple(int(x) for x in anchor + t) for t in tmpl]

    def _gasket_block_corners(self, side) -> np.ndarray:
        key = ("blockcorners", side)
        if key not in self._valid_cache:
            stage = round(math.log2(side))
            cg = build_gasket(self.d, stage)
            self._valid_cache[key] = cg.corner_index_set(1)
        return self._valid_cache[key]

    def _carpet_block_corners(self, side) -> np.ndarray:
        key = ("blockcorners", side)
        if key not in self._valid_cache:
            stage = round(math.log(side, self.base))
            cg = self._build_coarse(stage)
            self._valid_cache[key] = cg.coords
        return self._valid_cache[key]

    # -- spatial region families ----------------------------------------------

    def super_tile(self, iota, eta: int) -> list[tuple]:
        """Tile indices of the super-tile (index distance at most eta)."""
        return self.indices_within(iota, eta)

    def _cached(self, key, fn):
        if key not in self._region_cache:
            self._region_cache[key] = tuple(fn())
        return list(self._region_cache[key])

    def base_set(self, k: int, iota) -> list[tuple]:
        key = ("base", k, tuple(iota))
        return self._cached(key, lambda: self.indices_within(iota, self.params.b(k)))

    def inf_set(self, k: int, iota) -> list[tuple]:
        key = ("inf", k, tuple(iota))
        return self._cached(key, lambda: self.indices_within(iota, 2 * self.params.b(k)))

    def ext_set(self, k: int, iota) -> list[tuple]:
        """Scale-(k-1) tile indices: union of the bases of the descendants.

        One multi-source sweep from all descendants; equivalent to uniting
        their base sets because the base radius is shared.
        """
        return self._cached(
            ("ext", k, tuple(iota)),
            lambda: self.indices_within_multi(
                self.children_indices(k, iota), self.params.b(k - 1)
            ),
        )

    def sup_set(self, k: int, iota) -> list[tuple]:
        """Scale-(k+1) tile indices within m of the parent."""
        key = ("sup", k, tuple(iota))
        return self._cached(
            key, lambda: self.indices_within(self.parent_index(k, iota), self.cfg.m)
        )

    def esup_set(self, k: int, iota) -> list[tuple]:
        key = ("esup", k, tuple(iota))
        return self._cached(
            key,
            lambda: self.indices_within(
                self.parent_index(k, iota), 3 * self.cfg.m + 1
            ),
        )

    def regions(self, k: int, iota) -> dict:
        """The base/influence/ext/sup/esup family for a scale-k tile, each a
        (tile_scale, tuple-of-indices) pair."""
        fam = {
            "base": (k, tuple(self.base_set(k, iota))),
            "influence": (k, tuple(self.inf_set(k, iota))),
            "sup": (k + 1, tuple(self.sup_set(k, iota))),
            "esup": (k + 1, tuple(self.esup_set(k, iota))),
        }
        if k >= 2:
            fam["ext"] = (k - 1, tuple(self.ext_set(k, iota)))
        return fam

    # -- cross-scale set algebra ----------------------------------------------

    def region_contains(self, region_a, region_b) -> bool:
        """Does the tile family A contain the tile family B (as vertex sets)?"""
        ka, seta = region_a
        kb, setb = region_b
        seta = set(seta)
        if kb <= ka:
            for i in setb:
                if self.ancestor_space(kb, ka - kb, i) not in seta:
                    return False
            return True
        # B made of bigger tiles: every descendant of each must be in A
        setb_exp = set()
        for i in setb:
            setb_exp.update(self._descend(kb, ka, i))
        return all(self.ancestor_space(ka, 0, i) in seta for i in setb_exp)

    def _descend(self, k_from: int, k_to: int, iota) -> list[tuple]:
        cells = [tuple(int(x) for x in iota)]
        for k in range(k_from, k_to, -1):
            cells = [c for i in cells for c in self.children_indices(k, i)]
        return cells

    def region_intersects(self, region_a, region_b) -> bool:
        ka, seta = region_a
        kb, setb = region_b
        if ka > kb:
            ka, seta, kb, setb = kb, setb, ka, seta
        setb = set(setb)
        j = kb - ka
        for i in seta:
            if self.ancestor_space(ka, j, i) in setb:
                return True
            if self.kind == "gasket":
                for n in self.tiles_touching(i):
                    if self.ancestor_space(ka, j, n) in setb:
                        return True
        return False

    # -- temporal structure -----------------------------------------------------

    def interval(self, k: int, tau: int) -> Interval:
        b = self.params.beta(k)
        return Interval(tau * b, (tau + 1) * b)

    def super_interval(self, tau: int, eta: int) -> Interval:
        b = self.params.beta(1)
        return Interval(tau * b, (tau + eta) * b)

    def gamma1(self, k: int, tau: int) -> int:
        """One-step time ancestor: tau' with tau*beta_k in T_{k+1}(tau'+1)."""
        return int(math.floor(tau * self.params.beta(k) / self.params.beta(k + 1))) - 1

    def ancestor_time(self, k: int, j: int, tau: int) -> int:
        out = tau
        for step in range(j):
            out = self.gamma1(k + step, out)
        return out

    def time_children(self, k: int, tau: int) -> list[int]:
        """Scale-(k-1) interval indices whose one-step ancestor is tau."""
        bk, bc = self.params.beta(k), self.params.beta(k - 1)
        lo = (tau + 1) * bk / bc
        hi = (tau + 2) * bk / bc
        out = [t for t in range(math.floor(lo) - 1, math.ceil(hi) + 1) if self.gamma1(k - 1, t) == tau]
        return out

    def t_inf(self, k: int, tau: int) -> Interval:
        g1 = self.gamma1(k, tau)
        top = self.cfg.eta if (k == 1 and self.cfg.eta < 2) else 2
        return Interval(
            g1 * self.params.beta(k + 1),
            (tau + top) * self.params.beta(k),
            hi_closed=True,
        )

    def t_sup(self, k: int, tau: int) -> Interval:
        g1 = self.gamma1(k, tau)
        b = self.params.beta(k + 1)
        return Interval((g1 - 3) * b, (g1 + 6) * b)

    def t_esup(self, k: int, tau: int) -> Interval:
        g1 = self.gamma1(k, tau)
        b = self.params.beta(k + 1)
        return Interval((g1 - 12) * b, (g1 + 15) * b)

    # -- space-time cell predicates ---------------------------------------------

    def cells_adjacent(self, c1: Cell, c2: Cell) -> bool:
        """Adjacency, including the cross-scale rule (the smaller cell's
        ancestor at the larger scale must be adjacent) under which a cell is
        never adjacent to its own ancestors."""
        if c1 == c2:
            return False
        if c1.k == c2.k:
            return self._same_scale_adjacent(c1, c2)
        if c1.k < c2.k:
            c1, c2 = c2, c1
        j = c1.k - c2.k
        lifted = Cell(
            c1.k,
            self.ancestor_space(c2.k, j, c2.iota),
            self.ancestor_time(c2.k, j, c2.tau),
        )
        if lifted == c1:
            return False
        return self._same_scale_adjacent(c1, lifted)

    def _same_scale_adjacent(self, c1: Cell, c2: Cell) -> bool:
        if c1.iota == c2.iota and c1.tau == c2.tau:
            return False
        if self.kind == "gasket":
            if c1.iota == c2.iota:
                return abs(c1.tau - c2.tau) <= 1
            if c1.tau == c2.tau:
                return self.spatial_adjacent(c1.iota, c2.iota)
            return False
        # carpet: d(iota1, iota2) + |tau1 - tau2| = 1
        dt = abs(c1.tau - c2.tau)
        if dt > 1:
            return False
        ds = 0 if c1.iota == c2.iota else self.index_distance(c1.iota, c2.iota)
        return ds + dt == 1

    def star_neighbours(self, c1: Cell, c2: Cell) -> bool:
        """Carpet *-neighbour rule: sup-norm distance at most 1 in (iota, tau)."""
        if self.kind != "carpet":
            raise ValueError("star neighbourhood is a carpet notion")
        if c1 == c2 or c1.k != c2.k:
            return False
        dspace = max(abs(int(a) - int(b)) for a, b in zip(c1.iota, c2.iota))
        return max(dspace, abs(c1.tau - c2.tau)) <= 1

    def r_inf(self, c: Cell):
        return (c.k, tuple(self.inf_set(c.k, c.iota))), self.t_inf(c.k, c.tau)

    def r_sup(self, c: Cell):
        return (c.k + 1, tuple(self.sup_set(c.k, c.iota))), self.t_sup(c.k, c.tau)

    def r_esup(self, c: Cell):
        return (c.k + 1, tuple(self.esup_set(c.k, c.iota))), self.t_esup(c.k, c.tau)

    def _st_intersects(self, a, b) -> bool:
        (ra, ia), (rb, ib) = a, b
        return ia.intersects(ib) and self.region_intersects(ra, rb)

    def well_separated(self, c1: Cell, c2: Cell) -> bool:
        """Areas of influence do not intersect."""
        return not self._st_intersects(self.r_inf(c1), self.r_inf(c2))

    def support_adjacent(self, c1: Cell, c2: Cell) -> bool:
        """Extended supports intersect."""
        return self._st_intersects(self.r_esup(c1), self.r_esup(c2))

    def sup_intersects(self, c1: Cell, c2: Cell) -> bool:
        return self._st_intersects(self.r_sup(c1), self.r_sup(c2))

    # -- physical materialisation -------------------------------------------------

    def tile_vertices(self, k: int, iota) -> np.ndarray:
        """Vertex ids of S_k(iota) in the physical graph."""
        if self.g is None:
            raise ValueError("no physical graph attached")
        side = self.params.side(k)
        return self.g.tile_vertices(iota, side)

    def cell_region(self, c: Cell) -> tuple[np.ndarray, Interval]:
        return self.tile_vertices(c.k, c.iota), self.interval(c.k, c.tau)

    def height(self, iota) -> int:
        """Graph distance from the scale-1 tile to the base subgraph; the
        base spans all of time, so the height carries no tau dependence."""
        iota = tuple(int(x) for x in iota)
        if iota not in self._height_cache:
            if self._dist_base is None:
                self._dist_base = self.g.dist_to_base()
            verts = self.tile_vertices(1, iota)
            self._height_cache[iota] = int(self._dist_base[verts].min())
        return self._height_cache[iota]

    def is_base_iota(self, iota) -> bool:
        """L_1 membership: the index lies on the base sub-prefractal."""
        return all(int(x) == 0 for x in iota[1:]) and self.valid_iota(1, iota)


# ---------------------------------------------------------------------------
# windows of scale-1 cells


@dataclass
class Window:
    """Finite scale-1 cell window: spatial index ball x time range, with the
    ancestor scaffolding needed by the multi-scale machinery."""

    tess: Tessellation
    iotas: list[tuple]
    tau_lo: int
    tau_hi: int
    origin: tuple
    iota_id: dict = dc_field(default_factory=dict)
    heights: np.ndarray | None = None

    @classmethod
    def build(cls, tess: Tessellation, radius_idx: int, tau_lo: int, tau_hi: int, origin=None):
        origin = tuple(origin) if origin is not None else (0,) * tess.d
        iotas = tess.indices_within(origin, radius_idx)
        w = cls(tess, iotas, tau_lo, tau_hi, origin)
        w.iota_id = {i: n for n, i in enumerate(iotas)}
        if tess.g is not None:
            w.heights = np.array([tess.height(i) for i in iotas])
        return w

    @property
    def taus(self) -> range:
        return range(self.tau_lo, self.tau_hi + 1)

    def cells(self):
        for i in self.iotas:
            for t in self.taus:
                yield Cell(1, i, t)

    @property
    def n_cells(self) -> int:
        return len(self.iotas) * (self.tau_hi - self.tau_lo + 1)

    def in_window(self, c: Cell) -> bool:
        return c.k == 1 and c.iota in self.iota_id and self.tau_lo <= c.tau <= self.tau_hi

    def height_of(self, c: Cell) -> int:
        return int(self.heights[self.iota_id[c.iota]])

    def max_height(self) -> int:
        return int(self.heights.max())

    def l1_cells(self):
        return [c for c in self.cells() if self.tess.is_base_iota(c.iota)]

    def neighbours(self, c: Cell):
        """Path-adjacent cells, split into (inside window, outside-but-valid)."""
        ins, outs = [], []
        for cand in self._adjacent_candidates(c):
            (ins if self.in_window(cand) else outs).append(cand)
        return ins, outs

    def _adjacent_candidates(self, c: Cell):
        tess = self.tess
        out = []
        for dt in (-1, 1):
            out.append(Cell(1, c.iota, c.tau + dt))
        if tess.kind == "gasket":
            for n in tess.tiles_touching(c.iota):
                if n != c.iota:
                    out.append(Cell(1, n, c.tau))
        else:
            cg = tess.coarse(0, tess._extent_of(c.iota) + 2)
            v = cg.vertex_id(c.iota)
            for w in cg.neighbours(v):
                out.append(Cell(1, tuple(int(x) for x in cg.coords[w]), c.tau))
        return [x for x in out if tess.valid_iota(1, x.iota)]

    def star_candidates(self, c: Cell):
        """Carpet d-path moves: *-neighbours (space and time may both move)."""
        tess = self.tess
        if tess.kind != "carpet":
            return self._adjacent_candidates(c)
        out = []
        deltas = [d for d in itertools.product((-1, 0, 1), repeat=tess.d)]
        for dspace in deltas:
            cand_iota = tuple(int(a) + b for a, b in zip(c.iota, dspace))
            if not tess.valid_iota(1, cand_iota):
                continue
            for dt in (-1, 0, 1):
                cand = Cell(1, cand_iota, c.tau + dt)
                if cand != c:
                    out.append(cand)
        return out


# ---------------------------------------------------------------------------
# exhaustive nesting verification


def verify_inclusions(tess: Tessellation, window: Window, scales: int | None = None) -> int:
    """Exhaustively check the nesting properties on the window; raises
    InclusionViolation naming the first violating tuple.  Returns the
    number of checks performed.
    """
    p = tess.params
    kmax = scales or min(p.kappa, 3)
    checks = 0
    sample_iotas = {1: list(window.iotas)}
    sample_taus = {1: list(window.taus)}
    for k in range(2, kmax + 1):
        sample_iotas[k] = sorted(
            {tess.ancestor_space(1, k - 1, i) for i in sample_iotas[1]}
        )
        sample_taus[k] = sorted({tess.ancestor_time(1, k - 1, t) for t in sample_taus[1]})

    # Remark 5.1: the super-tile sits inside the scale-1 base
    for i in sample_iotas[1]:
        sup_tile = (1, tuple(tess.super_tile(i, tess.cfg.eta)))
        base = (1, tuple(tess.base_set(1, i)))
        checks += 1
        if not tess.region_contains(base, sup_tile):
            raise InclusionViolation(f"Remark 5.1 fails at iota={i}")

    for k in range(1, kmax + 1):
        for i in sample_iotas[k]:
            tile = (k, (tuple(i),))
            base = (k, tuple(tess.base_set(k, i)))
            inf = (k, tuple(tess.inf_set(k, i)))
            checks += 2
            if not tess.region_contains(base, tile):
                raise InclusionViolation(f"S ⊆ S^base fails at k={k}, iota={i}")
            if not tess.region_contains(inf, base):
                raise InclusionViolation(f"S^base ⊆ S^inf fails at k={k}, iota={i}")
            # (5.9) and ext ⊆ base
            if k < kmax:
                parent = tess.parent_index(k, i)
                ext_up = (k, tuple(tess.ext_set(k + 1, parent)))
                checks += 1
                if not tess.region_contains(ext_up, base):
                    raise InclusionViolation(f"(5.9) fails at k={k}, iota={i}")
            if k >= 2:
                ext = (k - 1, tuple(tess.ext_set(k, i)))
                checks += 1
                if not tess.region_contains(base, ext):
                    raise InclusionViolation(f"S^ext ⊆ S^base fails at k={k}, iota={i}")
            # (5.10) spatial part
            sup = (k + 1, tuple(tess.sup_set(k, i)))
            checks += 1
            if not tess.region_contains(sup, inf):
                raise InclusionViolation(f"(5.10) fails at k={k}, iota={i}")

    # Lemma 5.2: T_{k'}^inf(tau'') ⊆ T_k^sup(tau) for descendants + adjacency
    for k in range(2, kmax + 1):
        for kp in range(1, k):
            for tau in sample_taus[k]:
                desc = [tau]
                for kk in range(k, kp, -1):
                    desc = [t for td in desc for t in tess.time_children(kk, td)]
                for tp in desc:
                    for tpp in (tp - 1, tp, tp + 1):
                        checks += 1
                        if not tess.t_sup(k, tau).contains(tess.t_inf(kp, tpp)):
                            raise InclusionViolation(
                                f"Lemma 5.2 fails: k={k}, k'={kp}, tau={tau}, tau''={tpp}"
                            )

    # (5.16): R_{k'}^inf(adjacent-to-descendant) ⊆ R_k^sup
    for k in range(1, kmax + 1):
        for kp in range(1, k + 1):
            for i in sample_iotas[k][:6]:
                for tau in sample_taus[k][:2]:
                    cell = Cell(k, i, tau)
                    sup_region = tess.r_sup(cell)
                    sdesc = _descend_sample(tess, k, kp, i, limit=8)
                    tdesc = [tau]
                    for kk in range(k, kp, -1):
                        tdesc = [t for td in tdesc for t in tess.time_children(kk, td)]
                        tdesc = tdesc[:6]
                    for sd in sdesc[:8]:
                        for td in tdesc[:3]:
                            dcell = Cell(kp, sd, td)
                            for adj in _same_scale_adjacent_cells(tess, dcell) + [dcell]:
                                checks += 1
                                inf_region = tess.r_inf(adj)
                                if not (
                                    sup_region[1].contains(inf_region[1])
                                    and tess.region_contains(sup_region[0], inf_region[0])
                                ):
                                    raise InclusionViolation(
                                        f"(5.16) fails: cell={cell}, adj={adj}"
                                    )

    # (5.17)/(5.18) on same-window cell pairs across scales
    pool = []
    for k in range(1, kmax + 1):
        for i in sample_iotas[k][:4]:
            for tau in sample_taus[k][:2]:
                pool.append(Cell(k, i, tau))
    for c1 in pool:
        for c2 in pool:
            if c1 == c2:
                continue
            checks += 1
            if tess._st_intersects(tess.r_inf(c1), tess.r_inf(c2)):
                if not tess.sup_intersects(c1, c2):
                    raise InclusionViolation(f"(5.17) fails: {c1} vs {c2}")
            if c1.k <= c2.k and tess.sup_intersects(c1, c2):
                esup = tess.r_esup(c2)
                sup = tess.r_sup(c1)
                checks += 1
                if not (
                    esup[1].contains(sup[1])
                    and tess.region_contains(esup[0], sup[0])
                ):
                    raise InclusionViolation(f"(5.18) fails: {c1} vs {c2}")
    return checks


def _descend_sample(tess: Tessellation, k_from: int, k_to: int, iota, limit: int) -> list[tuple]:
    """A spread-out sample of scale-k_to descendants (full expansion explodes
    at 3+ scale gaps)."""
    cells = [tuple(int(x) for x in iota)]
    for k in range(k_from, k_to, -1):
        nxt = []
        for i in cells:
            kids = tess.children_indices(k, i)
            step = max(len(kids) // max(limit, 1), 1)
            nxt.extend(kids[::step][:limit])
        cells = nxt[: limit * 2]
    return cells


def _same_scale_adjacent_cells(tess: Tessellation, c: Cell) -> list[Cell]:
    out = [Cell(c.k, c.iota, c.tau - 1), Cell(c.k, c.iota, c.tau + 1)]
    if tess.kind == "gasket":
        for n in tess.tiles_touching(c.iota):
            if n != c.iota:
                out.append(Cell(c.k, n, c.tau))
    else:
        for n in tess.indices_within(c.iota, 1):
            if n != c.iota:
                out.append(Cell(c.k, n, c.tau))
    return [x for x in out if tess.valid_iota(c.k, x.iota)]


def dump_window(tess: Tessellation, window: Window, path) -> None:
    """Deterministic JSON dump of a window's cells with region data."""
    cells = []
    for c in sorted(window.cells(), key=lambda c: (c.k, c.tau, c.iota)):
        fam = tess.regions(c.k, c.iota)
        cells.append(
            {
                "k": c.k,
                "iota": list(c.iota),
                "tau": c.tau,
                "height": window.height_of(c) if window.heights is not None else None,
                "interval": [tess.interval(c.k, c.tau).lo, tess.interval(c.k, c.tau).hi],
                "base": [list(i) for i in fam["base"][1]],
                "influence": [list(i) for i in fam["influence"][1]],
                "sup": [list(i) for i in fam["sup"][1]],
                "esup": [list(i) for i in fam["esup"][1]],
            }
        )
    payload = {
        "params": tess.params.to_dict(),
        "tau_range": [window.tau_lo, window.tau_hi],
        "cells": cells,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
