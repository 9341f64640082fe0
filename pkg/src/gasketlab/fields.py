"""Stationary Poisson systems of random walks with recovery marks.

A field seeds Poisson(mu0 * lam_x) particles per vertex of a region at the
window start (windows may begin at negative times; stationarity makes the
seeding time immaterial and the tests check that instead of assuming it),
simulates every trajectory to the window end, and attaches rate-gamma
recovery marks.  Each mark carries an independent uniform so that the same
realisation can be thinned to any smaller recovery rate, which is what the
infection module's pathwise couplings rely on.

Particles outside the region are never simulated; experiments that need
in-flow enlarge the region by the confinement radius and work with the
predicate-thinned confined sub-field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .walks import _step

__all__ = [
    "ParticleField",
    "ParticleView",
    "Snapshot",
    "ConfinementOracle",
    "sample_field",
    "snapshot",
    "thin",
    "merge_fields",
    "inject_particles",
    "count_event_indicator",
    "save_field",
    "load_field",
]


class FieldBoundaryError(RuntimeError):
    """Too many particles reached the stage-boundary safety margin."""


@dataclass
class ParticleView:
    """Read access to one particle's path and marks (absolute times)."""

    field: "ParticleField"
    pid: int

    @property
    def start(self) -> int:
        return int(self.field.starts[self.pid])

    @property
    def jump_times(self) -> np.ndarray:
        lo, hi = self.field.jump_ptr[self.pid], self.field.jump_ptr[self.pid + 1]
        return self.field.jump_times[lo:hi]

    @property
    def jump_targets(self) -> np.ndarray:
        lo, hi = self.field.jump_ptr[self.pid], self.field.jump_ptr[self.pid + 1]
        return self.field.jump_targets[lo:hi]

    @property
    def marks(self) -> np.ndarray:
        lo, hi = self.field.mark_ptr[self.pid], self.field.mark_ptr[self.pid + 1]
        return self.field.mark_times[lo:hi]

    @property
    def mark_uniforms(self) -> np.ndarray:
        lo, hi = self.field.mark_ptr[self.pid], self.field.mark_ptr[self.pid + 1]
        return self.field.mark_us[lo:hi]

    def position(self, t: float) -> int:
        k = int(np.searchsorted(self.jump_times, t, side="right"))
        return self.start if k == 0 else int(self.jump_targets[k - 1])

    def positions(self, ts) -> np.ndarray:
        ks = np.searchsorted(self.jump_times, np.asarray(ts), side="right")
        seq = np.concatenate([[self.start], self.jump_targets])
        return seq[ks]

    def visited_between(self, t0: float, t1: float) -> np.ndarray:
        """Vertices occupied at any point of [t0, t1]."""
        jt = self.jump_times
        lo = int(np.searchsorted(jt, t0, side="right"))
        hi = int(np.searchsorted(jt, t1, side="right"))
        seq = np.concatenate([[self.start], self.jump_targets])
        return np.unique(seq[lo : hi + 1])

    def marks_in(self, t0: float, t1: float, rate: float | None = None) -> np.ndarray:
        """Marks in [t0, t1], optionally thinned to a smaller rate."""
        m = self.marks
        u = self.mark_uniforms
        sel = (m >= t0) & (m <= t1)
        if rate is not None:
            if rate > self.field.mark_rate + 1e-12:
                raise ValueError("cannot thicken marks beyond the sampled rate")
            sel &= u < rate / self.field.mark_rate
        return m[sel]


@dataclass
class ParticleField:
    """A realisation of the Poisson random walk system over region x window."""

    g: object
    region: np.ndarray
    t0: float
    t1: float
    mu0: float
    gamma: float
    mark_rate: float
    starts: np.ndarray
    jump_ptr: np.ndarray
    jump_times: np.ndarray
    jump_targets: np.ndarray
    mark_ptr: np.ndarray
    mark_times: np.ndarray
    mark_us: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_particles(self) -> int:
        return len(self.starts)

    def particle(self, pid: int) -> ParticleView:
        return ParticleView(self, pid)

    def particles(self):
        return (ParticleView(self, pid) for pid in range(self.n_particles))

    def positions_at(self, t: float) -> np.ndarray:
        if not (self.t0 <= t <= self.t1):
            raise ValueError(f"time {t} outside window [{self.t0}, {self.t1}]")
        out = np.empty(self.n_particles, dtype=np.int64)
        for pid in range(self.n_particles):
            out[pid] = self.particle(pid).position(t)
        return out


@dataclass
class Snapshot:
    t: float
    counts: dict[int, int]

    def total(self) -> int:
        return sum(self.counts.values())


def sample_field(
    g,
    region,
    window: tuple[float, float],
    mu0: float,
    gamma: float,
    rng: np.random.Generator,
    margin: int = 0,
    max_contact_rate: float = 0.02,
    mark_rate: float | None = None,
) -> ParticleField:
    """Sample the Poisson field and simulate every particle over the window.

    ``mark_rate`` (default gamma) is the rate at which recovery marks are
    physically sampled; marks carry uniforms so any rate below it can be
    recovered by thinning.
    """
    region = np.asarray(region, dtype=np.int64)
    t0, t1 = float(window[0]), float(window[1])
    if t1 <= t0:
        raise ValueError("window must have positive length")
    if mu0 < 0 or gamma < 0:
        raise ValueError("mu0 and gamma must be nonnegative")
    mark_rate = gamma if mark_rate is None else float(mark_rate)
    if mark_rate < gamma:
        raise ValueError("mark_rate must be at least gamma")

    counts = rng.poisson(mu0 * g.lam[region])
    starts = np.repeat(region, counts)
    n = len(starts)
    horizon = t1 - t0

    jump_ptr, jump_times, jump_targets, contact = _batch_trajectories(
        g, starts, horizon, rng, margin
    )
    jump_times += t0
    rate_contact = float(contact.mean()) if n else 0.0
    if margin > 0 and rate_contact > max_contact_rate:
        raise FieldBoundaryError(
            f"boundary contact rate {rate_contact:.3f} exceeds {max_contact_rate}"
        )

    mark_ptr, mark_times, mark_us = _sample_marks(n, mark_rate, t0, horizon, rng)

    return ParticleField(
        g=g,
        region=region,
        t0=t0,
        t1=t1,
        mu0=mu0,
        gamma=gamma,
        mark_rate=mark_rate,
        starts=starts,
        jump_ptr=jump_ptr,
        jump_times=jump_times,
        jump_targets=jump_targets,
        mark_ptr=mark_ptr,
        mark_times=mark_times,
        mark_us=mark_us,
        meta={"boundary_contact_rate": rate_contact},
    )


def _sample_marks(n: int, rate: float, t0: float, horizon: float, rng):
    """Rate-``rate`` Poisson marks per particle, sorted within each particle."""
    if rate <= 0 or n == 0:
        return np.zeros(n + 1, dtype=np.int64), np.empty(0), np.empty(0)
    mcounts = rng.poisson(rate * horizon, size=n)
    total = int(mcounts.sum())
    mark_times = t0 + rng.uniform(0, horizon, size=total)
    mark_ptr = np.concatenate([[0], np.cumsum(mcounts)]).astype(np.int64)
    for pid in range(n):
        lo, hi = mark_ptr[pid], mark_ptr[pid + 1]
        mark_times[lo:hi] = np.sort(mark_times[lo:hi])
    return mark_ptr, mark_times, rng.random(total)


def _batch_trajectories(g, starts, horizon, rng, margin=0):
    """Lock-step simulation of many walks; returns columnar trajectories."""
    n = len(starts)
    contact = np.zeros(n, dtype=bool)
    if n == 0:
        return np.zeros(1, dtype=np.int64), np.empty(0), np.empty(0, dtype=np.int64), contact
    dist_bd = g.dist_to_boundary() if margin > 0 else None
    if margin > 0:
        contact |= dist_bd[starts] < margin
    pos = np.asarray(starts, dtype=np.int64).copy()
    t = np.zeros(n)
    active = np.arange(n)
    rec_pid, rec_t, rec_v = [], [], []
    while len(active):
        dt = rng.standard_exponential(len(active))
        t[active] += dt
        done = t[active] > horizon
        active = active[~done]
        if len(active) == 0:
            break
        newpos = _step(g, pos[active], rng)
        pos[active] = newpos
        if margin > 0:
            contact[active] |= dist_bd[newpos] < margin
        rec_pid.append(active.copy())
        rec_t.append(t[active].copy())
        rec_v.append(newpos)
    if rec_pid:
        pids = np.concatenate(rec_pid)
        times = np.concatenate(rec_t)
        verts = np.concatenate(rec_v)
        order = np.lexsort((times, pids))
        pids, times, verts = pids[order], times[order], verts[order]
        ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(ptr, pids + 1, 1)
        ptr = np.cumsum(ptr)
    else:
        ptr = np.zeros(n + 1, dtype=np.int64)
        times = np.empty(0)
        verts = np.empty(0, dtype=np.int64)
    return ptr, times, verts, contact


def snapshot(field: ParticleField, t: float) -> Snapshot:
    """Exact occupancy at time t (positions are piecewise constant)."""
    pos = field.positions_at(t)
    vals, cnt = np.unique(pos, return_counts=True)
    return Snapshot(t, {int(v): int(c) for v, c in zip(vals, cnt)})


def _subset_field(field: ParticleField, keep: np.ndarray, **meta) -> ParticleField:
    keep = np.asarray(keep)
    ids = np.nonzero(keep)[0]
    jp = [field.jump_ptr[0]]
    jt, jv = [], []
    mp = [0]
    mt, mu = [], []
    for pid in ids:
        lo, hi = field.jump_ptr[pid], field.jump_ptr[pid + 1]
        jt.append(field.jump_times[lo:hi])
        jv.append(field.jump_targets[lo:hi])
        jp.append(jp[-1] + (hi - lo))
        lo, hi = field.mark_ptr[pid], field.mark_ptr[pid + 1]
        mt.append(field.mark_times[lo:hi])
        mu.append(field.mark_us[lo:hi])
        mp.append(mp[-1] + (hi - lo))
    return ParticleField(
        g=field.g,
        region=field.region,
        t0=field.t0,
        t1=field.t1,
        mu0=field.mu0,
        gamma=field.gamma,
        mark_rate=field.mark_rate,
        starts=field.starts[ids],
        jump_ptr=np.array(jp, dtype=np.int64) - field.jump_ptr[0],
        jump_times=np.concatenate(jt) if jt else np.empty(0),
        jump_targets=np.concatenate(jv) if jv else np.empty(0, dtype=np.int64),
        mark_ptr=np.array(mp, dtype=np.int64),
        mark_times=np.concatenate(mt) if mt else np.empty(0),
        mark_us=np.concatenate(mu) if mu else np.empty(0),
        meta={**field.meta, **meta},
    )


def thin(field: ParticleField, keep, rng: np.random.Generator | None = None) -> ParticleField:
    """Thin the field by probability or per-particle predicate.

    Scalar p: classical Poisson thinning (retained intensity p * mu0 * lam).
    Callable: predicate thinning, e.g. confinement, used for the confined
    sub-fields that the multi-scale events count.
    """
    if callable(keep):
        mask = np.array([bool(keep(p)) for p in field.particles()])
        out = _subset_field(field, mask, thinning="predicate")
    else:
        p = float(keep)
        if not 0.0 <= p <= 1.0:
            raise ValueError("keep probability outside [0, 1]")
        if rng is None:
            raise ValueError("probability thinning requires a generator")
        mask = rng.random(field.n_particles) < p
        out = _subset_field(field, mask, thinning=f"p={p}")
        out.mu0 = field.mu0 * p
    return out


def merge_fields(a: ParticleField, b: ParticleField) -> ParticleField:
    """Superpose two independent fields over the same region and window."""
    if a.t0 != b.t0 or a.t1 != b.t1:
        raise ValueError("windows differ")
    return ParticleField(
        g=a.g,
        region=a.region,
        t0=a.t0,
        t1=a.t1,
        mu0=a.mu0 + b.mu0,
        gamma=a.gamma,
        mark_rate=a.mark_rate,
        starts=np.concatenate([a.starts, b.starts]),
        jump_ptr=np.concatenate([a.jump_ptr, a.jump_ptr[-1] + b.jump_ptr[1:]]),
        jump_times=np.concatenate([a.jump_times, b.jump_times]),
        jump_targets=np.concatenate([a.jump_targets, b.jump_targets]),
        mark_ptr=np.concatenate([a.mark_ptr, a.mark_ptr[-1] + b.mark_ptr[1:]]),
        mark_times=np.concatenate([a.mark_times, b.mark_times]),
        mark_us=np.concatenate([a.mark_us, b.mark_us]),
        meta={"merged": True},
    )


def inject_particles(
    field: ParticleField, starts, rng: np.random.Generator
) -> ParticleField:
    """Add one extra particle per start (the increasing-event harness)."""
    starts = np.asarray(starts, dtype=np.int64)
    horizon = field.t1 - field.t0
    ptr, times, verts, _ = _batch_trajectories(field.g, starts, horizon, rng)
    mp, mt, mu = _sample_marks(len(starts), field.mark_rate, field.t0, horizon, rng)
    extra = ParticleField(
        g=field.g,
        region=field.region,
        t0=field.t0,
        t1=field.t1,
        mu0=0.0,
        gamma=field.gamma,
        mark_rate=field.mark_rate,
        starts=starts,
        jump_ptr=ptr,
        jump_times=times + field.t0,
        jump_targets=verts,
        mark_ptr=mp,
        mark_times=mt,
        mark_us=mu,
    )
    merged = merge_fields(field, extra)
    merged.mu0 = field.mu0
    return merged


# ---------------------------------------------------------------------------
# confinement and counting


class ConfinementOracle:
    """Exact graph-metric confinement checks with per-start BFS caching.

    A particle is confined in B_r of its position at t0 during [t0, t1]
    when every vertex it occupies in that interval lies within graph
    distance r of the t0 position.  Walks stay local, so the BFS from the
    anchor only explores the ball actually reached.
    """

    def __init__(self, g):
        self.g = g
        self._dist: dict[int, dict[int, int]] = {}
        self._covered: dict[int, int] = {}

    def _distances_from(self, start: int, up_to: int) -> dict[int, int]:
        have = self._covered.get(start, -1)
        if have >= up_to:
            return self._dist[start]
        dist = {start: 0}
        frontier = [start]
        r = 0
        g = self.g
        while frontier and r < up_to:
            nxt = []
            for v in frontier:
                for w in g.indices[g.indptr[v] : g.indptr[v + 1]]:
                    w = int(w)
                    if w not in dist:
                        dist[w] = r + 1
                        nxt.append(w)
            frontier = nxt
            r += 1
        self._dist[start] = dist
        self._covered[start] = up_to
        return dist

    def confined(self, view: ParticleView, t0: float, t1: float, r: int) -> bool:
        jt = view.jump_times
        n_jumps = int(np.searchsorted(jt, t1, "right") - np.searchsorted(jt, t0, "right"))
        if n_jumps <= r:
            return True  # cannot outrun the jump count
        anchor = view.position(t0)
        visited = view.visited_between(t0, t1)
        # cheap reject: graph distance dominates the coordinate gap
        gap = int(np.abs(self.g.coords[visited] - self.g.coords[anchor]).max())
        if gap > r:
            return False
        depth = max(gap, 1)
        while True:
            dist = self._distances_from(anchor, depth)
            if all(int(v) in dist for v in visited):
                return all(dist[int(v)] <= r for v in visited)
            if depth >= r + 1:
                return False  # some visited vertex is farther than r
            depth = min(r + 1, depth * 2)


def count_event_indicator(
    field: ParticleField,
    tiles,
    threshold_fn,
    at_time: float,
    confinement: tuple[float, float, int] | None = None,
    oracle: ConfinementOracle | None = None,
) -> np.ndarray:
    """Per-tile indicator: particle count at ``at_time`` meets the threshold.

    This is the shared kernel behind the density events: with a confinement
    triple (t0, t1, radius) only particles confined in B_radius of their t0
    position through [t0, t1] are counted.
    """
    tiles = [np.asarray(t, dtype=np.int64) for t in tiles]
    pos = field.positions_at(at_time)
    if confinement is not None:
        t0, t1, r = confinement
        oracle = oracle or ConfinementOracle(field.g)
        ok = np.array(
            [oracle.confined(field.particle(pid), t0, t1, r) for pid in range(field.n_particles)]
        )
        pos = pos[ok]
    counts = np.bincount(pos, minlength=field.g.n_vertices) if len(pos) else np.zeros(field.g.n_vertices, dtype=np.int64)
    out = np.empty(len(tiles), dtype=bool)
    for i, tile in enumerate(tiles):
        out[i] = counts[tile].sum() >= threshold_fn(tile)
    return out


# ---------------------------------------------------------------------------
# serialisation: JSON header + one line per particle


def save_field(field: ParticleField, path) -> None:
    header = {
        "t0": field.t0,
        "t1": field.t1,
        "mu0": field.mu0,
        "gamma": field.gamma,
        "mark_rate": field.mark_rate,
        "region": [int(v) for v in field.region],
        "meta": {k: v for k, v in field.meta.items() if isinstance(v, (int, float, str, bool))},
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for p in field.particles():
            jumps = ";".join(
                f"{float(t)!r}:{int(v)}" for t, v in zip(p.jump_times, p.jump_targets)
            )
            marks = ";".join(
                f"{float(t)!r}:{float(u)!r}" for t, u in zip(p.marks, p.mark_uniforms)
            )
            fh.write(f"{p.pid} {p.start} {jumps or '-'} {marks or '-'}\n")


def load_field(g, path) -> ParticleField:
    with open(path) as fh:
        header = json.loads(fh.readline())
        starts, jp, jt, jv, mp, mt, mu = [], [0], [], [], [0], [], []
        for line in fh:
            _, start, jumps, marks = line.split(" ", 3)
            starts.append(int(start))
            nj = 0
            if jumps != "-":
                for item in jumps.split(";"):
                    t, v = item.split(":")
                    jt.append(float(t))
                    jv.append(int(v))
                    nj += 1
            jp.append(jp[-1] + nj)
            nm = 0
            marks = marks.strip()
            if marks != "-":
                for item in marks.split(";"):
                    t, u = item.split(":")
                    mt.append(float(t))
                    mu.append(float(u))
                    nm += 1
            mp.append(mp[-1] + nm)
    return ParticleField(
        g=g,
        region=np.array(header["region"], dtype=np.int64),
        t0=header["t0"],
        t1=header["t1"],
        mu0=header["mu0"],
        gamma=header["gamma"],
        mark_rate=header["mark_rate"],
        starts=np.array(starts, dtype=np.int64),
        jump_ptr=np.array(jp, dtype=np.int64),
        jump_times=np.array(jt),
        jump_targets=np.array(jv, dtype=np.int64),
        mark_ptr=np.array(mp, dtype=np.int64),
        mark_times=np.array(mt),
        mark_us=np.array(mu),
        meta=header.get("meta", {}),
    )
