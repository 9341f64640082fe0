"""Infection-with-recovery dynamics on a Poisson particle field.

Two infection mechanisms are supported: shared-site (co-location infects
instantly, including at time zero) and jump-triggered (infections happen
only when a jump creates co-location).  Recovery marks are a rate-gamma
Poisson process per particle; a mark heals an infected particle only when
it is alone at its site, under either mechanism.

Every run is an exact event-driven sweep of the merged jump/mark queue.
Marks carry independent uniforms, so one realisation replays at any
smaller recovery rate; that shared-marks coupling makes the survival
curve pathwise nonincreasing in gamma, and running both mechanisms on the
same realisation makes the shared-site infected set a pathwise superset
of the jump-triggered one.  Both facts are asserted, not sampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import ParticleField, sample_field
from .percolation import EventPlugin, FieldView
from .tessellation import Cell, Tessellation

__all__ = [
    "InfectionRun",
    "CellEventReport",
    "run_infection",
    "replay_infection",
    "survival_sweep",
    "check_acceptable",
    "check_decent",
    "composite_event_plugin",
    "sample_aux_path",
    "switch_future_to_path",
    "time_buffer",
    "sample_infection_field",
]


class FrontBoundaryError(RuntimeError):
    """The infection front reached the region's safety margin."""


@dataclass
class InfectionRun:
    mechanism: str
    gamma: float
    horizon: float
    survived: bool
    extinction_time: float | None
    timeline: list  # (time, infected_count) at every change
    infected_ever: set
    infected_final: set
    seed_pid: int

    def counts_nondecreasing(self) -> bool:
        counts = [c for _, c in self.timeline]
        return all(b >= a for a, b in zip(counts, counts[1:]))


def sample_infection_field(
    g,
    seed_site: int,
    radius: int,
    horizon: float,
    mu0: float,
    gamma_max: float,
    rng: np.random.Generator,
) -> tuple[ParticleField, int]:
    """Field over B_radius(seed_site) on [0, horizon] plus the seed particle.

    Marks are sampled at gamma_max so any recovery rate below it replays by
    thinning.  Returns (field, seed particle id).
    """
    region = g.ball(seed_site, radius)
    f = sample_field(
        g, region, (0.0, horizon), mu0, gamma_max, rng, mark_rate=max(gamma_max, 1e-12)
    )
    from .fields import inject_particles

    f2 = inject_particles(f, [seed_site], rng)
    return f2, f2.n_particles - 1


def run_infection(
    field: ParticleField,
    seed_pid: int,
    gamma: float,
    mechanism: str = "shared-site",
    margin: int = 2,
) -> InfectionRun:
    """Exact event-driven infection sweep over the field's window."""
    if mechanism not in ("shared-site", "jump-triggered"):
        raise ValueError(f"unknown mechanism {mechanism}")
    g = field.g
    n = field.n_particles
    t0, t1 = field.t0, field.t1
    horizon = t1

    dist = g.bfs_distances([int(field.starts[seed_pid])])
    region_set = set(int(v) for v in field.region)
    max_r = int(dist[np.array(sorted(region_set), dtype=np.int64)].max())

    # merged event stream: jumps and (thinned) marks, time-ordered,
    # ties broken by particle id then kind
    events = []
    for pid in range(n):
        p = field.particle(pid)
        for t, v in zip(p.jump_times, p.jump_targets):
            events.append((float(t), pid, 0, int(v)))
        if gamma > 0:
            for t in p.marks_in(t0, t1, rate=gamma):
                events.append((float(t), pid, 1, -1))
    events.sort()

    pos = field.starts.copy()
    occ = np.bincount(pos, minlength=g.n_vertices)
    inf_count_site = np.zeros(g.n_vertices, dtype=np.int64)
    members: dict[int, set] = {}
    for pid in range(n):
        members.setdefault(int(pos[pid]), set()).add(pid)

    infected = np.zeros(n, dtype=bool)
    infected[seed_pid] = True
    inf_count_site[pos[seed_pid]] += 1
    if mechanism == "shared-site":
        site = int(pos[seed_pid])
        for q in members[site]:
            if not infected[q]:
                infected[q] = True
                inf_count_site[site] += 1

    n_inf = int(infected.sum())
    timeline = [(t0, n_inf)]
    infected_ever = set(np.nonzero(infected)[0].tolist())
    extinction = None
    front_error = False

    for (t, pid, kind, v) in events:
        if n_inf == 0:
            break
        if kind == 0:  # jump of pid to v
            u = int(pos[pid])
            members[u].discard(pid)
            occ[u] -= 1
            if infected[pid]:
                inf_count_site[u] -= 1
            pos[pid] = v
            members.setdefault(v, set()).add(pid)
            occ[v] += 1
            if infected[pid]:
                inf_count_site[v] += 1
                if dist[v] > max_r - margin:
                    front_error = True
                    break
                # arriving infected particle infects everyone present
                for q in list(members[v]):
                    if not infected[q]:
                        infected[q] = True
                        inf_count_site[v] += 1
                        infected_ever.add(q)
                        n_inf += 1
                timeline.append((t, n_inf))
            else:
                if inf_count_site[v] > 0:
                    infected[pid] = True
                    inf_count_site[v] += 1
                    infected_ever.add(pid)
                    n_inf += 1
                    timeline.append((t, n_inf))
                elif mechanism == "shared-site":
                    pass  # nobody infected here; nothing to catch
        else:  # recovery mark
            if infected[pid] and occ[pos[pid]] == 1:
                infected[pid] = False
                inf_count_site[pos[pid]] -= 1
                n_inf -= 1
                timeline.append((t, n_inf))
                if n_inf == 0:
                    extinction = t
                    break

    if front_error:
        raise FrontBoundaryError("infection front reached the safety margin")
    survived = n_inf > 0
    return InfectionRun(
        mechanism=mechanism,
        gamma=gamma,
        horizon=horizon,
        survived=survived,
        extinction_time=extinction,
        timeline=timeline,
        infected_ever=infected_ever,
        infected_final=set(np.nonzero(infected)[0].tolist()),
        seed_pid=seed_pid,
    )


def replay_infection(field, seed_pid, gamma, mechanisms=("shared-site", "jump-triggered")):
    """Run both mechanisms on the same realisation; the shared-site infected
    set dominates the jump-triggered one at every event time (asserted)."""
    runs = {m: run_infection(field, seed_pid, gamma, m) for m in mechanisms}
    if set(mechanisms) == {"shared-site", "jump-triggered"}:
        a = runs["shared-site"]
        b = runs["jump-triggered"]
        assert b.infected_ever <= a.infected_ever, "mechanism superset violated"
    return runs


@dataclass
class SurvivalCurve:
    gammas: list
    frequencies: list
    survived: list  # per gamma: list of 0/1 per replica
    replicas: int

    def cis(self, z: float = 1.96):
        out = []
        for f in self.frequencies:
            half = z * math.sqrt(max(f * (1 - f), 1e-12) / self.replicas)
            out.append((max(f - half, 0.0), min(f + half, 1.0)))
        return out


def survival_sweep(
    g,
    seed_site: int,
    mu0: float,
    gammas,
    replicas: int,
    horizon: float,
    rng_for,
    radius: int | None = None,
    mechanism: str = "shared-site",
) -> SurvivalCurve:
    """Survival frequency per recovery rate, on shared realisations.

    ``rng_for(rep)`` supplies the replica streams.  Marks are sampled once
    per replica at max(gammas) and thinned, so the per-replica survival
    indicator is nonincreasing in gamma by construction; this is asserted
    on every replica.
    """
    gammas = sorted(float(x) for x in gammas)
    gmax = max(gammas) if gammas[-1] > 0 else 1e-9
    if radius is None:
        # infection fronts relay at roughly two edges per unit time at
        # moderate densities; start generous and regrow on contact
        radius = int(2.5 * horizon) + 20
    table = []
    for rep in range(replicas):
        r = radius
        for attempt in range(5):
            f, seed_pid = sample_infection_field(
                g, seed_site, r, horizon, mu0, gmax, rng_for((rep, attempt))
            )
            row = []
            try:
                for gam in gammas:
                    run = run_infection(f, seed_pid, gam, mechanism)
                    row.append(1 if run.survived else 0)
            except FrontBoundaryError:
                r = int(r * 1.4) + 8
                continue
            break
        else:
            raise FrontBoundaryError(
                f"replica {rep}: front kept reaching the margin at radius {r}"
            )
        # pathwise monotone under the shared-marks coupling
        assert all(a >= b for a, b in zip(row, row[1:])), "coupling violated"
        table.append(row)
    arr = np.array(table)
    freqs = arr.mean(axis=0).tolist()
    return SurvivalCurve(gammas, freqs, [arr[:, i].tolist() for i in range(len(gammas))], replicas)


# ---------------------------------------------------------------------------
# acceptable / decent cells (the survival architecture's local events)


def time_buffer(tess: Tessellation) -> float:
    """The two-phase time buffer T = side^(d_w - 1/3)."""
    cfg = tess.cfg
    return float(tess.params.side(1) ** (cfg.d_w - 1.0 / 3.0))


@dataclass
class CellEventReport:
    cell: Cell
    acceptable: bool
    a1: bool
    a2: bool
    decent: bool
    d3_cases: list = field(default_factory=list)
    witness_paths: dict = field(default_factory=dict)


def _segments_intersect(t0a, pa_times, pa_seq, t0b, pb_times, pb_seq, lo, hi) -> bool:
    """Do two piecewise-constant paths share a position at a common time in
    [lo, hi]?  Positions given as (jump times, position sequence) with
    pa_seq[i] the position after the i-th jump (index 0 = start)."""
    cuts = [lo, hi]
    cuts.extend(float(t) for t in pa_times if lo < t < hi)
    cuts.extend(float(t) for t in pb_times if lo < t < hi)
    cuts = sorted(set(cuts))
    for a, b in zip(cuts, cuts[1:]):
        mid = 0.5 * (a + b)
        ia = int(np.searchsorted(pa_times, mid - t0a, side="right"))
        ib = int(np.searchsorted(pb_times, mid - t0b, side="right"))
        if pa_seq[min(ia, len(pa_seq) - 1)] == pb_seq[min(ib, len(pb_seq) - 1)]:
            return True
    return False


def _view_path(view: FieldView, i: int, lo: float, hi: float):
    """Particle i's path on [lo, hi] as (relative jump times, positions)."""
    jt, jv = view.path(i)
    sel = (jt >= lo) & (jt <= hi)
    times = jt[sel] - lo
    seq = [view.position(i, lo)] + [int(v) for v in jv[sel]]
    return times, seq


def _stays_inside(view: FieldView, i: int, allowed: set, lo: float, hi: float) -> bool:
    return all(int(v) in allowed for v in view.visited(i, lo, hi))


def check_acceptable(view: FieldView, cell: Cell, tess: Tessellation, gamma: float) -> CellEventReport:
    """(A1)+(A2) for one cell, evaluated on the eta >= 3 view.

    Candidate paths for (A1) are the trajectories of the particles present
    at x at the interval start; (A2) witnesses may be any view particle.
    """
    beta = tess.params.beta(1)
    T = time_buffer(tess)
    t_start = cell.tau * beta
    t_end = (cell.tau + 1) * beta
    sup3 = tess.super_tile(cell.iota, 3)
    sup3_verts = set(
        int(v) for i in sup3 for v in tess.tile_vertices(1, i)
    )
    tile_verts = set(int(v) for v in tess.tile_vertices(1, cell.iota))

    occupants: dict[int, list[int]] = {}
    for i in range(len(view)):
        x = view.position(i, t_start)
        if x in tile_verts:
            occupants.setdefault(x, []).append(i)

    pi_paths: dict[int, tuple] = {}
    a1 = True
    for x, ids in sorted(occupants.items()):
        found = None
        for i in ids:
            if not _stays_inside(view, i, sup3_verts, t_start, t_start + T):
                continue
            if len(view.marks(i, t_start, t_start + T, rate=gamma)):
                continue
            found = i
            break
        if found is None:
            a1 = False
            break
        pi_paths[x] = _view_path(view, found, t_start, t_end)

    a2 = a1
    if a1:
        for iprime in sup3:
            tile_p = set(int(v) for v in tess.tile_vertices(1, iprime))
            for x in sorted(occupants):
                pt, pseq = pi_paths[x]
                ok = False
                for i in range(len(view)):
                    if not _stays_inside(view, i, sup3_verts, t_start, t_end):
                        continue
                    if len(view.marks(i, t_start, t_end, rate=gamma)):
                        continue
                    if view.position(i, t_end) not in tile_p:
                        continue
                    wt, wseq = _view_path(view, i, t_start, t_end)
                    if _segments_intersect(
                        t_start, pt, pseq, t_start, wt, wseq, t_start, t_start + T
                    ):
                        ok = True
                        break
                if not ok:
                    a2 = False
                    break
            if not a2:
                break

    report = CellEventReport(cell, a1 and a2, a1, a2, decent=False)
    report.witness_paths = pi_paths
    return report


def sample_aux_path(g, x: int, duration: float, gamma: float, rng: np.random.Generator):
    """One independent walk realisation from x with its own recovery marks:
    (relative jump times, position sequence, has_marks)."""
    from .walks import simulate_walk

    tr = simulate_walk(g, x, duration, rng)
    marked = bool(gamma > 0 and rng.poisson(gamma * duration) > 0)
    seq = [tr.start] + [int(v) for v in tr.targets]
    return tr.times, seq, marked


def check_decent(
    view: FieldView,
    cell: Cell,
    tess: Tessellation,
    gamma: float,
    aux_paths: dict,
) -> CellEventReport:
    """(D3) for one cell: one pre-sampled auxiliary walk per x in the tile,
    each mark-free, and every jump time of each admits a tile of the
    1-super-tile that either receives a fresh intersecting witness against
    the restarted path (D3a) or is where the shifted path sits at the
    interval end (D3b)."""
    beta = tess.params.beta(1)
    T = time_buffer(tess)
    t_start = cell.tau * beta
    t_end = (cell.tau + 1) * beta

    sup1 = tess.super_tile(cell.iota, 1)
    sup1_verts = set(int(v) for i in sup1 for v in tess.tile_vertices(1, i))
    tiles1 = {i: set(int(v) for v in tess.tile_vertices(1, i)) for i in sup1}

    cases = []
    decent = True
    for x in sorted(aux_paths):
        aux_times, aux_seq, aux_marked = aux_paths[x]
        if aux_marked:
            return CellEventReport(
                cell, False, False, False, decent=False, d3_cases=[("marked", x)]
            )
        for t_rel in aux_times:
            t_abs = t_start + float(t_rel)
            if t_abs > t_end:
                break
            found_tile = None
            if t_abs < t_end - T:
                for iprime, tile_p in tiles1.items():
                    hit = False
                    for i in range(len(view)):
                        if not _stays_inside(view, i, sup1_verts, t_abs, t_end):
                            continue
                        if len(view.marks(i, t_abs, t_end, rate=gamma)):
                            continue
                        if view.position(i, t_end) not in tile_p:
                            continue
                        wt, wseq = _view_path(view, i, t_abs, t_end)
                        # the path restarted at t_abs: position aux(s - t_abs)
                        if _segments_intersect(
                            t_abs, aux_times, aux_seq,
                            t_abs, wt, wseq,
                            t_abs, min(t_abs + T, t_end),
                        ):
                            hit = True
                            break
                    if hit:
                        found_tile = iprime
                        break
                cases.append(("D3a", x, float(t_rel), found_tile))
            else:
                k = int(np.searchsorted(aux_times, t_end - t_abs, side="right"))
                pos = aux_seq[min(k, len(aux_seq) - 1)]
                for iprime, tile_p in tiles1.items():
                    if int(pos) in tile_p:
                        found_tile = iprime
                        break
                cases.append(("D3b", x, float(t_rel), found_tile))
            if found_tile is None:
                decent = False
                break
        if not decent:
            break
    return CellEventReport(cell, False, False, False, decent=decent, d3_cases=cases)


def composite_event_plugin(
    tess: Tessellation, gamma: float, seed: int, eta: int = 4
) -> EventPlugin:
    """The survival architecture's cell event: all adjacent cells acceptable
    and decent, evaluated through the eta=4 view anchored one interval back
    (so the tau-1 adjacent cell's windows are covered).

    Registered increasing per the source argument: the witness clauses only
    gain candidates with more particles.  Auxiliary decent-paths are fixed
    per (cell, x) from the seed, independent of the field.
    """
    from .rng import stream

    def evaluate(view: FieldView, cell: Cell, t: Tessellation) -> bool:
        beta = t.params.beta(1)
        adjacents = _adjacent_scale1_cells(t, cell)
        for adj in adjacents:
            rep_a = check_acceptable(view, adj, t, gamma)
            if not rep_a.acceptable:
                return False
            aux = {}
            for x in t.tile_vertices(1, adj.iota):
                rngx = stream(seed, "aux", adj.iota, adj.tau, int(x))
                aux[int(x)] = sample_aux_path(t.g, int(x), beta, gamma, rngx)
            rep_d = check_decent(view, adj, t, gamma, aux)
            if not rep_d.decent:
                return False
        return True

    return EventPlugin(
        "acceptable+decent", eta, evaluate, increasing=True, time_anchor=-1
    )


def _adjacent_scale1_cells(tess: Tessellation, cell: Cell) -> list[Cell]:
    out = [Cell(1, cell.iota, cell.tau - 1), Cell(1, cell.iota, cell.tau + 1)]
    if tess.kind == "gasket":
        for n in tess.tiles_touching(cell.iota):
            if n != cell.iota:
                out.append(Cell(1, n, cell.tau))
    else:
        for n in tess.indices_within(cell.iota, 1):
            if n != cell.iota:
                out.append(Cell(1, n, cell.tau))
    return [c for c in out if tess.valid_iota(1, c.iota)]


def switch_future_to_path(field: ParticleField, pid: int, t_switch: float, path):
    """The alternative construction: from t_switch on, particle pid follows
    the pre-sampled path (restarted at its position).  Concatenating walks
    preserves the law when the path is an independent realisation."""
    times, seq, _ = path
    p = field.particle(pid)
    if seq[0] != p.position(t_switch):
        raise ValueError("path does not start at the particle's position")
    keep = p.jump_times < t_switch
    new_times = np.concatenate([p.jump_times[keep], t_switch + np.asarray(times)])
    new_targets = np.concatenate(
        [p.jump_targets[keep], np.asarray(seq[1:], dtype=np.int64)]
    )
    sel = new_times <= field.t1
    new_times, new_targets = new_times[sel], new_targets[sel]

    jp = [0]
    jt, jv = [], []
    for q in range(field.n_particles):
        if q == pid:
            jt.append(new_times)
            jv.append(new_targets)
        else:
            lo, hi = field.jump_ptr[q], field.jump_ptr[q + 1]
            jt.append(field.jump_times[lo:hi])
            jv.append(field.jump_targets[lo:hi])
        jp.append(jp[-1] + len(jt[-1]))
    import dataclasses

    return dataclasses.replace(
        field,
        jump_ptr=np.array(jp, dtype=np.int64),
        jump_times=np.concatenate(jt) if jt else np.empty(0),
        jump_targets=np.concatenate(jv) if jv else np.empty(0, dtype=np.int64),
    )
