"""Continuous-time conductance random walks and their estimators.

The walk at x waits an Exp(1) time (the jump rates lam_xy/lam_x sum to 1)
and then moves to a neighbour chosen proportionally to the edge
conductance.  Simulation is event-driven throughout; nothing is ever time
discretised, and confinement is evaluated exactly at jump epochs.

Monte Carlo estimators run replicas in lock-step over numpy arrays.
Exact oracles (linear-solve exit times, matrix-exponential kernels) back
the estimators on instances small enough to afford them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "Trajectory",
    "KernelEstimate",
    "simulate_walk",
    "exact_mean_exit_time",
    "exact_transition_probabilities",
    "estimate_mean_exit_time",
    "estimate_crossing_time",
    "crossing_targets",
    "estimate_heat_kernel",
    "estimate_heat_kernel_profile",
    "estimate_confinement",
    "estimate_conditioned_kernel",
    "estimate_fluctuation",
]


class BoundaryContactError(RuntimeError):
    """Too many walks touched the stage-boundary safety margin."""


class AcceptanceError(RuntimeError):
    """Rejection-sampling acceptance rate below the configured floor."""


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """One particle's piecewise-constant path.

    ``times`` are the strictly increasing jump times in (0, horizon],
    ``targets`` the vertices jumped to.  ``boundary_contact`` is set when
    the walk came within the safety margin of the stage boundary; callers
    decide whether to discard.
    """

    start: int
    times: np.ndarray
    targets: np.ndarray
    horizon: float
    boundary_contact: bool = False

    def position(self, t: float) -> int:
        k = int(np.searchsorted(self.times, t, side="right"))
        return int(self.start if k == 0 else self.targets[k - 1])

    def positions(self, ts) -> np.ndarray:
        ks = np.searchsorted(self.times, np.asarray(ts), side="right")
        seq = np.concatenate([[self.start], self.targets])
        return seq[ks]

    def visited(self) -> np.ndarray:
        return np.unique(np.concatenate([[self.start], self.targets]))

    @property
    def n_jumps(self) -> int:
        return len(self.times)


def _step(g, pos: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Advance every walker one jump: neighbour chosen prop. to conductance."""
    u = rng.random(len(pos))
    k = (u[:, None] > g.jump_cum[pos]).sum(axis=1)
    return g.nbr_pad[pos, k]


def simulate_walk(
    g,
    x0: int,
    horizon: float,
    rng: np.random.Generator,
    margin: int = 0,
) -> Trajectory:
    """Simulate one walk on [0, horizon]."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    times, targets = [], []
    t = 0.0
    pos = x0
    dist_bd = g.dist_to_boundary() if margin > 0 else None
    contact = bool(margin > 0 and dist_bd[x0] < margin)
    while True:
        t += rng.standard_exponential()
        if t > horizon:
            break
        pos = int(_step(g, np.array([pos]), rng)[0])
        times.append(t)
        targets.append(pos)
        if margin > 0 and dist_bd[pos] < margin:
            contact = True
    return Trajectory(
        start=x0,
        times=np.array(times),
        targets=np.array(targets, dtype=np.int64),
        horizon=horizon,
        boundary_contact=contact,
    )


# ---------------------------------------------------------------------------
# exact oracles


def exact_mean_exit_time(g, x: int, target_set) -> float:
    """Expected hitting time of ``target_set`` from x.

    Solves the harmonic system E_y = 1 + sum_z (lam_yz/lam_y) E_z on the
    complement, E = 0 on the target.
    """
    targets = {int(v) for v in target_set}
    if not targets:
        raise ValueError("target set is empty")
    if x in targets:
        return 0.0
    reach = g.bfs_distances(sorted(targets))
    comp = np.array(
        [v for v in range(g.n_vertices) if v not in targets], dtype=np.int64
    )
    if np.any(reach[comp] < 0):
        raise ValueError("absorbing set unreachable from part of the complement")
    pos_of = np.full(g.n_vertices, -1, dtype=np.int64)
    pos_of[comp] = np.arange(len(comp))
    rows, cols, vals = [], [], []
    for i, v in enumerate(comp):
        lo, hi = g.indptr[v], g.indptr[v + 1]
        for k in range(lo, hi):
            w = g.indices[k]
            if pos_of[w] >= 0:
                rows.append(i)
                cols.append(pos_of[w])
                vals.append(g.cond[k] / g.lam[v])
    n = len(comp)
    P = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    A = sp.identity(n, format="csr") - P
    E = spla.spsolve(A.tocsc(), np.ones(n))
    if not np.all(np.isfinite(E)):
        raise ValueError("singular harmonic system")
    return float(E[pos_of[x]])


def exact_transition_probabilities(g, x: int, t: float, max_vertices: int = 1000) -> np.ndarray:
    """P_x(X_t = y) for all y via the matrix exponential; tiny graphs only."""
    if g.n_vertices > max_vertices:
        raise ValueError("exact kernel oracle restricted to tiny graphs")
    P = np.zeros((g.n_vertices, g.n_vertices))
    for v in range(g.n_vertices):
        lo, hi = g.indptr[v], g.indptr[v + 1]
        P[v, g.indices[lo:hi]] = g.cond[lo:hi] / g.lam[v]
    import scipy.linalg

    Q = P - np.eye(g.n_vertices)
    row = np.zeros(g.n_vertices)
    row[x] = 1.0
    return row @ scipy.linalg.expm(t * Q)


# ---------------------------------------------------------------------------
# batch engines


def batch_exit_times(
    g,
    x0: int,
    r: int,
    replicas: int,
    rng: np.random.Generator,
    t_cap: float | None = None,
):
    """First exit times from B_r(x0) for ``replicas`` independent walks.

    Returns (times, censored) where censored walks hit ``t_cap`` first.
    """
    dist = g.bfs_distances([x0], cap=r + 1)
    inside = (dist >= 0) & (dist <= r)
    pos = np.full(replicas, x0, dtype=np.int64)
    t = np.zeros(replicas)
    out = np.full(replicas, np.nan)
    censored = np.zeros(replicas, dtype=bool)
    active = np.arange(replicas)
    while len(active):
        dt = rng.standard_exponential(len(active))
        t[active] += dt
        if t_cap is not None:
            over = t[active] > t_cap
            censored[active[over]] = True
            active = active[~over]
            if len(active) == 0:
                break
        newpos = _step(g, pos[active], rng)
        pos[active] = newpos
        exited = ~inside[newpos]
        out[active[exited]] = t[active[exited]]
        active = active[~exited]
    return out, censored


def batch_positions(
    g,
    x0: int,
    checkpoints,
    replicas: int,
    rng: np.random.Generator,
    margin: int = 0,
):
    """Positions of ``replicas`` walks at each checkpoint time.

    Returns (positions array of shape (len(checkpoints), replicas),
    boundary_contact bool array).  Checkpoints must be increasing.
    """
    ts = np.asarray(checkpoints, dtype=float)
    if np.any(np.diff(ts) <= 0):
        raise ValueError("checkpoints must be strictly increasing")
    ncp = len(ts)
    out = np.empty((ncp, replicas), dtype=np.int64)
    contact = np.zeros(replicas, dtype=bool)
    dist_bd = g.dist_to_boundary() if margin > 0 else None

    pos = np.full(replicas, x0, dtype=np.int64)
    t = np.zeros(replicas)
    cp = np.zeros(replicas, dtype=np.int64)
    active = np.arange(replicas)
    while len(active):
        dt = rng.standard_exponential(len(active))
        t_next = t[active] + dt
        # record the pre-jump position for every checkpoint passed by this hold
        while True:
            rec = t_next >= ts[np.minimum(cp[active], ncp - 1)]
            rec &= cp[active] < ncp
            if not rec.any():
                break
            ids = active[rec]
            out[cp[ids], ids] = pos[ids]
            cp[ids] += 1
        t[active] = t_next
        newpos = _step(g, pos[active], rng)
        pos[active] = newpos
        if margin > 0:
            contact[active] |= dist_bd[newpos] < margin
        done = cp[active] >= ncp
        active = active[~done]
    return out, contact


def batch_confinement(
    g,
    x0: int,
    r: int,
    delta: float,
    replicas: int,
    rng: np.random.Generator,
):
    """Confinement indicators and positions at delta.

    A walk is confined if it stays in B_r(x0) through [0, delta]; evaluated
    exactly at jump epochs.  Returns (confined bool array, position at delta
    for confined walks, -1 otherwise).
    """
    dist = g.bfs_distances([x0], cap=r + 1)
    inside = (dist >= 0) & (dist <= r)
    pos = np.full(replicas, x0, dtype=np.int64)
    t = np.zeros(replicas)
    confined = np.ones(replicas, dtype=bool)
    final = np.full(replicas, -1, dtype=np.int64)
    active = np.arange(replicas)
    while len(active):
        dt = rng.standard_exponential(len(active))
        t_next = t[active] + dt
        settle = t_next > delta  # holds through delta at current vertex
        ids = active[settle]
        final[ids] = pos[ids]
        active = active[~settle]
        t[active] = t_next[~settle]
        if len(active) == 0:
            break
        newpos = _step(g, pos[active], rng)
        pos[active] = newpos
        left = ~inside[newpos]
        confined[active[left]] = False
        active = active[~left]
    return confined, final


# ---------------------------------------------------------------------------
# estimators


@dataclass
class KernelEstimate:
    """Empirical law of X_t from ``replicas`` walks started at ``origin``.

    ``counts`` maps vertex id -> hit count; the heat-kernel value follows
    the normalisation p_t(x, y) = P_x(X_t = y) / lam_y.
    """

    origin: int
    t: float
    counts: dict[int, int]
    replicas: int
    boundary_contact_rate: float = 0.0
    acceptance_rate: float | None = None

    def p_hat(self, g, y: int) -> float:
        return self.counts.get(int(y), 0) / (self.replicas * g.lam[y])

    def prob(self, y: int) -> float:
        return self.counts.get(int(y), 0) / self.replicas

    def support(self) -> np.ndarray:
        return np.array(sorted(self.counts), dtype=np.int64)

    def stderr_prob(self, y: int) -> float:
        p = self.prob(y)
        return float(np.sqrt(p * (1 - p) / self.replicas))


def _counts_dict(positions: np.ndarray) -> dict[int, int]:
    vals, cnt = np.unique(positions, return_counts=True)
    return {int(v): int(c) for v, c in zip(vals, cnt)}


def estimate_heat_kernel(
    g,
    x: int,
    t: float,
    replicas: int,
    rng: np.random.Generator,
    margin: int = 0,
    max_contact_rate: float = 0.01,
) -> KernelEstimate:
    """Empirical law of X_t; invalid if boundary contact is too frequent."""
    if t <= 0:
        raise ValueError("t must be positive")
    pos, contact = batch_positions(g, x, [t], replicas, rng, margin=margin)
    rate = float(contact.mean())
    if margin > 0 and rate > max_contact_rate:
        raise BoundaryContactError(
            f"boundary contact rate {rate:.3f} exceeds {max_contact_rate}"
        )
    return KernelEstimate(x, t, _counts_dict(pos[0]), replicas, rate)


def estimate_heat_kernel_profile(
    g,
    x: int,
    ts,
    replicas: int,
    rng: np.random.Generator,
    margin: int = 0,
    max_contact_rate: float = 0.01,
) -> list[KernelEstimate]:
    """Kernel estimates at several times from one set of walks."""
    pos, contact = batch_positions(g, x, ts, replicas, rng, margin=margin)
    rate = float(contact.mean())
    if margin > 0 and rate > max_contact_rate:
        raise BoundaryContactError(
            f"boundary contact rate {rate:.3f} exceeds {max_contact_rate}"
        )
    return [
        KernelEstimate(x, float(t), _counts_dict(pos[i]), replicas, rate)
        for i, t in enumerate(ts)
    ]


def estimate_mean_exit_time(
    g,
    x: int,
    r: int,
    replicas: int,
    rng: np.random.Generator,
    ci_level_sigmas: float = 1.96,
    max_rel_ci: float | None = None,
):
    """Monte Carlo mean exit time from B_r(x) with a normal-approx CI.

    Returns (mean, (lo, hi), flagged); ``flagged`` marks a CI wider than
    ``max_rel_ci`` * mean (not fatal).
    """
    times, _ = batch_exit_times(g, x, r, replicas, rng)
    mean = float(times.mean())
    half = ci_level_sigmas * float(times.std(ddof=1)) / np.sqrt(replicas)
    flagged = bool(max_rel_ci is not None and half > max_rel_ci * mean)
    return mean, (mean - half, mean + half), flagged


def crossing_targets(g, iota, side: int) -> tuple[int, list[int]]:
    """Start corner and far corners of the side-``side`` tile at index iota.

    The expected corner-to-far-corners time scales exactly like side^{d_w}
    (gasket d=2: 5^n for side 2^n), which makes tile crossings the
    transient-free way to regress the walk dimension; ball exits carry a
    visible small-radius prefactor drift.
    """
    start = g.vertex_id(np.asarray(iota) * side)
    far = []
    for i in range(g.d):
        corner = np.asarray(iota) * side
        corner = corner.copy()
        corner[i] += side
        far.append(g.vertex_id(corner))
    return start, far


def estimate_crossing_time(
    g,
    iota,
    side: int,
    replicas: int,
    rng: np.random.Generator,
):
    """Monte Carlo corner-to-far-corners crossing time of a side-``side`` tile."""
    start, far = crossing_targets(g, iota, side)
    far_mask = np.zeros(g.n_vertices, dtype=bool)
    far_mask[far] = True
    pos = np.full(replicas, start, dtype=np.int64)
    t = np.zeros(replicas)
    out = np.full(replicas, np.nan)
    active = np.arange(replicas)
    while len(active):
        dt = rng.standard_exponential(len(active))
        t[active] += dt
        newpos = _step(g, pos[active], rng)
        pos[active] = newpos
        hit = far_mask[newpos]
        out[active[hit]] = t[active[hit]]
        active = active[~hit]
    mean = float(out.mean())
    half = 1.96 * float(out.std(ddof=1)) / np.sqrt(replicas)
    return mean, (mean - half, mean + half)


def estimate_confinement(
    g,
    x0: int,
    r: int,
    delta: float,
    replicas: int,
    rng: np.random.Generator,
):
    """P(walk stays in B_r(X_0) through [0, delta]), with stderr."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    confined, _ = batch_confinement(g, x0, r, delta, replicas, rng)
    p = float(confined.mean())
    se = float(np.sqrt(p * (1 - p) / replicas))
    return p, se


def estimate_conditioned_kernel(
    g,
    x: int,
    delta: float,
    rho: int,
    replicas: int,
    rng: np.random.Generator,
    min_acceptance: float = 0.05,
) -> KernelEstimate:
    """Law of X_delta conditioned on confinement to B_{rho/2}(x).

    Rejection sampling: only trajectories confined through [0, delta] are
    kept.  Raises AcceptanceError (suggesting a larger rho) if too few
    replicas survive the conditioning.
    """
    confined, final = batch_confinement(g, x, rho // 2, delta, replicas, rng)
    acc = float(confined.mean())
    if acc < min_acceptance:
        raise AcceptanceError(
            f"confinement acceptance {acc:.3f} below floor {min_acceptance}; "
            f"increase rho (currently {rho})"
        )
    kept = final[confined]
    est = KernelEstimate(x, delta, _counts_dict(kept), int(confined.sum()))
    est.acceptance_rate = acc
    return est


@dataclass
class FluctuationCurve:
    """Caloric fluctuation against pair spread, with the fitted exponent."""

    rhos: np.ndarray
    values: np.ndarray
    r0: int
    theta_hat: float
    theta_stderr: float
    noise_floor: float
    flagged: bool
    pairs: list = field(default_factory=list)


def estimate_fluctuation(
    g,
    x0: int,
    r0: int,
    delta: float,
    pairs: int,
    replicas: int,
    rng: np.random.Generator,
) -> FluctuationCurve:
    """Fluctuation of the heat kernel between nearby starts.

    For pair spreads rho on a grid, estimates
    max_y |p_hat(x1, y, t) - p_hat(x2, y, t)| / sup_y p_hat(x1, y, t)
    with x1 = x0 and x2 at distance rho, then fits the exponent of the
    log-log relation against rho / r0.  The fitted exponent is an
    empirical working value; it has no externally known target.
    """
    if r0 < 4:
        raise ValueError("r0 must be at least 4")
    dist = g.bfs_distances([x0], cap=r0)
    rhos = np.unique(np.geomspace(2, max(3, r0 // 2), pairs).astype(int))
    rhos = np.array([r for r in rhos if np.any(dist == r)])
    ests: dict[int, KernelEstimate] = {}

    def kernel_for(v):
        if v not in ests:
            ests[v] = estimate_heat_kernel(g, v, delta, replicas, rng)
        return ests[v]

    base = kernel_for(x0)
    probe = g.ball(x0, r0)
    sup = max(base.p_hat(g, y) for y in probe)
    values, used = [], []
    for rho in rhos:
        cands = np.nonzero(dist == rho)[0]
        x2 = int(cands[rng.integers(len(cands))])
        other = kernel_for(x2)
        fluct = max(abs(base.p_hat(g, y) - other.p_hat(g, y)) for y in probe)
        values.append(fluct / sup)
        used.append((x0, x2, rho))
    values = np.array(values)
    # MC stderr of a normalised point difference near the kernel's peak
    noise = float(np.sqrt(2.0 / (replicas * sup * g.lam.min())))
    ok = values > 0
    slope, stderr = np.nan, np.nan
    if ok.sum() >= 2:
        lx = np.log(rhos[ok] / r0)
        ly = np.log(values[ok])
        A = np.vstack([lx, np.ones_like(lx)]).T
        coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
        slope = float(coef[0])
        dof = max(ok.sum() - 2, 1)
        sigma2 = float(res[0]) / dof if len(res) else 0.0
        slope_var = sigma2 / float(((lx - lx.mean()) ** 2).sum())
        stderr = float(np.sqrt(slope_var))
    flagged = bool(np.any(values[ok] < 3 * noise)) or not np.isfinite(slope)
    return FluctuationCurve(
        rhos=rhos,
        values=values,
        r0=r0,
        theta_hat=slope,
        theta_stderr=stderr,
        noise_floor=noise,
        flagged=flagged,
        pairs=used,
    )
