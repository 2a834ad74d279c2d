"""Event-driven simulation of the rescaled zero-range process.

A particle leaves x at rate d N^2 chi^(alpha-1) k(x)^alpha and lands on a
uniformly chosen neighbour.  Sources are picked by descending a binary sum
tree over sites.  With a tilt field h the rate x->y is multiplied by
exp(hbar_t(y) - hbar_t(x)); this is realised by thinning an envelope.

Besides snapshots of k, the kernel keeps for every site the exact time
integral of k(x)^alpha, so that any compensator which is linear in eta^alpha
can be evaluated without quadrature error afterwards.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

from .lattice import Configuration, ScalingParams, TorusLattice, cell_average

log = logging.getLogger(__name__)

REBUILD_EVERY = 1_000_000
STATUS_DONE, STATUS_MAX_EVENTS, STATUS_BUFFER_FULL, STATUS_ABSORBING = 0, 1, 2, 3

_GAUSS4_Z = np.array([-0.8611363115940526, -0.3399810435848563,
                      0.3399810435848563, 0.8611363115940526])
_GAUSS4_W = np.array([0.3478548451374538, 0.6521451548625461,
                      0.6521451548625461, 0.3478548451374538])


class AbsorbingState(RuntimeError):
    """Raised by `step` when no transition has positive rate."""


@dataclass
class TiltField:
    """Space-time field h(t, x) steering the dynamics.

    `h(t, pts)` takes a scalar time and points of shape (..., d).  Time
    dependence is represented on the lattice by a polynomial of degree
    `time_degree` in t/t_fin, fitted at Chebyshev nodes (exact when h is such
    a polynomial).  `osc` is an upper bound for sup h - inf h.
    """

    h: Callable[[float, np.ndarray], np.ndarray]
    osc: float
    time_degree: int = 0
    grad: Callable[[float, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if not (self.osc >= 0 and math.isfinite(self.osc)):
            raise ValueError("osc must be a finite nonnegative bound")
        if not 0 <= self.time_degree <= 7:
            raise ValueError("time_degree must lie in 0..7")

    @classmethod
    def constant(cls, c: float = 0.0) -> "TiltField":
        return cls(lambda t, z: np.full(z.shape[:-1], float(c)), 0.0)

    @classmethod
    def cosine(cls, eps: float, k: int = 1, axis: int = 0) -> "TiltField":
        """h = eps cos(2 pi k x_axis), time independent."""
        def h(t, z):
            return eps * np.cos(2 * np.pi * k * z[..., axis])

        def grad(t, z):
            g = np.zeros(z.shape)
            g[..., axis] = -2 * np.pi * k * eps * np.sin(2 * np.pi * k * z[..., axis])
            return g

        return cls(h, 2 * abs(eps), 0, grad)

    def lattice_coefficients(self, lattice: TorusLattice, t_fin: float, order: int = 3) -> np.ndarray:
        """Coefficients c[m, x] with hbar_t(x) = sum_m c[m, x] (t/t_fin)^m."""
        deg = self.time_degree
        if deg == 0:
            return cell_average(lambda z: self.h(0.0, z), lattice, order=order)[None, :]
        nodes = 0.5 - 0.5 * np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
        vals = np.stack([cell_average(lambda z, s=s: self.h(s * t_fin, z), lattice, order=order)
                         for s in nodes])
        V = np.vander(nodes, deg + 1, increasing=True)
        return np.linalg.solve(V, vals)


def pair_bound(coef: np.ndarray, nbr: np.ndarray, osc: float) -> float:
    """Upper bound on hbar_t(y) - hbar_t(x) over neighbours and t in [0, t_fin]."""
    diff = coef[:, nbr] - coef[:, :, None]
    if coef.shape[0] == 1:
        b = float(diff[0].max())
    else:
        grid = np.linspace(0.0, 1.0, 1025)
        best = -np.inf
        for s in grid:
            pw = s ** np.arange(coef.shape[0])
            best = max(best, float(np.tensordot(pw, diff, axes=1).max()))
        m = np.arange(coef.shape[0])[:, None, None]
        lip = float((m * np.abs(diff)).sum(axis=0).max())
        b = best + lip * (grid[1] - grid[0]) / 2
    return min(b, osc) if osc > 0 else b


@numba.njit(cache=True, nogil=True, inline='always')
def _kpow(k, alpha):
    if k == 0:
        return 0.0
    if alpha == 2.0:
        return float(k * k)
    if alpha == 1.0:
        return float(k)
    return float(k) ** alpha


@numba.njit(cache=True, nogil=True)
def _kpow_array(counts, alpha):
    out = np.empty(counts.shape[0])
    for x in range(counts.shape[0]):
        out[x] = _kpow(counts[x], alpha)
    return out


@numba.njit(cache=True, nogil=True)
def _build_tree(tree, kp, P):
    tree[:] = 0.0
    for x in range(kp.shape[0]):
        tree[P + x] = kp[x]
    for i in range(P - 1, 0, -1):
        tree[i] = tree[2 * i] + tree[2 * i + 1]


@numba.njit(cache=True, nogil=True, inline='always')
def _set_leaf(tree, P, x, v):
    i = P + x
    tree[i] = v
    i //= 2
    while i >= 1:
        tree[i] = tree[2 * i] + tree[2 * i + 1]
        i //= 2


@numba.njit(cache=True, nogil=True, inline='always')
def _descend(tree, P, target):
    # branch-free walk; may end on an empty leaf after rounding, caller retries
    i = 1
    while i < P:
        left = tree[2 * i]
        right = target >= left
        target -= left if right else 0.0
        i = 2 * i + right
    return i - P


@numba.njit(cache=True, nogil=True, inline='always')
def _hbar(coef, x, s):
    deg = coef.shape[0] - 1
    v = coef[deg, x]
    for m in range(deg - 1, -1, -1):
        v = v * s + coef[m, x]
    return v


@numba.njit(cache=True, nogil=True, inline='always')
def _w_site(coef, nbr, x, s, pref_g):
    hx = _hbar(coef, x, s)
    acc = 0.0
    nd = nbr.shape[1]
    for j in range(nd):
        acc += math.exp(_hbar(coef, nbr[x, j], s) - hx) - 1.0
    return pref_g * acc / nd


@numba.njit(cache=True, nogil=True, inline='always')
def _w_integral(coef, nbr, x, a, b, t_scale, pref_g, gz, gw):
    """4-point Gauss for int_a^b w_x(s) ds."""
    if b <= a:
        return 0.0
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    acc = 0.0
    for q in range(4):
        acc += gw[q] * _w_site(coef, nbr, x, (mid + half * gz[q]) / t_scale, pref_g)
    return half * acc


@numba.njit(cache=True, nogil=True)
def _record(j, ts, counts, kp, tau, iacc, tdep, coef, nbr, t_scale, pref_g, gz, gw,
            a1, a2, snap_counts, snap_occ, snap_a):
    n = counts.shape[0]
    extra = 0.0
    for x in range(n):
        snap_counts[j, x] = counts[x]
        snap_occ[j, x] = iacc[x] + kp[x] * (ts - tau[x])
        if tdep and kp[x] > 0.0:
            extra += kp[x] * _w_integral(coef, nbr, x, tau[x], ts, t_scale, pref_g, gz, gw)
    snap_a[j, 0] = a1[0]
    snap_a[j, 1] = a2[0] + extra


@numba.njit(cache=True, nogil=True)
def _advance(counts, kp, tree, P, nbr, alpha, crate, clock, t_stop, max_events,
             snap_times, snap_pos, snap_counts, snap_occ, snap_a,
             tau, iacc, a1, a2,
             tilted, tdep, coef, t_scale, env_b, pref_g, gz, gw,
             rng, jbuf_t, jbuf_x, jbuf_y, jpos, diag):
    """Advance the chain; returns a status code.

    clock[0] is the current time, snap_pos[0] the next snapshot index,
    jpos[0] the fill level of the jump buffer (capacity 0 disables it).
    diag = [accepted events, rejected candidates, max tree drift, envelope violations].
    Scalars live in locals inside the loop and are written back on exit.
    """
    nd = nbr.shape[1]
    env = math.exp(env_b) if tilted else 1.0
    t = clock[0]
    n_snap = snap_times.shape[0]
    pos = snap_pos[0]
    next_snap = snap_times[pos] if pos < n_snap else np.inf
    n_ev = 0
    n_rej = 0
    n_viol = 0
    acc1 = a1[0]
    acc2 = a2[0]
    since_rebuild = 0
    cap = jbuf_t.shape[0]
    k = jpos[0]
    status = STATUS_MAX_EVENTS
    while n_ev < max_events:
        total = tree[1] * crate * env
        if total <= 0.0:
            a1[0] = acc1
            a2[0] = acc2
            while pos < n_snap and snap_times[pos] <= t_stop:
                _record(pos, snap_times[pos], counts, kp, tau, iacc, tdep, coef,
                        nbr, t_scale, pref_g, gz, gw, a1, a2, snap_counts, snap_occ, snap_a)
                pos += 1
            if t_stop < np.inf:
                t = t_stop
            status = STATUS_ABSORBING
            break
        tn = t + rng.standard_exponential() / total
        if tn >= next_snap:
            lim = tn if tn < t_stop else t_stop
            a1[0] = acc1
            a2[0] = acc2
            while pos < n_snap and snap_times[pos] <= lim:
                _record(pos, snap_times[pos], counts, kp, tau, iacc, tdep, coef,
                        nbr, t_scale, pref_g, gz, gw, a1, a2, snap_counts, snap_occ, snap_a)
                pos += 1
            next_snap = snap_times[pos] if pos < n_snap else np.inf
        if tn > t_stop:
            t = t_stop
            status = STATUS_DONE
            break
        t = tn
        x = _descend(tree, P, rng.random() * tree[1])
        while kp[x] <= 0.0:
            x = _descend(tree, P, rng.random() * tree[1])
        j = int(rng.random() * nd)
        if j >= nd:
            j = nd - 1
        y = nbr[x, j]
        dh = 0.0
        if tilted:
            s = t / t_scale
            dh = _hbar(coef, y, s) - _hbar(coef, x, s)
            ratio = dh - env_b
            if ratio > 1e-12:
                n_viol += 1
            if rng.random() >= math.exp(ratio):
                n_rej += 1
                continue
        kx = kp[x]
        ky = kp[y]
        if tdep:
            acc2 += _tdep_increment(x, y, t, kx, ky, tau, coef, nbr, t_scale, pref_g, gz, gw)
        iacc[x] += kx * (t - tau[x])
        tau[x] = t
        if y != x:
            iacc[y] += ky * (t - tau[y])
            tau[y] = t
        counts[x] -= 1
        counts[y] += 1
        kp[x] = _kpow(counts[x], alpha)
        kp[y] = _kpow(counts[y], alpha)
        _set_leaf(tree, P, x, kp[x])
        _set_leaf(tree, P, y, kp[y])
        acc1 += dh
        n_ev += 1
        since_rebuild += 1
        if since_rebuild >= REBUILD_EVERY:
            _rebuild_check(tree, kp, P, diag)
            since_rebuild = 0
        if cap > 0:
            jbuf_t[k] = t
            jbuf_x[k] = x
            jbuf_y[k] = y
            k += 1
            if k >= cap:
                status = STATUS_BUFFER_FULL
                break
    clock[0] = t
    snap_pos[0] = pos
    jpos[0] = k
    a1[0] = acc1
    a2[0] = acc2
    diag[0] += n_ev
    diag[1] += n_rej
    diag[3] += n_viol
    return status


@numba.njit(cache=True, nogil=True)
def _tdep_increment(x, y, t, kx, ky, tau, coef, nbr, t_scale, pref_g, gz, gw):
    """Ghat contributions of sites x and y since their last change."""
    out = 0.0
    if kx > 0.0:
        out += kx * _w_integral(coef, nbr, x, tau[x], t, t_scale, pref_g, gz, gw)
    if ky > 0.0 and y != x:
        out += ky * _w_integral(coef, nbr, y, tau[y], t, t_scale, pref_g, gz, gw)
    return out


@numba.njit(cache=True, nogil=True)
def _rebuild_check(tree, kp, P, diag):
    s_seq = 0.0
    for z in range(kp.shape[0]):
        s_seq += kp[z]
    if s_seq > 0.0:
        err = abs(tree[1] - s_seq) / s_seq
        if err > diag[2]:
            diag[2] = err
    _build_tree(tree, kp, P)


@dataclass
class JumpEvent:
    t: float
    source: int
    target: int


@dataclass
class JumpLedger:
    """Radon-Nikodym bookkeeping of a tilted run.

    A1 = sum over jumps of hbar(y) - hbar(x);  A2 = int_0^t Ghat ds where
    Ghat = (d/N^(d-2)) sum_{x,y} eta(x)^alpha p(x,y) (exp(hbar(y)-hbar(x)) - 1).
    """

    A1: float = 0.0
    A2: float = 0.0
    accepted: int = 0
    rejected: int = 0
    jump_times: np.ndarray | None = None
    jump_sources: np.ndarray | None = None
    jump_targets: np.ndarray | None = None


JUMP_RECORD = np.dtype([("t", "<f8"), ("source", "<u4"), ("target", "<u4")])


def write_jump_log(path, times, sources, targets) -> None:
    """Little-endian records: f64 time, u32 source, u32 target."""
    rec = np.empty(len(times), dtype=JUMP_RECORD)
    rec["t"], rec["source"], rec["target"] = times, sources, targets
    with open(path, "wb") as fh:
        rec.tofile(fh)


def read_jump_log(path) -> np.ndarray:
    return np.fromfile(path, dtype=JUMP_RECORD)


class SimState:
    """Mutable simulation state: configuration, clock, rate tree and ledger."""

    def __init__(self, initial: Configuration, tilt: TiltField | None = None, order: int = 3):
        self.scaling = sc = initial.scaling
        self.lattice = lat = initial.lattice
        self.counts = initial.counts.astype(np.int64).copy()
        self.t = 0.0
        self.alpha = float(sc.alpha)
        self.crate = sc.rate_prefactor
        self.nbr = np.ascontiguousarray(lat.neighbor_table)
        n = lat.site_count
        self.P = 1 << max(0, (n - 1).bit_length())
        self.kp = _kpow_array(self.counts, self.alpha)
        self.tree = np.zeros(2 * self.P)
        _build_tree(self.tree, self.kp, self.P)
        self.tau = np.zeros(n)
        self.iacc = np.zeros(n)
        self.a1 = np.zeros(1)
        self.a2 = np.zeros(1)
        self.diag = np.zeros(4)
        self.tilt = tilt
        self.pref_g = sc.d / sc.N ** (sc.d - 2) * sc.chi ** sc.alpha
        if tilt is None:
            self.coef = np.zeros((1, n))
            self.env_b = 0.0
            self.tdep = False
        else:
            self.coef = np.ascontiguousarray(tilt.lattice_coefficients(lat, sc.t_fin, order))
            self.env_b = pair_bound(self.coef, self.nbr, tilt.osc)
            self.tdep = self.coef.shape[0] > 1
        # static Ghat weights per unit eta^alpha (used when h is time independent)
        self.w_static = self.pref_g * np.mean(np.exp(self.coef[0][self.nbr] - self.coef[0][:, None]) - 1.0,
                                              axis=1)
        self._check_overflow()

    def _check_overflow(self):
        K = int(self.counts.sum())
        if K == 0:
            return
        log_max = math.log(self.crate) + self.alpha * math.log(K) + self.env_b
        if log_max > math.log(1e300):
            raise OverflowError("per-site rate would exceed 1e300; adjust N, chi or the initial state")

    @property
    def tilted(self) -> bool:
        return self.tilt is not None

    def root_rate(self) -> float:
        return float(self.tree[1]) * self.crate

    def config(self) -> Configuration:
        return Configuration(self.counts.copy(), self.scaling)

    def advance(self, t_stop: float, rng: np.random.Generator, snap_times: np.ndarray | None = None,
                snap_out=None, max_events: int = 2 ** 62, jump_capacity: int = 0, on_jumps=None) -> int:
        """Run until t_stop (or max_events); returns the final status."""
        if snap_times is None:
            snap_times = np.zeros(0)
            snap_out = (np.zeros((0, self.counts.size), np.int64), np.zeros((0, self.counts.size)),
                        np.zeros((0, 2)))
        snap_pos = np.zeros(1, np.int64)
        clock = np.array([self.t])
        jt = np.zeros(jump_capacity)
        jx = np.zeros(jump_capacity, np.int64)
        jy = np.zeros(jump_capacity, np.int64)
        jpos = np.zeros(1, np.int64)
        remaining = max_events
        while True:
            before = self.diag[0]
            status = _advance(self.counts, self.kp, self.tree, self.P, self.nbr, self.alpha, self.crate,
                              clock, t_stop, remaining, snap_times, snap_pos, *snap_out,
                              self.tau, self.iacc, self.a1, self.a2,
                              self.tilted, self.tdep, self.coef, self.scaling.t_fin, self.env_b,
                              self.pref_g, _GAUSS4_Z, _GAUSS4_W, rng, jt, jx, jy, jpos, self.diag)
            remaining -= int(self.diag[0] - before)
            self.t = float(clock[0])
            if jump_capacity:
                k = int(jpos[0])
                if on_jumps is not None and k:
                    on_jumps(jt[:k].copy(), jx[:k].copy(), jy[:k].copy())
                jpos[0] = 0
            if status != STATUS_BUFFER_FULL or remaining <= 0:
                if status == STATUS_BUFFER_FULL:
                    status = STATUS_MAX_EVENTS
                return status

    def a2_at(self, occupation: np.ndarray, a2_dynamic: float) -> float:
        """A2 from the per-site occupation integrals (static tilt) or the lazy sum."""
        if self.tdep:
            return a2_dynamic
        return float(np.dot(self.w_static, occupation))


def step(state: SimState, rng: np.random.Generator) -> JumpEvent:
    """Perform one (accepted) jump."""
    got = []
    status = state.advance(np.inf, rng, max_events=1, jump_capacity=1,
                           on_jumps=lambda t, x, y: got.append((t[0], x[0], y[0])))
    if status == STATUS_ABSORBING or not got:
        raise AbsorbingState("total rate is zero")
    t, x, y = got[0]
    return JumpEvent(float(t), int(x), int(y))


@dataclass
class PathRecorder:
    """Snapshots of a run at a uniform time grid (right-continuous values).

    counts[j] is k at times[j]; occupation[j, x] = int_0^{times[j]} k(x)^alpha ds.
    A1/A2 hold the tilt ledger at each snapshot (zeros without tilt).
    """

    scaling: ScalingParams
    times: np.ndarray
    counts: np.ndarray
    occupation: np.ndarray | None
    A1: np.ndarray
    A2: np.ndarray
    events: int = 0
    rejected: int = 0
    status: int = STATUS_DONE
    tree_drift: float = 0.0
    observables: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def lattice(self) -> TorusLattice:
        return self.scaling.lattice

    @property
    def density(self) -> np.ndarray:
        return self.scaling.chi * self.counts

    @property
    def absorbed(self) -> bool:
        return self.status == STATUS_ABSORBING

    def masses(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def run(initial: Configuration, scaling: ScalingParams | None = None, tilt: TiltField | None = None,
        observables: dict[str, Callable[[np.ndarray], float]] | None = None, n_snap: int = 64,
        rng: np.random.Generator | None = None, record_jumps: bool = False, frozen: bool = False,
        jump_log_path=None, max_events: int | None = None) -> tuple[PathRecorder, JumpLedger | None]:
    """Simulate on [0, t_fin] with n_snap + 1 uniformly spaced snapshots.

    `frozen` zeroes all rates (debug).  With `record_jumps` the accepted jumps
    are returned in the ledger; `jump_log_path` streams them to a binary file.
    """
    if scaling is not None and scaling != initial.scaling:
        initial = Configuration(initial.counts, scaling)
    sc = initial.scaling
    if rng is None:
        rng = np.random.default_rng()
    state = SimState(initial, tilt)
    times = np.linspace(0.0, sc.t_fin, n_snap + 1)
    n = initial.lattice.site_count
    snap_counts = np.zeros((n_snap + 1, n), np.int64)
    snap_occ = np.zeros((n_snap + 1, n))
    snap_a = np.zeros((n_snap + 1, 2))
    if frozen:
        snap_counts[:] = state.counts
        snap_occ[:] = np.outer(times, state.kp)
        status = STATUS_DONE
    else:
        chunks: list = []
        fh = open(jump_log_path, "wb") if jump_log_path is not None else None

        def sink(t, x, y):
            if record_jumps:
                chunks.append((t, x, y))
            if fh is not None:
                rec = np.empty(t.size, dtype=JUMP_RECORD)
                rec["t"], rec["source"], rec["target"] = t, x, y
                rec.tofile(fh)

        cap = 1 << 16 if (record_jumps or fh is not None) else 0
        try:
            status = state.advance(sc.t_fin, rng, times, (snap_counts, snap_occ, snap_a),
                                   max_events=max_events if max_events else 2 ** 62,
                                   jump_capacity=cap, on_jumps=sink if cap else None)
        finally:
            if fh is not None:
                fh.close()
        if status == STATUS_MAX_EVENTS:
            log.warning("run stopped after %d events at t=%.6g", int(state.diag[0]), state.t)
    a1 = snap_a[:, 0].copy()
    a2 = snap_a[:, 1].copy() if state.tdep else snap_occ @ state.w_static
    if not state.tilted:
        a2[:] = 0.0
    path = PathRecorder(sc, times, snap_counts, snap_occ, a1, a2, int(state.diag[0]), int(state.diag[1]),
                        status, float(state.diag[2]))
    if state.diag[3] > 0:
        log.warning("thinning envelope violated %d times", int(state.diag[3]))
    if observables:
        for name, fn in observables.items():
            path.observables[name] = np.array([fn(eta) for eta in path.density])
    ledger = None
    if state.tilted:
        ledger = JumpLedger(float(a1[-1]), float(a2[-1]), int(state.diag[0]), int(state.diag[1]))
        if record_jumps and not frozen:
            if chunks:
                ledger.jump_times = np.concatenate([c[0] for c in chunks])
                ledger.jump_sources = np.concatenate([c[1] for c in chunks])
                ledger.jump_targets = np.concatenate([c[2] for c in chunks])
            else:
                ledger.jump_times = np.zeros(0)
                ledger.jump_sources = ledger.jump_targets = np.zeros(0, np.int64)
    elif record_jumps and not frozen:
        ledger = JumpLedger(0.0, 0.0, int(state.diag[0]), 0)
        if chunks:
            ledger.jump_times = np.concatenate([c[0] for c in chunks])
            ledger.jump_sources = np.concatenate([c[1] for c in chunks])
            ledger.jump_targets = np.concatenate([c[2] for c in chunks])
    return path, ledger


def log_rn_derivative(ledger: JumpLedger | None, initial_ratio: float, scaling: ScalingParams) -> float:
    """(chi/N^d) log(Y_0 Z_{t_fin}) = initial_ratio + (chi/N^d) A1 - A2."""
    if ledger is None:
        raise ValueError("a tilted run ledger is required")
    sc = scaling
    return initial_ratio + sc.chi / sc.N ** sc.d * ledger.A1 - ledger.A2


def generator_weights(phibar: np.ndarray, scaling: ScalingParams) -> np.ndarray:
    """v(x) with L_N <phi, eta>(eta) = sum_x v(x) k(x)^alpha."""
    sc = scaling
    lat = sc.lattice
    lap = lat.neighbor_mean(phibar) - phibar
    return sc.d * sc.N ** 2 / sc.N ** sc.d * sc.chi ** sc.alpha * lap


def martingale_residual(path: PathRecorder, phi, order: int = 3) -> np.ndarray:
    """M_t = <phi, eta_t> - <phi, eta_0> - int_0^t L_N F^phi(eta_s) ds at snapshot times.

    phi is a callable on the torus or an array of cell averages.  The
    compensator uses the exact occupation integrals recorded by the run.
    """
    if path.occupation is None:
        raise ValueError("path was recorded without occupation integrals")
    sc = path.scaling
    lat = sc.lattice
    phibar = cell_average(phi, lat, order=order) if callable(phi) else np.asarray(phi, dtype=float)
    pair = sc.chi / lat.site_count * (path.counts @ phibar)
    comp = path.occupation @ generator_weights(phibar, sc)
    return pair - pair[0] - comp


def martingale_qv_bound(path: PathRecorder, grad_sup: float) -> np.ndarray:
    """Quadratic-variation bound d |grad phi|_inf^2 (chi/N^d) int ||eta||_{L^alpha}^alpha ds."""
    sc = path.scaling
    n = sc.N ** sc.d
    lalpha = sc.chi ** sc.alpha * path.occupation.sum(axis=1) / n
    return sc.d * grad_sup ** 2 * sc.chi / n * lalpha


def walker_snapshots(initial: Configuration, n_snap: int, rng: np.random.Generator) -> PathRecorder:
    """Exact-in-law snapshots for alpha = 1 (independent random walkers).

    Particles move independently with rate N^2/2 towards each neighbour, so
    the displacement over a snapshot interval has the product law of 1-d
    torus heat kernels; each site's particles are spread multinomially.
    """
    sc = initial.scaling
    if sc.alpha != 1:
        raise ValueError("walker sampler requires alpha = 1")
    N, d = sc.N, sc.d
    lat = initial.lattice
    times = np.linspace(0.0, sc.t_fin, n_snap + 1)
    dt = times[1] - times[0]
    kk = np.arange(N)
    lam = N ** 2 * (1 - np.cos(2 * np.pi * kk / N))
    kern = np.real(np.fft.ifft(np.exp(-lam * dt)))
    kern = np.clip(kern, 0.0, None)
    kern /= kern.sum()
    full = kern
    for _ in range(d - 1):
        full = np.multiply.outer(full, kern)
    pv = full.ravel()
    disp = np.arange(pv.size)
    keep = pv > 1e-300
    pv, disp = pv[keep] / pv[keep].sum(), disp[keep]
    disp_coords = lat.coords(disp)
    counts = np.zeros((n_snap + 1, lat.site_count), np.int64)
    counts[0] = initial.counts
    coords = lat.coords(np.arange(lat.site_count))
    for j in range(1, n_snap + 1):
        cur = counts[j - 1]
        nxt = np.zeros(lat.site_count, np.int64)
        for x in np.flatnonzero(cur):
            draw = rng.multinomial(cur[x], pv)
            hit = draw > 0
            tgt = lat.index(coords[x] + disp_coords[hit])
            np.add.at(nxt, tgt, draw[hit])
        counts[j] = nxt
    occ = None
    zeros = np.zeros(n_snap + 1)
    return PathRecorder(sc, times, counts, occ, zeros, zeros.copy())
