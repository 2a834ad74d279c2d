import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import linalg, stats

from zrp_pme.equilibrium import EquilibriumField, sample_configuration
from zrp_pme.lattice import Configuration, ScalingParams, TorusLattice, cell_average
from zrp_pme.sim import (AbsorbingState, SimState, TiltField, log_rn_derivative, martingale_qv_bound,
                         martingale_residual, read_jump_log, run, step, walker_snapshots)


def _chisq_p(obs, expect):
    keep = expect > 5
    o, e = obs[keep], expect[keep]
    if not keep.all():
        o, e = np.append(o, obs[~keep].sum()), np.append(e, expect[~keep].sum())
    return stats.chisquare(o, e * o.sum() / e.sum()).pvalue


def _heat_kernel(N, t):
    lam = N ** 2 * (1 - np.cos(2 * np.pi * np.arange(N) / N))
    return np.real(np.fft.ifft(np.exp(-lam * t)))


@given(st.lists(st.integers(0, 5), min_size=8, max_size=8), st.sampled_from([1.0, 1.5, 2.0, 3.0]),
       st.integers(0, 2 ** 32 - 1))
def test_mass_conserved_every_snapshot(counts, alpha, seed):
    counts[0] += 1
    sc = ScalingParams(1, 8, 0.25, alpha, 0.05)
    path, _ = run(Configuration(counts, sc), n_snap=16, rng=np.random.default_rng(seed))
    assert np.all(path.masses() == sum(counts))
    assert np.all(path.counts >= 0)


def test_absorbing_state(rng):
    sc = ScalingParams(1, 4, 0.1, 2.0, 1.0)
    with pytest.raises(AbsorbingState):
        step(SimState(Configuration(np.zeros(4, int), sc)), rng)


def test_step_moves_one_particle(rng):
    sc = ScalingParams(2, 4, 0.1, 2.0, 1.0)
    state = SimState(Configuration(np.arange(16) % 3, sc))
    before = state.counts.copy()
    ev = step(state, rng)
    diff = state.counts - before
    assert diff[ev.source] == -1 and diff[ev.target] == 1
    assert np.count_nonzero(diff) == 2
    assert ev.target in sc.lattice.neighbors(ev.source)
    assert ev.t > 0


def test_random_walk_msd(rng):
    # alpha = 1 particles are independent walkers; compare the empirical
    # displacement law with the lattice heat kernel
    N, t, K = 64, 0.01, 20000
    sc = ScalingParams(1, N, 1.0, 1.0, t)
    counts = np.zeros(N, int)
    counts[0] = K
    path, _ = run(Configuration(counts, sc), n_snap=1, rng=rng)
    final = path.counts[-1]
    disp = (np.arange(N) + N // 2) % N - N // 2
    msd = np.sum(final * (disp / N) ** 2) / K
    assert msd == pytest.approx(t, rel=0.05)
    assert _chisq_p(final, np.clip(_heat_kernel(N, t), 0, None) * K) > 1e-3


def test_two_site_stationary_law(rng):
    K, alpha = 6, 2.0
    sc = ScalingParams(1, 2, 1.0, alpha, 400.0)
    # generator of k(0) as a birth-death chain, rates 4 k^alpha each way
    Q = np.zeros((K + 1, K + 1))
    for k in range(K + 1):
        if k > 0:
            Q[k, k - 1] = 4 * k ** alpha
        if k < K:
            Q[k, k + 1] = 4 * (K - k) ** alpha
        Q[k, k] = -Q[k].sum()
    pi = linalg.null_space(Q.T)[:, 0]
    pi /= pi.sum()
    path, _ = run(Configuration([K, 0], sc), n_snap=40000, rng=rng)
    emp = np.bincount(path.counts[1:, 0], minlength=K + 1) / 40000
    assert 0.5 * np.abs(emp - pi).sum() < 0.02


def test_deterministic_given_seed():
    sc = ScalingParams(1, 16, 0.1, 2.0, 0.01)
    init = Configuration(np.arange(16) % 4 + 1, sc)
    tilt = TiltField.cosine(0.3)
    a, la = run(init, tilt=tilt, rng=np.random.default_rng(3))
    b, lb = run(init, tilt=tilt, rng=np.random.default_rng(3))
    assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(a.occupation, b.occupation)
    assert (la.A1, la.A2) == (lb.A1, lb.A2)


def test_constant_tilt_has_no_dynamic_part(rng):
    sc = ScalingParams(1, 16, 0.1, 2.0, 0.01)
    init = Configuration(np.full(16, 10), sc)
    path, ledger = run(init, tilt=TiltField.constant(0.7), rng=rng)
    assert ledger.A1 == 0.0 and ledger.A2 == 0.0
    assert ledger.rejected == 0
    assert path.events > 0
    assert log_rn_derivative(ledger, 0.0, sc) == 0.0


def test_ledger_required():
    with pytest.raises(ValueError):
        log_rn_derivative(None, 0.0, ScalingParams(1, 4, 0.1, 2.0, 1.0))


def test_untilted_run_has_no_ledger(rng):
    sc = ScalingParams(1, 8, 0.1, 2.0, 0.01)
    _, ledger = run(Configuration(np.full(8, 3), sc), rng=rng)
    assert ledger is None


def test_ledger_replay_time_dependent(tmp_path, rng):
    # h(t, x) = eps (1 + s + s^2) cos(2 pi x) with s = t/T
    N, T, eps, alpha, chi = 8, 0.02, 0.4, 2.0, 0.1
    sc = ScalingParams(1, N, chi, alpha, T)

    def h(t, z):
        s = t / T
        return eps * (1 + s + s * s) * np.cos(2 * np.pi * z[..., 0])

    tilt = TiltField(h, 2 * eps * 3, time_degree=2)
    init = Configuration(np.full(N, 10), sc)
    log_file = tmp_path / "jumps.bin"
    path, ledger = run(init, tilt=tilt, rng=rng, record_jumps=True, jump_log_path=log_file)
    rec = read_jump_log(log_file)
    assert np.array_equal(rec["t"], ledger.jump_times)
    assert np.array_equal(rec["source"], ledger.jump_sources)
    assert np.array_equal(rec["target"], ledger.jump_targets)

    # same spatial quadrature as the simulator; the time dependence is replayed here
    prof = cell_average(lambda z: h(0.0, z), sc.lattice, order=3)

    def hbar(t):
        s = t / T
        return (1 + s + s * s) * prof

    a1 = sum(hbar(t)[y] - hbar(t)[x_] for t, x_, y in zip(rec["t"], rec["source"], rec["target"]))
    gz, gw = np.polynomial.legendre.leggauss(12)
    nbr = sc.lattice.neighbor_table
    counts = init.counts.astype(float).copy()
    edges = np.concatenate([[0.0], rec["t"], [T]])
    a2 = 0.0
    for j in range(len(edges) - 1):
        lo, hi = edges[j], edges[j + 1]
        if hi > lo:
            ts = 0.5 * (hi - lo) * gz + 0.5 * (hi + lo)
            vals = [np.sum((chi * counts) ** alpha * np.mean(np.exp(hb[nbr] - hb[:, None]) - 1, axis=1))
                    for hb in map(hbar, ts)]
            a2 += 0.5 * (hi - lo) * np.dot(gw, vals)
        if j < len(rec):
            counts[rec["source"][j]] -= 1
            counts[rec["target"][j]] += 1
    a2 *= sc.d * N ** (2 - sc.d)
    assert np.array_equal(counts, path.counts[-1])
    assert ledger.A1 == pytest.approx(a1, abs=1e-10)
    assert ledger.A2 == pytest.approx(a2, rel=1e-9)


def test_static_tilt_ledger_matches_occupation(rng):
    sc = ScalingParams(1, 16, 0.05, 2.0, 0.005)
    init = Configuration(np.full(16, 20), sc)
    tilt = TiltField.cosine(0.3)
    path, ledger = run(init, tilt=tilt, rng=rng, record_jumps=True)
    assert ledger.A1 == pytest.approx(path.A1[-1])
    assert ledger.A2 == pytest.approx(path.A2[-1])
    assert ledger.accepted == len(ledger.jump_times)
    assert ledger.rejected > 0


def test_tilt_biases_flux(rng):
    # h = eps cos(2 pi x) pushes mass towards x = 0
    sc = ScalingParams(1, 32, 1 / 32 ** 2, 2.0, 0.01)
    init = Configuration(np.full(32, 32 ** 2), sc)
    shift = []
    x = np.arange(32) / 32
    for _ in range(4):
        path, _ = run(init, tilt=TiltField.cosine(1.0), rng=rng, n_snap=1)
        shift.append(np.mean(path.density[-1] * np.cos(2 * np.pi * x)))
    assert np.mean(shift) > 0.01


def test_constant_test_function_martingale(rng):
    sc = ScalingParams(1, 16, 0.1, 2.0, 0.01)
    path, _ = run(Configuration(np.arange(16) % 5, sc), rng=rng)
    res = martingale_residual(path, np.ones(16))
    assert np.all(np.abs(res) < 1e-12)


def test_martingale_mean_zero(rng):
    N = 32
    sc = ScalingParams(1, N, 1 / N ** 2, 2.0, 2e-3)
    field = EquilibriumField.from_profile(lambda z: 1 + 0.5 * np.cos(2 * np.pi * z[..., 0]), sc.lattice)
    phi = lambda z: np.cos(2 * np.pi * z[..., 0])
    finals, bounds = [], []
    for _ in range(40):
        path, _ = run(sample_configuration(field, sc, rng), n_snap=4, rng=rng)
        finals.append(martingale_residual(path, phi)[-1])
        bounds.append(martingale_qv_bound(path, 2 * np.pi)[-1])
    finals = np.array(finals)
    se = finals.std(ddof=1) / math.sqrt(finals.size)
    assert abs(finals.mean()) <= 4 * se
    assert finals.var(ddof=1) <= np.mean(bounds)


def test_stationarity_ks(rng):
    N = 32
    sc = ScalingParams(1, N, 1 / N, 2.0, 0.01)
    field = EquilibriumField(1.0, sc.lattice)
    phi = np.cos(2 * np.pi * np.arange(N) / N)
    start, mid = [], []
    for _ in range(200):
        path, _ = run(sample_configuration(field, sc, rng), n_snap=2, rng=rng)
        start.append(path.density[0] @ phi / N)
        mid.append(path.density[1] @ phi / N)
    assert stats.ks_2samp(start, mid).pvalue > 0.01


def test_reversibility_swap(rng):
    N = 16
    sc = ScalingParams(1, N, 1 / N, 2.0, 0.005)
    field = EquilibriumField(1.0, sc.lattice)
    phi = np.sin(2 * np.pi * np.arange(N) / N)
    pairs = []
    for _ in range(300):
        path, _ = run(sample_configuration(field, sc, rng), n_snap=1, rng=rng)
        pairs.append((path.density[0] @ phi / N, path.density[-1] @ phi / N))
    a = np.array(pairs)
    # a statistic sensitive to time direction: the sign of the increment
    # times the start value is symmetric under reversal
    fwd = a[:, 0] * (a[:, 1] - a[:, 0])
    bwd = a[:, 1] * (a[:, 0] - a[:, 1])
    assert stats.ks_2samp(fwd, bwd).pvalue > 0.01


def test_overflow_guard():
    sc = ScalingParams(1, 4, 1.0, 60.0, 1.0)
    with pytest.raises(OverflowError):
        SimState(Configuration([10 ** 6, 0, 0, 0], sc))


def test_rate_tree_drift(rng):
    sc = ScalingParams(1, 64, 1 / 64 ** 2, 2.0, 2e-4)
    init = Configuration(np.full(64, 64 ** 2), sc)
    path, _ = run(init, rng=rng)
    assert path.events > 10 ** 5
    assert path.tree_drift < 1e-9


def test_frozen_run():
    sc = ScalingParams(1, 8, 0.1, 2.0, 1.0)
    init = Configuration(np.arange(8), sc)
    path, _ = run(init, frozen=True, n_snap=4)
    assert np.all(path.counts == init.counts)
    assert path.occupation[-1] == pytest.approx(np.arange(8.0) ** 2)


def test_max_events_stops_early(rng):
    sc = ScalingParams(1, 8, 0.1, 2.0, 10.0)
    path, _ = run(Configuration(np.full(8, 5), sc), rng=rng, max_events=100)
    assert path.events == 100


def test_walker_sampler_matches_kernel(rng):
    N, t, K = 32, 0.02, 50000
    sc = ScalingParams(1, N, 1.0, 1.0, t)
    counts = np.zeros(N, int)
    counts[5] = K
    path = walker_snapshots(Configuration(counts, sc), 2, rng)
    assert path.counts[-1].sum() == K
    expect = np.roll(np.clip(_heat_kernel(N, t), 0, None), 5) * K
    assert _chisq_p(path.counts[-1], expect) > 1e-3
    with pytest.raises(ValueError):
        walker_snapshots(Configuration(counts, ScalingParams(1, N, 1.0, 2.0, t)), 2, rng)


def test_two_dimensional_run(rng):
    sc = ScalingParams(2, 8, 1 / 64, 2.0, 1e-3)
    lat = TorusLattice(2, 8)
    init = Configuration(np.full(lat.site_count, 64), sc)
    path, _ = run(init, rng=rng, tilt=TiltField.cosine(0.2, axis=1))
    assert np.all(path.masses() == 64 * 64)
