import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from ssep import Configuration, DomainError, ModelParams, exact, spectral
from ssep import interchange as ic
from ssep.interchange import GreenSkeleton, InterchangeState


def test_pushforward_examples():
    eta = Configuration.from_string("10110")
    x0 = InterchangeState.all_red(5)
    zeros, ones = Configuration.empty(5), Configuration.full(5)
    assert ic.pushforward(eta, x0, zeros, ones) == eta
    all_green = InterchangeState(x0.sigma, ("G",) * 5)
    v = Configuration.from_string("01010")
    assert ic.pushforward(eta, all_green, zeros, v) == v
    x = InterchangeState((2, 1, 3), ("R", "B", "G"))
    got = ic.pushforward(Configuration((1, 0, 0)), x, Configuration((0, 0, 0)), Configuration((1, 1, 1)))
    assert got == Configuration((0, 1, 1))
    with pytest.raises(DomainError):
        ic.pushforward(Configuration((1, 0)), x, Configuration((0, 0, 0)), Configuration((1, 1, 1)))


def test_state_validation():
    with pytest.raises(DomainError):
        InterchangeState((1, 1, 2), ("R", "R", "R"))
    with pytest.raises(DomainError):
        InterchangeState((1, 2), ("R", "X"))
    x = InterchangeState((3, 1, 2), ("R", "B", "G"))
    assert x.inverse() == (2, 3, 1)
    assert x.red == {3} and x.blue == {1} and x.green == {2}
    assert InterchangeState.from_arrays(*x.arrays()) == x


def test_zero_time_is_identity():
    params = ModelParams(4, 0.3, 0.6)
    cfg = Configuration.from_string("1011")
    assert ic.simulate_ssep(cfg, params, 0.0, seed=1) == cfg
    x0 = InterchangeState((2, 1, 4, 3), ("R", "B", "G", "R"))
    res = ic.simulate_interchange(x0, params, 0.0, seed=1)
    assert res.final_state == x0 and res.crossings_final == 0
    skel = ic.sample_green_skeleton(params, 0.0, seed=1)
    assert skel.times.size == 0 and skel.crossings == 0


def test_negative_time_rejected():
    with pytest.raises(DomainError):
        ic.simulate_ssep(Configuration.full(3), ModelParams(3, 0.5, 0.5), -1.0, seed=0)
    with pytest.raises(DomainError):
        ic.sample_green_skeleton(ModelParams(3, 0.5, 0.5), -1.0, seed=0)


def test_simulation_is_reproducible():
    params = ModelParams(6, 0.3, 0.7)
    a = ic.sample_ssep(Configuration.full(6), params, 0.2, 500, seed=7)
    b = ic.sample_ssep(Configuration.full(6), params, 0.2, 500, seed=7)
    assert np.array_equal(a, b)
    # any slice regenerates on its own
    c = ic.sample_ssep(Configuration.full(6), params, 0.2, 100, seed=7, replica0=200)
    assert np.array_equal(a[200:300], c)
    assert ic.simulate_ssep(Configuration.full(6), params, 0.2, seed=7, replica=250) == \
        Configuration(tuple(int(v) for v in a[250]))


def test_single_site_absorbing_ssep():
    t, r = 0.3, 40_000
    s = ic.sample_ssep(Configuration.full(1), ModelParams(1, 0.0, 0.0), t, r, seed=3)
    p = math.exp(-2 * t)
    assert abs(s.mean() - p) <= 3 * math.sqrt(p * (1 - p) / r)


def test_ssep_singleton_marginals_near_stationarity():
    n, p, r = 6, 0.3, 100_000
    params = ModelParams(n, p, p)
    t = 10 * spectral.t_star(n, p)
    s = ic.sample_ssep(Configuration.full(n), params, t, r, seed=11)
    se = math.sqrt(p * (1 - p) / r)
    assert np.all(np.abs(s.mean(axis=0) - p) <= 3 * se)


def test_ssep_law_matches_exact_small():
    params = ModelParams(3, 0.2, 0.7)
    t, r = 0.15, 50_000
    start = Configuration.from_string("110")
    ref = exact.evolve(exact.build_generator(params), exact.point_mass(start), t)
    for samples in (ic.sample_ssep(start, params, t, r, seed=5), ic.sample_pushforward(start, params, t, r, seed=6)):
        freq = ic.empirical_law(samples)
        se = np.sqrt(ref * (1 - ref) / r)
        assert np.all(np.abs(freq - ref) <= 4 * se + 1e-12)


def test_batches_keep_permutations_and_counts():
    params = ModelParams(5, 0.5, 0.5)
    x0 = InterchangeState((1, 2, 3, 4, 5), ("R", "B", "G", "R", "R"))
    grid = np.linspace(0, 0.3, 16)
    batch = ic.sample_interchange(x0, params, 0.3, 300, seed=2, grid=grid)
    for row in batch.site_ind:
        assert sorted(row) == list(range(5))
    assert np.all(batch.counts[:, :, :3].sum(axis=2) == 5)
    assert np.all(np.diff(batch.counts[:, :, 0], axis=1) <= 0)
    assert np.all(np.diff(batch.counts[:, :, 3], axis=1) >= 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**32), st.data())
def test_trajectory_monotonicity(n, seed, data):
    perm = data.draw(st.permutations(range(1, n + 1)))
    colors = data.draw(st.lists(st.sampled_from("RBG"), min_size=n, max_size=n))
    x0 = InterchangeState(tuple(perm), tuple(colors))
    res = ic.simulate_interchange(x0, ModelParams(n, 0.4, 0.6), 0.2, seed)
    traj = np.array(list(res.trajectory_rows()))
    assert np.all(np.diff(traj[:, 0]) > 0)
    assert np.all(np.diff(traj[:, 1]) <= 0)
    assert np.all(np.diff(traj[:, 4]) >= 0)
    assert np.all(traj[:, 1:4].sum(axis=1) == n)
    assert traj[-1, 4] == res.crossings_final
    assert len(res.final_state.red) == traj[-1, 1]
    # red individuals never move across sites they could not reach: the red set only shrinks in labels
    red0 = {i for i, c in enumerate(x0.colors) if c == "R"}
    red1 = {i for i, c in enumerate(res.final_state.colors) if c == "R"}
    assert red1 <= red0


def test_simulate_equals_resample_with_same_key():
    params = ModelParams(6, 0.3, 0.6)
    x0 = InterchangeState.all_red(6)
    a = ic.simulate_interchange(x0, params, 0.25, seed=9, replica=4)
    skel = ic.sample_green_skeleton(params, 0.25, seed=9, replica=4)
    b = ic.resample_given_skeleton(x0, skel, seed=9, replica=4)
    assert a.final_state == b.final_state
    assert a.crossings_final == b.crossings_final == skel.crossings
    assert np.array_equal(a.trajectory, b.trajectory)


def test_resample_preserves_green_path():
    params = ModelParams(5, 0.3, 0.6)
    x0 = InterchangeState((1, 2, 3, 4, 5), ("R", "G", "B", "R", "G"))
    skel = ic.sample_green_skeleton(params, 0.3, seed=4, green0=x0)
    final_green = skel.green_at(skel.horizon)
    for seed in range(5):
        res = ic.resample_given_skeleton(x0, skel, seed)
        assert res.final_state.green == final_green
        assert res.crossings_final == skel.crossings


def test_empty_skeleton_is_pure_interchange():
    params = ModelParams(5, 0.3, 0.6)
    x0 = InterchangeState((1, 2, 3, 4, 5), ("R", "B", "R", "B", "R"))
    skel = GreenSkeleton(params, 0.5, np.zeros(0), np.zeros(0, np.int64), np.zeros(5, np.uint8))
    res = ic.resample_given_skeleton(x0, skel, seed=3)
    assert res.final_state.colors == x0.colors
    assert res.final_state.sigma != x0.sigma
    assert all(m == 3 for _, m in res.red_mass_samples)


def test_skeleton_json_roundtrip(tmp_path):
    params = ModelParams(4, 0.2, 0.9)
    skel = ic.sample_green_skeleton(params, 0.4, seed=12, green0=np.array([0, 1, 0, 1]))
    back = GreenSkeleton.from_json(skel.to_json())
    assert np.array_equal(back.times, skel.times) and np.array_equal(back.codes, skel.codes)
    assert np.array_equal(back.green_path, skel.green_path)
    assert back.params == skel.params and back.horizon == skel.horizon
    path = tmp_path / "sk.json"
    skel.save(path)
    assert GreenSkeleton.load(path).to_json() == skel.to_json()
    with pytest.raises(DomainError):
        GreenSkeleton.from_json('{"format": "other"}')


def test_skeleton_accessors():
    params = ModelParams(4, 0.5, 0.5)
    skel = ic.sample_green_skeleton(params, 1.0, seed=1)
    assert skel.events_site1.size + skel.events_siteN.size + sum(skel.events_green(i).size for i in (1, 2, 3)) \
        == skel.times.size
    assert skel.crossings_at(skel.horizon) == skel.crossings
    assert skel.crossings_at(0.0) == 0
    k = max(1, skel.crossings // 2)
    tau = skel.first_time_crossings(k)
    assert skel.crossings_at(tau) == k
    assert skel.first_time_crossings(skel.crossings + 1) == math.inf
    cut = skel.truncated(tau)
    assert cut.crossings == k and cut.horizon == tau
    with pytest.raises(DomainError):
        skel.events_green(4)


def test_skeleton_poisson_means():
    params = ModelParams(4, 0.5, 0.5)
    t, r = 0.5, 400
    left = [ic.sample_green_skeleton(params, t, seed=8, replica=k).events_site1.size for k in range(r)]
    mean = params.rate * t
    assert abs(np.mean(left) - mean) <= 3 * math.sqrt(mean / r)


def test_red_mass_mean_matches_heat_equation():
    n, r = 8, 20_000
    grid = np.array([0.0, 0.05, 0.1, 0.2])
    batch = ic.sample_interchange(InterchangeState.all_red(n), ModelParams(n, 0.3, 0.3), 0.2, r, seed=21,
                                  grid=grid)
    mass = batch.red_mass.astype(float)
    for k, t in enumerate(grid):
        se = mass[:, k].std(ddof=1) / math.sqrt(r)
        assert abs(mass[:, k].mean() - spectral.expected_red_mass(n, t)) <= 3 * se + 1e-12


def test_marginalizing_over_skeletons():
    n, t = 6, 0.1
    params = ModelParams(n, 0.3, 0.3)
    x0 = InterchangeState.all_red(n)
    per_skeleton = []
    for k in range(300):
        skel = ic.sample_green_skeleton(params, t, seed=31, replica=k)
        b = ic.resample_batch(x0, skel, 20, seed=32 + k)
        per_skeleton.append(b.red.sum(axis=1).mean())
    se = np.std(per_skeleton, ddof=1) / math.sqrt(len(per_skeleton))
    assert abs(np.mean(per_skeleton) - spectral.expected_red_mass(n, t)) <= 3 * se


def test_resample_batch_walks():
    params = ModelParams(4, 0.3, 0.6)
    x0 = InterchangeState((1, 2, 3, 4), ("R", "B", "G", "R"))
    skel = ic.sample_green_skeleton(params, 0.5, seed=40, green0=x0)
    b = ic.resample_batch(x0, skel, 200, seed=41)
    assert b.initial_walks == [0, 1, 3]
    assert len(b.birth_walks) == ic.count_births(skel)
    # each walk is alive at a site or killed at a crossing, never both
    started = np.zeros(b.walk_site.shape[1], bool)
    started[b.initial_walks] = True
    started[b.birth_walks] = True
    alive = b.walk_site[:, started] > 0
    killed = b.walk_kill[:, started] > 0
    assert np.all(alive ^ killed)
    assert np.all(b.walk_kill <= skel.crossings)
    # a red site at the horizon hosts an initially red individual whose walk is still alive
    for rep in range(b.red.shape[0]):
        red_sites = {j + 1 for j in np.flatnonzero(b.red[rep])}
        alive_red = {int(b.walk_site[rep, w]) for w in (0, 3) if b.walk_site[rep, w] > 0}
        assert red_sites <= alive_red


def _survival_oracle(n, i, horizon):
    lap = float(n) ** 2 * (np.eye(n, k=1) + np.eye(n, k=-1) - 2 * np.eye(n))
    return float((scipy.linalg.expm(horizon * lap) @ np.ones(n))[i - 1])


def test_hitting_probability():
    assert ic.hitting_probability_experiment(8, 0, 100, seed=1) == 0.0
    assert ic.hitting_probability_experiment(8, 9, 100, seed=1) == 0.0
    r = 20_000
    for n, i, h in [(4, 2, 0.1), (8, 4, 0.05), (16, 1, 0.02)]:
        est = ic.hitting_probability_experiment(n, i, r, seed=2, horizon=h)
        ref = _survival_oracle(n, i, h)
        assert abs(est - ref) <= 3 * math.sqrt(ref * (1 - ref) / r) + 1e-12
    assert ic.hitting_probability_experiment(8, 4, 1000, seed=3) < 1.0
    with pytest.raises(DomainError):
        ic.hitting_probability_experiment(4, 6, 10, seed=0)
