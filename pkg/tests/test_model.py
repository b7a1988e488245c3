import pytest
from hypothesis import given, settings, strategies as st

from ssep import (CapacityError, Configuration, DomainError, ModelParams, Transition, set_site, swap,
                  transitions, weight)
from ssep.model import all_configurations


def cfg(*bits):
    return Configuration(tuple(bits))


@pytest.mark.parametrize("before,i,after", [
    ((1, 0), 1, (0, 1)),
    ((1, 1), 1, (1, 1)),
    ((1, 0, 1), 2, (1, 1, 0)),
])
def test_swap_examples(before, i, after):
    assert swap(cfg(*before), i) == cfg(*after)


@pytest.mark.parametrize("before,i,v,after", [
    ((1, 0), 1, 0, (0, 0)),
    ((0, 0), 2, 1, (0, 1)),
    ((1, 1), 1, 1, (1, 1)),
])
def test_set_site_examples(before, i, v, after):
    assert set_site(cfg(*before), i, v) == cfg(*after)


def test_weight_examples():
    assert weight(Configuration.full(5)) == 5
    assert weight(Configuration.empty(5)) == 0
    assert weight(cfg(1, 0, 1, 0)) == 2


def test_bad_arguments_raise():
    with pytest.raises(DomainError):
        swap(cfg(1, 0), 2)
    with pytest.raises(DomainError):
        set_site(cfg(1, 0), 0, 1)
    with pytest.raises(DomainError):
        set_site(cfg(1, 0), 1, 2)
    with pytest.raises(DomainError):
        ModelParams(3, 1.2, 0.5)
    with pytest.raises(DomainError):
        ModelParams(0, 0.5, 0.5)
    with pytest.raises(DomainError):
        Configuration.from_string("10a")
    assert issubclass(CapacityError, ValueError)


def test_index_convention_site_one_is_low_bit():
    c = Configuration.from_string("100")
    assert c.index == 1
    assert Configuration.from_index(6, 3) == cfg(0, 1, 1)
    assert c[1] == 1 and c[3] == 0
    assert str(Configuration.from_index(c.index, 3)) == "100"


def _as_dict(trs):
    return {t.target: t.rate for t in trs}


def test_transitions_two_sites():
    got = _as_dict(transitions(cfg(1, 0), ModelParams(2, 0.3, 0.5)))
    want = {cfg(0, 1): 4.0, cfg(0, 0): 2.8, cfg(1, 1): 2.0}
    assert got.keys() == want.keys()
    for k in want:
        assert got[k] == pytest.approx(want[k], abs=1e-12)


def test_transitions_single_site_rates_merge():
    trs = transitions(cfg(1), ModelParams(1, 0.0, 0.0))
    assert trs == [Transition(2.0, cfg(0))] or _as_dict(trs) == {cfg(0): 2.0}


def test_transitions_absorbing_empty():
    assert transitions(cfg(0, 0), ModelParams(2, 0.0, 0.0)) == []


def test_unaccelerated_rates():
    got = _as_dict(transitions(cfg(1, 0), ModelParams(2, 0.3, 0.5, accelerate=False)))
    assert got[cfg(0, 1)] == pytest.approx(1.0)
    assert got[cfg(0, 0)] == pytest.approx(0.7)
    assert got[cfg(1, 1)] == pytest.approx(0.5)


# densities on a grid so that 1 - (1 - p) stays exact enough to keep zero rates zero
density = st.integers(0, 20).map(lambda k: k / 20)
params_st = st.builds(ModelParams, st.integers(1, 6), density, density, st.booleans())


@settings(max_examples=60, deadline=None)
@given(params_st, st.data())
def test_particle_hole_duality(params, data):
    eta = Configuration.from_index(data.draw(st.integers(0, 2**params.n_sites - 1)), params.n_sites)
    direct = _as_dict(transitions(eta, params))
    dual = _as_dict(transitions(eta.complement(), params.dual()))
    assert {k.complement(): v for k, v in dual.items()}.keys() == direct.keys()
    for k, v in dual.items():
        assert v == pytest.approx(direct[k.complement()], rel=1e-12, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(params_st, st.data())
def test_reflection_symmetry(params, data):
    eta = Configuration.from_index(data.draw(st.integers(0, 2**params.n_sites - 1)), params.n_sites)
    direct = _as_dict(transitions(eta, params))
    refl = _as_dict(transitions(eta.reflected(), params.reflected()))
    assert {k.reflected() for k in refl} == set(direct)
    for k, v in refl.items():
        assert v == pytest.approx(direct[k.reflected()], rel=1e-12, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(params_st, st.data())
def test_no_self_loops_and_local_moves(params, data):
    n = params.n_sites
    eta = Configuration.from_index(data.draw(st.integers(0, 2**n - 1)), n)
    trs = transitions(eta, params)
    total = sum(t.rate for t in trs)
    assert total <= (n + 1) * params.rate + 1e-9
    for t in trs:
        assert t.rate > 0
        assert t.target != eta
        assert abs(weight(t.target) - weight(eta)) <= 1
        assert sum(a != b for a, b in zip(t.target.occupancy, eta.occupancy)) <= 2


def test_all_configurations_enumerates_indices():
    cfgs = list(all_configurations(3))
    assert [c.index for c in cfgs] == list(range(8))
