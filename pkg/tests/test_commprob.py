import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ptrigger.commprob import (
    HorizonParams,
    conditional_probability,
    dequantize,
    m_step_probability,
    quantize,
    sequence_weights,
    should_send,
)
from ptrigger.errors import ConfigurationError, PTError
from ptrigger.exitprob import ErrorProcessSpec, ExitProbTable, build_exit_table, query_exit_probability


def H(t, r, m):
    return query_exit_probability(t, r, m)


def test_conditional_examples(scalar_table):
    t = scalar_table
    for rule in ("survival", "cumulative"):
        assert conditional_probability(t, 0.02, [True, False, True], 3, chain=rule) == H(t, 0.0, 1)
        assert conditional_probability(t, 0.02, [], 0, chain=rule) == 0.0
    assert conditional_probability(t, 0.02, [False, False], 2, chain="cumulative") == H(t, 0.02, 2)
    h1, h2 = H(t, 0.02, 1), H(t, 0.02, 2)
    assert conditional_probability(t, 0.02, [False, False], 2) == pytest.approx((h2 - h1) / (1 - h1), abs=1e-15)
    # a negative without a slot does not show the error stayed inside
    blind = np.array([True, False])
    assert conditional_probability(t, 0.02, [False, False], 2, informative=blind) == pytest.approx(h2, abs=1e-15)
    after = conditional_probability(t, 0.0, [True, False, False], 3)
    g2, g3 = H(t, 0, 2), H(t, 0, 3)
    assert after == pytest.approx((g3 - g2) / (1 - g2), abs=1e-15)


def test_horizon_zero_is_indicator(scalar_table):
    p = HorizonParams(0, scalar_table.delta)
    assert m_step_probability(scalar_table, p, scalar_table.delta) == 1.0
    assert m_step_probability(scalar_table, p, 0.5 * scalar_table.delta) == 0.0


@pytest.mark.parametrize("z", [0.0, 0.03, 0.05, 0.07])
def test_two_step_expansion_cumulative(scalar_table, z):
    # the four-term expansion with the tabulated H used as printed
    t = scalar_table
    c0 = float(z >= t.delta)
    c1 = H(t, z, 1)
    expect = (
        (1 - c0) * (1 - c1) * H(t, z, 2)
        + (1 - c0) * c1 * H(t, 0, 1)
        + c0 * (1 - H(t, 0, 1)) * H(t, 0, 2)
        + c0 * H(t, 0, 1) * H(t, 0, 1)
    )
    got = m_step_probability(t, HorizonParams(2, t.delta, chain="cumulative"), z)
    assert got == pytest.approx(expect, abs=1e-15)


@pytest.mark.parametrize("z", [0.0, 0.03, 0.07])
def test_two_step_expansion_survival(scalar_table, z):
    t = scalar_table
    c0 = float(z >= t.delta)
    h1, h2, g1, g2 = H(t, z, 1), H(t, z, 2), H(t, 0, 1), H(t, 0, 2)
    expect = (
        (1 - c0) * ((h2 - h1) + h1 * g1)
        + c0 * ((1 - g1) * (g2 - g1) / (1 - g1) + g1 * g1)
    )
    assert m_step_probability(t, HorizonParams(2, t.delta), z) == pytest.approx(expect, abs=1e-14)


def _random_table(rng, steps):
    grid = np.linspace(0, 1, 6)
    inc = rng.random((6, steps))
    vals = np.concatenate([np.zeros((6, 1)), np.cumsum(inc, axis=1)], axis=1)
    vals[:, 1:] /= vals[:, -1:] * (1 + rng.random((6, 1)))
    vals[-1] = 1.0
    return ExitProbTable(grid, steps, vals, "random")


def test_weights_sum_to_one():
    rng = np.random.default_rng(0)
    for _ in range(100):
        t = _random_table(rng, 3)
        for M in (1, 2, 3):
            z = rng.random(5) * 1.2
            _, w, _ = sequence_weights(t, HorizonParams(M, 1.0), z)
            assert len(w) == 2**M
            np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-9)


def test_slots_and_current_weights_sum_to_one():
    rng = np.random.default_rng(1)
    t = _random_table(rng, 3)
    z = rng.random(8)
    slots = rng.random((8, 3)) < 0.5
    current = slots[:, 0] & (rng.random(8) < 0.5)
    _, w, _ = sequence_weights(t, HorizonParams(3, 1.0), z, slots, current)
    np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-12)


def test_no_slots_means_no_resets(scalar_table):
    t = scalar_table
    z = np.array([0.0, 0.01, 0.04])
    p = m_step_probability(t, HorizonParams(2, t.delta), z, slots=np.zeros((3, 2), dtype=bool))
    np.testing.assert_allclose(p, [H(t, r, 2) for r in z])


def test_zero_noise_table_gives_zero():
    spec = ErrorProcessSpec([[0.5]], [[0.0]], 1.0, 0.01)
    t = build_exit_table(spec, 11, 5, 100, 0)
    for M in range(1, 6):
        for rule in ("survival", "cumulative"):
            p = m_step_probability(t, HorizonParams(M, 1.0, chain=rule), np.linspace(0, 0.99, 7))
            assert np.all(p == 0.0)


def test_survival_matches_direct_reset_simulation():
    spec = ErrorProcessSpec([[0.9]], [[0.4**2]], 1.0, 0.01)
    t = build_exit_table(spec, 41, 3, 100000, 8)
    rng = np.random.default_rng(9)
    n = 100000
    for M in (1, 2, 3):
        z = np.zeros(n)
        for _ in range(M):
            z = np.where(np.abs(z) >= 1.0, 0.0, z)
            z = 0.9 * z + 0.4 * rng.standard_normal(n)
        direct = np.mean(np.abs(z) >= 1.0)
        assert m_step_probability(t, HorizonParams(M, 1.0), 0.0) == pytest.approx(direct, abs=0.01)


def test_monotone_inside_ball():
    # moderate noise; when one step already exits with high probability from
    # the origin the expansion can dip slightly as z grows
    spec = ErrorProcessSpec([[0.9]], [[0.65**2]], 1.0, 0.01)
    t = build_exit_table(spec, 41, 3, 50000, 4)
    z = np.linspace(0, 0.999, 60)
    for M in (1, 2, 3):
        for rule in ("survival", "cumulative"):
            p = m_step_probability(t, HorizonParams(M, 1.0, chain=rule), z)
            assert np.all(np.diff(p) >= -0.005)


def test_quantize_examples():
    assert quantize(0.48173) == 48
    assert quantize(0.0) == 0 and quantize(1.0) == 100
    assert quantize(0.999) == 99
    with pytest.raises(PTError):
        quantize(1.2)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1))
def test_quantize_roundtrip(p):
    assert 0 <= p - float(dequantize(quantize(p))) < 0.01


def test_should_send_examples():
    assert should_send(0.5, HorizonParams(2, 1.0, 0.2)) is True
    assert should_send(0.2, HorizonParams(2, 1.0, 0.2)) is False
    assert should_send(0.1, HorizonParams(2, 1.0, 0.0)) is True


def test_horizon_validation(scalar_table):
    with pytest.raises(ConfigurationError):
        HorizonParams(11, 1.0)
    with pytest.raises(ConfigurationError):
        HorizonParams(2, 1.0, chain="other")
    with pytest.raises(ConfigurationError):
        m_step_probability(scalar_table, HorizonParams(5, scalar_table.delta), 0.0)
    with pytest.raises(ConfigurationError):
        m_step_probability(scalar_table, HorizonParams(2, 1.0), 0.0)


def test_enumeration_count(scalar_table):
    seqs, _, _ = sequence_weights(scalar_table, HorizonParams(3, scalar_table.delta), 0.0)
    assert seqs == list(itertools.product((False, True), repeat=3))
