import numpy as np
import pytest
from conftest import gain_channel, handmade_channel, make_instance

from hetnet_alloc.assignment import Assignment
from hetnet_alloc.rates import (
    irc_sinr,
    link_rates,
    link_sinr,
    mrc_sinr,
    per_ue_rates,
    rate,
    scheduled_sinr,
    sinr,
    throughput,
    validate_weights,
    weighted_sum_rate,
)


def test_single_link_identity():
    ch = gain_channel(np.ones((1, 1, 1)), noise=1.0)
    assert sinr(np.array([[1.0]]), ch, (0, 0, 0)) == 1.0
    assert sinr(np.array([[0.0]]), ch, (0, 0, 0)) == 0.0


def test_two_bs_hand_value():
    ch = gain_channel(np.array([[[2.0]], [[1.0]]]), noise=1.0)
    assert sinr(np.ones((2, 1)), ch, (0, 0, 0)) == pytest.approx(1.0)


@pytest.mark.parametrize("s,r", [(0.0, 0.0), (1.0, 1.0), (3.0, 2.0)])
def test_rate_values(s, r):
    assert rate(s) == r


def test_rate_rejects_negative():
    with pytest.raises(ValueError):
        rate(-0.1)


def test_weighted_sum_rate_small_cases():
    ch = gain_channel(np.full((1, 1, 1), 3.0), noise=1.0)
    empty = Assignment.empty(1, 1, 1)
    assert weighted_sum_rate(np.ones((1, 1)), empty, [1.0], ch) == 0.0
    one = Assignment(np.array([[0]]), 1)
    p = np.array([[1.0 / 3.0]])  # SINR 1, rate 1
    assert weighted_sum_rate(p, one, [2.0], ch) == pytest.approx(2.0)


def test_weighted_sum_rate_term_by_term():
    # BS0 -> UE0, BS1 -> UE1 on one subchannel; gains g[b, k]
    g = np.array([[[4.0], [0.5]], [[1.0], [3.0]]])
    ch = gain_channel(g, noise=0.5)
    p = np.array([[2.0], [1.0]])
    asg = Assignment(np.array([[0], [1]]), 2)
    s0 = 2.0 * 4.0 / (1.0 * 1.0 + 0.5)
    s1 = 1.0 * 3.0 / (2.0 * 0.5 + 0.5)
    expected = 0.7 * np.log2(1 + s0) + 1.3 * np.log2(1 + s1)
    assert weighted_sum_rate(p, asg, [0.7, 1.3], ch) == pytest.approx(expected, rel=1e-14)
    np.testing.assert_allclose(per_ue_rates(p, asg, ch), [np.log2(1 + s0), np.log2(1 + s1)])
    assert throughput(p, asg, ch) == pytest.approx(np.log2(1 + s0) + np.log2(1 + s1))


def test_vectorized_sinr_matches_per_link():
    _, _, ch, limits = make_instance(2, n_antennas=3, n_subchannels=2)
    rng = np.random.default_rng(0)
    p = limits.uniform() * rng.uniform(0.2, 1.0, size=limits.masks.shape)
    for receiver, ref in (("single", sinr), ("mrc", mrc_sinr), ("irc", irc_sinr)):
        table = link_sinr(p, ch, receiver)
        for b in range(ch.n_bs):
            for k in range(ch.n_ues):
                for n in range(ch.n_subchannels):
                    assert table[b, k, n] == pytest.approx(ref(p, ch, (b, k, n)), rel=1e-9)


def test_scheduled_sinr_matches_table():
    _, _, ch, limits = make_instance(6, n_antennas=2, n_subchannels=3)
    p = limits.uniform()
    kstar = np.array([[0, 1, -1], [2, 0, 1], [3, -1, 4], [5, 3, 0]])
    for receiver in ("single", "mrc", "irc"):
        b, k, n, s = scheduled_sinr(p, kstar, ch, receiver)
        np.testing.assert_allclose(s, link_sinr(p, ch, receiver)[b, k, n], rtol=1e-10)


def test_mrc_and_irc_collapse_to_scalar():
    _, _, ch, limits = make_instance(1, n_subchannels=2)
    p = limits.uniform()
    s = link_sinr(p, ch, "single")
    np.testing.assert_allclose(link_sinr(p, ch, "mrc"), s, rtol=1e-12)
    np.testing.assert_allclose(link_sinr(p, ch, "irc"), s, rtol=1e-12)


def test_mrc_orthogonal_interferer():
    h = np.zeros((2, 1, 1, 2), dtype=complex)
    h[0, 0, 0] = [1.0, 2.0]
    h[1, 0, 0] = [2.0, -1.0]  # orthogonal to BS0's vector
    ch = handmade_channel(h, noise=0.5)
    p = np.array([[1.5], [7.0]])
    assert mrc_sinr(p, ch, (0, 0, 0)) == pytest.approx(1.5 * 5.0 / 0.5)


def _two_antenna_case():
    h = np.zeros((2, 1, 1, 2), dtype=complex)
    h[0, 0, 0] = [1.0, 1j]
    h[1, 0, 0] = [1.0, 0.0]
    return handmade_channel(h, noise=1.0), np.ones((2, 1))


def test_mrc_hand_value():
    # ||h||^4 / (|h^H g|^2 + N0 ||h||^2) = 4 / (1 + 2)
    ch, p = _two_antenna_case()
    assert mrc_sinr(p, ch, (0, 0, 0)) == pytest.approx(4.0 / 3.0, rel=1e-14)


def test_irc_hand_value():
    # R = I + g g^H = diag(2, 1); h^H R^-1 h = 1/2 + 1
    ch, p = _two_antenna_case()
    assert irc_sinr(p, ch, (0, 0, 0)) == pytest.approx(1.5, rel=1e-14)
    assert irc_sinr(p, ch, (0, 0, 0)) >= mrc_sinr(p, ch, (0, 0, 0))


def test_irc_without_interferers_equals_mrc():
    h = np.zeros((2, 1, 1, 2), dtype=complex)
    h[0, 0, 0] = [0.3 + 0.4j, -1.2]
    h[1, 0, 0] = [5.0, 5.0]
    ch = handmade_channel(h, noise=0.1)
    p = np.array([[2.0], [0.0]])
    expected = 2.0 * np.sum(np.abs(h[0, 0, 0]) ** 2) / 0.1
    assert irc_sinr(p, ch, (0, 0, 0)) == pytest.approx(expected)
    assert mrc_sinr(p, ch, (0, 0, 0)) == pytest.approx(expected)


def test_link_rates_zero_without_power():
    _, _, ch, limits = make_instance(0)
    p = limits.uniform()
    p[1] = 0.0
    assert np.all(link_rates(p, ch)[1] == 0.0)


def test_unknown_receiver():
    _, _, ch, limits = make_instance(0)
    with pytest.raises(ValueError):
        link_sinr(limits.uniform(), ch, "zf")


def test_validate_weights():
    with pytest.raises(ValueError):
        validate_weights([1.0, -1.0], 2)
    with pytest.raises(ValueError):
        validate_weights([1.0], 2)
    with pytest.raises(ValueError):
        validate_weights([np.nan, 1.0], 2)
