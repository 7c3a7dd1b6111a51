import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdpalign.ofdm import (OfdmConfig, base_sequence, shift_operator, shifted_sequence,
                           unitary_dft)


def test_default_numerology():
    cfg = OfdmConfig()
    assert (cfg.n_tones, cfg.n_cp) == (128, 8)
    assert cfg.symbol_duration == pytest.approx(66.67e-6)
    assert abs(cfg.chip_duration * cfg.n_tones - cfg.symbol_duration) <= 1e-12 * cfg.symbol_duration
    assert cfg.tone_spacing == pytest.approx(15e3, rel=1e-3)
    assert cfg.n_groups == 16
    assert cfg.tone_group(1) == [1 + 16 * n for n in range(8)]


def test_cp_longer_than_symbol_rejected():
    with pytest.raises(ValueError):
        OfdmConfig(n_tones=8, n_cp=16)


def test_dft_size_two():
    expected = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    np.testing.assert_allclose(unitary_dft(2), expected, atol=1e-15)


def test_dft_entry_from_one_based_formula():
    # entry (2, 2) in 1-based indexing: exp(-j 2 pi (2-1)(2-1) / 4) / sqrt(4)
    expected = np.exp(-2j * np.pi * 1 * 1 / 4) / 2
    assert expected == pytest.approx(-0.5j)
    assert unitary_dft(4)[1, 1] == pytest.approx(expected, abs=1e-15)


def test_dft_rejects_zero():
    with pytest.raises(ValueError):
        unitary_dft(0)


@given(st.integers(1, 40))
def test_dft_unitary(n):
    F = unitary_dft(n)
    np.testing.assert_allclose(F @ F.conj().T, np.eye(n), atol=1e-10)


@pytest.mark.parametrize("n", [1, 5, 16])
def test_dft_of_delta_is_column(n):
    for tap in range(n):
        delta = np.zeros(n)
        delta[tap] = 1
        np.testing.assert_allclose(unitary_dft(n) @ delta, np.fft.fft(delta) / np.sqrt(n), atol=1e-12)


def test_base_sequence_examples():
    np.testing.assert_allclose(base_sequence(1), [1.0])
    assert base_sequence(4)[2] == pytest.approx(np.exp(-1j * np.pi), abs=1e-12)
    assert base_sequence(4)[2] == pytest.approx(-1, abs=1e-12)


@given(st.integers(1, 2048))
def test_base_sequence_unit_modulus(length):
    np.testing.assert_allclose(np.abs(base_sequence(length)), 1.0, atol=1e-12)


def test_shift_examples():
    base = base_sequence(8)
    np.testing.assert_allclose(shifted_sequence(base, 0).values, base)
    s = shifted_sequence(base, 4)
    assert s.shift == 4
    # exp(j 2 pi 4 n / 8) is -1 at odd n and +1 at even n
    assert s.values[1] == pytest.approx(-base[1], abs=1e-12)
    assert s.values[2] == pytest.approx(base[2], abs=1e-12)
    np.testing.assert_allclose(s.base, base, atol=1e-12)


def test_shift_out_of_range():
    with pytest.raises(ValueError):
        shifted_sequence(base_sequence(8), 8)
    with pytest.raises(ValueError):
        shifted_sequence(base_sequence(8), -1)


@given(st.integers(2, 64).flatmap(lambda L: st.tuples(st.just(L), st.integers(0, L - 1),
                                                     st.integers(0, L - 1))))
def test_shifts_compose(args):
    L, t1, t2 = args
    base = base_sequence(L)
    twice = shifted_sequence(shifted_sequence(base, t1).values, t2)
    once = shifted_sequence(base, (t1 + t2) % L)
    np.testing.assert_allclose(twice.values, once.values, atol=1e-10)
    np.testing.assert_allclose(np.abs(twice.values), 1.0, atol=1e-12)


def test_shift_operator_identity():
    np.testing.assert_array_equal(shift_operator(5, 5, 8).matrix(), np.eye(8))


def test_shift_operator_first_column():
    theta = shift_operator(3, 0, 8)
    assert theta.delta_tau == 3
    np.testing.assert_array_equal(theta.matrix()[:, 0], [0, 0, 0, 0, 0, 1, 0, 0])


@settings(max_examples=60)
@given(st.integers(1, 32).flatmap(lambda L: st.tuples(st.just(L), st.integers(0, L - 1),
                                                     st.integers(0, L - 1))))
def test_shift_operator_matches_dft_product(args):
    L, tau_a, tau_b = args
    F = unitary_dft(L)
    base = base_sequence(L)
    Sa = np.diag(shifted_sequence(base, tau_a).values)
    Sb = np.diag(shifted_sequence(base, tau_b).values)
    numeric = F.conj().T @ Sb.conj().T @ Sa @ F
    theta = shift_operator(tau_a, tau_b, L).matrix()
    np.testing.assert_allclose(numeric, theta, atol=1e-10)
    np.testing.assert_allclose(theta @ theta.T, np.eye(L), atol=1e-10)


@given(st.integers(1, 20).flatmap(lambda L: st.tuples(st.just(L), st.integers(0, L - 1))))
def test_shift_operator_rotates_diagonal(args):
    L, delta = args
    d = np.arange(1, L + 1, dtype=float)
    op = shift_operator(delta, 0, L)
    theta = op.matrix()
    np.testing.assert_allclose(theta @ np.diag(d) @ theta.T, np.diag(np.roll(d, -delta)))
    np.testing.assert_allclose(op.rotate_diagonal(d), np.roll(d, -delta))
    x = np.arange(L)
    np.testing.assert_allclose(op.apply(x), theta @ x)
