import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from devbind.chaos import (LogisticParams, NcaParams, SecretKey, derive_logistic, derive_nca,
                           logistic_sequence, logistic_step, nca_gamma, nca_sequence, nca_step,
                           permutation_from_sequence)
from devbind.errors import ChaosRangeError, ParameterError
from oracles import mp_logistic, mp_nca

@settings(max_examples=200)
@given(st.floats(0.0, 1.0), st.floats(3.5901, 3.9899))
def test_logistic_step_matches_high_precision(s, lam):
    assert abs(logistic_step(s, lam) - mp_logistic(s, lam)) <= 1e-12


@settings(max_examples=200)
@given(st.floats(0.0, 1.0), st.floats(1.0001, 1.4), st.floats(5.0, 43.0))
def test_nca_step_matches_high_precision(s, alpha, beta):
    p = NcaParams(0.5, alpha, beta)
    assert abs(nca_step(s, p) - mp_nca(s, alpha, beta)) <= 1e-12


def test_gamma_high_precision():
    for a, b in [(1.1, 6.0), (1.4, 43.0), (1.2, 5.0)]:
        with mpmath.workdps(50):
            g = (1 - mpmath.mpf(b) ** -4) * mpmath.cot(mpmath.mpf(a) / (1 + b)) * (1 + 1 / mpmath.mpf(b)) ** b
        assert nca_gamma(a, b) == pytest.approx(float(g), rel=1e-13)


def test_compiled_sequences_equal_plain_python():
    lp = LogisticParams(0.123456, 3.87)
    s = lp.s0
    ref = []
    for i in range(1000 + 50):
        s = logistic_step(s, lp.lam)
        if i >= 1000:
            ref.append(s)
    assert logistic_sequence(lp, 1000, 50).tolist() == ref

    npar = NcaParams(0.3, 1.3, 20.0)
    s, ref = npar.s0, []
    for i in range(100 + 50):
        s = nca_step(s, npar)
        if i >= 100:
            ref.append(s)
    assert nca_sequence(npar, 100, 50).tolist() == ref


def test_key_derivation_formulae():
    b = 16
    kp = np.zeros(192, dtype=np.uint8)
    kp[0] = 1                       # u1 = 0.5
    kp[b:2 * b] = 1                 # u2 = 1 - 2**-16
    p = derive_logistic(kp, b)
    assert p.s0 == 0.5
    assert p.lam == pytest.approx(3.6 + 0.2 * (1 - 2.0**-16), abs=1e-15)

    kd = np.zeros(192, dtype=np.uint8)
    kd[1] = 1                       # u1 = 0.25
    kd[b] = 1                       # u2 = 0.5
    q = derive_nca(kd, b)
    assert q.s0 == 0.25
    assert q.alpha == pytest.approx(1.1 + 0.35 * 0.5)
    assert q.beta == 6.0


def test_alpha_and_beta_clamped_to_chaotic_range():
    kd = np.ones(192, dtype=np.uint8)
    q = derive_nca(kd, 16)
    assert q.alpha == 1.4 and q.beta <= 41.0


def test_degenerate_starts_are_nudged():
    # all-zero key groups would sit on the fixed point 0
    p = derive_logistic(np.zeros(96, dtype=np.uint8), 16)
    assert 0 < p.s0 < 1e-4
    assert len(set(logistic_sequence(p, 1000, 64).tolist())) > 60
    q = derive_nca(np.zeros(96, dtype=np.uint8), 16)
    assert 0 < q.s0 < 1e-4


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**64 - 1))
def test_random_keys_stay_in_range(seed):
    bits = np.random.default_rng(seed).integers(0, 2, 384, dtype=np.uint8)
    key = SecretKey(bits)
    for stream in range(4):
        s = logistic_sequence(derive_logistic(key.kp).for_stream(stream), 1000, 256)
        d = nca_sequence(derive_nca(key.kd).for_stream(stream), 1000, 256)
        assert ((s >= 0) & (s <= 1)).all() and ((d >= 0) & (d <= 1)).all()


def test_streams_differ():
    key = SecretKey(np.random.default_rng(0).integers(0, 2, 384))
    base = derive_logistic(key.kp)
    a = logistic_sequence(base.for_stream(0), 1000, 32)
    b = logistic_sequence(base.for_stream(1), 1000, 32)
    assert not np.allclose(a, b)


def test_sensitivity_to_single_key_bit():
    key = SecretKey(np.random.default_rng(0).integers(0, 2, 384))
    for i in (15, 31):  # last bit of each logistic group
        a = logistic_sequence(derive_logistic(key.kp), 1000, 64)
        b = logistic_sequence(derive_logistic(key.flipped(i).kp), 1000, 64)
        assert np.mean(np.abs(a - b)) > 0.05


def test_parameter_validation():
    with pytest.raises(ParameterError):
        LogisticParams(0.5, 4.0)
    with pytest.raises(ParameterError):
        NcaParams(0.5, 1.0, 10.0)
    with pytest.raises(ParameterError):
        NcaParams(0.5, 1.2, 44.0)
    with pytest.raises(ParameterError):
        derive_logistic(np.zeros(20, dtype=np.uint8), 16)
    with pytest.raises(ParameterError):
        SecretKey(np.zeros(3, dtype=np.uint8))
    with pytest.raises(ParameterError):
        SecretKey(np.zeros(40, dtype=np.uint8)).check()
    with pytest.raises(ParameterError):
        logistic_sequence(LogisticParams(0.5, 3.7), 10, 0)


def test_nca_out_of_range_detected():
    # bypass validation with an alpha far outside the chaotic range
    p = NcaParams(0.5, 1.4, 5.0)
    object.__setattr__(p, "alpha", 3.0)
    with pytest.raises(ChaosRangeError):
        nca_sequence(p, 10, 10)


def test_key_repr_hides_bits():
    key = SecretKey(np.ones(64, dtype=np.uint8))
    assert "1, 1" not in repr(key) and "64 bits" in repr(key)


def test_permutation_is_stable_argsort():
    assert permutation_from_sequence([0.3, 0.1, 0.3, 0.2]).tolist() == [1, 3, 0, 2]
    with pytest.raises(ParameterError):
        permutation_from_sequence([])
