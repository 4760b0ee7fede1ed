import math

import numpy as np
import pytest

from devbind import puf
from devbind.errors import FormatError, ParameterError


def test_same_seed_same_device(tmp_path):
    a, b = puf.new_device(1), puf.new_device(1)
    assert a == b
    puf.save_device(a, tmp_path / "a")
    puf.save_device(b, tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    assert puf.load_device(tmp_path / "a") == a


def test_distinct_seeds_give_distinct_ids():
    assert puf.new_device(1).device_id != puf.new_device(2).device_id


def test_reference_response_is_deterministic(rng):
    dev = puf.new_device(9)
    ch = puf.random_challenge(rng)
    r = puf.reference_response(dev, ch)
    assert r.shape == (puf.RESPONSE_BITS,)
    assert np.array_equal(r, puf.evaluate(dev, ch))


def test_challenge_width_checked(rng):
    with pytest.raises(ParameterError):
        puf.reference_response(puf.new_device(1), np.zeros(12, dtype=np.uint8))


def test_flip_probability_matches_arctan_closed_form():
    # for standard-normal latents P(flip) = arctan(sigma) / pi
    for sigma in (0.01, 0.05, 0.1, 0.3, 1.0, 3.0):
        assert puf.flip_probability(sigma) == pytest.approx(math.atan(sigma) / math.pi, abs=1e-10)


@pytest.mark.parametrize("ber", [0.001, 0.01, 0.05, 0.15])
def test_calibrate_sigma_inverts_closed_form(ber):
    assert puf.calibrate_sigma(ber) == pytest.approx(math.tan(math.pi * ber), rel=1e-9)


@pytest.mark.parametrize("ber", [0.0, 0.5, -0.1, 0.7])
def test_calibrate_sigma_rejects_out_of_range(ber):
    with pytest.raises(ParameterError):
        puf.calibrate_sigma(ber)


def test_measured_ber_near_target(rng):
    sigma = puf.calibrate_sigma(0.02)
    devs = [puf.new_device(100 + i, sigma) for i in range(5)]
    ber = np.mean([puf.reliability_ber(d, puf.random_challenge(rng), rng, 200) for d in devs])
    assert abs(ber - 0.02) < 0.005


def test_majority_read_suppresses_noise(rng):
    dev = puf.new_device(4, puf.calibrate_sigma(0.05))
    ch = puf.random_challenge(rng)
    ref = puf.reference_response(dev, ch)
    single = np.mean([np.mean(puf.evaluate(dev, ch, rng) != ref) for _ in range(50)])
    voted = np.mean([np.mean(puf.majority_read(dev, ch, rng) != ref) for _ in range(50)])
    assert voted < single / 2


def test_majority_votes_must_be_odd(rng):
    with pytest.raises(ParameterError):
        puf.majority_read(puf.new_device(1), puf.random_challenge(rng), rng, votes=4)


def test_population_statistics(rng):
    devs = [puf.new_device(i) for i in range(30)]
    ch = [puf.random_challenge(rng) for _ in range(2)]
    assert 0.45 <= puf.uniqueness(devs, ch) <= 0.55
    bias = puf.bit_bias(devs, ch[0])
    assert bias.shape == (puf.RESPONSE_BITS,) and 0.45 <= bias.mean() <= 0.55


def test_device_record_corruption():
    data = puf.device_to_bytes(puf.new_device(3, 0.1))
    with pytest.raises(FormatError):
        puf.device_from_bytes(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        puf.device_from_bytes(data[:-1])
    with pytest.raises(FormatError):
        puf.device_from_bytes(data[:4] + b"\x09" + data[5:])


def test_bad_secret_rejected():
    with pytest.raises(ParameterError):
        puf.new_device(1 << 256)
    with pytest.raises(ParameterError):
        puf.new_device(b"short")
