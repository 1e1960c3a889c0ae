#!/usr/bin/env python3
"""
Tests for payloads, TDM schedules and the shifted up-chirp
"""
import numpy as np
import pytest

from app.config import preset, validate
from app.errors import ConfigError, OutOfSymbol, ScheduleIndivisible
from app.waveform import (
    chirp_phase,
    generate_payload,
    generate_schedule,
    inst_frequency,
    round_robin_schedule,
    tx_baseband_sample,
)

PARAMS = preset("paper-1ghz")
H = validate(PARAMS).h


def test_payload_is_seeded():
    first = generate_payload(3, 2, np.random.default_rng(11))
    second = generate_payload(3, 2, np.random.default_rng(11))
    assert first.to_list() == second.to_list()
    assert set(first.to_list()) <= {0, 1}


def test_payload_is_uniform():
    payload = generate_payload(10_000, H, np.random.default_rng(0))
    assert abs(payload.h.mean() - (H - 1) / 2) < 0.05 * (H - 1) / 2
    assert payload.h.min() >= 0 and payload.h.max() < H


def test_payload_rejects_single_symbol_alphabet():
    with pytest.raises(ConfigError):
        generate_payload(4, 1, np.random.default_rng(0))


def test_schedule_is_balanced():
    small = generate_schedule(4, 2, np.random.default_rng(1))
    assert np.bincount(small.l).tolist() == [2, 2]

    frame = generate_schedule(120, 2, np.random.default_rng(2))
    assert [len(s) for s in frame.psets] == [60, 60]
    assert sorted(np.concatenate(frame.psets).tolist()) == list(range(120))
    for l, pset in enumerate(frame.psets):
        assert np.all(frame.l[pset] == l)


def test_single_antenna_schedule():
    schedule = generate_schedule(6, 1, np.random.default_rng(3))
    assert schedule.l.tolist() == [0] * 6
    assert schedule.psets[0].tolist() == list(range(6))


def test_round_robin_schedule():
    schedule = round_robin_schedule(6, 2)
    assert schedule.l.tolist() == [0, 1, 0, 1, 0, 1]
    assert schedule.psets[1].tolist() == [1, 3, 5]
    with pytest.raises(ScheduleIndivisible):
        round_robin_schedule(5, 2)
    with pytest.raises(ScheduleIndivisible):
        generate_schedule(5, 2, np.random.default_rng(0))


def test_inst_frequency_values():
    b = PARAMS.b
    assert inst_frequency(0.0, 0, PARAMS) == pytest.approx(-b / 2)
    assert inst_frequency(0.0, H // 2, PARAMS) == pytest.approx(0.0, abs=1.0)

    hp = H // 4
    just_after_wrap = PARAMS.t - hp / b + 1e-12
    assert inst_frequency(just_after_wrap, hp, PARAMS) == pytest.approx(-b / 2, abs=1e3)


def test_inst_frequency_outside_symbol():
    with pytest.raises(OutOfSymbol):
        inst_frequency(PARAMS.t, 0, PARAMS)
    with pytest.raises(OutOfSymbol):
        inst_frequency(-1e-9, 0, PARAMS)


def test_tx_sample_start_and_end():
    assert tx_baseband_sample(0.0, 1234, PARAMS) == pytest.approx(1.0 + 0.0j)
    assert tx_baseband_sample(PARAMS.t, 0, PARAMS) == pytest.approx(1.0 + 0.0j, abs=1e-6)


def test_tx_sample_unit_modulus():
    x = np.linspace(0.0, PARAMS.t, 1001)
    hp = np.random.default_rng(5).integers(0, H, size=x.shape)
    assert np.allclose(np.abs(tx_baseband_sample(x, hp, PARAMS)), 1.0, atol=1e-12)


def test_phase_continuous_across_wrap():
    hp = H // 4
    wrap = PARAMS.t - hp / PARAMS.b
    delta = 1e-15
    before = chirp_phase(wrap - delta, hp, PARAMS)
    after = chirp_phase(wrap + delta, hp, PARAMS)
    assert abs(after - before) < 1e-5


def test_phase_derivative_matches_frequency():
    delta = 1e-11
    for x, hp in [(PARAMS.t / 3, 100), (0.8 * PARAMS.t, 4000), (0.5e-6, 16000)]:
        numeric = (chirp_phase(x + delta, hp, PARAMS) - chirp_phase(x, hp, PARAMS)) / delta
        assert numeric == pytest.approx(inst_frequency(x, hp, PARAMS), abs=1e-3 * PARAMS.b)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v"]))
