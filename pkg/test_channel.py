#!/usr/bin/env python3
"""
Tests for scene generation, the IF sample model and the comm channel
"""
import math

import numpy as np
import pytest

from app.channel import (
    CommLink,
    SensingScene,
    Target,
    blank_window,
    comm_rx_samples,
    generate_scene,
    segment_jump,
    segment_phase,
    synthesize_if,
)
from app.config import SPEED_OF_LIGHT, WaveformParams, preset, validate
from app.errors import ConfigError, DelayExceedsGuard
from app.sampling import draw_random_set, full_set
from app.waveform import Payload, generate_payload, generate_schedule, inst_frequency, round_robin_schedule

PARAMS = preset("paper-1ghz")

# H=64, Nmax=28, B = 2*fmax: wraps, integer delays and AIC instants all land on an 8*B clock
ORACLE = WaveformParams(fc=1e9, b=16e6, nsf=6, t=4e-6, tgi=0.5e-6, tmix=0.5e-6, p=4, lt=2, lr=2,
                        fmax=8e6, fbar=32e6, n=28, nbar=128)
ORACLE_FS = 8 * ORACLE.b


def _payload(values):
    return Payload(h=np.asarray(values, dtype=np.int64))


def _single(target, params, payload, sampling_set, schedule=None):
    schedule = schedule or round_robin_schedule(params.p, params.lt)
    return synthesize_if(SensingScene(targets=(target,)), schedule, payload, sampling_set, params).samples


def test_target_kinematics():
    target = Target(alpha=1.0, r=30.0, v=0.0, theta=0.0)
    assert target.tau == pytest.approx(200e-9)
    assert target.f_if(PARAMS) == pytest.approx(12.20703125e6)
    origin = Target(alpha=1.0, r=0.0, v=0.0, theta=0.0)
    assert origin.tau == 0.0 and origin.f_if(PARAMS) == 0.0 and origin.mu(PARAMS) == 0.0


def test_generate_scene_within_guard():
    rng = np.random.default_rng(0)
    scene = generate_scene(6, (0.0, 70.0), (-50.0, 50.0), (-np.pi / 3, np.pi / 3), rng, PARAMS)
    assert len(scene) == 6
    for target in scene.targets:
        assert 0.0 <= target.r <= 70.0
        assert target.tau < PARAMS.tmix
        assert abs(target.theta) <= np.pi / 3
        assert abs(target.alpha) == pytest.approx(1.0)

    again = generate_scene(6, (0.0, 70.0), (-50.0, 50.0), (-np.pi / 3, np.pi / 3), np.random.default_rng(0), PARAMS)
    assert scene.to_dict() == again.to_dict()


def test_generate_scene_rejects_guard_overrun():
    with pytest.raises(DelayExceedsGuard):
        generate_scene(1, (0.0, 80.0), (0.0, 0.0), (0.0, 0.0), np.random.default_rng(0), PARAMS)
    with pytest.raises(ConfigError):
        generate_scene(0, (0.0, 10.0), (0.0, 0.0), (0.0, 0.0), np.random.default_rng(0), PARAMS)


def test_blank_window_cases():
    empty = blank_window(100e-9, 0, PARAMS)
    assert empty.tbws == pytest.approx(PARAMS.t) and empty.tbwe == pytest.approx(PARAMS.t)

    window = blank_window(0.2e-6, 2000, PARAMS)
    assert window.tbws == pytest.approx(14.384e-6)
    assert window.tbwe == pytest.approx(14.584e-6)
    assert int(window.nbws) == 433 and int(window.nbwe) == 440

    early = blank_window(0.2e-6, 16300, PARAMS)
    assert early.tbws == pytest.approx(PARAMS.tmix)
    assert int(early.nbws) == 0 and int(early.nbwe) == 0


def test_segment_phases():
    assert segment_phase(0.0, 1234, PARAMS) == 0.0
    expected = np.pi * (12.20703125e6 + 1e9) * 200e-9
    assert segment_phase(200e-9, 0, PARAMS) == pytest.approx(expected, rel=1e-12)
    assert segment_jump(200e-9, PARAMS) == pytest.approx(400 * np.pi)


def test_static_origin_target_is_constant():
    target = Target(alpha=np.exp(0.7j), r=0.0, v=0.0, theta=0.0)
    samples = _single(target, PARAMS, _payload(np.zeros(PARAMS.p)), draw_random_set(448, 496, np.random.default_rng(1)))
    assert samples.shape == (PARAMS.p, 448, PARAMS.lr)
    assert np.allclose(samples, target.alpha_double_prime(PARAMS))


def test_unshifted_symbol_is_pure_tone():
    target = Target(alpha=1.0, r=30.0, v=0.0, theta=0.0)
    nmax = validate(PARAMS).nmax
    samples = _single(target, PARAMS, _payload(np.zeros(PARAMS.p)), full_set(nmax))
    spectrum = np.abs(np.fft.ifft(samples[0, :, 0]))
    assert int(np.argmax(spectrum)) == round(target.f_if(PARAMS) * nmax / PARAMS.fmax)
    tone = np.exp(-2j * np.pi * target.f_if(PARAMS) / PARAMS.fmax * np.arange(nmax))
    ratio = samples[0, :, 0] / tone
    assert np.allclose(ratio, ratio[0])


def test_blank_window_samples_are_zero():
    target = Target(alpha=1.0, r=30.1, v=0.0, theta=0.2)
    nmax = validate(PARAMS).nmax
    samples = _single(target, PARAMS, _payload(np.full(PARAMS.p, 2000)), full_set(nmax))
    window = blank_window(target.tau, 2000, PARAMS)
    start, end = int(window.nbws), int(window.nbwe)
    assert end > start
    assert np.all(samples[:, start:end, :] == 0)
    assert np.all(samples[:, start - 1, :] != 0) and np.all(samples[:, end, :] != 0)

    # segment 3 differs from segment 1 by exp(j2*pi*B*tau) once the tone is removed
    tone = np.exp(-2j * np.pi * target.f_if(PARAMS) / PARAMS.fmax * np.arange(nmax))
    jump = (samples[0, end, 0] / tone[end]) / (samples[0, start - 1, 0] / tone[start - 1])
    expected = np.exp(1j * segment_jump(target.tau, PARAMS))
    assert abs(np.angle(jump / expected)) < 1e-6


def test_superposition():
    rng = np.random.default_rng(2)
    scene = generate_scene(3, (0.0, 70.0), (-50.0, 50.0), (-1.0, 1.0), rng, PARAMS)
    schedule = generate_schedule(PARAMS.p, PARAMS.lt, rng)
    payload = generate_payload(PARAMS.p, validate(PARAMS).h, rng)
    sampling_set = draw_random_set(PARAMS.n, validate(PARAMS).nmax, rng)
    total = synthesize_if(scene, schedule, payload, sampling_set, PARAMS).samples
    parts = sum(_single(t, PARAMS, payload, sampling_set, schedule) for t in scene.targets)
    assert np.allclose(total, parts, atol=1e-12)


def _literal_tx(hp, params, fs):
    """Transmit baseband on [0, T) at rate fs, accumulated from the instantaneous frequency."""
    count = int(round(params.t * fs))
    midpoints = (np.arange(count) + 0.5) / fs
    cycles = np.cumsum(inst_frequency(midpoints, hp, params)) / fs
    return np.exp(2j * np.pi * np.concatenate(([0.0], cycles[:-1])))


def _literal_if(target, hp, params, fs):
    """Echo * conj(transmit) at rate fs, raw and after a brick-wall filter |f| < fmax, read at the AIC instants."""
    tx = _literal_tx(hp, params, fs)
    delay = int(round(target.tau * fs))
    length = 2 * len(tx)
    echo = np.zeros(length, dtype=complex)
    echo[delay:delay + len(tx)] = target.alpha * np.exp(-2j * np.pi * params.fc * target.tau) * tx
    mixed = np.zeros(length, dtype=complex)
    mixed[:len(tx)] = echo[:len(tx)] * tx.conj()

    spectrum = np.fft.fft(mixed)
    spectrum[np.abs(np.fft.fftfreq(length, 1 / fs)) >= params.fmax] = 0.0
    filtered = np.fft.ifft(spectrum)
    instants = np.round((params.tmix + np.arange(validate(params).nmax) / params.fmax) * fs).astype(int)
    return mixed[instants], filtered[instants]


def _segments(tau, hp, params):
    """Segment (1, 2 = blank, 3) of every AIC sample, from the sample time and from the window indices."""
    m = np.arange(validate(params).nmax)
    x = params.tmix + m / params.fmax
    wrap = params.t - hp / params.b
    literal = np.where(x < wrap, 1, np.where(x - tau >= wrap, 3, 2))
    window = blank_window(tau, hp, params)
    modelled = np.where(m < window.nbws, 1, np.where(m >= window.nbwe, 3, 2))
    return x, literal, modelled


def _oracle_runs(cases=50):
    derived = validate(ORACLE)
    max_delay = int(round(ORACLE.tmix * ORACLE_FS))
    for case in range(cases):
        rng = np.random.default_rng(case)
        delay = int(rng.integers(1, max_delay))
        target = Target(alpha=np.exp(1j * rng.uniform(0.0, 2 * np.pi)), r=delay * SPEED_OF_LIGHT / (2 * ORACLE_FS),
                        v=0.0, theta=float(rng.uniform(-np.pi / 3, np.pi / 3)))
        payload = generate_payload(ORACLE.p, derived.h, rng)
        schedule = generate_schedule(ORACLE.p, ORACLE.lt, rng)
        model = _single(target, ORACLE, payload, full_set(derived.nmax), schedule)
        for p, hp in enumerate(payload.h):
            mixed, filtered = _literal_if(target, hp, ORACLE, ORACLE_FS)
            steer = np.exp(1j * np.pi * (schedule.l[p] * ORACLE.lr + np.arange(ORACLE.lr)) * np.sin(target.theta))
            yield target, int(hp), model[p], mixed[:, None] * steer, filtered[:, None] * steer


def test_matches_oversampled_mixer():
    """Outside the blank window the IF model is echo * conj(transmit) on a clock 8x faster than B."""
    runs = 0
    for target, hp, model, mixed, _ in _oracle_runs():
        _, literal, modelled = _segments(target.tau, hp, ORACLE)
        # only the samples at the two floored window indices may disagree
        assert np.sum(literal != modelled) <= 2
        keep = (literal == modelled) & (literal != 2)
        assert np.all(np.abs(model[keep] - mixed[keep]) <= 1e-3)
        assert np.all(model[modelled == 2] == 0)
        runs += 1
    assert runs == 50 * ORACLE.p


def test_matches_lowpass_filtered_mixer():
    """After an ideal low-pass at fmax the mixer output settles onto the IF model between segment edges."""
    errors = []
    for target, hp, model, _, filtered in _oracle_runs():
        x, literal, modelled = _segments(target.tau, hp, ORACLE)
        wrap = ORACLE.t - hp / ORACLE.b
        edges = np.array([target.tau, wrap, wrap + target.tau, ORACLE.t])
        # brick-wall ringing decays as 1/(2*pi^2*d) for d samples from an edge
        distance = np.min(np.abs(x[:, None] - edges[None, :]), axis=1) * ORACLE.fmax
        keep = (literal == modelled) & (literal != 2) & (distance >= 4)
        diff = np.abs(model[keep] - filtered[keep])
        assert np.all(diff <= 0.1)
        errors.extend(diff.ravel())
    assert len(errors) >= 500
    assert np.sqrt(np.mean(np.square(errors))) <= 0.03


def test_blank_window_geometry_over_random_pairs():
    """Zero support and the segment jump follow the window equations for 1200 (h_p, tau) pairs."""
    nmax = validate(PARAMS).nmax
    m = np.arange(nmax)
    checked_jumps = 0
    for trial in range(10):
        rng = np.random.default_rng(100 + trial)
        target = Target(alpha=np.exp(1j * rng.uniform(0.0, 2 * np.pi)), r=float(rng.uniform(0.5, 74.0)),
                        v=0.0, theta=0.0)
        payload = generate_payload(PARAMS.p, validate(PARAMS).h, rng)
        samples = _single(target, PARAMS, payload, full_set(nmax))[:, :, 0]
        tone = np.exp(-2j * np.pi * target.f_if(PARAMS) / PARAMS.fmax * m)
        for p, hp in enumerate(payload.h):
            wrap = PARAMS.t - hp / PARAMS.b
            tbws = wrap if target.tau <= wrap else PARAMS.tmix
            tbwe = min(PARAMS.t, max(target.tau + wrap, PARAMS.tmix))
            start = math.floor(PARAMS.fmax * (tbws - PARAMS.tmix) + 1e-9)
            end = math.floor(PARAMS.fmax * (tbwe - PARAMS.tmix) + 1e-9)
            assert np.array_equal(np.flatnonzero(samples[p] == 0), np.arange(start, end))
            if start >= 1 and end < nmax:
                jump = (samples[p, end] / tone[end]) / (samples[p, start - 1] / tone[start - 1])
                expected = np.exp(2j * np.pi * np.mod(PARAMS.b * target.tau, 1.0))
                assert abs(np.angle(jump / expected)) < 1e-6
                checked_jumps += 1
    assert checked_jumps > 100


def test_comm_samples_noiseless():
    h = validate(PARAMS).h
    payload = _payload([0, 5, h // 2, h - 1])
    rx = comm_rx_samples(payload, full_set(validate(PARAMS).nbar_max), PARAMS, None, None)
    assert np.allclose(rx[:, 0], 1.0)
    assert np.allclose(np.abs(rx), 1.0)

    scaled = comm_rx_samples(payload, draw_random_set(512, 32768, np.random.default_rng(3)), PARAMS, None, None,
                             link=CommLink(alpha_bar=0.5j))
    assert np.allclose(np.abs(scaled), 0.5)


@pytest.mark.parametrize("reference, expected_db", [("sample", 10.0), ("signal", 10.0 - 10 * np.log10(2.0))])
def test_comm_noise_level(reference, expected_db):
    payload = _payload([1, 2, 3, 4])
    sampling_set = full_set(validate(PARAMS).nbar_max)
    clean = comm_rx_samples(payload, sampling_set, PARAMS, None, None)
    noisy = comm_rx_samples(payload, sampling_set, PARAMS, 10.0, np.random.default_rng(4), noise_reference=reference)
    measured = -10 * np.log10(np.mean(np.abs(noisy - clean) ** 2))
    assert measured == pytest.approx(expected_db, abs=0.2)


def test_comm_link_requires_ideal_sync():
    with pytest.raises(ConfigError):
        CommLink(tau_syn=1e-9)
    with pytest.raises(ConfigError):
        comm_rx_samples(_payload([1]), full_set(8), PARAMS, 0.0, None)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v"]))
