#!/usr/bin/env python3
"""
Tests for waveform parameter validation, presets and config files
"""
import json

import pytest

from app.config import (
    PRESETS,
    WaveformParams,
    load_config,
    params_hash,
    preset,
    uniform_params,
    validate,
)
from app.errors import (
    BandwidthMismatch,
    BinOffsetNonInteger,
    ConfigError,
    SamplingOverrun,
    ScheduleIndivisible,
    UnknownConfigKey,
)


def test_1ghz_preset_derived_values():
    """The 1 GHz preset evaluates to the documented constants."""
    derived = validate(preset("paper-1ghz"))
    assert derived.h == 16384
    assert derived.t0 == pytest.approx(16.884e-6, rel=1e-12)
    assert derived.wavelength == pytest.approx(3.896e-3, rel=1e-3)
    assert derived.nmax == 496
    assert derived.nbar_max == 32768
    assert derived.bin_offset == 16384
    assert derived.r_max == pytest.approx(74.46, abs=0.01)
    assert derived.hit_threshold == pytest.approx(0.1455, abs=1e-4)


def test_hit_threshold_identity():
    params = preset("paper-1ghz")
    derived = validate(params)
    ratio = derived.hit_threshold * (2 * params.b * params.t) / (3e8 * (params.t - params.tmix))
    assert ratio == pytest.approx(1.0, rel=1e-12)


def test_validate_is_idempotent():
    params = preset("paper-1ghz")
    assert validate(params) == validate(params)
    assert validate(params) == validate(preset("paper-1ghz"))


def test_smallest_alphabet():
    params = WaveformParams(fc=1e9, b=2.0, nsf=1, t=1.0, tgi=0.1, tmix=0.1, p=2, lt=1, lr=1,
                            fmax=10.0, fbar=4.0, n=4, nbar=4)
    derived = validate(params)
    assert derived.h == 2
    assert derived.t0 == pytest.approx(1.1)
    assert derived.nmax == 9


def test_other_presets():
    derived = validate(preset("paper-500mhz"))
    assert derived.h == 8192
    assert derived.bin_offset == 24576
    assert derived.hit_threshold == pytest.approx(0.2908, abs=1e-4)

    literal = validate(preset("paper-literal"))
    assert literal.nmax == 512
    assert literal.nbar_max == 32800
    assert set(PRESETS) == {"paper-1ghz", "paper-500mhz", "paper-literal"}


@pytest.mark.parametrize("overrides, error", [
    ({"b": 1.1e9}, BandwidthMismatch),
    ({"p": 121}, ScheduleIndivisible),
    ({"n": 497}, SamplingOverrun),
    ({"nbar": 40000}, SamplingOverrun),
    ({"fbar": 1.00000003e9}, BinOffsetNonInteger),
    ({"tgi": 0.4e-6}, ConfigError),
    ({"lt": 0}, ConfigError),
])
def test_invalid_parameters(overrides, error):
    with pytest.raises(error):
        validate(preset("paper-1ghz", **overrides))


@pytest.mark.parametrize("field, value", [
    ("p", "4.5"),
    ("nsf", 14.5),
    ("n", "abc"),
    ("lr", None),
    ("nbar", 512.0),
    ("rho_ae", True),
    ("fmax", "fast"),
    ("seed", "7"),
])
def test_malformed_field_types_raise_config_error(field, value):
    """Wrong types in a parameter field surface as ConfigError, never ValueError or TypeError."""
    with pytest.raises(ConfigError):
        validate(preset("paper-1ghz", **{field: value}))


def test_unknown_keys_rejected():
    with pytest.raises(UnknownConfigKey):
        WaveformParams.from_dict({**PRESETS["paper-1ghz"], "bandwidth": 1e9})
    with pytest.raises(ConfigError):
        preset("paper-2ghz")


def test_uniform_params_grid():
    baseline = uniform_params(preset("paper-1ghz"), 28.125e6)
    assert baseline.n == 446
    assert validate(baseline).nmax == 446


def test_params_hash_tracks_fields():
    params = preset("paper-1ghz")
    assert params_hash(params) == params_hash(preset("paper-1ghz"))
    assert params_hash(params) != params_hash(preset("paper-1ghz", seed=7))
    assert len(params_hash(params)) == 16


def test_load_config_sections(tmp_path):
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps({
        "waveform": {"n": 400, "seed": 3},
        "scene": {"k": 2},
        "experiment": {"trials": 5},
    }))
    params, scene, experiment = load_config(str(path), base=preset("paper-1ghz"))
    assert params.n == 400 and params.seed == 3
    assert scene == {"k": 2}
    assert experiment == {"trials": 5}


def test_load_config_rejects_unknown(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"waveform": {}, "plots": {}}))
    with pytest.raises(UnknownConfigKey):
        load_config(str(path), base=preset("paper-1ghz"))

    path.write_text(json.dumps({"waveform": {"chirp_rate": 1.0}}))
    with pytest.raises(UnknownConfigKey):
        load_config(str(path), base=preset("paper-1ghz"))

    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v"]))
