import copy
import json
import math

import pytest

from ormdgate import config
from ormdgate.config import ConfigError


def test_fixtures_validate(type_a_config, type_c_config):
    for cfg in (type_a_config, type_c_config):
        scheme, params = config.protocol_from_dict(cfg["protocol"])
        assert params.gate_time == 0.25


def test_zero_gate_time_rejected(type_a_config):
    bad = copy.deepcopy(type_a_config)
    bad["protocol"]["gate_time_us"] = 0
    with pytest.raises(ConfigError, match="gate_time_us"):
        config.validate(bad)


def test_unknown_field_rejected(type_a_config):
    bad = copy.deepcopy(type_a_config)
    bad["protocol"]["mystery"] = 1
    with pytest.raises(ConfigError, match="mystery"):
        config.validate(bad)
    bad = copy.deepcopy(type_a_config)
    bad["extra"] = True
    with pytest.raises(ConfigError):
        config.validate(bad)


def test_gate_time_mismatch_rejected(type_a_config):
    bad = copy.deepcopy(type_a_config)
    bad["protocol"]["omega_p"]["waveform"]["gate_time_us"] = 0.3
    with pytest.raises(ConfigError, match="differs"):
        config.validate(bad)


def test_scheme_invariant_reported(type_a_config):
    bad = copy.deepcopy(type_a_config)
    bad["protocol"]["scheme"] = "TypeB"
    with pytest.raises(ConfigError, match="TypeB"):
        config.validate(bad)


def test_infinite_blockade_round_trip(type_a):
    scheme, params = type_a
    from dataclasses import replace
    d = config.protocol_to_dict(scheme, replace(params, blockade=math.inf))
    assert d["blockade_mhz"] == "infinite"
    s2, p2 = config.protocol_from_dict(d)
    assert s2 == scheme and math.isinf(p2.blockade)


def test_protocol_round_trip(type_a):
    d = config.protocol_to_dict(*type_a)
    s2, p2 = config.protocol_from_dict(d)
    assert s2 == type_a[0]
    assert p2.delta_2photon == pytest.approx(type_a[1].delta_2photon, rel=1e-15)


def test_dumps_reemits_identical_bytes(type_c_config):
    text = config.dumps({"x": 0.1 + 0.2, "cfg": type_c_config, "y": [1e-300, 12345.678901234567]})
    assert config.dumps(json.loads(text)) == text
    assert text.endswith("\n")


def test_dumps_rejects_nan():
    with pytest.raises(ValueError):
        config.dumps({"x": float("nan")})


def test_baseline_protocol_valid():
    config.validate({"protocol": {"scheme": "pi-gap-pi", "omega_mhz": 10, "blockade_mhz": "infinite"}})
    with pytest.raises(ConfigError):
        config.validate({"protocol": {"scheme": "pi-gap-pi", "omega_mhz": -1}})


def test_load_reports_bad_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{nope")
    with pytest.raises(ConfigError, match="not valid JSON"):
        config.load(p)
