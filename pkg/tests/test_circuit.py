import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from classe_wpt.circuit import (
    CONFIG_KEYS,
    PROTOTYPE,
    CoilSource,
    ReceiverState,
    ils_at,
    load_config,
    params_from_config,
    parse_config,
    validate,
)
from classe_wpt.errors import ConfigError, NonFiniteValue, NonPositiveValue

FS = 200e3
TS = 1 / FS


def test_prototype_is_valid():
    assert validate(PROTOTYPE) is PROTOTYPE


@pytest.mark.parametrize("field,value", [("Lf", 0.0), ("R", -1.0), ("Co", float("nan"))])
def test_nonpositive_rejected(field, value):
    with pytest.raises(NonPositiveValue) as exc:
        validate(PROTOTYPE.with_(**{field: value}))
    assert exc.value.field == field


def test_every_violation_reported():
    with pytest.raises(NonPositiveValue) as exc:
        validate(PROTOTYPE.with_(Lf=0.0, Cf=-1.0))
    assert exc.value.fields == ("Lf", "Cf")


def test_infinite_load_rejected():
    with pytest.raises(NonFiniteValue):
        validate(PROTOTYPE.with_(R=math.inf))


def test_derived_quantities():
    assert PROTOTYPE.Ts == pytest.approx(5e-6)
    assert PROTOTYPE.admittance == pytest.approx(0.11975, rel=1e-4)
    assert PROTOTYPE.resonant_frequency / PROTOTYPE.fs == pytest.approx(1.254, abs=1e-3)


def test_ils_zero_crossing_and_peak():
    src = CoilSource(0.8)
    assert ils_at(src, FS, 0.0) == 0.0
    assert ils_at(src, FS, TS / 4) == pytest.approx(0.8, rel=1e-12)
    shifted = CoilSource(0.8, phase_origin=1e-6)
    assert ils_at(shifted, FS, 1e-6) == 0.0


def test_amplitude_step_seen_by_peak_scan():
    src = CoilSource(0.5, amplitude_step=(12e-6, 0.8))
    t = np.linspace(12e-6 + 1e-12, 12e-6 + TS, 20001)
    assert np.max(np.abs(ils_at(src, FS, t))) == pytest.approx(0.8, rel=1e-6)
    t_before = np.linspace(0, 12e-6 - 1e-12, 20001)
    assert np.max(np.abs(ils_at(src, FS, t_before))) == pytest.approx(0.5, rel=1e-6)


@settings(max_examples=200, deadline=None)
@given(t=st.floats(0, 1.0), amp=st.floats(1e-3, 10))
def test_ils_periodic(t, amp):
    src = CoilSource(amp)
    assert abs(ils_at(src, FS, t) - ils_at(src, FS, t + TS)) < 1e-9 * amp


def test_state_array():
    np.testing.assert_array_equal(ReceiverState(1.0, 2.0, 3.0, 4.0).as_array(), [2.0, 3.0, 4.0])


def test_config_round_trip(tmp_path):
    path = tmp_path / "p.cfg"
    path.write_text("# prototype\nLf = 5.3e-6\ncf=76e-9\nco = 3300e-6  # big\nr = 36\nfs = 200e3\nils_amp = 1\n\n")
    params = params_from_config(load_config(path))
    assert params.Lf == 5.3e-6 and params.R == 36.0 and params.vo_nominal == 24.0


@pytest.mark.parametrize("text,msg", [
    ("lf = 1\nbogus = 2\n", "unknown key"),
    ("lf = 1\nlf = 2\n", "duplicate"),
    ("lf = abc\n", "not a number"),
    ("lf 1\n", "expected"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


def test_config_missing_keys():
    with pytest.raises(ConfigError, match="missing"):
        params_from_config({"lf": 1.0})


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")


def test_config_keys_complete():
    assert CONFIG_KEYS == {"lf", "cf", "co", "r", "fs", "ils_amp", "ls", "cs",
                           "vo_nominal", "dt", "ss_tol", "fc", "kp", "ki"}
