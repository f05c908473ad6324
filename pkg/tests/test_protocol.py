from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mirrortrain.core import FRAME_RATE, N_DOF
from mirrortrain.protocol import (
    TrialTimingParams,
    default_movement_catalog,
    generate_virtual_stream,
    profile_array,
    session_duration,
    virtual_profile,
)


@pytest.fixture(scope="module")
def virtual():
    cat = default_movement_catalog()
    trials, stream = generate_virtual_stream(cat)
    return cat, trials, stream


def test_catalog_enumeration():
    cat = default_movement_catalog()
    assert len(cat) == 18
    assert sum(len(m.target_dofs) == 5 for m in cat) == 2
    counts = np.zeros(N_DOF, int)
    for m in cat:
        for d in m.dofs:
            counts[d] += 1
    assert np.all(counts >= 2)
    combos = [m for m in cat if len(m.target_dofs) == 5]
    assert {s for _, s in combos[0].target_dofs} == {1}
    assert {s for _, s in combos[1].target_dofs} == {-1}


@pytest.mark.parametrize("t, expected", [(0.0, 0.0), (0.35, 0.5), (0.7, 1.0), (0.75, 1.0), (0.8, 1.0),
                                         (1.15, 0.5), (1.5, 0.0)])
def test_virtual_profile_examples(t, expected):
    assert virtual_profile(t) == pytest.approx(expected, abs=1e-12)


def test_virtual_profile_outside_trial():
    with pytest.raises(ValueError):
        virtual_profile(-0.1)
    with pytest.raises(ValueError):
        virtual_profile(1.6)


@given(t=st.floats(0, 1.5), peak=st.floats(0.1, 1.0))
def test_profile_bounded_by_peak(t, peak):
    assert 0.0 <= virtual_profile(t, peak=peak) <= peak + 1e-12


def test_timing_params_sum():
    with pytest.raises(ValueError):
        TrialTimingParams(ramp_up=0.8)


def test_stream_size_and_duration(virtual):
    cat, trials, stream = virtual
    assert len(trials) == 180
    assert session_duration(len(trials)) == 480.0
    assert len(stream) == 14400


def test_initial_rest_and_itis_are_exact_zeros(virtual):
    cat, trials, stream = virtual
    assert not np.any(stream.angles[:int(30 * FRAME_RATE)])
    for tr in trials:
        assert not np.any(stream.angles[stream.window(*tr.preceding_iti)])


def test_non_target_dofs_are_zero(virtual):
    cat, trials, stream = virtual
    for tr in trials:
        mv = cat[tr.movement_index]
        frames = stream.angles[stream.window(tr.t_start, tr.t_end, closed=True)]
        others = [d for d in range(N_DOF) if d not in mv.dofs]
        assert np.abs(frames[:, others]).sum() == 0


def test_peak_amplitude_on_hold(virtual):
    cat, trials, stream = virtual
    for tr in trials:
        mv = cat[tr.movement_index]
        sl = stream.window(tr.t_start, tr.t_end, closed=True)
        t = stream.t[sl] - tr.t_start
        for d, sign in mv.target_dofs:
            x = stream.angles[sl, int(d)] * sign
            assert x.max() == pytest.approx(mv.peak_amplitude, abs=1e-7)
            at_peak = t[x >= mv.peak_amplitude - 1e-7]
            assert at_peak.min() >= 0.7 - 1e-9 and at_peak.max() <= 0.8 + 1e-9


def test_trial_schedule(virtual):
    cat, trials, stream = virtual
    assert trials[0].preceding_iti == (29.0, 30.0)
    for a, b in zip(trials, trials[1:]):
        assert b.t_start - a.t_end == pytest.approx(1.0)
    for tr in trials:
        assert tr.t_end - tr.t_start == pytest.approx(1.5, abs=1e-12)
        assert tr.preceding_iti[1] - tr.preceding_iti[0] == pytest.approx(1.0, abs=1e-12)
    # catalog order, ten consecutive trials each
    assert [tr.movement_index for tr in trials] == [m for m in range(18) for _ in range(10)]


def test_virtual_is_deterministic(virtual):
    cat, _, stream = virtual
    assert generate_virtual_stream(cat)[1].equals(stream)


def test_empty_catalog_rejected():
    with pytest.raises(ValueError):
        generate_virtual_stream([])


def test_profile_array_matches_scalar():
    t = np.linspace(0, 1.5, 91)
    np.testing.assert_array_equal(profile_array(t), [virtual_profile(x) for x in t])
