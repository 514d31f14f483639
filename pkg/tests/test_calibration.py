import numpy as np
import pytest

from fluxccz import calibration as cal
from fluxccz.calibration import (
    X3,
    RangeTooNarrow,
    TwoPulseSpec,
    compose_two_pulse,
    grid_search,
    objective_model,
    two_pi_amplitude,
)
from fluxccz.composite import dressed_model, paper_device
from fluxccz.dynamics import DrivePulse, ccphase, ccphase_star, ccz, unitary_fidelity


def synthetic(peak_tau, peak_f, flat=False):
    """Replace the propagation-based objective with a smooth bump."""

    def fake(dressed, amplitude, taus, freqs, target, dt):
        tt, ff = np.meshgrid(taus, freqs, indexing="ij")
        if flat:
            fid = np.ones_like(tt)
        else:
            fid = 1 - ((tt - peak_tau) / 3) ** 2 - ((ff - peak_f) / 0.004) ** 2
        return fid, np.zeros_like(fid)

    return fake


def test_grid_search_finds_interior_peak(monkeypatch):
    monkeypatch.setattr(cal, "_evaluate", synthetic(77.73, 7.29834))
    tau, f, n = grid_search(None, 0.03, (74, 82), (7.289, 7.302), ccz())
    assert tau == pytest.approx(77.7)
    assert f == pytest.approx(7.2983)
    assert n > 9 * 14


def test_grid_search_recentres(monkeypatch):
    # coarse optimum at 76 ns / 7.295 GHz, the fine peak is outside the first +-5 window
    monkeypatch.setattr(cal, "_evaluate", synthetic(75.41, 7.29441))
    tau, f, _ = grid_search(None, 0.03, (74, 82), (7.289, 7.302), ccz())
    assert tau == pytest.approx(75.4)
    assert f == pytest.approx(7.2944)


@pytest.mark.parametrize("peak", [(74.0, 7.295), (81.9, 7.295), (78.0, 7.3025)])
def test_grid_search_boundary_raises(monkeypatch, peak):
    monkeypatch.setattr(cal, "_evaluate", synthetic(*peak))
    with pytest.raises(RangeTooNarrow) as info:
        grid_search(None, 0.03, (74, 82), (7.289, 7.302), ccz())
    assert info.value.best.amplitude == 0.03


def test_ties_go_to_lowest_tau_and_frequency(monkeypatch):
    monkeypatch.setattr(cal, "_evaluate", synthetic(0, 0, flat=True))
    assert cal._argbest(np.ones((4, 5))) == (0, 0)
    with pytest.raises(RangeTooNarrow):
        grid_search(None, 0.03, (74, 82), (7.289, 7.302), ccz())


def test_grid_search_rejects_bad_ranges():
    with pytest.raises(ValueError):
        grid_search(None, 0.03, (82, 74), (7.2, 7.3), ccz())
    with pytest.raises(ValueError):
        grid_search(None, 0.03, (74, 82), (0.0, 7.3), ccz())


def test_grid_construction():
    g = cal._grid(74, 82, 1.0)
    np.testing.assert_allclose(g, np.arange(74, 83))
    g = cal._grid(7.289, 7.302, 1e-3)
    assert len(g) == 14 and g[-1] == pytest.approx(7.302)


def test_two_pulse_spec():
    a, b = DrivePulse(0.02, 40.6, 6.93), DrivePulse(0.02, 54.3, 7.28)
    spec = TwoPulseSpec(a, b)
    assert spec.total_duration == pytest.approx(94.9)
    with pytest.raises(ValueError):
        TwoPulseSpec(a, b, np.pi / 2, np.pi / 3)


def test_ideal_two_pulse_composition_is_ccz():
    gate = compose_two_pulse(ccphase(np.pi / 2), ccphase_star(np.pi / 2))
    assert unitary_fidelity(gate.U, ccz()) == pytest.approx(1.0)
    gate = compose_two_pulse(ccz(), None)
    np.testing.assert_allclose(gate.U, ccz(), atol=1e-15)
    np.testing.assert_array_equal(X3[X3], np.arange(8))


def test_ideal_composition_with_local_phases():
    # arbitrary single-qubit Z phases on each pulse are absorbed by the frame correction
    bits = np.array([[(k >> s) & 1 for s in (2, 1, 0)] for k in range(8)])
    za = np.diag(np.exp(1j * bits @ np.array([0.3, -0.2, 1.1])))
    zb = np.diag(np.exp(1j * bits @ np.array([-0.7, 0.4, 0.05])))
    gate = compose_two_pulse(zb @ ccphase(np.pi / 2), za @ ccphase_star(np.pi / 2))
    assert unitary_fidelity(gate.U, ccz()) == pytest.approx(1.0)


@pytest.fixture(scope="module")
def model():
    return dressed_model(paper_device(), 4, 128)


def test_zero_amplitude_is_identity_up_to_frame(model):
    f = cal.transition_frequency(model, "111")
    gate, fid, leak = cal.evaluate_pulse(model, DrivePulse(0.0, 10.0, f), np.eye(8))
    assert leak < 1e-12
    # the idle gate carries only the residual ZZ and ZZZ phases
    assert fid > 1 - 1e-6


def test_objective_model_keeps_second_coupler_level(model):
    obj = objective_model(model, 32)
    assert obj.n_keep == 40
    for label in cal.COUPLER_SECOND:
        assert obj.index(label) >= 0
    assert objective_model(obj, 32) is obj


def test_two_pi_amplitude_scales_inversely_with_duration(model):
    a1 = two_pi_amplitude(model, 50.0)
    a2 = two_pi_amplitude(model, 100.0)
    assert a1 == pytest.approx(2 * a2)


def test_completion_target_for_ideal_first_pulse():
    bits = np.array([[(k >> s) & 1 for s in (2, 1, 0)] for k in range(8)])
    local = np.diag(np.exp(1j * (bits @ np.array([0.4, -1.0, 0.2]) + 0.3)))
    target = cal.completion_target(local @ ccphase_star(np.pi / 2))
    np.testing.assert_allclose(cal.canonical_target(target), cal.canonical_target(ccphase(np.pi / 2)), atol=1e-12)


def test_completion_target_absorbs_parasitic_phases():
    rng = np.random.default_rng(5)
    raw_a = np.diag(np.exp(1j * rng.uniform(-0.1, 0.1, 8))) @ ccphase_star(np.pi / 2)
    target = cal.completion_target(raw_a)
    gate = compose_two_pulse(target, raw_a)
    assert unitary_fidelity(gate.U, ccz()) == pytest.approx(1.0)
