"""Grid-search calibration of the coupler-mediated CCZ and of the two-pulse variant.

The single-pulse gate drives the |1110> - |1111> coupler transition with a 2pi
pulse: only |111> acquires the geometric phase. The two-pulse gate splits the
phase between a pulse near |1110> - |1111> and one near |0000> - |0001>; the
parasitic two-qubit phases of the two pulses have opposite signs and cancel.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .composite import COMPUTATIONAL, DressedModel
from .dynamics import (
    DrivePulse,
    GateMatrix,
    area_per_amplitude,
    ccphase,
    ccphase_star,
    ccz,
    extract_gate,
    frame_correct,
    gate_from_matrix,
    leakage,
    max_time_step,
    propagate_batch,
    unitary_fidelity,
)

COARSE_STEP = (1.0, 1e-3)  # ns, GHz
FINE_STEP = (0.1, 1e-4)
FINE_HALF_WIDTH = 5
OBJECTIVE_LEVELS = 32
# second coupler level of each computational state; |1112> Stark-shifts the driven transition
COUPLER_SECOND = tuple((*bits, 2) for bits in COMPUTATIONAL)
# computational index -> index of its image under X on all three qubits
X3 = np.arange(8)[::-1]


class RangeTooNarrow(RuntimeError):
    """The best grid point lies on the boundary of the searched range."""

    def __init__(self, message: str, best: "CalibrationResult"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class CalibrationResult:
    amplitude: float
    tau: float
    frequency: float
    fidelity: float
    leakage: float
    phases: dict[str, float]
    gate: GateMatrix | None = None
    n_evaluations: int = 0

    @property
    def pulse(self) -> DrivePulse:
        return DrivePulse(self.amplitude, self.tau, self.frequency)


@dataclass(frozen=True)
class TwoPulseSpec:
    """``pulse_a`` drives |0000>-|0001> (CCPhase*), ``pulse_b`` drives |1110>-|1111> (CCPhase)."""

    pulse_a: DrivePulse
    pulse_b: DrivePulse
    phase_a: float = np.pi / 2
    phase_b: float = np.pi / 2

    def __post_init__(self):
        if abs(self.phase_a + self.phase_b - np.pi) > 1e-9:
            raise ValueError("target phases must sum to pi for a CCZ")

    @property
    def total_duration(self) -> float:
        return self.pulse_a.duration + self.pulse_b.duration


def canonical_target(target: np.ndarray) -> np.ndarray:
    """Target in the frame convention of :func:`extract_gate`."""
    return frame_correct(np.asarray(target, dtype=complex))[0]


def transition_frequency(dressed: DressedModel, bits: str) -> float:
    """Coupler 0-1 frequency with the fluxoniums in ``bits``."""
    xyz = tuple(int(b) for b in bits)
    return dressed.energy((*xyz, 1)) - dressed.energy((*xyz, 0))


def two_pi_amplitude(dressed: DressedModel, tau: float, bits: str = "111") -> float:
    """Amplitude giving a resonant 2pi rotation of the selected coupler transition.

    The drive ``A sin(2 pi f t) n_T`` couples the pair with rotating-wave
    strength ``A |m| / 2``; a 2pi rotation needs ``A |m| area / 2 = 1/2``.
    """
    xyz = tuple(int(b) for b in bits)
    m = abs(dressed.n_T_dressed[dressed.index((*xyz, 0)), dressed.index((*xyz, 1))])
    return 1.0 / (m * area_per_amplitude(tau))


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(np.floor((hi - lo) / step + 1e-9))
    return np.round(lo + step * np.arange(n + 1), 10)


def _evaluate(dressed, amplitude, taus, freqs, target, dt):
    """Fidelity and leakage on the tau x f grid; returns arrays of shape (len(taus), len(freqs))."""
    tt, ff = np.meshgrid(taus, freqs, indexing="ij")
    pulses = [DrivePulse(amplitude, t, f) for t, f in zip(tt.ravel(), ff.ravel())]
    h = dt or max_time_step(dressed, float(ff.max()))
    finals = propagate_batch(dressed, pulses, dt=h)
    raw = finals[:, dressed.computational_indices(0), :]
    U, _, _ = frame_correct(raw)
    fid = unitary_fidelity(U, target).reshape(tt.shape)
    leak = (1.0 - np.sum(np.abs(raw) ** 2, axis=(1, 2)) / 8).reshape(tt.shape)
    return fid, leak


def _argbest(fid: np.ndarray) -> tuple[int, int]:
    # max fidelity, ties to lower tau then lower f
    i, j = np.unravel_index(np.argmax(fid), fid.shape)
    return int(i), int(j)


def _on_edge(i, j, shape) -> bool:
    return i in (0, shape[0] - 1) or j in (0, shape[1] - 1)


def grid_search(
    dressed: DressedModel,
    amplitude: float,
    tau_range: tuple[float, float],
    f_range: tuple[float, float],
    target: np.ndarray,
    dt: float | None = None,
    coarse: tuple[float, float] = COARSE_STEP,
    fine: tuple[float, float] = FINE_STEP,
    max_recentre: int = 4,
):
    """Coarse-to-fine maximisation of fidelity to ``target`` over (tau, f).

    Returns ``(tau, f, n_evaluations)``. Raises :class:`RangeTooNarrow` if the
    optimum sits on the boundary of ``tau_range`` x ``f_range``.
    """
    target = canonical_target(target)
    (t_lo, t_hi), (f_lo, f_hi) = tau_range, f_range
    if not (0 < t_lo < t_hi and 0 < f_lo < f_hi):
        raise ValueError("ranges must be increasing and positive")
    taus, freqs = _grid(t_lo, t_hi, coarse[0]), _grid(f_lo, f_hi, coarse[1])
    fid, leak = _evaluate(dressed, amplitude, taus, freqs, target, dt)
    n_eval = fid.size
    i, j = _argbest(fid)
    tau, f = taus[i], freqs[j]
    if _on_edge(i, j, fid.shape):
        raise RangeTooNarrow(
            f"coarse optimum (tau={tau:.3f} ns, f={f:.6f} GHz) on the search boundary",
            CalibrationResult(amplitude, tau, f, float(fid[i, j]), float(leak[i, j]), {}, None, n_eval),
        )

    for _ in range(max_recentre + 1):
        taus = tau + fine[0] * np.arange(-FINE_HALF_WIDTH, FINE_HALF_WIDTH + 1)
        freqs = f + fine[1] * np.arange(-FINE_HALF_WIDTH, FINE_HALF_WIDTH + 1)
        taus = np.round(taus[(taus >= t_lo - 1e-9) & (taus <= t_hi + 1e-9)], 10)
        freqs = np.round(freqs[(freqs >= f_lo - 1e-12) & (freqs <= f_hi + 1e-12)], 10)
        fid, leak = _evaluate(dressed, amplitude, taus, freqs, target, dt)
        n_eval += fid.size
        i, j = _argbest(fid)
        tau, f = taus[i], freqs[j]
        boundary = (
            (i == 0 and abs(tau - t_lo) < 1e-9)
            or (i == len(taus) - 1 and abs(tau - t_hi) < 1e-9)
            or (j == 0 and abs(f - f_lo) < 1e-12)
            or (j == len(freqs) - 1 and abs(f - f_hi) < 1e-12)
        )
        if boundary:
            raise RangeTooNarrow(
                f"fine optimum (tau={tau:.3f} ns, f={f:.6f} GHz) on the search boundary",
                CalibrationResult(amplitude, tau, f, float(fid[i, j]), float(leak[i, j]), {}, None, n_eval),
            )
        if not _on_edge(i, j, fid.shape):
            return float(tau), float(f), n_eval
    raise RuntimeError("fine search did not settle on an interior maximum")


def evaluate_pulse(dressed: DressedModel, pulse: DrivePulse, target=None, dt=None):
    """Gate, fidelity and leakage of one pulse on ``dressed``."""
    target = canonical_target(ccz() if target is None else target)
    h = dt or max_time_step(dressed, pulse.frequency)
    finals = propagate_batch(dressed, [pulse], dt=h)[0]
    gate = extract_gate(finals, dressed)
    return gate, float(unitary_fidelity(gate.U, target)), leakage(finals, dressed)


def objective_model(dressed: DressedModel, n_lowest: int = OBJECTIVE_LEVELS) -> DressedModel:
    """Reduced model used inside the grid search.

    The ``n_lowest`` lowest dressed states plus the eight ``|xyz2>`` states; the
    latter carry the dominant off-resonant shift of the driven coupler transition.
    """
    if dressed.n_keep <= n_lowest + len(COUPLER_SECOND):
        return dressed
    return dressed.with_labels(n_lowest, COUPLER_SECOND)


def calibrate_single_pulse(
    dressed: DressedModel,
    amplitude: float,
    tau_range: tuple[float, float],
    f_range: tuple[float, float],
    target: np.ndarray | None = None,
    dt: float | None = None,
    objective_levels: int | None = OBJECTIVE_LEVELS,
) -> CalibrationResult:
    """Find the (tau, f) maximising fidelity to ``target`` (CCZ by default).

    The search runs on :func:`objective_model` of ``dressed`` (pass
    ``objective_levels=None`` to search on ``dressed`` itself); the reported
    fidelity, leakage and phases are re-evaluated on all of ``dressed``.
    """
    target = ccz() if target is None else np.asarray(target, dtype=complex)
    search_model = dressed
    if objective_levels is not None:
        search_model = objective_model(dressed, objective_levels)
    tau, f, n_eval = grid_search(search_model, amplitude, tau_range, f_range, target, dt)
    pulse = DrivePulse(amplitude, tau, f)
    gate, fid, leak = evaluate_pulse(dressed, pulse, target, None if dressed is not search_model else dt)
    return CalibrationResult(amplitude, tau, f, fid, leak, gate.conditional_phases, gate, n_eval)


def amplitude_sweep(
    dressed: DressedModel,
    amplitudes: Sequence[float],
    f_window: tuple[float, float] = (-0.012, 0.003),
    tau_window: float = 0.15,
    target: np.ndarray | None = None,
    dt: float | None = None,
    objective_levels: int | None = OBJECTIVE_LEVELS,
) -> list[CalibrationResult]:
    """Calibrate each amplitude (given in descending order) around the |111> resonance.

    The tau range is centred on the 2pi-area estimate with relative half-width
    ``tau_window``; ``f_window`` is relative to f_111 in GHz.
    """
    amps = np.asarray(amplitudes, dtype=float)
    if np.any(np.diff(amps) > 0):
        raise ValueError("amplitudes must be in descending order")
    f111 = transition_frequency(dressed, "111")
    m = abs(dressed.n_T_dressed[dressed.index((1, 1, 1, 0)), dressed.index((1, 1, 1, 1))])
    per_ns = area_per_amplitude(1.0)  # area scales linearly with tau
    results = []
    for a in amps:
        tau0 = 1.0 / (m * a * per_ns)
        lo, hi = np.floor(tau0 * (1 - tau_window)), np.ceil(tau0 * (1 + tau_window))
        results.append(
            calibrate_single_pulse(
                dressed, float(a), (lo, hi), (f111 + f_window[0], f111 + f_window[1]),
                target, dt, objective_levels,
            )
        )
    return results


def calibrate_ccphase(
    dressed: DressedModel,
    transition: str,
    target_phase: float,
    amplitude: float,
    tau_range: tuple[float, float],
    f_range: tuple[float, float],
    dt: float | None = None,
    objective_levels: int | None = OBJECTIVE_LEVELS,
) -> CalibrationResult:
    """Calibrate CCPhase(phi) via ``transition="111"`` or CCPhase*(phi) via ``"000"``."""
    if transition == "111":
        target = ccphase(target_phase)
    elif transition == "000":
        target = ccphase_star(target_phase)
    else:
        raise ValueError("transition must be '000' or '111'")
    return calibrate_single_pulse(dressed, amplitude, tau_range, f_range, target, dt, objective_levels)


def completion_target(raw_a: np.ndarray) -> np.ndarray:
    """Diagonal target for the |111> pulse that completes a CCZ after ``raw_a``.

    The phases the CCPhase* pulse actually produced (its parasitic two- and
    three-body phases included) are seen through the X conjugation and
    divided out of CCZ.
    """
    conj = np.asarray(raw_a)[np.ix_(X3, X3)]
    return np.diag(np.exp(-1j * np.angle(np.diag(conj)))) @ ccz()


def calibrate_two_pulse(
    dressed: DressedModel,
    spec: TwoPulseSpec,
    tau_window: float = 4.0,
    f_window: float = 0.008,
    dt: float | None = None,
    objective_levels: int | None = OBJECTIVE_LEVELS,
) -> tuple[CalibrationResult, CalibrationResult]:
    """Calibrate the CCPhase* pulse, then the CCPhase pulse against the remainder.

    The pulses in ``spec`` supply amplitudes and the centres of the search
    windows. The first pulse targets CCPhase*(phase_a). The second targets
    :func:`completion_target` of the first, so that the composed gate is a
    CCZ; with ideal first-pulse phases this is CCPhase(phase_b).
    """
    windows = [
        ((p.duration - tau_window, p.duration + tau_window), (p.frequency - f_window, p.frequency + f_window))
        for p in (spec.pulse_a, spec.pulse_b)
    ]
    a = calibrate_ccphase(dressed, "000", spec.phase_a, spec.pulse_a.amplitude, *windows[0], dt, objective_levels)
    target = completion_target(raw_gate(dressed, a.pulse, dt))
    b = calibrate_single_pulse(dressed, spec.pulse_b.amplitude, *windows[1], target, dt, objective_levels)
    return a, b


def raw_gate(dressed: DressedModel, pulse: DrivePulse, dt: float | None = None) -> np.ndarray:
    """Uncorrected computational block ``<xyz0_i | U | xyz0_j>``."""
    h = dt or max_time_step(dressed, pulse.frequency)
    finals = propagate_batch(dressed, [pulse], dt=h)[0]
    return finals[dressed.computational_indices(0), :]


def compose_two_pulse(raw_b: np.ndarray, raw_a: np.ndarray | None) -> GateMatrix:
    """``X3 . U_a . X3 . U_b`` with ideal X on all qubits, then frame correction.

    ``raw_a`` (the CCPhase* pulse) may be ``None`` to stand for the identity.
    """
    ua = np.eye(8, dtype=complex) if raw_a is None else raw_a
    x3_ua_x3 = ua[np.ix_(X3, X3)]
    return gate_from_matrix(x3_ua_x3 @ raw_b)


def compose_two_pulse_ccz(spec: TwoPulseSpec, dressed: DressedModel, dt: float | None = None) -> GateMatrix:
    """CCPhase(phase_b) on |111>, X on all qubits, CCPhase*(phase_a), X on all qubits."""
    return compose_two_pulse(raw_gate(dressed, spec.pulse_b, dt), raw_gate(dressed, spec.pulse_a, dt))
