"""Driven evolution of the dressed model, gate extraction and process fidelity.

Time is in ns and Hamiltonians are H/h in GHz, so the Schrodinger equation reads
``i dpsi/dt = 2 pi H psi``. States are integrated in the interaction frame of
the static dressed Hamiltonian, which makes free evolution exact; the fixed RK4
step only has to resolve the drive term ``V(t) sin(2 pi f t) n_T``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import erf

from .composite import COMPUTATIONAL, DressedModel
from .integrators import rk4

TWO_PI = 2 * np.pi
DEFAULT_DT = 0.0005  # ns
SIGMA_RATIO = 0.4
NORM_TOLERANCE = 1e-6

PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class StepSizeError(RuntimeError):
    """Norm or trace drift exceeded tolerance; the time step is too large."""


class DegenerateGateError(RuntimeError):
    """The |000> -> |000> amplitude is too small to fix the global phase."""


@dataclass(frozen=True)
class DrivePulse:
    """Microwave drive ``V(t) sin(2 pi f t)`` with an offset Gaussian envelope.

    ``amplitude`` is the prefactor of the charge drive term in GHz, ``duration``
    and ``sigma`` are in ns, ``frequency`` in GHz. ``sigma`` defaults to
    ``0.4 * duration``.
    """

    amplitude: float
    duration: float
    frequency: float
    sigma: float | None = None

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("pulse duration must be positive")
        if not self.frequency > 0:
            raise ValueError("drive frequency must be positive")
        if self.sigma is None:
            object.__setattr__(self, "sigma", SIGMA_RATIO * self.duration)
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def envelope(self, t):
        return gaussian_envelope(self, t)

    @property
    def area(self) -> float:
        """Closed-form integral of the envelope over ``[0, duration]``."""
        tau, s = self.duration, self.sigma
        return self.amplitude * (
            s * np.sqrt(2 * np.pi) * erf(tau / (2 * np.sqrt(2) * s))
            - tau * np.exp(-(tau**2) / (8 * s**2))
        )


def gaussian_envelope(pulse: DrivePulse, t):
    """``A [exp(-(t - tau/2)^2 / 2 sigma^2) - exp(-(tau/2)^2 / 2 sigma^2)]``, zero at both ends."""
    tau, s = pulse.duration, pulse.sigma
    t = np.asarray(t, dtype=float)
    return pulse.amplitude * (
        np.exp(-((t - tau / 2) ** 2) / (2 * s**2)) - np.exp(-((tau / 2) ** 2) / (2 * s**2))
    )


def area_per_amplitude(duration: float, sigma_ratio: float = SIGMA_RATIO) -> float:
    return DrivePulse(1.0, duration, 1.0, sigma_ratio * duration).area


def max_time_step(dressed: DressedModel, frequency: float) -> float:
    """Largest step satisfying ``20 dt f_max <= 1`` with ``f_max = max E + f``."""
    return 1.0 / (20.0 * (float(dressed.energies.max()) + frequency))


def _initial_states(dressed: DressedModel, initial) -> np.ndarray:
    if initial is None:
        initial = dressed.computational_indices(0)
    initial = np.asarray(initial)
    if initial.ndim == 1 and np.issubdtype(initial.dtype, np.integer):
        psi = np.zeros((dressed.n_keep, len(initial)), dtype=complex)
        psi[initial, np.arange(len(initial))] = 1.0
        return psi
    psi = np.asarray(initial, dtype=complex)
    if psi.ndim == 1:
        psi = psi[:, None]
    return psi


def drive_coefficients(pulses: Sequence[DrivePulse]):
    """Vectorized ``V(t) sin(2 pi f t)`` for many pulses, zero outside ``[0, tau]``."""
    taus = np.array([p.duration for p in pulses])
    amps = np.array([p.amplitude for p in pulses])
    sigmas = np.array([p.sigma for p in pulses])
    freqs = np.array([p.frequency for p in pulses])
    offsets = np.exp(-((taus / 2) ** 2) / (2 * sigmas**2))

    def coeff(t):
        env = amps * (np.exp(-((t - taus / 2) ** 2) / (2 * sigmas**2)) - offsets)
        env = np.where((t >= 0) & (t <= taus * (1 + 1e-12)), env, 0.0)
        return env * np.sin(TWO_PI * freqs * t)

    return coeff


def common_step(durations, dt: float) -> float | None:
    """Largest step ``<= dt`` that divides every duration, if one exists nearby."""
    units = np.round(np.asarray(durations) / 1e-6).astype(np.int64)
    if not np.allclose(units * 1e-6, durations, rtol=0, atol=1e-9):
        return None
    q = int(np.gcd.reduce(units)) * 1e-6
    h = q / np.ceil(q / dt - 1e-9)
    return h if h > 0.5 * dt else None


def _check_step(dressed, frequency, dt):
    if 20 * dt * (dressed.energies.max() + frequency) > 1 + 1e-9:
        raise ValueError(
            f"dt={dt} ns violates 20*dt*f_max <= 1; "
            f"use dt <= {max_time_step(dressed, frequency):.3g} ns"
        )


def _evolve_shared_grid(energies, n_t, pulses, psi0, h, n_steps):
    """RK4 on a time grid shared by all pulses; returns interaction-frame states ``(d, m, B)``."""
    d, m = psi0.shape
    B = len(pulses)
    coeff = drive_coefficients(pulses)
    # pulse index innermost so the per-pulse scale broadcasts contiguously
    z = np.empty((d, m, B), dtype=complex)
    z2 = z.reshape(d, m * B)

    def rhs(t, phi):
        p = np.exp(-1j * TWO_PI * energies * t)
        n_int = n_t * np.outer(p.conj(), p)
        np.matmul(n_int, phi.reshape(d, m * B), out=z2)
        np.multiply(z, (-1j * TWO_PI) * coeff(t), out=z)
        return z

    phi0 = np.repeat(psi0[:, :, None], B, axis=2).astype(complex)
    return rk4(rhs, phi0, 0.0, h, n_steps)


def propagate_batch(
    dressed: DressedModel,
    pulses: Sequence[DrivePulse],
    initial=None,
    dt: float = DEFAULT_DT,
    check_step: bool = True,
    chunk: int = 512,
) -> np.ndarray:
    """Evolve the same initial states under several pulses at once.

    Pulses whose durations share a common grid step ``<= dt`` are integrated
    together; a pulse's drive vanishes once it has ended, so its
    interaction-frame state is frozen from then on. Otherwise each distinct
    duration gets its own grid with step ``duration / ceil(duration / dt)``.

    Parameters
    ----------
    initial : None, int array or complex array
        Dressed indices (default: the eight ``|xyz0>`` states) or state vectors
        as columns of an ``(n_keep, m)`` array.

    Returns
    -------
    ndarray, shape (len(pulses), n_keep, m)
        Final lab-frame states.
    """
    pulses = list(pulses)
    psi0 = _initial_states(dressed, initial)
    if check_step:
        _check_step(dressed, max(p.frequency for p in pulses), dt)
    energies = np.asarray(dressed.energies, dtype=float)
    n_t = np.ascontiguousarray(dressed.n_T_dressed, dtype=complex)
    taus = np.array([p.duration for p in pulses])

    h = common_step(taus, dt)
    if h is not None:
        groups = [np.arange(len(pulses))]
    else:
        groups = [np.flatnonzero(taus == tau) for tau in np.unique(taus)]

    out = np.empty((len(pulses), *psi0.shape), dtype=complex)
    for group in groups:
        for start in range(0, len(group), chunk):
            idx = group[start : start + chunk]
            sub = [pulses[i] for i in idx]
            t_end = taus[idx].max()
            if h is None:
                n_steps = int(np.ceil(t_end / dt - 1e-9))
                step = t_end / n_steps
            else:
                step, n_steps = h, int(round(t_end / h))
            phi = _evolve_shared_grid(energies, n_t, sub, psi0, step, n_steps)
            phase = np.exp(-1j * TWO_PI * np.outer(energies, taus[idx]))
            out[idx] = np.moveaxis(phase[:, None, :] * phi, 2, 0)

    drift = np.abs(np.linalg.norm(out, axis=1) - np.linalg.norm(psi0, axis=0)).max()
    if drift > NORM_TOLERANCE:
        raise StepSizeError(f"norm drift {drift:.2e} exceeds {NORM_TOLERANCE}")
    return out


def propagate(dressed: DressedModel, pulse: DrivePulse, initial=None, dt: float = DEFAULT_DT):
    """Final states ``(n_keep, m)`` after ``pulse``; see :func:`propagate_batch`."""
    return propagate_batch(dressed, [pulse], initial, dt)[0]


@dataclass(frozen=True)
class GateMatrix:
    """Computational-subspace operator after global-phase and virtual-Z correction.

    ``frame_phases`` are the Z angles (F1, F2, F3) applied as ``exp(-i theta bit)``.
    """

    U: np.ndarray
    frame_phases: np.ndarray = field(default_factory=lambda: np.zeros(3))
    global_phase: float = 0.0

    def phase(self, bits: str) -> float:
        """Argument of the diagonal element for a computational state, e.g. ``"110"``."""
        k = int(bits, 2)
        return float(np.angle(self.U[k, k]))

    @property
    def conditional_phases(self) -> dict[str, float]:
        return {b: self.phase(b) for b in ("011", "101", "110", "111")}


def _bits() -> np.ndarray:
    return np.array(COMPUTATIONAL, dtype=float)


def frame_correct(U: np.ndarray):
    """Remove the global phase and three single-qubit Z phases.

    Works on a single ``(8, 8)`` matrix or a stack ``(..., 8, 8)``. Returns the
    corrected matrices, the Z angles ``(..., 3)`` and the global phases.
    """
    U = np.asarray(U, dtype=complex)
    g = np.angle(U[..., 0, 0])
    V = U * np.exp(-1j * g)[..., None, None]
    theta = np.stack([np.angle(V[..., k, k]) for k in (4, 2, 1)], axis=-1)
    z = np.exp(-1j * theta @ _bits().T)  # (..., 8)
    return z[..., :, None] * V, theta, g


def extract_gate(finals: np.ndarray, dressed: DressedModel) -> GateMatrix:
    """Gate matrix from the final states of the eight ``|xyz0>`` inputs.

    ``U_ij = <xyz0_i | psi'_j>`` is frame-corrected; leakage leaves U non-unitary.
    """
    raw = np.asarray(finals)[dressed.computational_indices(0), :]
    return gate_from_matrix(raw)


def gate_from_matrix(raw: np.ndarray) -> GateMatrix:
    if abs(raw[0, 0]) < 1e-3:
        raise DegenerateGateError("|U_00| < 1e-3; global phase is undefined")
    U, theta, g = frame_correct(raw)
    return GateMatrix(U, theta, float(g))


def leakage(finals: np.ndarray, dressed: DressedModel) -> float:
    """Average population leaving the eight ``|xyz0>`` states."""
    proj = np.asarray(finals)[dressed.computational_indices(0), :]
    return float(1.0 - np.sum(np.abs(proj) ** 2) / proj.shape[1])


def ccphase(phi: float) -> np.ndarray:
    """Phase ``phi`` on ``|111>``; ``ccphase(pi)`` is CCZ."""
    out = np.eye(8, dtype=complex)
    out[7, 7] = np.exp(1j * phi)
    return out


def ccphase_star(phi: float) -> np.ndarray:
    """``I - |000><000| (1 - exp(i phi))``."""
    out = np.eye(8, dtype=complex)
    out[0, 0] = np.exp(1j * phi)
    return out


def ccz() -> np.ndarray:
    return ccphase(np.pi)


def pauli_basis(n_qubits: int = 3) -> tuple[list[str], np.ndarray]:
    """Pauli strings in lexicographic I, X, Y, Z order (first qubit most significant)."""
    names, mats = [], []
    for combo in itertools.product("IXYZ", repeat=n_qubits):
        m = np.ones((1, 1), dtype=complex)
        for c in combo:
            m = np.kron(m, PAULIS[c])
        names.append("".join(combo))
        mats.append(m)
    return names, np.array(mats)


_PAULI3 = pauli_basis(3)[1]


def to_ptm(gate) -> np.ndarray:
    """``R_PQ = Tr(P U Q U^dag) / 8`` for the map ``rho -> U rho U^dag``."""
    U = gate.U if isinstance(gate, GateMatrix) else np.asarray(gate, dtype=complex)
    images = U[None] @ _PAULI3 @ U.conj().T[None]
    R = np.einsum("pab,qba->pq", _PAULI3, images) / U.shape[0]
    return R.real


def process_fidelity(R: np.ndarray, R_ideal: np.ndarray) -> float:
    """``(Tr(R_ideal^dag R) + d) / (d (d + 1))`` with ``d = 2**n``."""
    d = int(round(np.sqrt(R.shape[0])))
    return float((np.trace(R_ideal.conj().T @ R).real + d) / (d * (d + 1)))


def unitary_fidelity(U: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Same value as ``process_fidelity(to_ptm(U), to_ptm(target))`` via ``|Tr(V^dag U)|^2``.

    Accepts stacks of matrices.
    """
    d = target.shape[-1]
    overlap = np.einsum("ij,...ij->...", target.conj(), U)
    return (np.abs(overlap) ** 2 + d) / (d * (d + 1))


@dataclass(frozen=True)
class TwoLevelSweep:
    detunings: np.ndarray
    population: np.ndarray
    phase: np.ndarray


def two_level_2pi_amplitude(duration: float, sigma_ratio: float = SIGMA_RATIO) -> float:
    """Envelope amplitude giving a full rotation of ``-(delta/2) sz + Omega(t) sx`` at delta = 0.

    The rotation angle is ``4 pi int Omega dt``, so the area must equal 1/2.
    """
    return 0.5 / area_per_amplitude(duration, sigma_ratio)


def two_level_sweep(pulse: DrivePulse, detunings, dt: float = 0.001) -> TwoLevelSweep:
    """Response of ``H/h = -(delta/2) sigma_z + Omega(t) sigma_x`` to one pulse.

    ``pulse.amplitude`` is the peak scale of ``Omega`` (its carrier frequency is
    ignored). Starting in the ``sigma_z = +1`` state, returns the excited-state
    population and the phase of the ground amplitude relative to free
    evolution ``exp(+i pi delta tau)``, wrapped to ``(-pi, pi]``.
    """
    delta = np.atleast_1d(np.asarray(detunings, dtype=float))
    n_steps = int(np.ceil(pulse.duration / dt - 1e-9))
    h = pulse.duration / n_steps

    def rhs(t, phi):
        om = gaussian_envelope(pulse, t)
        rot = np.exp(-1j * TWO_PI * delta * t)
        return (-1j * TWO_PI * om) * np.stack([rot * phi[1], rot.conj() * phi[0]])

    phi0 = np.zeros((2, len(delta)), dtype=complex)
    phi0[0] = 1.0
    phi = rk4(rhs, phi0, 0.0, h, n_steps)
    return TwoLevelSweep(delta, np.abs(phi[1]) ** 2, np.angle(phi[0]))
