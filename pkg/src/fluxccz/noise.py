"""Lindblad propagation of the driven model and the resulting decoherence budget.

Master equation, in H/h units with rates in 1/ns::

    drho/dt = -2 pi i [H, rho] + sum_k (L_k rho L_k^dag - {L_k^dag L_k, rho} / 2)

Collapse operators act on the bare 0-1 subspace of one subsystem, are padded
with zeros, and are then rotated into the kept dressed basis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import X3
from .composite import SUBSYSTEMS, DressedModel
from .dynamics import (
    TWO_PI,
    DrivePulse,
    _check_step,
    _PAULI3,
    drive_coefficients,
    frame_correct,
    max_time_step,
    process_fidelity,
    propagate_batch,
    to_ptm,
)

US = 1000.0  # ns per microsecond
TRACE_TOLERANCE = 1e-6
CHOI_TOLERANCE = 1e-6


class IntegrationError(RuntimeError):
    """Density matrices lost trace control or positivity during integration."""


def _times(values) -> tuple:
    if values is None:
        return (None,) * len(SUBSYSTEMS)
    values = tuple(values)
    if len(values) != len(SUBSYSTEMS):
        raise ValueError(f"expected {len(SUBSYSTEMS)} entries (F1, F2, F3, T)")
    return values


@dataclass(frozen=True)
class NoiseModel:
    """Per-subsystem ``T1`` and ``T_phi`` in microseconds, ordered (F1, F2, F3, T).

    ``None`` or ``inf`` disables a channel.
    """

    t1: tuple = (None,) * 4
    t_phi: tuple = (None,) * 4

    def __post_init__(self):
        object.__setattr__(self, "t1", _times(self.t1))
        object.__setattr__(self, "t_phi", _times(self.t_phi))
        for value in self.t1 + self.t_phi:
            if value is not None and not value > 0:
                raise ValueError(f"coherence times must be positive, got {value}")

    @classmethod
    def from_groups(cls, data_t1=None, data_t_phi=None, coupler_t1=None, coupler_t_phi=None):
        """Same times on the three data qubits, separate times on the coupler."""
        return cls((data_t1,) * 3 + (coupler_t1,), (data_t_phi,) * 3 + (coupler_t_phi,))


def _enabled(t) -> bool:
    return t is not None and np.isfinite(t)


# channels of the decoherence budget, each applied alone, then all together
BUDGET_CHANNELS = {
    "data_t1": NoiseModel.from_groups(data_t1=300.0),
    "data_t_phi": NoiseModel.from_groups(data_t_phi=100.0),
    "coupler_t1": NoiseModel.from_groups(coupler_t1=50.0),
    "coupler_t_phi": NoiseModel.from_groups(coupler_t_phi=50.0),
    "all": NoiseModel.from_groups(300.0, 100.0, 50.0, 50.0),
}


def collapse_operators(noise: NoiseModel, dressed: DressedModel) -> list[np.ndarray]:
    """Dressed-basis collapse operators with rates in 1/ns.

    ``|0><1| / sqrt(T1)`` for relaxation and ``sigma_z / sqrt(2 T_phi)`` for pure
    dephasing, both on the bare 0-1 levels of one subsystem.
    """
    lv = dressed.levels
    lower = np.zeros((lv, lv), dtype=complex)
    lower[0, 1] = 1.0
    sz = np.zeros((lv, lv), dtype=complex)
    sz[0, 0], sz[1, 1] = 1.0, -1.0
    ops = []
    for k in range(len(SUBSYSTEMS)):
        if _enabled(noise.t1[k]):
            ops.append(dressed.bare_to_dressed(lower, k) / np.sqrt(noise.t1[k] * US))
        if _enabled(noise.t_phi[k]):
            ops.append(dressed.bare_to_dressed(sz, k) / np.sqrt(2 * noise.t_phi[k] * US))
    return ops


@dataclass(frozen=True)
class Superoperator:
    """Process map on 8x8 computational density matrices.

    ``S[8a + b, 8i + j] = <a| E(|i><j|) |b>``; ``traces[i]`` is the full-space
    trace of ``E(|i><i|)``, which exceeds the computational trace by the leakage.
    """

    S: np.ndarray
    traces: np.ndarray | None = None

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return (self.S @ np.asarray(rho).reshape(-1)).reshape(8, 8)

    def then(self, other: "Superoperator") -> "Superoperator":
        """The map ``other . self``."""
        return Superoperator(other.S @ self.S)

    def frame_corrected(self, theta: np.ndarray) -> "Superoperator":
        """Apply the virtual-Z rotations ``exp(-i theta . bits)`` after the map."""
        bits = np.array([[(k >> s) & 1 for s in (2, 1, 0)] for k in range(8)], dtype=float)
        z = np.exp(-1j * bits @ np.asarray(theta))
        w = np.outer(z, z.conj()).reshape(-1)
        return Superoperator(w[:, None] * self.S, self.traces)

    def choi(self) -> np.ndarray:
        return self.S.reshape(8, 8, 8, 8).transpose(2, 0, 3, 1).reshape(64, 64)

    def ptm(self) -> np.ndarray:
        """``R_PQ = Tr(P E(Q)) / 8``."""
        rows = np.transpose(_PAULI3, (0, 2, 1)).reshape(64, 64)
        cols = _PAULI3.reshape(64, 64).T
        return (rows @ self.S @ cols).real / 8


def unitary_superoperator(U: np.ndarray) -> Superoperator:
    U = np.asarray(U, dtype=complex)
    return Superoperator(np.kron(U, U.conj()))


def permutation_superoperator(perm: np.ndarray) -> Superoperator:
    P = np.eye(8, dtype=complex)[perm]
    return unitary_superoperator(P)


def _matrix_units(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i, n)]


class _LindbladRHS:
    """Right-hand side pieces for matrix units stored as one ``(d, u, d)`` array.

    ``coherent`` is the drive plus the anticommutator, ``jumps`` the sum of
    ``L rho L^dag``, both in the interaction frame. Collapse operators are real
    in the lab frame, so the jump term runs there as real GEMMs on the real and
    imaginary parts.
    """

    def __init__(self, energies, n_t, coeff, collapse, u):
        self.energies = energies
        self.n_t = n_t
        self.coeff = coeff
        d = len(energies)
        self.d, self.u = d, u
        ls = np.array(collapse, dtype=complex).reshape(-1, d, d)
        self.n_c = len(ls)
        if self.n_c and np.abs(ls.imag).max() > 1e-12:
            raise ValueError("collapse operators must be real in the dressed basis")
        lr = np.ascontiguousarray(ls.real)
        self.gamma = 0.5 * np.einsum("kca,kcb->ab", lr, lr)
        self.l_t = np.ascontiguousarray(lr.transpose(0, 2, 1))[None]  # (1, K, d, d)
        self.l_cat = np.ascontiguousarray(lr.transpose(1, 0, 2).reshape(d, self.n_c * d))
        self.out = np.empty((d, u, d), dtype=complex)

    def phase(self, t):
        p = np.exp(-1j * TWO_PI * self.energies * t)
        return np.outer(p.conj(), p)

    def coherent(self, t, rho):
        d, u = self.d, self.u
        ph = self.phase(t)
        k_eff = (-1j * TWO_PI * self.coeff(t)[0]) * (self.n_t * ph)
        if self.n_c:
            k_eff -= self.gamma * ph
        out = self.out
        np.matmul(k_eff, rho.reshape(d, u * d), out=out.reshape(d, u * d))
        out.reshape(d * u, d)[...] += rho.reshape(d * u, d) @ k_eff.conj().T
        return out

    def jumps(self, t, rho):
        d, u, n_c = self.d, self.u, self.n_c
        ph = self.phase(t)[:, None, :]
        lab = rho * ph.conj()
        parts = np.stack([lab.real, lab.imag]).reshape(2, 1, d * u, d)
        v = np.matmul(parts, self.l_t)  # (2, K, d*u, d)
        w = (self.l_cat @ v.reshape(2, n_c * d, u * d)).reshape(2, d, u, d)
        return (w[0] + 1j * w[1]) * ph


def _integrate(rhs: _LindbladRHS, rho, h, n_steps):
    """RK4 for the coherent part; the jump term enters as a per-step source
    evaluated once at the step midpoint."""
    rho = rho.copy()
    for step in range(n_steps):
        t = step * h
        k1 = rhs.coherent(t, rho).copy()
        src = rhs.jumps(t + 0.5 * h, rho + (0.5 * h) * k1) if rhs.n_c else 0.0
        k1 += src
        k2 = rhs.coherent(t + 0.5 * h, rho + (0.5 * h) * k1) + src
        k3 = rhs.coherent(t + 0.5 * h, rho + (0.5 * h) * k2) + src
        k4 = rhs.coherent(t + h, rho + h * k3) + src
        rho += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    return rho


def evolve_density(
    dressed: DressedModel,
    pulse: DrivePulse,
    collapse: list[np.ndarray],
    rho0: np.ndarray,
    dt: float | None = None,
    check_step: bool = True,
) -> np.ndarray:
    """Evolve operators ``rho0`` of shape ``(d, u, d)`` (u stacked d x d matrices).

    Returns the lab-frame result after the pulse, same layout.
    """
    dt = dt or max_time_step(dressed, pulse.frequency)
    if check_step:
        _check_step(dressed, pulse.frequency, dt)
    energies = np.asarray(dressed.energies, dtype=float)
    rho0 = np.asarray(rho0, dtype=complex)
    n_steps = int(np.ceil(pulse.duration / dt - 1e-9))
    h = pulse.duration / n_steps
    rhs = _LindbladRHS(
        energies,
        np.asarray(dressed.n_T_dressed, dtype=complex),
        drive_coefficients([pulse]),
        collapse,
        rho0.shape[1],
    )
    rho = _integrate(rhs, rho0, h, n_steps)
    p_end = np.exp(-1j * TWO_PI * energies * pulse.duration)
    return rho * p_end[:, None, None] * p_end.conj()[None, None, :]


def lindblad_propagate(
    dressed: DressedModel,
    pulse: DrivePulse,
    collapse: list[np.ndarray],
    dt: float | None = None,
    check_step: bool = True,
) -> Superoperator:
    """Evolve the 36 matrix units ``|i><j|`` (i <= j) of the computational states.

    The other 28 follow from ``E(|j><i|) = E(|i><j|)^dag``. Integration runs in
    the interaction frame of the static Hamiltonian with fixed-step RK4.

    Raises
    ------
    IntegrationError
        If a diagonal unit gains trace by more than 1e-6 or the Choi matrix has
        an eigenvalue below -1e-6.
    """
    d = dressed.n_keep
    comp = dressed.computational_indices(0)
    pairs = _matrix_units(len(comp))
    rho0 = np.zeros((d, len(pairs), d), dtype=complex)
    for k, (i, j) in enumerate(pairs):
        rho0[comp[i], k, comp[j]] = 1.0
    lab = evolve_density(dressed, pulse, collapse, rho0, dt, check_step)

    S = np.empty((8, 8, 8, 8), dtype=complex)  # (a, b, i, j)
    traces = np.empty(8)
    for k, (i, j) in enumerate(pairs):
        block = lab[:, k, :]
        S[:, :, i, j] = block[np.ix_(comp, comp)]
        S[:, :, j, i] = block[np.ix_(comp, comp)].conj().T
        if i == j:
            traces[i] = np.trace(block).real
    sup = Superoperator(S.reshape(64, 64), traces)
    _validate(sup)
    return sup


def _validate(sup: Superoperator) -> None:
    excess = sup.traces.max() - 1.0
    if excess > TRACE_TOLERANCE:
        raise IntegrationError(f"trace increased by {excess:.2e}")
    choi = sup.choi()
    low = np.linalg.eigvalsh(0.5 * (choi + choi.conj().T)).min()
    if low < -CHOI_TOLERANCE:
        raise IntegrationError(f"Choi matrix eigenvalue {low:.2e} < -{CHOI_TOLERANCE}")


def noisy_fidelity(channel, ideal: np.ndarray) -> float:
    """Process fidelity of a :class:`Superoperator` or PTM against an ideal PTM."""
    R = channel.ptm() if isinstance(channel, Superoperator) else np.asarray(channel)
    return process_fidelity(R, ideal)


def noiseless_frame(dressed: DressedModel, pulses, dt: float | None = None):
    """Raw computational blocks of each pulse on ``dressed`` (no noise)."""
    raws = []
    for pulse in pulses:
        h = dt or max_time_step(dressed, pulse.frequency)
        finals = propagate_batch(dressed, [pulse], dt=h)[0]
        raws.append(finals[dressed.computational_indices(0), :])
    return raws


def sequence_superoperator(
    dressed: DressedModel, pulses, noise: NoiseModel | None, dt: float | None = None
) -> Superoperator:
    """Channel of one pulse, or of the two-pulse sequence (pulse_b, X3, pulse_a, X3).

    ``pulses`` is ``[pulse]`` or ``[pulse_b, pulse_a]``; X rotations are ideal.
    """
    collapse = collapse_operators(noise, dressed) if noise is not None else []
    maps = [lindblad_propagate(dressed, p, collapse, dt) for p in pulses]
    if len(maps) == 1:
        return maps[0]
    x = permutation_superoperator(X3)
    total = maps[0].then(x).then(maps[1]).then(x)
    return Superoperator(total.S, maps[0].traces)


def decoherence_budget(
    dressed: DressedModel,
    pulses,
    ideal: np.ndarray,
    channels: dict[str, NoiseModel] | None = None,
    dt: float | None = None,
) -> dict[str, float]:
    """Noiseless fidelity and the fidelity drop of each noise channel.

    Frame corrections are taken from the noiseless gate and held fixed, so
    every ``Delta F`` is measured in the same frame. Keys are ``"noiseless"``
    and the channel names; drops are fractions (not percent).
    """
    channels = BUDGET_CHANNELS if channels is None else channels
    pulses = list(pulses)
    raws = noiseless_frame(dressed, pulses, dt)
    if len(raws) == 1:
        raw = raws[0]
    else:
        raw = raws[1][np.ix_(X3, X3)] @ raws[0]
    _, theta, _ = frame_correct(raw)
    R_ideal = to_ptm(ideal)
    base = unitary_superoperator(raw).frame_corrected(theta)
    f0 = noisy_fidelity(base, R_ideal)
    out = {"noiseless": f0}
    for name, model in channels.items():
        sup = sequence_superoperator(dressed, pulses, model, dt).frame_corrected(theta)
        out[name] = f0 - noisy_fidelity(sup, R_ideal)
    return out

