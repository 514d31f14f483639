"""Eigenproblems of isolated fluxonium and transmon circuits.

All energies are H/h in GHz. Both solvers return eigenvectors in a gauge where
the phase-basis wavefunctions are real, so charge matrix elements are purely
imaginary and flux matrix elements are real. Products of two charge operators
are then real, which keeps the composite Hamiltonian real symmetric.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigsh

# 4th-order central-difference stencils
_D2 = (-5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0)
_D1 = (2.0 / 3.0, -1.0 / 12.0)

EDGE_TOLERANCE = 1e-8


class GridError(ValueError):
    """The basis (phase grid or charge cutoff) does not contain the states."""


@dataclass(frozen=True)
class FluxoniumParams:
    """Fluxonium energies in GHz; ``phi_ext`` is the reduced external flux in radians.

    ``phi_ext = pi`` is the half-flux-quantum degeneracy point.
    """

    E_C: float
    E_L: float
    E_J: float
    phi_ext: float = np.pi

    def __post_init__(self):
        for name in ("E_C", "E_L", "E_J"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive and finite, got {value}")
        if not np.isfinite(self.phi_ext):
            raise ValueError("phi_ext must be finite")


@dataclass(frozen=True)
class TransmonParams:
    E_C: float
    E_J: float

    def __post_init__(self):
        for name in ("E_C", "E_J"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive and finite, got {value}")


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform grid on ``[-phi_max, phi_max]`` used for the fluxonium."""

    phi_max: float = 8 * np.pi
    n_points: int = 2001

    def __post_init__(self):
        if self.phi_max < 6 * np.pi - 1e-12:
            raise GridError("phase grid must span at least [-6*pi, 6*pi]")
        if self.n_points < 1001:
            raise GridError("phase grid needs at least 1001 points")

    @property
    def points(self) -> np.ndarray:
        return np.linspace(-self.phi_max, self.phi_max, self.n_points)

    @property
    def spacing(self) -> float:
        return 2 * self.phi_max / (self.n_points - 1)

    def refined(self) -> "PhaseGrid":
        return PhaseGrid(self.phi_max, 2 * self.n_points - 1)


@dataclass(frozen=True)
class SubsystemSolution:
    """Spectrum and operator matrix elements of one circuit in its eigenbasis.

    Attributes
    ----------
    energies : ndarray, shape (n_levels,)
        Eigenenergies in GHz with the ground state at zero.
    n_matrix : ndarray, shape (n_levels, n_levels)
        Charge operator ``<i|n|j>`` (purely imaginary in the real-wavefunction gauge).
    phi_matrix : ndarray, shape (n_levels, n_levels)
        Phase operator ``<i|phi|j>``.
    """

    energies: np.ndarray
    n_matrix: np.ndarray
    phi_matrix: np.ndarray
    kind: str = field(default="", compare=False)

    @property
    def n_levels(self) -> int:
        return len(self.energies)

    @property
    def f01(self) -> float:
        return float(self.energies[1] - self.energies[0])

    @property
    def anharmonicity(self) -> float:
        """``(E2 - E1) - (E1 - E0)``; needs at least three levels."""
        return float(self.energies[2] - 2 * self.energies[1] + self.energies[0])


def _banded(offsets_values, n):
    diags, offs = [], []
    for k, val in offsets_values:
        diags.append(val if np.ndim(val) else np.full(n - abs(k), val))
        offs.append(k)
    return sparse.diags(diags, offs, shape=(n, n), format="csc")


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # deterministic sign: largest-magnitude entry positive
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _lowest_eigenpairs(h: sparse.spmatrix, k: int, shift: float):
    n = h.shape[0]
    v0 = np.ones(n) / np.sqrt(n)
    w, v = eigsh(h, k=k, sigma=shift, which="LM", v0=v0, tol=0)
    order = np.argsort(w)
    return w[order], v[:, order]


def solve_fluxonium(
    params: FluxoniumParams, n_levels: int = 10, grid: PhaseGrid | None = None
) -> SubsystemSolution:
    """Diagonalize ``4 E_C n^2 + E_J (1 - cos phi) + E_L (phi - phi_ext)^2 / 2``.

    The phase axis is discretized with 4th-order central differences, giving a
    pentadiagonal matrix solved by shift-invert Lanczos. ``n = -i d/dphi`` uses
    the matching 4th-order first-derivative stencil.

    Raises
    ------
    GridError
        If the ground-state wavefunction has amplitude above 1e-8 at the grid edge.
    """
    if n_levels < 2:
        raise ValueError("n_levels must be at least 2")
    grid = grid or PhaseGrid()
    x, h, npts = grid.points, grid.spacing, grid.n_points
    potential = params.E_J * (1 - np.cos(x)) + 0.5 * params.E_L * (x - params.phi_ext) ** 2
    kin = -4 * params.E_C / h**2
    ham = _banded(
        [(0, potential + kin * _D2[0])]
        + [(s * j, kin * _D2[j]) for j in (1, 2) for s in (1, -1)],
        npts,
    )
    energies, vecs = _lowest_eigenpairs(ham, n_levels, potential.min() - 1.0)
    vecs = _fix_signs(vecs)

    # continuum normalization: psi(x) = v / sqrt(h)
    edge = np.abs(vecs[[0, -1], 0]).max() / np.sqrt(h)
    if edge > EDGE_TOLERANCE:
        raise GridError(f"fluxonium ground state reaches the grid edge (|psi|={edge:.2e})")

    deriv = _banded([(s * j, s * _D1[j - 1] / h) for j in (1, 2) for s in (1, -1)], npts)
    d_matrix = vecs.T @ (deriv @ vecs)
    d_matrix = 0.5 * (d_matrix - d_matrix.T)
    phi_matrix = vecs.T @ (x[:, None] * vecs)
    phi_matrix = 0.5 * (phi_matrix + phi_matrix.T)
    return SubsystemSolution(
        energies=energies - energies[0],
        n_matrix=-1j * d_matrix,
        phi_matrix=phi_matrix.astype(complex),
        kind="fluxonium",
    )


def solve_transmon(
    params: TransmonParams, n_levels: int = 10, charge_cutoff: int = 30
) -> SubsystemSolution:
    """Diagonalize ``4 E_C n^2 + E_J (1 - cos phi)`` in the charge basis ``|n| <= cutoff``.

    ``cos phi`` is the symmetric nearest-neighbour hopping ``(|n><n+1| + h.c.)/2``.
    Eigenstates of odd parity are multiplied by ``-i`` so that their phase-basis
    wavefunctions are real; the phase operator uses the Fourier representation of
    ``phi`` on ``(-pi, pi]``.
    """
    if n_levels < 2:
        raise ValueError("n_levels must be at least 2")
    if charge_cutoff < 20:
        raise GridError("charge_cutoff must be at least 20")
    charges = np.arange(-charge_cutoff, charge_cutoff + 1)
    dim = len(charges)
    if n_levels > dim:
        raise ValueError("n_levels exceeds the charge-basis dimension")
    ham = (
        np.diag(4 * params.E_C * charges**2 + params.E_J)
        - 0.5 * params.E_J * (np.eye(dim, k=1) + np.eye(dim, k=-1))
    )
    energies, vecs = np.linalg.eigh(ham)
    energies, vecs = energies[:n_levels], _fix_signs(vecs[:, :n_levels])

    edge = np.abs(vecs[[0, -1], 0]).max()
    if edge > EDGE_TOLERANCE:
        raise GridError(f"transmon ground state reaches the charge cutoff (|c|={edge:.2e})")

    parity = np.sign(np.sum(vecs * vecs[::-1], axis=0))
    gauge = np.where(parity < 0, -1j, 1.0)
    cvecs = vecs * gauge

    n_matrix = cvecs.conj().T @ (charges[:, None] * cvecs)
    diff = charges[:, None] - charges[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        phi_charge = np.where(diff == 0, 0.0, 1j * (-1.0) ** np.abs(diff) / diff)
    phi_matrix = cvecs.conj().T @ phi_charge @ cvecs
    n_matrix = 1j * n_matrix.imag
    n_matrix = 0.5 * (n_matrix + n_matrix.conj().T)
    phi_matrix = (0.5 * (phi_matrix + phi_matrix.conj().T)).real.astype(complex)
    return SubsystemSolution(
        energies=energies - energies[0],
        n_matrix=n_matrix,
        phi_matrix=phi_matrix,
        kind="transmon",
    )
