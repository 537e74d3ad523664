"""Two-qudit frequency-bin states: constructors, validation, and entanglement metrics.

A two-qudit state over ``d`` signal bins and ``d`` idler bins is stored as a
``d**2 x d**2`` complex matrix.  The composite basis index for the bin pair
``(k, l)`` (both 1-based) is ``(k - 1) * d + (l - 1)``, i.e. signal-major,
row-major flattening.  Every serialized matrix in this package uses the same
convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    LambdaOutOfRangeError,
    NotHermitianError,
    NotPSDError,
    NotUnitTraceError,
    NumericalFailureError,
)

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = -1e-10


@dataclass(frozen=True)
class FrequencyGrid:
    """Frequency-bin layout of a biphoton comb.

    Signal bin ``k`` sits at ``omega0 + (k + B) * delta_omega`` and idler bin
    ``l`` at ``omega0 - (l + B) * delta_omega`` for ``k, l`` in ``1..d``.  ``B``
    counts the blocked bins between the innermost signal/idler bins and the
    spectral center.

    Attributes:
        d: qudit dimension (bins per photon), at least 2.
        B: number of blocked central bins, non-negative.
        delta_omega: angular bin spacing in rad/s.
        omega0: angular reference frequency in rad/s (informational).
    """

    d: int
    B: int = 0
    delta_omega: float = 2.0 * math.pi * 40e9
    omega0: float = 0.0

    def __post_init__(self):
        if self.d < 2:
            raise DimensionMismatchError(f"qudit dimension must be >= 2, got {self.d}")
        if self.B < 0:
            raise DimensionMismatchError(f"blocked-bin offset must be >= 0, got {self.B}")
        if not (self.delta_omega > 0):
            raise DimensionMismatchError("bin spacing delta_omega must be positive")

    def signal_frequency(self, k: int) -> float:
        """Center frequency (rad/s) of signal bin ``k`` in 1..d."""
        return self.omega0 + (k + self.B) * self.delta_omega

    def idler_frequency(self, l: int) -> float:
        """Center frequency (rad/s) of idler bin ``l`` in 1..d."""
        return self.omega0 - (l + self.B) * self.delta_omega


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DensityMatrix:
    """Validated Hermitian, unit-trace, positive-semidefinite matrix.

    Instances are produced by :func:`make_density`, which enforces the three
    invariants; the stored array is read-only.  ``dim`` equals ``d**2`` for
    two-qudit states but any dimension >= 2 is accepted.
    """

    dim: int
    elements: np.ndarray = field(repr=False)

    @property
    def matrix(self) -> np.ndarray:
        return self.elements


@dataclass(frozen=True)
class PureState:
    """Unit-norm state vector over ``dim`` basis modes."""

    dim: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amp = np.ascontiguousarray(self.amplitudes, dtype=complex)
        if amp.ndim != 1 or amp.size != self.dim:
            raise DimensionMismatchError(
                f"amplitude vector has shape {amp.shape}, expected ({self.dim},)"
            )
        norm = np.linalg.norm(amp)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state vector norm deviates from 1 by {abs(norm - 1.0):.3e}")
        object.__setattr__(self, "amplitudes", _readonly(amp))

    def projector(self) -> np.ndarray:
        """Rank-1 projector |psi><psi| as a plain array."""
        return np.outer(self.amplitudes, self.amplitudes.conj())


@dataclass(frozen=True)
class DispersionConfig:
    """Quadratic spectral phase accumulated in optical fiber.

    ``beta2`` is the group-velocity dispersion in ps^2/m and ``length`` the
    fiber length in m.  With ``include_offset`` the phase grows as
    ``(m + B)**2`` (bins indexed from the spectral center); without it, as
    ``m**2`` (offset-free indexing).  The two differ by a linear-in-m phase.
    """

    beta2: float = 2.06e-2
    length: float = 20.0
    include_offset: bool = True

    def __post_init__(self):
        if self.length < 0:
            raise ValueError(f"fiber length must be >= 0, got {self.length}")


def make_density(elements) -> DensityMatrix:
    """Validate a square matrix as a physical density matrix.

    Checks Hermiticity (max deviation <= 1e-12 relative to |trace|), unit
    trace (|tr - 1| <= 1e-12), and positive semidefiniteness (minimum
    eigenvalue >= -1e-10).  The error message names the violated invariant
    and its magnitude.

    Raises:
        DimensionMismatchError: input is not a square 2-D matrix.
        NotHermitianError, NotUnitTraceError, NotPSDError: invariant violated.
    """
    mat = np.ascontiguousarray(elements, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {mat.shape}")
    dim = mat.shape[0]

    trace = mat.trace()
    scale = max(abs(trace), 1.0)
    herm_dev = np.abs(mat - mat.conj().T).max()
    if herm_dev > HERMITICITY_TOL * scale:
        raise NotHermitianError(
            f"max |rho - rho^dagger| = {herm_dev:.3e} exceeds {HERMITICITY_TOL:.0e} * |trace|"
        )
    trace_dev = abs(trace - 1.0)
    if trace_dev > TRACE_TOL:
        raise NotUnitTraceError(f"|trace - 1| = {trace_dev:.3e} exceeds {TRACE_TOL:.0e}")

    try:
        eigmin = float(np.linalg.eigvalsh(mat).min())
    except np.linalg.LinAlgError as exc:  # pragma: no cover - eigh on Hermitian rarely fails
        raise NumericalFailureError(f"eigendecomposition failed: {exc}") from exc
    if eigmin < PSD_TOL:
        raise NotPSDError(f"minimum eigenvalue {eigmin:.3e} below tolerance {PSD_TOL:.0e}")

    return DensityMatrix(dim=dim, elements=_readonly(mat))


def maximally_entangled(grid: FrequencyGrid, alphas=None) -> PureState:
    """Maximally entangled two-qudit state with per-pair phases.

    Returns the vector with amplitude ``exp(1j * alphas[m-1]) / sqrt(d)`` on
    the energy-matched pair ``(m, m)`` and zero elsewhere.  ``alphas=None``
    means uniform (zero) phases.

    Raises:
        DimensionMismatchError: ``alphas`` does not have length ``d``.
    """
    d = grid.d
    if alphas is None:
        alphas = np.zeros(d)
    alphas = np.asarray(alphas, dtype=float)
    if alphas.shape != (d,):
        raise DimensionMismatchError(
            f"phase vector has shape {alphas.shape}, expected ({d},)"
        )
    amp = np.zeros(d * d, dtype=complex)
    idx = np.arange(d) * d + np.arange(d)
    amp[idx] = np.exp(1j * alphas) / math.sqrt(d)
    return PureState(dim=d * d, amplitudes=amp)


def dispersion_phases(grid: FrequencyGrid, cfg: DispersionConfig) -> np.ndarray:
    """Per-pair spectral phases from fiber dispersion, in rad.

    ``alpha_m = beta2 * L * delta_omega**2 * (m + B)**2`` with ``delta_omega``
    converted to rad/ps so the units close against beta2 in ps^2/m.  With
    ``include_offset=False`` the ``(m + B)**2`` factor becomes ``m**2``.
    """
    m = np.arange(1, grid.d + 1, dtype=float)
    if cfg.include_offset:
        m = m + grid.B
    dw_rad_per_ps = grid.delta_omega * 1e-12
    return cfg.beta2 * cfg.length * dw_rad_per_ps**2 * m**2


def white_noise_state(psi: PureState, lam: float) -> DensityMatrix:
    """Mixture ``lam * |psi><psi| + (1 - lam) * I / dim``.

    Raises:
        LambdaOutOfRangeError: ``lam`` outside [0, 1].
    """
    if not (0.0 <= lam <= 1.0):
        raise LambdaOutOfRangeError(f"mixing weight must be in [0, 1], got {lam}")
    dim = psi.dim
    rho = lam * psi.projector() + (1.0 - lam) / dim * np.eye(dim)
    return make_density(rho)


def lambda_for_car(car: float, d: int) -> float:
    """White-noise weight giving a target coincidence-to-accidental ratio.

    Inverts ``CAR = 1 + d * lam / (1 - lam)`` for the unmodulated joint
    spectrum of ``lam |Psi><Psi| + (1 - lam) I / d**2``.
    """
    if car < 1.0:
        raise ValueError(f"CAR must be >= 1, got {car}")
    if math.isinf(car):
        return 1.0
    return (car - 1.0) / (car - 1.0 + d)


def car_for_lambda(lam: float, d: int) -> float:
    """Coincidence-to-accidental ratio of the white-noise mixture."""
    if not (0.0 <= lam <= 1.0):
        raise LambdaOutOfRangeError(f"mixing weight must be in [0, 1], got {lam}")
    if lam == 1.0:
        return math.inf
    return 1.0 + d * lam / (1.0 - lam)


def fidelity_pure(rho: DensityMatrix, psi: PureState) -> float:
    """Overlap ``<psi| rho |psi>`` as a real number in [0, 1]."""
    if rho.dim != psi.dim:
        raise DimensionMismatchError(
            f"state dimensions differ: rho {rho.dim}, psi {psi.dim}"
        )
    val = complex(psi.amplitudes.conj() @ rho.elements @ psi.amplitudes)
    if abs(val.imag) >= 1e-10:
        raise NumericalFailureError(f"fidelity has imaginary part {val.imag:.3e}")
    return float(val.real)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(mat)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def uhlmann_fidelity(rho1: DensityMatrix, rho2: DensityMatrix) -> float:
    """Fidelity ``(tr sqrt(sqrt(rho1) rho2 sqrt(rho1)))**2``.

    Symmetric in its arguments to ~1e-8 and equal to the squared overlap for
    pure inputs.

    Raises:
        DimensionMismatchError: dimensions differ.
        NumericalFailureError: eigendecomposition did not converge.
    """
    if rho1.dim != rho2.dim:
        raise DimensionMismatchError(
            f"state dimensions differ: {rho1.dim} vs {rho2.dim}"
        )
    try:
        s1 = _psd_sqrt(rho1.elements)
        inner = s1 @ rho2.elements @ s1
        w = np.linalg.eigvalsh(inner)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"eigendecomposition failed: {exc}") from exc
    val = float(np.sqrt(np.clip(w, 0.0, None)).sum() ** 2)
    return min(val, 1.0) if val <= 1.0 + 1e-9 else val


def partial_transpose(rho: DensityMatrix, d: int) -> np.ndarray:
    """Transpose on the idler subsystem of a two-qudit state.

    ``out[(k,l),(k',l')] = rho[(k,l'),(k',l)]``; the result is Hermitian and
    applying the map twice returns the input.

    Raises:
        DimensionMismatchError: ``rho.dim != d**2``.
    """
    if rho.dim != d * d:
        raise DimensionMismatchError(f"rho.dim = {rho.dim} is not {d}**2")
    r4 = rho.elements.reshape(d, d, d, d)
    return np.ascontiguousarray(r4.transpose(0, 3, 2, 1).reshape(d * d, d * d))


def log_negativity(rho: DensityMatrix, d: int) -> float:
    """Entanglement in ebits: log2 of the trace norm of the partial transpose.

    Zero for states whose partial transpose stays positive (in particular all
    separable states); up to ``log2(d)`` for a maximally entangled two-qudit
    state.
    """
    pt = partial_transpose(rho, d)
    try:
        w = np.linalg.eigvalsh(pt)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"eigendecomposition failed: {exc}") from exc
    return float(np.log2(np.abs(w).sum()))


def white_noise_fidelity(lam: float, d: int) -> float:
    """Closed-form fidelity of the white-noise mixture: ((d**2-1) lam + 1) / d**2."""
    return ((d * d - 1.0) * lam + 1.0) / (d * d)


def white_noise_log_negativity(lam: float, d: int) -> float:
    """Closed-form log-negativity of the white-noise mixture.

    Zero when the fidelity drops below 1/d, ``log2(d * F)`` above it.
    """
    f = white_noise_fidelity(lam, d)
    if f < 1.0 / d:
        return 0.0
    return math.log2(d * f)
