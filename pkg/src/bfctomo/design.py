"""Measurement-design analysis: weak mixers, phase ramps, band probing, and
singular-value studies of randomized measurement maps.

The analysis works on a single qudit occupying ``d`` bins.  A weak
translation-invariant mixer coupling bins ``k`` apart exposes (to first
order) the real parts of the density-matrix elements on the ``k``-th
diagonal; preceding it with a phase ramp built from a ``k``-th root of the
imaginary unit rotates the probe onto the imaginary parts.  The modulator
operator generalizes the mixer: it couples bins with Bessel weights and
effective reach ``ceil(delta)``, so modulation indices spread over
``[0, delta_max]`` with ``delta_max`` of order ``d`` probe independent
linear combinations of every band of the matrix.  Singular-value histograms
of randomly drawn measurement maps quantify that coverage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BandOutOfRangeError, DimensionMismatchError, InvalidArgumentsError
from .measurement import (
    MeasurementMatrix,
    MeasurementSetting,
    measurement_matrix,
    singular_spectrum,
    transfer_matrices,
)

HIST_BINS = 60
HIST_RANGE = (-6.0, 1.0)


@dataclass(frozen=True)
class BandProbe:
    """Weak probe of the ``k``-th diagonal with mixing strength ``epsilon``."""

    k: int
    epsilon: float

    def __post_init__(self):
        if self.k < 1:
            raise BandOutOfRangeError(f"band index must be >= 1, got {self.k}")
        if not (self.epsilon > 0):
            raise InvalidArgumentsError(f"epsilon must be > 0, got {self.epsilon}")
        if self.epsilon > 0.1:
            raise InvalidArgumentsError(
                f"epsilon = {self.epsilon} is outside the linearization regime (<= 0.1)"
            )


@dataclass(frozen=True)
class DesignStudy:
    """Monte-Carlo study of the measurement-map singular spectrum.

    Each trial draws ``R`` settings with modulation index uniform on
    ``[0, delta_max]`` and uniform phases, builds the single-qudit map, and
    contributes its ``d**2`` singular values to a log10 histogram.
    """

    d: int
    delta_max: float
    R: int | None = None  # default 2 d
    trials: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidArgumentsError(f"trials must be >= 1, got {self.trials}")
        if self.d < 2:
            raise InvalidArgumentsError(f"d must be >= 2, got {self.d}")
        if not (self.delta_max > 0):
            raise InvalidArgumentsError(f"delta_max must be > 0, got {self.delta_max}")

    @property
    def settings_per_trial(self) -> int:
        return 2 * self.d if self.R is None else self.R


@dataclass(frozen=True)
class DesignHistogram:
    """Binned log10 singular values pooled over all trials."""

    study: DesignStudy
    bin_edges: np.ndarray
    counts: np.ndarray
    median: float
    tail_fraction: float  # fraction with log10(s) < -2

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def weak_mixer(d: int, k: int, epsilon: float) -> np.ndarray:
    """Weak mixing operator: couples bin ``x`` to ``x +/- k`` with weight ``epsilon``.

    The matrix has 1 on the diagonal, ``+epsilon`` on the ``k``-th
    subdiagonal and ``-epsilon`` on the ``k``-th superdiagonal (columns map
    inputs, so ``|x> -> -eps |x-k> + |x> + eps |x+k>`` truncated to the grid).
    Unitarity holds up to O(epsilon^2).

    Raises:
        BandOutOfRangeError: ``k`` outside ``1..d-1``.
    """
    if not (1 <= k <= d - 1):
        raise BandOutOfRangeError(f"band index must be in 1..{d - 1}, got {k}")
    s = np.eye(d)
    idx = np.arange(d - k)
    s[idx, idx + k] = -epsilon  # row x-k, column x
    s[idx + k, idx] = epsilon   # row x+k, column x
    return s


def phase_ramp(d: int, k: int) -> np.ndarray:
    """Diagonal ramp ``diag(w^x)`` with ``w = exp(1j pi / (2 k))``, x = 1..d.

    ``w**(+-k) = +-1j``, so conjugating a state by the ramp rotates the
    ``k``-th diagonal by a quarter turn, swapping the roles of its real and
    imaginary parts in a subsequent weak-mixing probe.
    """
    if k < 1:
        raise BandOutOfRangeError(f"band index must be >= 1, got {k}")
    w = np.exp(1j * np.pi / (2.0 * k))
    return np.diag(w ** np.arange(1, d + 1))


def band_probe_predictions(rho: np.ndarray, probe: BandProbe):
    """Exact and linearized outcome probabilities of the two band probes.

    Returns ``(p0, pk, pk_prime, lin_pk, lin_pk_prime)`` where ``p0`` is the
    unprobed bin distribution, ``pk`` the distribution after the weak mixer,
    and ``pk_prime`` after phase ramp plus mixer.  The linearized forms are

        lin_pk[x]       = rho[x, x] + 2 eps (Re rho[x-k, x] - Re rho[x, x+k])
        lin_pk_prime[x] = rho[x, x] + 2 eps (Im rho[x-k, x] - Im rho[x, x+k])

    with out-of-range terms dropped; they differ from the exact values at
    O(epsilon^2).
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {rho.shape}")
    d = rho.shape[0]
    k, eps = probe.k, probe.epsilon
    if not (1 <= k <= d - 1):
        raise BandOutOfRangeError(f"band index must be in 1..{d - 1}, got {k}")

    s = weak_mixer(d, k, eps)
    ramp = phase_ramp(d, k)
    p0 = np.diagonal(rho).real.copy()
    pk = np.diagonal(s @ rho @ s.conj().T).real.copy()
    rho_ramped = ramp @ rho @ ramp.conj().T
    pk_prime = np.diagonal(s @ rho_ramped @ s.conj().T).real.copy()

    lower = np.zeros(d)  # rho[x-k, x], defined for x > k
    upper = np.zeros(d)  # rho[x, x+k], defined for x <= d-k
    lower_im = np.zeros(d)
    upper_im = np.zeros(d)
    diag_k = np.diagonal(rho, offset=k)  # rho[x, x+k] for x = 1..d-k
    lower[k:] = diag_k.real
    lower_im[k:] = diag_k.imag
    upper[: d - k] = diag_k.real
    upper_im[: d - k] = diag_k.imag
    lin_pk = p0 + 2.0 * eps * (lower - upper)
    lin_pk_prime = p0 + 2.0 * eps * (lower_im - upper_im)
    return p0, pk, pk_prime, lin_pk, lin_pk_prime


def eom_operator(d: int, delta: float, conjugate_modulation: bool = False) -> np.ndarray:
    """Modulator transfer matrix with all spectral phases zero.

    ``T[x+k, x] = J_k(delta)`` truncated to the grid; shares the convention
    (and implementation) of the signal transfer matrix.
    """
    setting = MeasurementSetting(theta=np.zeros(d), phi=np.zeros(d), delta=delta)
    v, _ = transfer_matrices(setting, d, conjugate_modulation=conjugate_modulation)
    return v


def informational_completeness(matrix: MeasurementMatrix):
    """Numerical rank of the measurement map and whether it determines a state.

    Rank counts singular values above ``1e-10 * s_max``; the map is complete
    iff the rank reaches the full operator-space dimension (``d**2`` rows).
    """
    sv = singular_spectrum(matrix)
    rank = int((sv > 1e-10 * sv[0]).sum()) if sv[0] > 0 else 0
    return rank, rank == matrix.entries.shape[0]


def _trial_settings(study: DesignStudy, trial: int) -> list:
    rng = np.random.default_rng([study.seed, trial])
    d = study.d
    settings = []
    for _ in range(study.settings_per_trial):
        delta = float(rng.uniform(0.0, study.delta_max))
        theta = rng.uniform(0.0, 2.0 * np.pi, size=d)
        settings.append(MeasurementSetting(theta=theta, phi=np.zeros(d), delta=delta))
    return settings


def design_singular_values(study: DesignStudy) -> np.ndarray:
    """Pooled singular values, shape (trials, d**2).

    Per-trial generators are keyed by ``(seed, trial)``, so results are
    reproducible and independent of evaluation order.
    """
    out = np.empty((study.trials, study.d**2))
    for t in range(study.trials):
        o = measurement_matrix(_trial_settings(study, t), study.d, single_qudit=True)
        out[t] = singular_spectrum(o)
    return out


def design_histogram(study: DesignStudy) -> DesignHistogram:
    """Histogram of log10 singular values over the study's random maps.

    Uses 60 uniform bins over log10(s) in [-6, 1]; values beyond the range
    clamp into the edge bins, so the histogram mass is exactly
    ``trials * d**2``.
    """
    sv = design_singular_values(study).reshape(-1)
    with np.errstate(divide="ignore"):
        logs = np.log10(np.maximum(sv, 0.0))
    lo, hi = HIST_RANGE
    logs = np.clip(logs, lo + 1e-12, hi - 1e-12)
    edges = np.linspace(lo, hi, HIST_BINS + 1)
    counts, _ = np.histogram(logs, bins=edges)
    return DesignHistogram(
        study=study,
        bin_edges=edges,
        counts=counts,
        median=float(np.median(sv)),
        tail_fraction=float((sv < 1e-2).mean()),
    )
