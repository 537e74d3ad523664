"""Electro-optic measurement model: transfer matrices, probabilities, and the
linear measurement map.

Each measurement setting applies line-by-line spectral phases (``theta`` on
signal bins, ``phi`` on idler bins) followed by sinusoidal phase modulation of
index ``delta`` at the bin spacing.  Modulation of the form
``exp(-1j * delta * sin(dw * t))`` couples bin ``k`` to bin ``m`` with weight
``J_{m-k}(delta)`` (Bessel function of the first kind), so the single-photon
transfer matrices are truncations of an infinite unitary to the ``d``-bin
computational block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import jv

from .errors import DimensionMismatchError, InvalidArgumentsError, NumericalFailureError
from .states import DensityMatrix, FrequencyGrid


@dataclass(frozen=True)
class MeasurementSetting:
    """Pulse-shaper phases and modulation index for one random operation.

    Attributes:
        theta: signal-bin phases in rad, length d.
        phi: idler-bin phases in rad, length d.
        delta: modulation index in rad, >= 0.
    """

    theta: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    delta: float

    def __post_init__(self):
        theta = np.ascontiguousarray(self.theta, dtype=float)
        phi = np.ascontiguousarray(self.phi, dtype=float)
        if theta.ndim != 1 or phi.shape != theta.shape:
            raise DimensionMismatchError(
                f"phase vectors must share one dimension, got {theta.shape} and {phi.shape}"
            )
        if not np.isfinite(self.delta) or self.delta < 0:
            raise InvalidArgumentsError(f"modulation index must be finite and >= 0, got {self.delta}")
        theta.setflags(write=False)
        phi.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)

    @property
    def d(self) -> int:
        return self.theta.size


@dataclass(frozen=True)
class SettingPlan:
    """Ordered list of measurement settings.

    The first setting always has ``delta = 0`` (modulator off, plain joint
    spectrum); the remaining ones carry modulation indices drawn without
    replacement from a set equispaced over ``[0, delta_max]``.
    """

    d: int
    settings: tuple
    delta_max: float
    seed: int | None = None

    def __post_init__(self):
        if len(self.settings) < 1:
            raise InvalidArgumentsError("a plan needs at least one setting")
        for s in self.settings:
            if s.d != self.d:
                raise DimensionMismatchError(
                    f"setting has {s.d} bins, plan expects {self.d}"
                )
        if self.settings[0].delta != 0.0:
            raise InvalidArgumentsError("first setting must have delta = 0")
        object.__setattr__(self, "settings", tuple(self.settings))

    def __len__(self) -> int:
        return len(self.settings)

    @property
    def deltas(self) -> np.ndarray:
        return np.array([s.delta for s in self.settings])


@dataclass(frozen=True)
class MeasurementMatrix:
    """Stacked vectorized measurement operators.

    ``entries`` has one row per density-matrix element (row-major composite
    index) and one column per outcome; ``probabilities = entries^dagger @
    vec(rho)``.  ``setting_index`` gives the 1-based setting of each column.
    Operators need not sum to the identity: modulation scatters flux outside
    the computational bins.
    """

    entries: np.ndarray = field(repr=False)
    setting_index: np.ndarray = field(repr=False)
    d: int
    single_qudit: bool = False


def transfer_matrices(setting: MeasurementSetting, d: int, conjugate_modulation: bool = False):
    """Signal and idler transfer matrices for one setting.

    ``V[m, k] = J_{m-k}(delta) * exp(1j * theta_k)`` and
    ``W[n, l] = J_{l-n}(delta) * exp(1j * phi_l)`` (indices 1-based in the
    physics, 0-based in the arrays).  The order reversal between the two
    follows from idler frequencies decreasing with bin index while signal
    frequencies increase.  ``conjugate_modulation`` flips the sign convention
    of the modulation (``J_{m-k} <-> J_{k-m}``).

    Both matrices are sub-blocks of infinite unitaries, so every singular
    value is <= 1.
    """
    if setting.d != d:
        raise DimensionMismatchError(f"setting has {setting.d} bins, expected {d}")
    idx = np.arange(d)
    orders = idx[:, None] - idx[None, :]  # m - k
    if conjugate_modulation:
        orders = -orders
    bessel = jv(orders, setting.delta)
    v = bessel * np.exp(1j * setting.theta)[None, :]
    w = bessel.T * np.exp(1j * setting.phi)[None, :]
    return v, w


def _composite_map(setting: MeasurementSetting, d: int) -> np.ndarray:
    """Two-photon map on the composite space: kron(V, W)."""
    v, w = transfer_matrices(setting, d)
    return np.kron(v, w)


def outcome_probabilities(
    rho: DensityMatrix, setting: MeasurementSetting, grid: FrequencyGrid
) -> np.ndarray:
    """Coincidence probabilities over the d x d output-bin grid.

    ``p[m, n] = sum_{k l k' l'} rho[(kl),(k'l')] V[m,k] W[n,l] V*[m,k'] W*[n,l']``.
    Rows index the signal output bin, columns the idler output bin.  The grid
    total is 1 at ``delta = 0`` and drops below 1 once modulation scatters
    flux outside the computational bins.
    """
    d = grid.d
    if rho.dim != d * d:
        raise DimensionMismatchError(f"rho.dim = {rho.dim} is not {d}**2")
    q = _composite_map(setting, d)
    p = np.einsum("ak,kl,al->a", q, rho.elements, q.conj(), optimize=True).real
    return p.reshape(d, d)


def random_settings(d: int, R_tot: int, delta_max: float, seed: int) -> SettingPlan:
    """Draw a reproducible randomized measurement plan.

    Setting 1 has the modulator off.  The remaining ``R_tot - 1`` settings
    take modulation indices from the equispaced set over ``[0, delta_max]``
    (endpoints included), visited in an order shuffled by the seeded
    generator, i.e. drawn without replacement.  All ``2 d R_tot`` spectral
    phases are i.i.d. uniform on [0, 2*pi).

    Draw order is fixed (delta permutation, then per-setting theta then phi),
    so a given seed always yields the same plan.
    """
    if R_tot < 1:
        raise InvalidArgumentsError(f"R_tot must be >= 1, got {R_tot}")
    if d < 2:
        raise InvalidArgumentsError(f"d must be >= 2, got {d}")
    if delta_max < 0 or not np.isfinite(delta_max):
        raise InvalidArgumentsError(f"delta_max must be finite and >= 0, got {delta_max}")

    rng = np.random.default_rng(seed)
    if R_tot == 1:
        deltas = np.empty(0)
    elif R_tot == 2:
        # a single-element "equispaced set" degenerates; use the informative endpoint
        deltas = np.array([delta_max])
    else:
        deltas = np.linspace(0.0, delta_max, R_tot - 1)
    shuffled = rng.permutation(deltas)

    settings = []
    for r in range(R_tot):
        theta = rng.uniform(0.0, 2.0 * np.pi, size=d)
        phi = rng.uniform(0.0, 2.0 * np.pi, size=d)
        delta = 0.0 if r == 0 else float(shuffled[r - 1])
        settings.append(MeasurementSetting(theta=theta, phi=phi, delta=delta))
    return SettingPlan(d=d, settings=tuple(settings), delta_max=float(delta_max), seed=seed)


def measurement_matrix(plan, d: int, single_qudit: bool = False) -> MeasurementMatrix:
    """Assemble the linear map from density-matrix elements to probabilities.

    ``plan`` is a :class:`SettingPlan` or any sequence of settings.  Column
    ``(r, m, n)`` (r-major, then signal bin, then idler bin) holds the
    vectorized rank-1 operator whose expectation value is the coincidence
    probability of that outcome, so ``entries^dagger @ vec(rho)`` reproduces
    :func:`outcome_probabilities` stacked over the plan.  With
    ``single_qudit=True`` only the signal-side operators are built (d x d
    state space, ``R * d`` columns), the reduction used for measurement
    design studies.
    """
    settings = plan.settings if isinstance(plan, SettingPlan) else tuple(plan)
    cols = []
    col_setting = []
    for r, setting in enumerate(settings, start=1):
        if single_qudit:
            v, _ = transfer_matrices(setting, d)
            for m in range(d):
                u = v[m, :].conj()
                cols.append(np.outer(u, u.conj()).reshape(-1))
                col_setting.append(r)
        else:
            q = _composite_map(setting, d)
            for a in range(d * d):
                u = q[a, :].conj()
                cols.append(np.outer(u, u.conj()).reshape(-1))
                col_setting.append(r)
    entries = np.column_stack(cols)
    return MeasurementMatrix(
        entries=entries,
        setting_index=np.asarray(col_setting, dtype=int),
        d=d,
        single_qudit=single_qudit,
    )


def apply_measurement_matrix(matrix: MeasurementMatrix, rho: np.ndarray) -> np.ndarray:
    """Probabilities ``entries^dagger @ vec(rho)`` for a raw state matrix."""
    return (matrix.entries.conj().T @ rho.reshape(-1)).real


def singular_spectrum(matrix: MeasurementMatrix) -> np.ndarray:
    """All singular values of the measurement map, descending.

    The map has ``dim**2`` rows (``dim = d**2`` for two-qudit mode, ``d`` for
    single-qudit mode), hence that many singular values.
    """
    if matrix.entries.size == 0:
        raise InvalidArgumentsError("measurement matrix is empty")
    try:
        sv = np.linalg.svd(matrix.entries, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"SVD did not converge: {exc}") from exc
    rows = matrix.entries.shape[0]
    if sv.size < rows:  # fewer columns than rows: remaining singular values are 0
        sv = np.concatenate([sv, np.zeros(rows - sv.size)])
    return sv
