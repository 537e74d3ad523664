"""Synthetic coincidence datasets from a ground-truth state and plan."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, InvalidArgumentsError, InvalidKError
from .measurement import SettingPlan, outcome_probabilities
from .states import DensityMatrix, FrequencyGrid


@dataclass(frozen=True)
class CoincidenceDataset:
    """Coincidence counts over settings and output-bin pairs.

    ``counts[r-1, m-1, n-1]`` is the number of coincidences between signal bin
    ``m`` and idler bin ``n`` under setting ``r``.  ``exposure`` holds
    relative integration-time weights (default all 1); the likelihood scales
    the flux by them, so mixed integration times stay consistent.  ``seed``
    records the generator seed for simulated data and is ``None`` for
    experimental data.
    """

    counts: np.ndarray = field(repr=False)
    exposure: np.ndarray = field(repr=False)
    seed: int | None = None

    def __post_init__(self):
        counts = np.ascontiguousarray(self.counts)
        if counts.ndim != 3 or counts.shape[1] != counts.shape[2]:
            raise DimensionMismatchError(
                f"counts must have shape (R, d, d), got {counts.shape}"
            )
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.isfinite(counts)):
                raise InvalidArgumentsError("counts must be finite")
            rounded = np.rint(counts)
            if np.abs(counts - rounded).max() > 0:
                raise InvalidArgumentsError("counts must be integers")
            counts = rounded.astype(np.int64)
        if counts.min() < 0:
            raise InvalidArgumentsError("counts must be non-negative")
        exposure = np.ascontiguousarray(self.exposure, dtype=float)
        if exposure.shape != (counts.shape[0],):
            raise DimensionMismatchError(
                f"exposure must have shape ({counts.shape[0]},), got {exposure.shape}"
            )
        if not np.all(exposure > 0):
            raise InvalidArgumentsError("exposure weights must be positive")
        counts.setflags(write=False)
        exposure.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "exposure", exposure)

    @property
    def R_tot(self) -> int:
        return self.counts.shape[0]

    @property
    def d(self) -> int:
        return self.counts.shape[1]


@dataclass(frozen=True)
class CarStats:
    """Per-bin coincidence-to-accidental ratios of an unmodulated spectrum."""

    per_bin: np.ndarray
    min: float
    max: float


def expected_rates(rho: DensityMatrix, plan: SettingPlan, grid: FrequencyGrid) -> np.ndarray:
    """Outcome probabilities for every setting, shape (R, d, d)."""
    return np.stack([outcome_probabilities(rho, s, grid) for s in plan.settings])


def simulate_counts(
    rho_true: DensityMatrix,
    plan: SettingPlan,
    K: float,
    model: str = "poisson",
    seed: int = 0,
    exposure=None,
) -> CoincidenceDataset:
    """Draw a synthetic coincidence dataset.

    ``model="poisson"`` draws each bin independently as
    ``Poisson(K * exposure_r * p[r, m, n])``, matching the inference
    likelihood.  ``model="multinomial"`` first draws the per-setting total
    from ``Poisson(K * exposure_r * sum(p))`` and then distributes it over
    the grid with probabilities ``p / sum(p)``.

    Each setting uses its own generator keyed by ``(seed, r)``
    (``numpy.random.default_rng([seed, r])``), so per-setting streams are
    independent, reproducible, and insensitive to evaluation order.

    Raises:
        InvalidKError: ``K`` is not a positive finite number.
    """
    if not np.isfinite(K) or K <= 0:
        raise InvalidKError(f"flux must be positive and finite, got {K}")
    if model not in ("poisson", "multinomial"):
        raise InvalidArgumentsError(f"unknown model {model!r}")
    d = plan.d
    grid = FrequencyGrid(d=d)
    R = len(plan)
    if exposure is None:
        exposure = np.ones(R)
    exposure = np.asarray(exposure, dtype=float)

    probs = expected_rates(rho_true, plan, grid)
    counts = np.empty((R, d, d), dtype=np.int64)
    for r in range(R):
        rng = np.random.default_rng([seed, r])
        mean = K * exposure[r] * np.clip(probs[r], 0.0, None)
        if model == "poisson":
            counts[r] = rng.poisson(mean)
        elif mean.sum() <= 0.0:
            counts[r] = 0
        else:
            total = rng.poisson(mean.sum())
            pvals = (mean / mean.sum()).reshape(-1)
            counts[r] = rng.multinomial(total, pvals).reshape(d, d)
    return CoincidenceDataset(counts=counts, exposure=exposure, seed=seed)


def car_of_dataset(data: CoincidenceDataset) -> CarStats:
    """Coincidence-to-accidental ratios of the first (unmodulated) setting.

    Each diagonal element of the ``r = 1`` grid is divided by the mean of all
    off-diagonal elements.  If every off-diagonal count is zero the ratios
    are ``+inf`` (sentinel, no exception).
    """
    jsi = data.counts[0].astype(float)
    d = jsi.shape[0]
    off = jsi[~np.eye(d, dtype=bool)]
    accidentals = off.mean()
    diag = np.diagonal(jsi)
    if accidentals == 0.0:
        per_bin = np.where(diag > 0, np.inf, np.nan)
        return CarStats(per_bin=per_bin, min=float(np.nanmin(per_bin)), max=float(np.nanmax(per_bin)))
    per_bin = diag / accidentals
    return CarStats(per_bin=per_bin, min=float(per_bin.min()), max=float(per_bin.max()))
