"""Biphoton time-correlation model and least-squares calibration fits.

When two adjacent signal-idler bin pairs with Lorentzian lineshape (angular
linewidth ``gamma``) are mixed equally on a phase modulator driven at
``omega_rf``, the coincidence rate versus signal-idler delay ``tau`` is

    R(tau) = offset + scale * exp(-gamma |tau|) * (1 - cos(phi + phi0 - detune * tau))

with ``detune = omega_fsr - omega_rf`` the drive detuning from the comb's
free spectral range, ``phi`` the applied joint spectral phase, and ``phi0``
the residual biphoton phase.  Two calibration scans are supported: sweeping
``phi`` at ``tau = 0`` (recovers ``phi0``) and sweeping ``omega_rf`` while
integrating over ``tau`` (recovers ``gamma`` and ``omega_fsr``; the dip has
full width ``2 * gamma``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import FitDivergedError, InsufficientDataError, InvalidArgumentsError

PHASE_SWEEP = "phase_sweep"
FREQUENCY_SWEEP = "frequency_sweep"


@dataclass(frozen=True)
class CorrelationParams:
    """Parameters of the two-bin interference model.

    Attributes:
        gamma: angular linewidth, rad/s (> 0).
        phi: applied joint spectral phase, rad.
        phi0: residual biphoton phase, rad.
        detune: drive detuning ``omega_fsr - omega_rf``, rad/s.
        scale: amplitude in counts (>= 0).
        offset: background in counts (>= 0).
    """

    gamma: float
    phi: float = 0.0
    phi0: float = 0.0
    detune: float = 0.0
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if not (self.gamma > 0):
            raise InvalidArgumentsError(f"gamma must be > 0, got {self.gamma}")
        if self.scale < 0 or self.offset < 0:
            raise InvalidArgumentsError("scale and offset must be >= 0")


@dataclass(frozen=True)
class CorrelationFit:
    """Result of :func:`fit_correlation`.

    ``params`` holds the full model parameters; fields not constrained by the
    chosen mode keep their fixed defaults and are listed outside ``free``.
    ``omega_fsr`` is populated by the frequency sweep.  ``stderr`` maps free
    parameter names to 1-sigma uncertainties from the Jacobian at the
    optimum; ``residual_sum`` is the sum of squared residuals.
    """

    params: CorrelationParams
    free: tuple
    stderr: dict
    residual_sum: float
    mode: str
    omega_fsr: float | None = None


def correlation_model(tau, params: CorrelationParams):
    """Coincidence rate versus signal-idler delay (vectorized over ``tau``)."""
    tau = np.asarray(tau, dtype=float)
    envelope = np.exp(-params.gamma * np.abs(tau))
    fringe = 1.0 - np.cos(params.phi + params.phi0 - params.detune * tau)
    return params.offset + params.scale * envelope * fringe


def integrated_correlation(params: CorrelationParams, window: float | None = None):
    """Delay-integrated rate ``integral of R(tau) d tau`` over ``|tau| <= window``.

    ``window=None`` uses ``5 / gamma``, wide enough that the exponential tail
    contributes below 1%.  Closed form:

        2 (1 - e^{-g T}) / g
        - 2 cos(phi + phi0) * Re[(1 - e^{-(g - i detune) T}) / (g - i detune)]

    scaled by ``scale`` plus ``2 T * offset``; the sine component integrates
    to zero over the symmetric window.
    """
    g = params.gamma
    t = 5.0 / g if window is None else float(window)
    if t <= 0:
        raise InvalidArgumentsError(f"integration window must be > 0, got {t}")
    base = 2.0 * (1.0 - math.exp(-g * t)) / g
    pole = g - 1j * params.detune
    osc = 2.0 * ((1.0 - np.exp(-pole * t)) / pole).real
    fringe = base - math.cos(params.phi + params.phi0) * osc
    return params.offset * 2.0 * t + params.scale * fringe


def _sweep_arrays(samples):
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidArgumentsError(
            f"samples must be an (n, 2) array of (x, counts), got shape {arr.shape}"
        )
    if arr.shape[0] < 6:
        raise InsufficientDataError(f"need at least 6 samples, got {arr.shape[0]}")
    return arr[:, 0], arr[:, 1]


def _stderr_from_jac(res, names):
    # covariance = (J^T J)^{-1} * 2 * cost / dof
    dof = max(res.fun.size - len(names), 1)
    jtj = res.jac.T @ res.jac
    try:
        cov = np.linalg.pinv(jtj) * (2.0 * res.cost / dof)
    except np.linalg.LinAlgError:
        return {n: float("nan") for n in names}
    sig = np.sqrt(np.clip(np.diagonal(cov), 0.0, None))
    return dict(zip(names, (float(s) for s in sig)))


def fit_correlation(samples, mode: str, window: float | None = None) -> CorrelationFit:
    """Least-squares fit of a calibration sweep.

    ``mode="phase_sweep"``: samples are ``(phi, counts)`` at ``tau = 0``; fits
    ``offset``, ``scale``, and ``phi0`` with multi-start over phi0 in
    {0, pi/2, pi, 3pi/2} to escape the cosine's local minima.

    ``mode="frequency_sweep"``: samples are ``(omega_rf, counts)`` of
    delay-integrated coincidences taken at a joint phase nulling the
    ``tau = 0`` rate (``phi + phi0 = 0``); fits ``gamma``, ``omega_fsr``,
    ``scale``, and ``offset`` against :func:`integrated_correlation`.

    Raises:
        InsufficientDataError: fewer than 6 samples.
        FitDivergedError: optimizer failure or a degenerate (zero-amplitude) fit.
    """
    x, y = _sweep_arrays(samples)
    span = float(y.max() - y.min())
    if span <= 0:
        raise FitDivergedError("sweep data are constant; model amplitude is unconstrained")

    if mode == PHASE_SWEEP:
        names = ("offset", "scale", "phi0")

        def resid(q):
            offset, scale, phi0 = q
            return offset + scale * (1.0 - np.cos(x + phi0)) - y

        best = None
        for phi0_start in (0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi):
            try:
                res = least_squares(
                    resid,
                    x0=[max(y.min(), 0.0), span / 2.0, phi0_start],
                    bounds=([0.0, 0.0, -2.0 * np.pi], [np.inf, np.inf, 4.0 * np.pi]),
                    method="trf",
                )
            except Exception:
                continue
            if res.success and (best is None or res.cost < best.cost):
                best = res
        if best is None:
            raise FitDivergedError("phase-sweep fit failed for every start")
        offset, scale, phi0 = best.x
        if scale <= 1e-9 * span:
            raise FitDivergedError("phase-sweep fit collapsed to zero amplitude")
        params = CorrelationParams(
            gamma=1.0, phi=0.0, phi0=float(np.mod(phi0, 2.0 * np.pi)),
            detune=0.0, scale=float(scale), offset=float(offset),
        )
        return CorrelationFit(
            params=params, free=names, stderr=_stderr_from_jac(best, names),
            residual_sum=float(2.0 * best.cost), mode=mode,
        )

    if mode == FREQUENCY_SWEEP:
        names = ("gamma", "omega_fsr", "scale", "offset")
        # the dip sits at omega_rf = omega_fsr; seed gamma from the sweep span
        fsr0 = float(x[np.argmin(y)])
        x_span = float(x.max() - x.min())

        def resid(q):
            gamma, fsr, scale, offset = q
            t = 5.0 / gamma if window is None else window
            base = 2.0 * (1.0 - np.exp(-gamma * t)) / gamma
            pole = gamma - 1j * (fsr - x)
            osc = 2.0 * ((1.0 - np.exp(-pole * t)) / pole).real
            return offset * 2.0 * t + scale * (base - osc) - y

        best = None
        for gamma_start in (x_span / 20.0, x_span / 6.0, x_span / 2.0):
            try:
                res = least_squares(
                    resid,
                    x0=[gamma_start, fsr0, span * gamma_start, 0.0],
                    bounds=([1e-12, x.min() - x_span, 0.0, 0.0], np.inf),
                    method="trf",
                    x_scale="jac",
                )
            except Exception:
                continue
            if res.success and (best is None or res.cost < best.cost):
                best = res
        if best is None:
            raise FitDivergedError("frequency-sweep fit failed for every start")
        gamma, fsr, scale, offset = best.x
        if scale <= 0 or gamma <= 0:
            raise FitDivergedError("frequency-sweep fit collapsed to a degenerate solution")
        params = CorrelationParams(
            gamma=float(gamma), phi=0.0, phi0=0.0, detune=0.0,
            scale=float(scale), offset=float(offset),
        )
        return CorrelationFit(
            params=params, free=names, stderr=_stderr_from_jac(best, names),
            residual_sum=float(2.0 * best.cost), mode=mode, omega_fsr=float(fsr),
        )

    raise InvalidArgumentsError(f"unknown sweep mode {mode!r}")
