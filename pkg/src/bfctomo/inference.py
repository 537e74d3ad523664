"""Bayesian reconstruction: uniform prior over density matrices, Poisson
likelihood, and preconditioned Crank-Nicolson sampling.

The two-qudit state is parameterized by a complex vector ``y`` of length
``2 * d**4``: the first ``d**4`` entries fill a general complex matrix ``G``
(row-major), the rest seed a second complex matrix that is orthonormalized
into a uniformly random unitary ``U``.  The state

    rho(y) = (I + U) G G^dag (I + U^dag) / trace(...)

is Hermitian, unit-trace, and positive semidefinite by construction, and with
``y ~ CN(0, 1)`` i.i.d. it is a draw from the Bures ensemble.  The detected
flux is ``K = K0 * (1 + sigma * z)`` with ``z ~ N(0, 1)``.  Because every
parameter has a standard-normal prior, the Crank-Nicolson proposal
``x' = sqrt(1 - beta^2) x + beta xi`` leaves the prior invariant and the
Metropolis test reduces to the likelihood ratio alone.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import (
    AdaptationFailedError,
    BudgetExhaustedWarning,
    DimensionMismatchError,
    EmptyChainError,
    InvalidArgumentsError,
    InvalidKError,
    MissingJSISettingError,
    SingularInputWarning,
    ZeroTraceError,
)
from .measurement import SettingPlan, transfer_matrices
from .simulate import CoincidenceDataset
from .states import DensityMatrix, PureState, make_density, uhlmann_fidelity

_ADAPT_WINDOW = 200
_BETA_MIN = 1e-4
_K_FLOOR_FRACTION = 1e-6


@dataclass(frozen=True)
class ParamVector:
    """One point in parameter space: state coordinates ``y`` and flux coordinate ``z``."""

    y: np.ndarray = field(repr=False)
    z: float

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=complex)
        if y.ndim != 1:
            raise DimensionMismatchError(f"y must be a vector, got shape {y.shape}")
        if not (np.all(np.isfinite(y.real)) and np.all(np.isfinite(y.imag)) and np.isfinite(self.z)):
            raise InvalidArgumentsError("parameter vector contains non-finite entries")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)


def param_length(d: int) -> int:
    """Length of the state coordinate vector for qudit dimension ``d``."""
    return 2 * d**4


@dataclass(frozen=True)
class FluxModel:
    """Normal prior on the total flux: ``K = K0 * (1 + sigma * z)``.

    ``K0`` is typically set from the unmodulated first measurement via
    :func:`default_K0`; ``sigma = 0.1`` keeps the prior effectively
    uninformative at realistic count levels.  ``K`` is floored at
    ``K0 * 1e-6`` so the log-likelihood stays defined in the (negligible)
    prior tail ``z < -1/sigma``.
    """

    K0: float
    sigma: float = 0.1

    def __post_init__(self):
        if not (np.isfinite(self.K0) and self.K0 > 0):
            raise InvalidKError(f"K0 must be positive and finite, got {self.K0}")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidKError(f"sigma must be positive and finite, got {self.sigma}")

    def K_of_z(self, z):
        return np.maximum(self.K0 * (1.0 + self.sigma * np.asarray(z, dtype=float)),
                          self.K0 * _K_FLOOR_FRACTION)


@dataclass(frozen=True)
class ChainConfig:
    """Sampler configuration.

    ``S`` samples are retained, one every ``T`` steps, after ``burn_in``
    steps (default ``10 * S``) during which the step size ``beta`` adapts
    multiplicatively toward an acceptance rate inside ``target_accept`` and
    is then frozen.
    """

    S: int = 1024
    T: int = 1
    beta: float = 0.2
    burn_in: int | None = None
    seed: int | tuple = 0
    target_accept: tuple = (0.2, 0.4)

    def __post_init__(self):
        if self.S < 2:
            raise InvalidArgumentsError(f"S must be >= 2, got {self.S}")
        if self.T < 1:
            raise InvalidArgumentsError(f"T must be >= 1, got {self.T}")
        if not (0.0 < self.beta <= 1.0):
            raise InvalidArgumentsError(f"beta must be in (0, 1], got {self.beta}")
        lo, hi = self.target_accept
        if not (0.0 < lo < hi < 1.0):
            raise InvalidArgumentsError(f"bad target acceptance window {self.target_accept}")

    @property
    def burn_in_steps(self) -> int:
        return 10 * self.S if self.burn_in is None else self.burn_in


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior-mean estimates with 1-sigma posterior spreads."""

    rho_mean: DensityMatrix
    fidelity_mean: float
    fidelity_std: float
    logneg_mean: float
    logneg_std: float
    K_mean: float
    K_std: float
    acceptance_rate: float
    sequential_fidelities: tuple = ()


def haar_unitary_from_ginibre(Z: np.ndarray) -> np.ndarray:
    """Orthonormalize a complex square matrix into a uniformly random unitary.

    QR-factorizes ``Z`` and rescales the columns of ``Q`` by the phases of
    the diagonal of ``R``; the phase fix removes the sign ambiguity of QR so
    that Gaussian inputs map exactly to Haar-distributed unitaries.  A zero
    diagonal entry (probability zero for continuous inputs) triggers a tiny
    deterministic perturbation and a warning.
    """
    Z = np.asarray(Z, dtype=complex)
    if Z.ndim != 2 or Z.shape[0] != Z.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {Z.shape}")
    q, r = np.linalg.qr(Z)
    diag = np.diagonal(r)
    if np.any(np.abs(diag) == 0.0):
        warnings.warn(
            "QR produced a zero diagonal entry; perturbing input", SingularInputWarning
        )
        eps = (np.abs(Z).max() + 1.0) * 1e-13
        q, r = np.linalg.qr(Z + eps * np.eye(Z.shape[0]))
        diag = np.diagonal(r)
    return q * (diag / np.abs(diag))[None, :]


def _bures_rho_raw(y: np.ndarray, n: int) -> np.ndarray:
    g = y[: n * n].reshape(n, n)
    u = haar_unitary_from_ginibre(y[n * n :].reshape(n, n))
    a = g + u @ g
    m = a @ a.conj().T
    tr = float(m.trace().real)
    if not np.isfinite(tr) or tr <= 0.0:
        raise ZeroTraceError(f"state construction produced trace {tr}")
    m /= tr
    return 0.5 * (m + m.conj().T)


def _split_dim(y_len: int) -> int:
    n = round(math.sqrt(y_len / 2))
    if 2 * n * n != y_len:
        raise DimensionMismatchError(
            f"parameter vector length {y_len} is not 2 * n**2 for integer n"
        )
    return n


def bures_density(y: np.ndarray) -> DensityMatrix:
    """Map a parameter vector onto a validated density matrix.

    ``y`` must have length ``2 * n**2`` for the target matrix size ``n``
    (``n = d**2`` for two-qudit states).

    Raises:
        ZeroTraceError: the Ginibre factor is (numerically) zero.
    """
    y = np.ascontiguousarray(y, dtype=complex)
    n = _split_dim(y.size)
    return make_density(_bures_rho_raw(y, n))


def bures_density_batch(ys: np.ndarray) -> np.ndarray:
    """Vectorized :func:`bures_density` over rows; returns raw (B, n, n) matrices."""
    ys = np.ascontiguousarray(ys, dtype=complex)
    if ys.ndim != 2:
        raise DimensionMismatchError(f"expected a (B, len) array, got shape {ys.shape}")
    n = _split_dim(ys.shape[1])
    g = ys[:, : n * n].reshape(-1, n, n)
    q, r = np.linalg.qr(ys[:, n * n :].reshape(-1, n, n))
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    mag = np.abs(diag)
    if np.any(mag == 0.0):
        raise ZeroTraceError("QR produced a zero diagonal entry in batch mode")
    u = q * (diag / mag)[:, None, :]
    a = g + u @ g
    m = a @ np.conj(np.swapaxes(a, 1, 2))
    tr = np.einsum("bii->b", m).real
    if np.any(~np.isfinite(tr)) or np.any(tr <= 0.0):
        raise ZeroTraceError("state construction produced a non-positive trace")
    m /= tr[:, None, None]
    return 0.5 * (m + np.conj(np.swapaxes(m, 1, 2)))


class PoissonLogLikelihood:
    """Poisson log-likelihood of a dataset under the measurement plan.

    Probabilities come from the per-setting transfer matrices; the mean count
    in bin ``(r, m, n)`` is ``K * exposure_r * p``.  The additive
    ``-log N!`` term is dropped (it does not depend on the parameters), so
    values match an external Poisson pmf only up to a constant offset.
    Instances precompute the composite per-setting maps and are safe to share
    across threads.
    """

    def __init__(self, data: CoincidenceDataset, plan: SettingPlan, flux: FluxModel):
        d = plan.d
        if data.d != d or data.R_tot != len(plan):
            raise DimensionMismatchError(
                f"dataset shape {data.counts.shape} does not match plan "
                f"(R={len(plan)}, d={d})"
            )
        self.d = d
        self.dim = d * d
        self.flux = flux
        self.exposure = data.exposure
        self.counts = data.counts.reshape(data.R_tot, self.dim).astype(float)
        q = []
        for setting in plan.settings:
            v, w = transfer_matrices(setting, d)
            q.append(np.kron(v, w))
        self._q = np.stack(q)
        self._qc = self._q.conj()
        self._pos = self.counts > 0
        self._n_pos = self.counts[self._pos]

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        """Outcome probabilities, shape (R, d**2), clipped at zero."""
        tmp = self._q @ rho
        p = np.einsum("rad,rad->ra", tmp, self._qc).real
        return np.clip(p, 0.0, None)

    def loglik_rho_K(self, rho: np.ndarray, K: float) -> float:
        lam = (K * self.exposure)[:, None] * self.probabilities(rho)
        lam_pos = lam[self._pos]
        if np.any(lam_pos <= 0.0):
            return -np.inf
        return float(self._n_pos @ np.log(lam_pos) - lam.sum())

    def __call__(self, y: np.ndarray, z: float) -> float:
        rho = _bures_rho_raw(np.asarray(y, dtype=complex), self.dim)
        return self.loglik_rho_K(rho, float(self.flux.K_of_z(z)))

    def loglik_batch(self, ys: np.ndarray, zs: np.ndarray) -> np.ndarray:
        """Log-likelihood for a batch of parameter vectors (oracle workloads)."""
        rho = bures_density_batch(ys)
        out = np.empty(rho.shape[0])
        K = self.flux.K_of_z(zs)
        p = np.einsum("rad,bdc,rac->bra", self._q, rho, self._qc, optimize=True).real
        p = np.clip(p, 0.0, None)
        lam = K[:, None, None] * self.exposure[None, :, None] * p
        lam_pos = lam[:, self._pos]
        with np.errstate(divide="ignore"):
            terms = self._n_pos[None, :] * np.log(lam_pos)
        out = terms.sum(axis=1) - lam.reshape(lam.shape[0], -1).sum(axis=1)
        out[np.any(lam_pos <= 0.0, axis=1)] = -np.inf
        return out


def log_likelihood(
    x: ParamVector, data: CoincidenceDataset, plan: SettingPlan, flux: FluxModel
) -> float:
    """Poisson log-likelihood of one parameter vector (see
    :class:`PoissonLogLikelihood`; build an evaluator directly for repeated
    calls on the same dataset)."""
    return PoissonLogLikelihood(data, plan, flux)(x.y, x.z)


def default_K0(data: CoincidenceDataset, plan: SettingPlan | None = None) -> float:
    """Flux prior center: total counts of the unmodulated first setting,
    normalized by its exposure.

    Raises:
        MissingJSISettingError: no settings, a modulated first setting, or an
            all-zero first grid.
    """
    if data.R_tot < 1:
        raise MissingJSISettingError("dataset has no settings")
    if plan is not None and plan.settings[0].delta != 0.0:
        raise MissingJSISettingError("first setting has nonzero modulation index")
    total = float(data.counts[0].sum())
    if total <= 0:
        raise MissingJSISettingError("first setting recorded zero coincidences")
    return total / float(data.exposure[0])


def _propose(y: np.ndarray, z: float, beta: float, rng) -> tuple:
    m = y.size
    xi_re = rng.standard_normal(m)
    xi_im = rng.standard_normal(m)
    xi_z = rng.standard_normal()
    root = math.sqrt(1.0 - beta * beta)
    y_new = root * y + beta * ((xi_re + 1j * xi_im) / math.sqrt(2.0))
    return y_new, root * z + beta * xi_z


def pcn_step(x: ParamVector, beta: float, logL, rng) -> tuple:
    """One Crank-Nicolson Metropolis step.

    Proposes ``x' = sqrt(1 - beta^2) x + beta xi`` with ``xi`` a fresh draw
    from the standard-normal prior (complex entries get independent
    real/imaginary parts of variance 1/2) and accepts with probability
    ``min(1, exp(logL(x') - logL(x)))``.  Returns ``(state, accepted)``.
    """
    if not (0.0 < beta <= 1.0):
        raise InvalidArgumentsError(f"beta must be in (0, 1], got {beta}")
    y_new, z_new = _propose(x.y, x.z, beta, rng)
    cand = ParamVector(y=y_new, z=z_new)
    logr = logL(cand) - logL(x)
    u = rng.random()
    if logr >= 0.0 or math.log(u) < logr:
        return cand, True
    return x, False


@dataclass
class ChainState:
    """Full mutable state of a chain; checkpoints serialize this."""

    cfg: ChainConfig
    y: np.ndarray
    z: float
    loglik: float
    beta: float
    phase: str  # "burn", "main", or "done"
    burn_done: int = 0
    main_done: int = 0
    accepted_main: int = 0
    window_accepts: int = 0
    window_steps: int = 0
    adapt_rounds: int = 0
    tail_accepts: int = 0
    tail_steps: int = 0
    best_beta: float = float("nan")
    best_rate_err: float = float("inf")
    last_window_rate: float = float("nan")
    retained_y: list = field(default_factory=list)
    retained_z: list = field(default_factory=list)
    rng_state: dict | None = None


@dataclass(frozen=True)
class ChainResult:
    """Retained samples plus run diagnostics."""

    y: np.ndarray  # (S, 2 d**4)
    z: np.ndarray  # (S,)
    acceptance_rate: float
    beta: float
    config: ChainConfig
    state: ChainState = field(repr=False)

    @property
    def samples(self) -> list:
        return [ParamVector(y=self.y[j], z=float(self.z[j])) for j in range(self.y.shape[0])]


def _chain_step(state: ChainState, rng, loglik_fn) -> bool:
    y_new, z_new = _propose(state.y, state.z, state.beta, rng)
    l_new = loglik_fn(y_new, z_new)
    logr = l_new - state.loglik
    u = rng.random()
    if logr >= 0.0 or math.log(u) < logr:
        state.y, state.z, state.loglik = y_new, z_new, l_new
        return True
    return False


def _adapt_beta(state: ChainState) -> None:
    # damped stochastic approximation on log(beta): large early moves find
    # the right order of magnitude, decaying gains let it settle; the
    # best-performing beta seen so far is what gets frozen after burn-in
    lo, hi = state.cfg.target_accept
    mid = 0.5 * (lo + hi)
    rate = state.window_accepts / state.window_steps
    state.last_window_rate = rate
    state.adapt_rounds += 1
    err = abs(rate - mid)
    if err < state.best_rate_err:
        state.best_rate_err = err
        state.best_beta = state.beta
    gain = 1.5 if state.adapt_rounds <= 10 else 3.0 / math.sqrt(state.adapt_rounds)
    state.beta = min(max(state.beta * math.exp(gain * (rate - mid)), _BETA_MIN), 1.0)
    state.window_accepts = 0
    state.window_steps = 0


def run_chain(
    data: CoincidenceDataset | None,
    plan: SettingPlan | None,
    flux: FluxModel | None,
    cfg: ChainConfig,
    loglik_fn=None,
    d: int | None = None,
    resume_from: ChainState | None = None,
) -> ChainResult:
    """Run (or resume) a Crank-Nicolson chain and return ``cfg.S`` samples.

    The chain starts from a prior draw, adapts ``beta`` during burn-in
    (frozen afterward so the kernel stays valid), then walks ``S * T`` steps
    keeping every ``T``-th state.  Runs are bit-reproducible for a fixed
    ``(cfg, data)`` and can be resumed from a checkpointed state: resuming
    with a larger ``S`` continues the identical step sequence, so a split
    run matches an uninterrupted one exactly.

    ``loglik_fn(y, z)`` may replace the Poisson likelihood (then ``data``,
    ``plan``, and ``flux`` may be ``None`` and ``d`` gives the qudit
    dimension).

    Raises:
        AdaptationFailedError: acceptance stuck below 1% at the end of burn-in.
    """
    if loglik_fn is None:
        loglik_fn = PoissonLogLikelihood(data, plan, flux)
    dim = plan.d if plan is not None else d
    if dim is None:
        raise InvalidArgumentsError("pass a plan or an explicit qudit dimension d")

    rng = np.random.default_rng(list(cfg.seed) if isinstance(cfg.seed, (tuple, list)) else cfg.seed)
    if resume_from is None:
        m = param_length(dim)
        y0 = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / math.sqrt(2.0)
        z0 = rng.standard_normal()
        state = ChainState(
            cfg=cfg, y=y0, z=float(z0), loglik=float(loglik_fn(y0, z0)),
            beta=cfg.beta, phase="burn" if cfg.burn_in_steps > 0 else "main",
        )
    else:
        state = resume_from
        old = state.cfg
        if replace(old, S=cfg.S) != cfg:
            raise InvalidArgumentsError(
                "resume config may differ from the checkpointed one only in S"
            )
        if cfg.S < len(state.retained_y):
            raise InvalidArgumentsError("resume target S is below the retained count")
        state.cfg = cfg
        rng.bit_generator.state = state.rng_state
        if state.phase == "done" and len(state.retained_y) < cfg.S:
            state.phase = "main"

    # adapt over the first part of burn-in, then freeze the best-performing
    # beta and measure acceptance over the tail with that frozen kernel
    tail_start = max(cfg.burn_in_steps - max(10 * _ADAPT_WINDOW, cfg.burn_in_steps // 5), 0)
    while state.phase == "burn":
        accepted = _chain_step(state, rng, loglik_fn)
        state.burn_done += 1
        if state.burn_done <= tail_start:
            state.window_accepts += int(accepted)
            state.window_steps += 1
            if state.window_steps == _ADAPT_WINDOW:
                _adapt_beta(state)
            if state.burn_done == tail_start and math.isfinite(state.best_beta):
                state.beta = state.best_beta
        else:
            state.tail_accepts += int(accepted)
            state.tail_steps += 1
        if state.burn_done >= cfg.burn_in_steps:
            rate = state.tail_accepts / state.tail_steps if state.tail_steps else float("nan")
            state.last_window_rate = rate
            # a near-total acceptance rate just means a (near-)flat
            # likelihood: the chain then samples the prior, which is valid
            if not math.isnan(rate) and rate < 0.01:
                raise AdaptationFailedError(
                    f"acceptance rate {rate:.4f} below 0.01 after burn-in adaptation"
                )
            state.window_accepts = 0
            state.window_steps = 0
            state.phase = "main"

    while len(state.retained_y) < cfg.S:
        accepted = _chain_step(state, rng, loglik_fn)
        state.main_done += 1
        state.accepted_main += int(accepted)
        if state.main_done % cfg.T == 0:
            state.retained_y.append(state.y)
            state.retained_z.append(state.z)

    state.phase = "done"
    state.rng_state = rng.bit_generator.state
    acceptance = state.accepted_main / state.main_done if state.main_done else float("nan")
    return ChainResult(
        y=np.array(state.retained_y),
        z=np.array(state.retained_z),
        acceptance_rate=float(acceptance),
        beta=state.beta,
        config=cfg,
        state=state,
    )


def save_checkpoint(state: ChainState | ChainResult, path) -> None:
    """Serialize a chain state (or a finished run) for bit-exact resumption."""
    if isinstance(state, ChainResult):
        state = state.state
    meta = {
        "cfg": asdict(state.cfg),
        "z": state.z,
        "loglik": state.loglik,
        "beta": state.beta,
        "phase": state.phase,
        "burn_done": state.burn_done,
        "main_done": state.main_done,
        "accepted_main": state.accepted_main,
        "window_accepts": state.window_accepts,
        "window_steps": state.window_steps,
        "adapt_rounds": state.adapt_rounds,
        "tail_accepts": state.tail_accepts,
        "tail_steps": state.tail_steps,
        "best_beta": state.best_beta,
        "best_rate_err": state.best_rate_err,
        "last_window_rate": state.last_window_rate,
        "rng_state": state.rng_state,
        "retained_z": list(map(float, state.retained_z)),
    }
    retained = (
        np.array(state.retained_y)
        if state.retained_y
        else np.empty((0, state.y.size), dtype=complex)
    )
    with open(path, "wb") as fh:
        np.savez(fh, x_y=state.y, retained_y=retained, meta=json.dumps(meta))


def load_checkpoint(path) -> ChainState:
    """Inverse of :func:`save_checkpoint`."""
    with np.load(path, allow_pickle=False) as npz:
        meta = json.loads(str(npz["meta"]))
        x_y = npz["x_y"]
        retained = npz["retained_y"]
    cfg_dict = meta["cfg"]
    cfg_dict["target_accept"] = tuple(cfg_dict["target_accept"])
    if isinstance(cfg_dict["seed"], list):
        cfg_dict["seed"] = tuple(cfg_dict["seed"])
    rng_state = meta["rng_state"]
    return ChainState(
        cfg=ChainConfig(**cfg_dict),
        y=x_y,
        z=meta["z"],
        loglik=meta["loglik"],
        beta=meta["beta"],
        phase=meta["phase"],
        burn_done=meta["burn_done"],
        main_done=meta["main_done"],
        accepted_main=meta["accepted_main"],
        window_accepts=meta["window_accepts"],
        window_steps=meta["window_steps"],
        adapt_rounds=meta["adapt_rounds"],
        tail_accepts=meta["tail_accepts"],
        tail_steps=meta["tail_steps"],
        best_beta=meta["best_beta"],
        best_rate_err=meta["best_rate_err"],
        last_window_rate=meta["last_window_rate"],
        retained_y=[retained[j] for j in range(retained.shape[0])],
        retained_z=list(meta["retained_z"]),
        rng_state=rng_state,
    )


def _rho_stack(samples) -> tuple:
    if isinstance(samples, ChainResult):
        ys = samples.y
        zs = samples.z
    else:
        samples = list(samples)
        if len(samples) == 0:
            raise EmptyChainError("no posterior samples")
        ys = np.array([s.y for s in samples])
        zs = np.array([s.z for s in samples])
    if ys.shape[0] == 0:
        raise EmptyChainError("no posterior samples")
    return bures_density_batch(ys), zs


def bayes_estimates(
    samples,
    psi_ideal: PureState,
    d: int,
    flux: FluxModel | None = None,
    acceptance_rate: float = float("nan"),
    sequential_fidelities: tuple = (),
) -> PosteriorSummary:
    """Posterior-mean state and scalar summaries from retained samples.

    The density matrix is the sample average of ``rho(y)``; fidelity and
    log-negativity are averaged per sample (their spreads are the population
    standard deviations over the chain).  ``flux`` enables the flux summary
    from the ``z`` coordinates.

    Raises:
        EmptyChainError: ``samples`` is empty.
    """
    rho, zs = _rho_stack(samples)
    dim = d * d
    if rho.shape[1] != dim:
        raise DimensionMismatchError(f"samples have dimension {rho.shape[1]}, expected {dim}")
    if psi_ideal.dim != dim:
        raise DimensionMismatchError(f"ideal state has dim {psi_ideal.dim}, expected {dim}")

    rho_mean = make_density(rho.mean(axis=0))

    amp = psi_ideal.amplitudes
    f = np.einsum("a,sab,b->s", amp.conj(), rho, amp, optimize=True).real
    f_mean = float(f.mean())
    f_std = float(math.sqrt(max(np.mean(f * f) - f_mean * f_mean, 0.0)))

    pt = rho.reshape(-1, d, d, d, d).transpose(0, 1, 4, 3, 2).reshape(-1, dim, dim)
    tracenorm = np.abs(np.linalg.eigvalsh(pt)).sum(axis=1)
    e = np.log2(tracenorm)
    e_mean = float(e.mean())
    e_std = float(math.sqrt(max(np.mean(e * e) - e_mean * e_mean, 0.0)))

    if flux is not None:
        k = flux.K_of_z(zs)
        k_mean, k_std = float(k.mean()), float(k.std())
    else:
        k_mean = k_std = float("nan")

    return PosteriorSummary(
        rho_mean=rho_mean,
        fidelity_mean=f_mean,
        fidelity_std=f_std,
        logneg_mean=e_mean,
        logneg_std=e_std,
        K_mean=k_mean,
        K_std=k_std,
        acceptance_rate=acceptance_rate,
        sequential_fidelities=tuple(sequential_fidelities),
    )


@dataclass(frozen=True)
class LevelRecord:
    """One thinning level of the convergence schedule."""

    n: int
    T: int
    fidelity_to_previous: float
    acceptance_rate: float
    beta: float
    rho_mean: DensityMatrix = field(repr=False)


@dataclass(frozen=True)
class SequentialResult:
    """Outcome of the doubling-thinning convergence loop."""

    result: ChainResult
    n_stop: int
    schedule: tuple
    converged: bool

    @property
    def rho_mean(self) -> DensityMatrix:
        return self.schedule[-1].rho_mean


def sequential_fidelity_schedule(
    data: CoincidenceDataset,
    plan: SettingPlan,
    flux: FluxModel,
    base_cfg: ChainConfig,
    threshold: float = 0.99,
    max_n: int = 8,
    loglik_fn=None,
    scale_burn_in: bool = True,
) -> SequentialResult:
    """Double the thinning factor until consecutive estimates agree.

    Level ``n`` runs an independent chain with ``T = base_cfg.T * 2**n`` and
    seed derived from ``(base seed, n)``.  With ``scale_burn_in`` (default)
    the burn-in also doubles per level, keeping the discarded fraction of
    each chain constant; otherwise every level burns ``base_cfg.burn_in_steps``.
    The stopping statistic is the fidelity between the posterior-mean states
    of consecutive levels, which references no ideal state; the loop stops
    once it exceeds ``threshold`` (converged) or at ``max_n`` (warning,
    best-so-far returned).
    """
    if not (0.0 < threshold < 1.0):
        raise InvalidArgumentsError(f"threshold must be in (0, 1), got {threshold}")
    if max_n < 0:
        raise InvalidArgumentsError(f"max_n must be >= 0, got {max_n}")
    if loglik_fn is None:
        loglik_fn = PoissonLogLikelihood(data, plan, flux)

    base_seed = list(base_cfg.seed) if isinstance(base_cfg.seed, (tuple, list)) else [base_cfg.seed]
    schedule = []
    prev_rho = None
    result = None
    converged = False
    n_stop = 0
    for n in range(max_n + 1):
        burn = base_cfg.burn_in_steps * (2**n if scale_burn_in else 1)
        cfg_n = replace(
            base_cfg, T=base_cfg.T * 2**n, burn_in=burn, seed=tuple(base_seed + [n])
        )
        result = run_chain(data, plan, flux, cfg_n, loglik_fn=loglik_fn, d=plan.d)
        rho_n = make_density(bures_density_batch(result.y).mean(axis=0))
        fid = float("nan") if prev_rho is None else uhlmann_fidelity(prev_rho, rho_n)
        schedule.append(
            LevelRecord(
                n=n, T=cfg_n.T, fidelity_to_previous=fid,
                acceptance_rate=result.acceptance_rate, beta=result.beta, rho_mean=rho_n,
            )
        )
        n_stop = n
        prev_rho = rho_n
        if not math.isnan(fid) and fid > threshold:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"sequential fidelity did not exceed {threshold} within {max_n} doublings",
            BudgetExhaustedWarning,
        )
    return SequentialResult(
        result=result, n_stop=n_stop, schedule=tuple(schedule), converged=converged
    )
