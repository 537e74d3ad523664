"""Independent reference implementations used as test oracles.

Everything here deliberately avoids the package's own computational paths:
Bessel values come from the defining power series, outcome probabilities
from an explicit four-index loop, likelihoods from scipy's Poisson pmf, and
mutually unbiased bases from the quadratic Weyl-Heisenberg construction.
"""

import math

import numpy as np
from scipy.stats import poisson


def bessel_series(order: int, x: float, terms: int = 60) -> float:
    """J_n(x) from the ascending power series (exact for moderate x)."""
    n = abs(order)
    total = 0.0
    for j in range(terms):
        total += (-1.0) ** j / (math.factorial(j) * math.factorial(j + n)) * (x / 2.0) ** (
            2 * j + n
        )
    if order < 0 and n % 2 == 1:
        total = -total
    return total


def probability_bruteforce(rho: np.ndarray, theta, phi, delta: float, d: int) -> np.ndarray:
    """Coincidence grid via the explicit quadruple sum over (k, l, k', l')."""
    p = np.zeros((d, d))
    for m in range(d):
        for n in range(d):
            acc = 0.0 + 0.0j
            for k in range(d):
                for l in range(d):
                    for kp in range(d):
                        for lp in range(d):
                            amp = (
                                bessel_series(m - k, delta)
                                * bessel_series(l - n, delta)
                                * bessel_series(m - kp, delta)
                                * bessel_series(lp - n, delta)
                            )
                            phase = np.exp(
                                1j * (theta[k] + phi[l] - theta[kp] - phi[lp])
                            )
                            acc += rho[k * d + l, kp * d + lp] * amp * phase
            p[m, n] = acc.real
    return p


def poisson_loglik_bruteforce(counts, means) -> float:
    """Full Poisson log pmf (including the log N! terms the package drops)."""
    return float(poisson.logpmf(np.asarray(counts).ravel(), np.asarray(means).ravel()).sum())


def extended_grid_total(theta, phi, delta: float, rho: np.ndarray, d: int) -> float:
    """Total detection probability over a widened output grid.

    Embeds the transfer matrices into ``d + 2 ceil(delta) + 8`` output bins per
    photon (inputs stay on the computational bins), so the flux scattered
    outside the measured d x d grid is re-captured up to Bessel-tail
    truncation.
    """
    from scipy.special import jv

    pad = math.ceil(delta) + 4
    out = np.arange(-pad, d + pad)  # output bin indices, 0-based
    k = np.arange(d)
    v_ext = jv(out[:, None] - k[None, :], delta) * np.exp(1j * np.asarray(theta))[None, :]
    w_ext = jv(k[None, :] - out[:, None], delta) * np.exp(1j * np.asarray(phi))[None, :]
    q = np.kron(v_ext, w_ext)
    return float(np.einsum("ak,kl,al->", q, rho, q.conj()).real)


def mub_bases(d: int) -> list:
    """Complete set of ``d + 1`` mutually unbiased bases for prime ``d``.

    Returns a list of (d, d) arrays whose columns are the basis vectors:
    the computational basis plus, for odd prime ``d``, the quadratic-phase
    bases ``v[x] = w**(a x^2 + t x) / sqrt(d)`` with ``w = exp(2j pi / d)``;
    for ``d = 2`` the eigenbases of the three Pauli operators.
    """
    if d == 2:
        z = np.eye(2)
        x = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
        y = np.array([[1, 1], [1j, -1j]]) / math.sqrt(2)
        return [z, x, y]
    for q in range(2, d):
        if d % q == 0:
            raise ValueError(f"{d} is not prime")
    w = np.exp(2j * np.pi / d)
    bases = [np.eye(d, dtype=complex)]
    xs = np.arange(d)
    for a in range(d):
        cols = [w ** (a * xs**2 + t * xs) / math.sqrt(d) for t in range(d)]
        bases.append(np.column_stack(cols))
    return bases


def mub_measurement_entries(d: int) -> np.ndarray:
    """Columns ``vec(|v><v|)`` over every vector of a complete MUB set."""
    cols = []
    for basis in mub_bases(d):
        for t in range(basis.shape[1]):
            v = basis[:, t]
            cols.append(np.outer(v, v.conj()).reshape(-1))
    return np.column_stack(cols)


def bures_states_for_tests(d: int, count: int, seed: int) -> np.ndarray:
    """Random density matrices drawn through the package's own prior map.

    Used where tests just need generic valid states (the map itself is
    validated separately against its defining algebraic properties).
    """
    from bfctomo.inference import bures_density_batch, param_length

    rng = np.random.default_rng(seed)
    m = param_length(d)
    ys = (rng.standard_normal((count, m)) + 1j * rng.standard_normal((count, m))) / math.sqrt(2)
    return bures_density_batch(ys)


def hs_random_density(n: int, rng) -> np.ndarray:
    """Hilbert-Schmidt random density matrix (normalized Wishart)."""
    g = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)
    m = g @ g.conj().T
    return m / m.trace().real
