"""Numerical maximization of the likelihood objectives.

Positivity of (sigma2, phi, tau2) is handled by optimizing over
(mu, log sigma2, log phi, log tau2) with a BFGS iteration, central
finite-difference gradients, and an Armijo backtracking line search that
also retreats from non-finite evaluations. One gradient implementation
serves every objective. The range parameter is capped at 10x the domain
diameter: weighted objectives are prone to letting it run away.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Dataset, Domain, ModelParams

PARAM_NAMES = ("mu", "sigma2", "phi", "tau2")
FD_REL_STEP = 1e-5
PHI_CAP_FACTOR = 10.0


@dataclass(frozen=True)
class FitConfig:
    max_iter: int = 200
    ftol: float = 1e-8
    gtol: float = 1e-4
    rel_step: float = FD_REL_STEP
    restarts: int = 3
    restart_seed: int = 0
    domain: Domain | None = None
    phi_cap: float | None = None
    fixed: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        bad = set(self.fixed) - set(PARAM_NAMES)
        if bad:
            raise ValueError(f"unknown fixed parameters: {sorted(bad)}")


@dataclass
class FitResult:
    psi_hat: ModelParams
    nll: float
    iterations: int
    converged: bool
    gradient_norm: float
    restarts_used: int
    phi_capped: bool


def default_init(data: Dataset, domain: Domain) -> ModelParams:
    """Rule-of-thumb starting point: sample moments split 90/10 between
    process variance and nugget, range at a tenth of the domain diameter."""
    if data.n < 2:
        raise ValueError("initialization needs at least two observations")
    mu0 = float(np.mean(data.values))
    var = float(np.var(data.values, ddof=1))
    sigma2_0 = max(0.9 * var, 1e-6)
    tau2_0 = max(0.1 * var, 1e-7)
    return ModelParams.from_values(mu0, sigma2_0, domain.diameter / 10.0, tau2_0)


def fd_gradient(func, x: np.ndarray, rel_step: float = FD_REL_STEP) -> np.ndarray:
    """Central finite-difference gradient with per-coordinate step
    rel_step * max(1, |x_j|)."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for j in range(x.size):
        h = rel_step * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        grad[j] = (func(xp) - func(xm)) / (2.0 * h)
    return grad


def _pack(psi: ModelParams) -> np.ndarray:
    return np.array(
        [
            psi.mu,
            math.log(psi.theta.sigma2),
            math.log(psi.theta.phi),
            math.log(max(psi.tau2, 1e-12)),
        ]
    )


def _unpack(x: np.ndarray, nu: float) -> ModelParams:
    # clamp so wild line-search trial points cannot underflow a positive
    # parameter to exactly zero (or overflow exp); the resulting extreme
    # but valid parameters evaluate to inf/nan and the search backtracks
    logs = np.clip(x[1:], -700.0, 700.0)
    return ModelParams.from_values(
        x[0], math.exp(logs[0]), math.exp(logs[1]), math.exp(logs[2]), nu=nu
    )


def _resolve_phi_cap(config: FitConfig, data: Dataset) -> float:
    if config.phi_cap is not None:
        return config.phi_cap
    if config.domain is not None:
        return PHI_CAP_FACTOR * config.domain.diameter
    spans = data.locations.max(axis=0) - data.locations.min(axis=0)
    return PHI_CAP_FACTOR * max(float(np.hypot(*spans)), 1e-12)


class _BfgsRun:
    def __init__(self, x, f, iterations, converged, gradient_norm):
        self.x = x
        self.f = f
        self.iterations = iterations
        self.converged = converged
        self.gradient_norm = gradient_norm


def _bfgs(func, x0, free_idx, config: FitConfig) -> _BfgsRun:
    """Minimize over the free coordinates of x0; fixed coordinates stay put."""
    x = x0.copy()

    def f_of(xf):
        full = x0.copy()
        full[free_idx] = xf
        return func(full)

    xf = x[free_idx].copy()
    f0 = f_of(xf)
    if not np.isfinite(f0):
        raise ValueError("objective is not finite at the initial point")
    g = fd_gradient(f_of, xf, config.rel_step)
    h_inv = np.eye(xf.size)
    last_rel = 0.0
    iterations = 0
    converged = False

    while True:
        gnorm = float(np.linalg.norm(g))
        if gnorm < config.gtol and last_rel < config.ftol:
            converged = True
            break
        if iterations >= config.max_iter:
            break

        direction = -h_inv @ g
        if direction @ g >= 0:  # not a descent direction; reset curvature
            h_inv = np.eye(xf.size)
            direction = -g

        alpha, accepted = 1.0, None
        while alpha > 1e-14:
            trial = xf + alpha * direction
            f_trial = f_of(trial)
            step = trial - xf
            if np.isfinite(f_trial) and f_trial <= f0 + 1e-4 * (g @ step):
                accepted = (trial, f_trial)
                break
            alpha *= 0.5
        if accepted is None:
            break  # line search stalled

        x_new, f_new = accepted
        g_new = fd_gradient(f_of, x_new, config.rel_step)
        s = x_new - xf
        yk = g_new - g
        sy = s @ yk
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yk):
            rho = 1.0 / sy
            v = np.eye(xf.size) - rho * np.outer(s, yk)
            h_inv = v @ h_inv @ v.T + rho * np.outer(s, s)
        last_rel = abs(f0 - f_new) / max(1.0, abs(f_new))
        xf, f0, g = x_new, f_new, g_new
        iterations += 1

    x[free_idx] = xf
    return _BfgsRun(x, f0, iterations, converged, float(np.linalg.norm(g)))


def fit(objective, data: Dataset, init: ModelParams, config: FitConfig = FitConfig()) -> FitResult:
    """Minimize ``objective.nll`` over psi from ``init``.

    Runs up to ``config.restarts`` additional attempts from inits with
    +/-50% multiplicative noise on the positive parameters when a run ends
    unconverged; reports the best point found either way. Deterministic
    given (data, init, config).
    """
    nu = init.theta.nu
    log_phi_cap = math.log(_resolve_phi_cap(config, data))
    free_idx = np.array([j for j, name in enumerate(PARAM_NAMES) if name not in config.fixed])
    if free_idx.size == 0:
        raise ValueError("no free parameters to optimize")

    def wrapped(x_full):
        x_full = x_full.copy()
        x_full[2] = min(x_full[2], log_phi_cap)
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                return objective.nll(_unpack(x_full, nu), data)
        except (np.linalg.LinAlgError, FloatingPointError, OverflowError):
            return np.inf

    x_init = _pack(init)
    x_init[2] = min(x_init[2], log_phi_cap)
    rng = np.random.default_rng(config.restart_seed)

    best: _BfgsRun | None = None
    restarts_used = 0
    for attempt in range(config.restarts + 1):
        if attempt == 0:
            x0 = x_init
        else:
            restarts_used = attempt
            x0 = x_init.copy()
            x0[1:] += np.log(rng.uniform(0.5, 1.5, size=3))
            x0[2] = min(x0[2], log_phi_cap)
        run = _bfgs(wrapped, x0, free_idx, config)
        if best is None or run.f < best.f:
            best = run
        if run.converged:
            break

    x_hat = best.x.copy()
    phi_capped = x_hat[2] >= log_phi_cap - 1e-12
    x_hat[2] = min(x_hat[2], log_phi_cap)
    return FitResult(
        psi_hat=_unpack(x_hat, nu),
        nll=best.f,
        iterations=best.iterations,
        converged=best.converged,
        gradient_norm=best.gradient_norm,
        restarts_used=restarts_used,
        phi_capped=bool(phi_capped),
    )
