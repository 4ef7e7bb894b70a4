"""Euler-Maruyama simulation of the closed loop and Monte Carlo cost estimates.

Both controller types are reduced to one linear SDE in an augmented state
``z``::

    dz = M z dt + D dxi,      xi = [w_e (d), w_p (n d), v (n p)]

(``z = x`` for state feedback, ``z = [x; x_hat]`` or ``[x; x_tilde]`` for
output feedback), with running cost ``z' Cz z`` already divided by ``n``.

Each trial owns its random stream, derived from ``(seed, trial_index)``,
so results do not depend on how trials are batched.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la
from scipy.special import logsumexp

from .errors import EstimatorOverflow, IllConditioned, NoSolution, NumericalBlowup
from .riccati import stabilizing_solution
from .synthesis import FullInfoController, OutputFeedbackController, control_gare_terms

__all__ = [
    "SimConfig",
    "ClosedLoop",
    "Trajectory",
    "CostReport",
    "closed_loop",
    "evaluate_cost",
    "simulate",
    "mc_cost",
    "trial_rng",
]

OVERFLOW_GUARD = 1e10
# noise samples buffered per chunk, across all trials
CHUNK_BUDGET = 2_000_000
MAX_CHUNK_STEPS = 10_000


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    horizon: float = 10.0
    trials: int = 1
    seed: int = 0
    evader_mode: str = "model"
    measurement_noise: bool = True
    burn_in: Optional[float] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.horizon >= self.dt:
            raise ValueError("horizon must be at least dt")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be a positive integer")
        if self.evader_mode not in ("model", "frozen"):
            raise ValueError("evader_mode must be 'model' or 'frozen'")
        if self.burn_in is not None and not 0 <= self.burn_in < self.horizon:
            raise ValueError("burn_in must lie in [0, horizon)")

    @property
    def steps(self):
        return int(round(self.horizon / self.dt))

    def default_burn_in(self):
        if self.burn_in is not None:
            return self.burn_in
        return min(self.horizon / 10.0, 10.0)


@dataclass(frozen=True, eq=False)
class ClosedLoop:
    M: np.ndarray
    D: np.ndarray
    cost: np.ndarray
    x_map: np.ndarray
    u_map: np.ndarray
    xhat_map: Optional[np.ndarray]
    n: int

    @property
    def dim(self):
        return self.M.shape[0]

    @property
    def noise_dim(self):
        return self.D.shape[1]


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    u: np.ndarray
    running_cost: np.ndarray
    xhat: Optional[np.ndarray] = None


@dataclass(frozen=True)
class CostReport:
    theta: float
    mc_estimate: float
    std_error: float
    analytic: Optional[float] = None
    trials: int = 0
    horizon: float = 0.0
    method: str = "plain"
    extra: dict = field(default_factory=dict, compare=False)


def closed_loop(sys, controller, cfg=None, realization="xhat"):
    """Closed-loop SDE for ``controller`` applied to ``sys``.

    ``cfg.evader_mode == "frozen"`` removes the evader noise and
    ``cfg.measurement_noise = False`` removes the sensor noise; the
    controller is unchanged.
    """
    spec = sys.spec
    nd, d = sys.state_dim, spec.d
    ny = sys.output_dim
    A_n, B_n, C_n = sys.A_n.dense, sys.B_n.dense, sys.C_n.dense
    D_x = np.hstack([-sys.G_n, np.sqrt(sys.epsilon) * sys.F_n.dense, np.zeros((nd, ny))])
    if cfg is not None and cfg.evader_mode == "frozen":
        D_x[:, :d] = 0.0

    if isinstance(controller, FullInfoController):
        M = A_n - B_n @ controller.K
        D = D_x
        x_map = np.eye(nd)
        u_map = -controller.K
        xhat_map = None
    elif isinstance(controller, OutputFeedbackController):
        H_n = sys.H_n.dense
        L = controller.filter_L
        if realization == "xhat":
            g = controller.gain
            top = np.hstack([A_n, -B_n @ g])
            bottom = np.hstack([L @ C_n, controller.filter_A - B_n @ g])
            inj = L @ H_n
            xhat_map = np.hstack([np.zeros((nd, nd)), np.eye(nd)])
        elif realization == "xtilde":
            k = controller.state_gain
            _, S, _ = control_gare_terms(sys, controller.theta)
            Minv = controller.M_inv
            top = np.hstack([A_n, -B_n @ k])
            bottom = np.hstack([Minv @ L @ C_n, A_n - S @ controller.X_n.X - Minv @ L @ C_n])
            inj = Minv @ L @ H_n
            xhat_map = np.hstack([np.zeros((nd, nd)), la.inv(Minv)])
            g = k
        else:
            raise ValueError(f"unknown realization {realization!r}")
        M = np.vstack([top, bottom])
        D_hat = np.zeros((nd, D_x.shape[1]))
        D_hat[:, D_x.shape[1] - ny:] = inj
        if cfg is not None and not cfg.measurement_noise:
            D_hat[:] = 0.0
        D = np.vstack([D_x, D_hat])
        x_map = np.hstack([np.eye(nd), np.zeros((nd, nd))])
        u_map = np.hstack([np.zeros((g.shape[0], nd)), -g])
    else:
        raise TypeError(f"unsupported controller type {type(controller).__name__}")

    cost = (x_map.T @ sys.Q_n.dense @ x_map + u_map.T @ sys.R_n.dense @ u_map) / sys.n
    return ClosedLoop(M=M, D=D, cost=0.5 * (cost + cost.T), x_map=x_map, u_map=u_map,
                      xhat_map=xhat_map, n=sys.n)


def _tilt_matrix(cl, theta):
    """Solution ``P`` of ``M'P + PM + theta P D D' P + Cz = 0``.

    ``theta D'P z`` is the drift of the exponentially twisted noise under
    which ``exp(theta/2 int z'Cz)`` times the likelihood ratio is nearly
    constant.
    """
    P, _ = stabilizing_solution(cl.M, -theta * cl.D @ cl.D.T, cl.cost)
    return P


def evaluate_cost(cl, theta):
    """Long-run (risk-sensitive) cost of a closed loop, ``Tr(D D' P)``."""
    if theta == 0:
        P = la.solve_continuous_lyapunov(cl.M.T, -cl.cost)
    else:
        try:
            P = _tilt_matrix(cl, theta)
        except NoSolution:
            return math.inf
    return float(np.sum(cl.D @ cl.D.T * P))


def trial_rng(seed, trial):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(trial)])))


def _psd_factor(S):
    w, v = la.eigh(0.5 * (S + S.T))
    return v * np.sqrt(np.clip(w, 0.0, None))


def _initial_states(cl, sys, controller, gens, x0, ic):
    nd = sys.state_dim
    trials = len(gens)
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float).ravel()
        if x0.size != nd:
            raise ValueError(f"x0 must have {nd} entries")
        xs = np.tile(x0, (trials, 1))
        mean = x0
    elif ic is not None:
        fac = _psd_factor(ic.Sigma_0)
        xs = np.array([ic.x_bar_0 + fac @ g.standard_normal(nd) for g in gens])
        mean = ic.x_bar_0
    else:
        xs = np.zeros((trials, nd))
        mean = np.zeros(nd)
    if cl.dim == nd:
        return xs
    # filter starts at the prior mean
    if cl.xhat_map is not None and not np.allclose(cl.xhat_map[:, nd:], np.eye(nd)):
        hat0 = la.solve(cl.xhat_map[:, nd:], mean)
    else:
        hat0 = mean
    return np.hstack([xs, np.tile(hat0, (trials, 1))])


def _integrate(cl, z0, gens, cfg, tilt=None, burn_in=0.0, record_every=0):
    """Vectorised Euler-Maruyama over all trials.

    Returns ``(integrated_cost, log_weight, records)``; ``records`` holds
    ``(times, z, running_cost)`` for trial 0 when ``record_every > 0``.
    """
    dt = cfg.dt
    steps = cfg.steps
    trials = z0.shape[0]
    # only channels that reach the state are sampled
    active = np.flatnonzero(np.any(cl.D != 0, axis=0))
    nxi = active.size
    sqdt = math.sqrt(dt)
    step_map = (np.eye(cl.dim) + dt * cl.M).T
    noise_map = cl.D[:, active].T
    if tilt is not None:
        tilt = tilt[:, active]
    Cz = cl.cost
    burn_step = int(math.ceil(burn_in / dt - 1e-9))

    z = z0.copy()
    total = np.zeros(trials)
    logw = np.zeros(trials)
    rec_t, rec_z, rec_c = [], [], []
    if record_every:
        rec_t.append(0.0)
        rec_z.append(z[0].copy())
        rec_c.append(0.0)

    chunk = max(1, min(steps, MAX_CHUNK_STEPS, CHUNK_BUDGET // max(1, trials * nxi)))
    k = 0
    while k < steps:
        m = min(chunk, steps - k)
        noise = np.stack([g.standard_normal((m, nxi)) for g in gens], axis=1)
        noise *= sqdt
        for j in range(m):
            if k >= burn_step:
                total += np.einsum("ti,ij,tj->t", z, Cz, z) * dt
            dW = noise[j]
            if tilt is not None:
                v = z @ tilt
                logw -= np.einsum("ti,ti->t", v, dW) + 0.5 * dt * np.einsum("ti,ti->t", v, v)
                dW = dW + v * dt
            z = z @ step_map + dW @ noise_map
            k += 1
            if record_every and k % record_every == 0:
                rec_t.append(k * dt)
                rec_z.append(z[0].copy())
                rec_c.append(total[0])
        peak = np.max(np.abs(z))
        if not np.isfinite(peak) or peak > OVERFLOW_GUARD:
            raise NumericalBlowup(k * dt, float(peak))
    records = None
    if record_every:
        records = (np.array(rec_t), np.array(rec_z), np.array(rec_c))
    return total, logw, records


def simulate(sys, controller, cfg, x0=None, ic=None, realization="xhat", record_every=1):
    """One closed-loop trajectory (the stream of trial 0 for ``cfg.seed``)."""
    cl = closed_loop(sys, controller, cfg, realization=realization)
    gens = [trial_rng(cfg.seed, 0)]
    z0 = _initial_states(cl, sys, controller, gens, x0, ic)
    _, _, (t, Z, c) = _integrate(cl, z0, gens, cfg, record_every=record_every)
    xhat = Z @ cl.xhat_map.T if cl.xhat_map is not None else None
    return Trajectory(times=t, x=Z @ cl.x_map.T, u=Z @ cl.u_map.T, running_cost=c, xhat=xhat)


def mc_cost(sys, controller, theta, cfg, x0=None, ic=None, tilt="auto"):
    """Monte Carlo estimate of the per-agent cost.

    ``theta = 0``: average of the time-averaged quadratic cost after a
    burn-in.  ``theta != 0``: ``2/(theta T) (logsumexp(a_j) - log N)`` with
    ``a_j = theta/2 int z'Cz + log(dP/dQ)_j``.  With ``tilt="auto"`` the
    noise is exponentially twisted (unbiased for any twist; variance is
    near zero with the matched one); ``tilt=False`` samples the nominal
    dynamics, i.e. ``log(dP/dQ) = 0``.
    """
    theta = float(theta)
    cl = closed_loop(sys, controller, cfg)
    gens = [trial_rng(cfg.seed, i) for i in range(cfg.trials)]
    z0 = _initial_states(cl, sys, controller, gens, x0, ic)
    analytic = controller.cost_per_agent if controller.theta == theta else None
    T = cfg.steps * cfg.dt

    if theta == 0:
        burn = cfg.default_burn_in()
        total, _, _ = _integrate(cl, z0, gens, cfg, burn_in=burn)
        window = T - math.ceil(burn / cfg.dt - 1e-9) * cfg.dt
        per_trial = total / window
        se = float(np.std(per_trial, ddof=1) / math.sqrt(cfg.trials)) if cfg.trials > 1 else 0.0
        return CostReport(theta=0.0, mc_estimate=float(per_trial.mean()), std_error=se,
                          analytic=analytic, trials=cfg.trials, horizon=T, method="plain",
                          extra={"burn_in": burn})

    tilt_gain, method = None, "plain"
    if tilt == "auto" or tilt is True:
        try:
            P = _tilt_matrix(cl, theta)
            tilt_gain = (theta * cl.D.T @ P).T
            method = "twisted"
        except (NoSolution, IllConditioned) as exc:
            warnings.warn(f"no exponential twist available ({exc}); sampling nominal dynamics",
                          RuntimeWarning, stacklevel=2)
    total, logw, _ = _integrate(cl, z0, gens, cfg, tilt=tilt_gain)
    a = 0.5 * theta * total + logw
    if not np.all(np.isfinite(a)):
        raise EstimatorOverflow(float(np.nanmax(np.abs(a))))
    lme = logsumexp(a) - math.log(cfg.trials)
    estimate = 2.0 / (theta * T) * lme
    if not np.isfinite(estimate):
        raise EstimatorOverflow(float(a.max()))
    w = np.exp(a - a.max())
    if cfg.trials > 1 and w.mean() > 0:
        se_log = np.std(w, ddof=1) / (math.sqrt(cfg.trials) * w.mean())
        se = float(2.0 / (abs(theta) * T) * se_log)
    else:
        se = 0.0
    return CostReport(theta=theta, mc_estimate=float(estimate), std_error=se, analytic=analytic,
                      trials=cfg.trials, horizon=T, method=method,
                      extra={"max_exponent": float(a.max())})
