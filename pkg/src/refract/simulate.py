"""Monte Carlo for diffusions reflected at barriers.

Euler steps X' = X + mu(X) dt + sigma(X) sqrt(dt) Z followed by
nearest-point projection onto [a, b]; the overshoots a - X' and X' - b are
the local-time increments.  Model callables are compiled with numba when
possible and run as plain Python otherwise.
"""

from __future__ import annotations

import functools
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .diffusion import DiffusionModel, RewardModel
from .errors import ArgumentError, DegenerateVolatilityError, NumericalBlowupError

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

log = logging.getLogger(__name__)

CHUNK = 1 << 18
DEFAULT_SEED = 12345

# state slots shared by the kernels
H, LA, LB, XMIN, XMAX, NTRUNC, STATUS, BADSTEP = range(8)
OK, DEGENERATE, BLOWUP = 0, 1, 2


def _reflect(x, a, b, cap, dt, z, drift, vol, h, state, path, thin, step0):
    sq = math.sqrt(dt)
    acc_h, la, lb = state[H], state[LA], state[LB]
    lo, hi, ntr = state[XMIN], state[XMAX], state[NTRUNC]
    for i in range(z.shape[0]):
        s = vol(x)
        if not s > 0:
            state[STATUS] = DEGENERATE if math.isfinite(s) else BLOWUP
            state[BADSTEP] = step0 + i
            break
        acc_h += h(x) * dt
        y = x + drift(x) * dt + s * sq * z[i]
        if not math.isfinite(y):
            state[STATUS] = BLOWUP
            state[BADSTEP] = step0 + i
            break
        if y < a:
            la += a - y
            y = a
        elif y > b:
            lb += y - b
            y = b
        if y > cap:
            ntr += 1
            y = cap
        x = y
        if x < lo:
            lo = x
        if x > hi:
            hi = x
        if thin > 0 and (step0 + i + 1) % thin == 0:
            k = (step0 + i + 1) // thin
            if k < path.shape[0]:
                path[k, 0] = (step0 + i + 1) * dt
                path[k, 1] = x
                path[k, 2] = la
                path[k, 3] = lb
    state[H], state[LA], state[LB] = acc_h, la, lb
    state[XMIN], state[XMAX], state[NTRUNC] = lo, hi, ntr
    return x


def _discounted(xs, a, b, dt, r, z, step0, drift, vol, h, c1, c2, acc, state):
    sq = math.sqrt(dt)
    for j in range(xs.shape[0]):
        x = xs[j]
        total = acc[j]
        for i in range(z.shape[1]):
            n = step0 + i
            s = vol(x)
            if not s > 0:
                state[STATUS] = DEGENERATE if math.isfinite(s) else BLOWUP
                state[BADSTEP] = n
                return
            total += math.exp(-r * n * dt) * h(x) * dt
            y = x + drift(x) * dt + s * sq * z[j, i]
            if not math.isfinite(y):
                state[STATUS] = BLOWUP
                state[BADSTEP] = n
                return
            if y < a:
                total -= c2 * (a - y) * math.exp(-r * (n + 1) * dt)
                y = a
            elif y > b:
                total += c1 * (y - b) * math.exp(-r * (n + 1) * dt)
                y = b
            x = y
        xs[j] = x
        acc[j] = total


@functools.lru_cache(maxsize=None)
def _compiled(kernel):
    return numba.njit(kernel) if numba is not None else None


@functools.lru_cache(maxsize=256)
def _jit(f):
    """numba-compiled scalar version of f, or None if f cannot be compiled."""
    if numba is None:
        return None
    try:
        jf = numba.njit(f)
        float(jf(1.0))
        return jf
    except Exception:  # numba raises many unrelated types on unsupported code
        return None


def _scalar(f):
    return lambda x: float(f(x))


class _Engine:
    """Kernel plus model callables, compiled together or all left in Python."""

    def __init__(self, model: DiffusionModel, reward: RewardModel):
        fs = (model.drift, model.vol, reward.h)
        jitted = tuple(_jit(f) for f in fs)
        self.compiled = all(j is not None for j in jitted)
        if self.compiled:
            self.fs = jitted
            self.reflect = _compiled(_reflect)
            self.discounted = _compiled(_discounted)
        else:
            warnings.warn("model functions are not numba-compatible; simulating in pure Python (slow)")
            self.fs = tuple(_scalar(f) for f in fs)
            self.reflect, self.discounted = _reflect, _discounted


def _raise_status(state, dt):
    status, step = int(state[STATUS]), int(state[BADSTEP])
    if status == DEGENERATE:
        raise DegenerateVolatilityError(f"sigma(X) <= 0 at step {step} (t={step * dt:.6g})")
    if status == BLOWUP:
        raise NumericalBlowupError(f"non-finite state at step {step} (t={step * dt:.6g})", step)


@dataclass
class SimConfig:
    model: DiffusionModel
    reward: RewardModel
    a: float
    b: Optional[float] = None
    x0: Optional[float] = None
    dt: float = 1e-3
    horizon_T: float = 2e4
    burn_in_fraction: float = 0.1
    n_batches: int = 20
    seed: int = DEFAULT_SEED
    thin_every: int = 0

    def __post_init__(self):
        if not self.a > 0:
            raise ArgumentError(f"a: lower barrier must be positive, got {self.a}")
        if self.b is not None and not self.b > self.a:
            raise ArgumentError(f"b: need b > a, got a={self.a}, b={self.b}")
        if self.b is not None and self.b > self.model.domain_cap * (1 + 1e-12):
            raise ArgumentError(f"b: exceeds domain_cap={self.model.domain_cap}")
        if not (self.dt > 0 and self.horizon_T > 0):
            raise ArgumentError("dt and horizon_T must be positive")
        if self.dt > self.horizon_T / 1e3:
            raise ArgumentError(f"dt={self.dt} exceeds horizon_T/1000={self.horizon_T / 1e3}")
        if not 0 <= self.burn_in_fraction <= 0.5:
            raise ArgumentError(f"burn_in_fraction must lie in [0, 0.5], got {self.burn_in_fraction}")
        if self.n_batches < 10:
            raise ArgumentError(f"n_batches must be at least 10, got {self.n_batches}")
        if not 0 <= int(self.seed) < 2**64:
            raise ArgumentError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.thin_every < 0:
            raise ArgumentError(f"thin_every must be nonnegative, got {self.thin_every}")
        if self.x0 is None:
            self.x0 = self.a if self.b is None else 0.5 * (self.a + self.b)

    @property
    def upper(self):
        return math.inf if self.b is None else self.b

    def start(self):
        """x0 after the initial jump to the nearest point of the reflection set."""
        return min(max(float(self.x0), self.a), self.upper, self.model.domain_cap)


@dataclass
class SimEstimate:
    mean_reward_rate: float
    std_error: float
    rate_La: float
    rate_Lb: float
    rate_La_se: float
    rate_Lb_se: float
    n_steps: int
    effective_T: float
    x_min: float
    x_max: float
    batch_means: np.ndarray = field(repr=False, default=None)
    path: Optional[np.ndarray] = field(repr=False, default=None)
    truncations: int = 0
    notes: list = field(default_factory=list)


def _run(engine, cfg, x, rng, nsteps, state, path, step0):
    drift, vol, h = engine.fs
    cap = cfg.model.domain_cap
    done = 0
    while done < nsteps:
        n = min(CHUNK, nsteps - done)
        z = rng.standard_normal(n)
        x = engine.reflect(x, cfg.a, cfg.upper, cap, cfg.dt, z, drift, vol, h, state, path, cfg.thin_every, step0 + done)
        if state[STATUS] != OK:
            _raise_status(state, cfg.dt)
        done += n
    return x


def _new_state(x):
    state = np.zeros(8)
    state[XMIN] = state[XMAX] = x
    return state


def _simulate(cfg: SimConfig, rng=None) -> SimEstimate:
    engine = _Engine(cfg.model, cfg.reward)
    rng = rng or np.random.default_rng(cfg.seed)
    n_total = int(round(cfg.horizon_T / cfg.dt))
    burn = int(cfg.burn_in_fraction * n_total)
    per = (n_total - burn) // cfg.n_batches
    x = cfg.start()
    state = _new_state(x)
    path = np.zeros((n_total // cfg.thin_every + 1, 4) if cfg.thin_every else (1, 4))
    path[0] = (0.0, x, 0.0, 0.0)
    x = _run(engine, cfg, x, rng, burn, state, path, 0)
    state[XMIN] = state[XMAX] = x
    step = burn
    c1, c2 = cfg.reward.c1, cfg.reward.c2
    means, la, lb = (np.empty(cfg.n_batches) for _ in range(3))
    tb = per * cfg.dt
    for k in range(cfg.n_batches):
        before = state[:3].copy()
        x = _run(engine, cfg, x, rng, per, state, path, step)
        step += per
        dh, dla, dlb = state[:3] - before
        means[k] = (dh + c1 * dlb - c2 * dla) / tb
        la[k], lb[k] = dla / tb, dlb / tb
    root = math.sqrt(cfg.n_batches)
    notes = []
    if state[NTRUNC]:
        notes.append(f"state truncated at domain_cap={cfg.model.domain_cap} on {int(state[NTRUNC])} steps")
    return SimEstimate(
        mean_reward_rate=float(means.mean()),
        std_error=float(means.std(ddof=1) / root),
        rate_La=float(la.mean()),
        rate_Lb=float(lb.mean()),
        rate_La_se=float(la.std(ddof=1) / root),
        rate_Lb_se=float(lb.std(ddof=1) / root),
        n_steps=int(step),
        effective_T=cfg.n_batches * tb,
        x_min=float(state[XMIN]),
        x_max=float(state[XMAX]),
        batch_means=means,
        path=path[: step // cfg.thin_every + 1] if cfg.thin_every else None,
        truncations=int(state[NTRUNC]),
        notes=notes,
    )


def simulate_reflected(cfg: SimConfig) -> SimEstimate:
    """Long-run reward of the (a, b)-reflection policy with batch-means error."""
    if cfg.b is None:
        raise ArgumentError("simulate_reflected needs both barriers; use simulate_one_sided")
    return _simulate(cfg)


def simulate_one_sided(cfg: SimConfig, exploratory=False) -> SimEstimate:
    """Reflection at a only; the state is truncated at domain_cap if it gets there."""
    if cfg.b is not None:
        raise ArgumentError("simulate_one_sided takes a lower barrier only (b must be None)")
    est = _simulate(cfg)
    if exploratory:
        est.notes.append("exploratory run: positive recurrence on [a, domain_cap) not established")
    if est.truncations:
        warnings.warn(est.notes[0])
    return est


def replication_seeds(seed, n):
    return np.random.SeedSequence(int(seed)).spawn(n)


def simulate_replications(cfg: SimConfig, n: int):
    """Independent replications on spawned seeds; returns (estimates, aggregate row)."""
    ests = [_simulate(cfg, np.random.default_rng(s)) for s in replication_seeds(cfg.seed, n)]
    means = np.array([e.mean_reward_rate for e in ests])
    la = np.array([e.rate_La for e in ests])
    lb = np.array([e.rate_Lb for e in ests])
    if n > 1:
        agg = (means.mean(), means.std(ddof=1) / math.sqrt(n), la.mean(), lb.mean())
    else:
        agg = (ests[0].mean_reward_rate, ests[0].std_error, ests[0].rate_La, ests[0].rate_Lb)
    return ests, tuple(float(v) for v in agg)


# ------------------------------------------------------------ checkpointed
@dataclass
class CheckpointRun:
    """Per-replication cumulative totals at checkpoint times (no burn-in)."""

    times: np.ndarray
    reward: np.ndarray  # (replications, checkpoints): int h dt + c1 L_b - c2 L_a
    local_time: np.ndarray  # L_a + L_b

    def time_average(self):
        return self.reward / self.times[None, :]


def run_checkpoints(cfg: SimConfig, checkpoints: Sequence[float], replications: int = 8) -> CheckpointRun:
    """Replicated runs from x0 recording totals at each checkpoint time."""
    if cfg.b is None:
        raise ArgumentError("checkpointed runs need both barriers")
    times = np.asarray(sorted(checkpoints), dtype=float)
    if times.size == 0 or times[0] <= 0:
        raise ArgumentError("checkpoints must be positive")
    steps = np.rint(times / cfg.dt).astype(np.int64)
    engine = _Engine(cfg.model, cfg.reward)
    c1, c2 = cfg.reward.c1, cfg.reward.c2
    reward = np.zeros((replications, times.size))
    ltime = np.zeros((replications, times.size))
    path = np.zeros((1, 4))
    quiet = SimConfig(cfg.model, cfg.reward, cfg.a, cfg.b, cfg.x0, cfg.dt, max(cfg.horizon_T, times[-1]),
                      cfg.burn_in_fraction, cfg.n_batches, cfg.seed, 0)
    for r, seed in enumerate(replication_seeds(cfg.seed, replications)):
        rng = np.random.default_rng(seed)
        x = quiet.start()
        state = _new_state(x)
        done = 0
        for j, target in enumerate(steps):
            x = _run(engine, quiet, x, rng, int(target - done), state, path, done)
            done = int(target)
            reward[r, j] = state[H] + c1 * state[LB] - c2 * state[LA]
            ltime[r, j] = state[LA] + state[LB]
    return CheckpointRun(steps * cfg.dt, reward, ltime)


@dataclass
class AdmissibilityResult:
    times: np.ndarray
    mean_local_time: np.ndarray
    se_local_time: np.ndarray
    slope: float
    slope_se: float
    intercept: float
    max_relative_residual: float

    @property
    def points(self):
        return list(zip(self.times.tolist(), self.mean_local_time.tolist()))


def admissibility_probe(cfg: SimConfig, checkpoints: Sequence[float], replications: int = 8) -> AdmissibilityResult:
    """Mean L_a + L_b at checkpoint times with a least-squares linear fit.

    The slope uncertainty comes from the spread of per-replication slopes.
    """
    if replications < 8:
        raise ArgumentError(f"need at least 8 replications, got {replications}")
    run = run_checkpoints(cfg, checkpoints, replications)
    t = run.times
    design = np.column_stack([t, np.ones_like(t)])
    per_rep = np.linalg.lstsq(design, run.local_time.T, rcond=None)[0]  # (2, replications)
    mean_l = run.local_time.mean(axis=0)
    slope, intercept = np.linalg.lstsq(design, mean_l, rcond=None)[0]
    fitted = slope * t + intercept
    rel = np.max(np.abs(mean_l - fitted) / np.maximum(np.abs(fitted), 1e-300)) if t.size > 2 else 0.0
    return AdmissibilityResult(
        times=t,
        mean_local_time=mean_l,
        se_local_time=run.local_time.std(axis=0, ddof=1) / math.sqrt(replications),
        slope=float(slope),
        slope_se=float(per_rep[0].std(ddof=1) / math.sqrt(replications)),
        intercept=float(intercept),
        max_relative_residual=float(rel),
    )


# -------------------------------------------------------------- discounted
@dataclass
class DiscountedEstimate:
    value: float
    std_error: float
    n_paths: int
    horizon: float


def simulate_discounted(model: DiffusionModel, reward: RewardModel, a, b, r, x0, dt=1e-3, horizon=None,
                        n_paths=1000, seed=DEFAULT_SEED):
    """E int_0^T e^{-rt} (h dt + c1 dL_b - c2 dL_a) under (a, b)-reflection.

    The default horizon makes the truncated tail factor e^{-rT} equal e^{-12}.
    """
    if not (r > 0 and 0 < a < b):
        raise ArgumentError("need r > 0 and 0 < a < b")
    horizon = 12.0 / r if horizon is None else float(horizon)
    engine = _Engine(model, reward)
    drift, vol, h = engine.fs
    rng = np.random.default_rng(seed)
    n_total = int(round(horizon / dt))
    start = min(max(float(x0), a), b)
    jump = -reward.c2 * (a - x0) if x0 < a else (reward.c1 * (x0 - b) if x0 > b else 0.0)
    xs = np.full(n_paths, start)
    acc = np.full(n_paths, jump)
    state = np.zeros(8)
    chunk = max(1, CHUNK * 4 // n_paths)
    done = 0
    while done < n_total:
        n = min(chunk, n_total - done)
        z = rng.standard_normal((n_paths, n))
        engine.discounted(xs, a, b, dt, r, z, done, drift, vol, h, reward.c1, reward.c2, acc, state)
        if state[STATUS] != OK:
            _raise_status(state, dt)
        done += n
    return DiscountedEstimate(float(acc.mean()), float(acc.std(ddof=1) / math.sqrt(n_paths)), n_paths, n_total * dt)
