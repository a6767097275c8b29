"""KL-regularized PPO over a ``GrammarPolicy``.

One scalar ``r_total = r_RL - eta * k(tau)`` per trajectory is shared by every
decision in it, where ``k(tau)`` sums the closed-form categorical KL to the
frozen initial policy over the decisions the trajectory visited. The update
maximizes

    J(theta) = mean_i sum_d min(rho_id A_i, clip(rho_id, 1-eps, 1+eps) A_i)
               - eta * mean_i k_theta(tau_i)

with ``A_i = r_total_i - b`` for an exponential-moving-average baseline ``b``.
The second term differentiates the KL penalty directly so that ``eta`` acts
on the parameters, not only through the sampled reward.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..rewards import RewardWeights, reward_vector
from ..stl import Formula, render
from .policy import GrammarPolicy, Trajectory, log_softmax

log = logging.getLogger(__name__)

RewardFn = Callable[[str, Formula, Formula], Tuple[float, float, float, float]]


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class PpoConfig:
    clip: float = 0.2
    lr: float = 0.01
    epochs: int = 4
    batch_size: int = 32
    eta: float = 0.05
    baseline_decay: float = 0.99
    seed: int = 0
    total_episodes: int = 10000
    weights: RewardWeights = field(default_factory=RewardWeights)

    def __post_init__(self):
        # clip = inf disables clipping (plain policy gradient); kept for testing
        if not (0 < self.clip < 1 or self.clip == math.inf):
            raise ValueError(f"clip ratio must be in (0, 1), got {self.clip}")
        if self.eta < 0:
            raise ValueError("KL coefficient must be non-negative")
        if not 0 <= self.baseline_decay < 1:
            raise ValueError("baseline decay must be in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1 or self.total_episodes < 1 or self.lr <= 0:
            raise ValueError("epochs, batch size, total episodes and lr must be positive")


class Adam:
    """Adam for gradient *ascent* on a flat parameter vector."""

    def __init__(self, n: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad ** 2
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return theta + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class PpoState:
    baseline: Optional[float] = None
    optimizer: Optional[Adam] = None


@dataclass(frozen=True)
class UpdateStats:
    mean_r_rl: float
    mean_r_total: float
    mean_kl: float
    clip_fraction: float
    baseline: float


def _clip(rho: float, eps: float) -> float:
    return min(max(rho, 1.0 - eps), 1.0 + eps)


def objective_and_grad(
    policy: GrammarPolicy,
    batch: Sequence[Trajectory],
    ref: GrammarPolicy,
    advantages: Sequence[float],
    clip: float,
    eta: float,
    theta: Optional[np.ndarray] = None,
    surrogate: bool = True,
) -> Tuple[float, np.ndarray, float]:
    """Objective, gradient and clip fraction at ``theta`` (default: the policy's).

    With ``surrogate=False`` the first term is ``A * log pi`` instead of the
    ratio surrogate, which is the vanilla policy-gradient objective.
    """
    theta = policy.theta if theta is None else theta
    grad = np.zeros_like(theta)
    rows = policy.spec.feature_dim + 1
    value = 0.0
    clipped = 0
    n_dec = 0
    scale = 1.0 / len(batch)
    for traj, adv in zip(batch, advantages):
        idx, val = policy.features(traj.x)
        for d in traj.decisions:
            slot = policy.slots[d.key]
            block = theta[slot.offset:slot.offset + rows * slot.size].reshape(rows, slot.size)
            logp = log_softmax(val @ block[idx])
            p = np.exp(logp)
            onehot = np.zeros(slot.size)
            onehot[d.index] = 1.0
            if surrogate:
                rho = math.exp(logp[d.index] - d.logp)
                unclipped = rho * adv
                bounded = _clip(rho, clip) * adv
                n_dec += 1
                if abs(rho - 1.0) > clip:
                    clipped += 1
                value += scale * min(unclipped, bounded)
                coef = unclipped if unclipped <= bounded else 0.0
            else:
                value += scale * adv * logp[d.index]
                coef = adv
            dz = scale * coef * (onehot - p)
            if eta:
                logq = ref.log_probs(d.key, traj.x)
                mask = p > 0
                kl = float(np.sum(p[mask] * (logp[mask] - logq[mask])))
                value -= scale * eta * kl
                diff = np.where(mask, logp - logq, 0.0)
                dz -= scale * eta * p * (diff - kl)
            # rows idx of the block receive outer(val, dz)
            flat = slot.offset + (idx[:, None] * slot.size + np.arange(slot.size)[None, :])
            grad[flat] += val[:, None] * dz[None, :]
    return value, grad, (clipped / n_dec if n_dec else 0.0)


def policy_gradient(policy: GrammarPolicy, batch: Sequence[Trajectory], ref: GrammarPolicy,
                    advantages: Sequence[float], eta: float) -> np.ndarray:
    return objective_and_grad(policy, batch, ref, advantages, math.inf, eta, surrogate=False)[1]


def advantages_for(batch: Sequence[Trajectory], state: PpoState, decay: float) -> List[float]:
    """Advantages against the baseline, then fold the batch into the baseline."""
    rewards = [t.r_total for t in batch]
    if state.baseline is None:
        state.baseline = float(np.mean(rewards))
    adv = [r - state.baseline for r in rewards]
    for r in rewards:
        state.baseline = decay * state.baseline + (1 - decay) * r
    return adv


def ppo_update(
    policy: GrammarPolicy,
    batch: Sequence[Trajectory],
    ref: GrammarPolicy,
    cfg: PpoConfig,
    state: Optional[PpoState] = None,
) -> Tuple[GrammarPolicy, UpdateStats, PpoState]:
    """Return an updated copy of ``policy``; ``policy`` itself is untouched."""
    if not batch:
        raise ValueError("empty trajectory batch")
    policy.check_compatible(ref)
    state = state or PpoState()
    if state.optimizer is None:
        state.optimizer = Adam(policy.n_params, cfg.lr)
    adv = advantages_for(batch, state, cfg.baseline_decay)
    new = policy.copy()
    fractions = []
    if any(a != 0.0 for a in adv) or cfg.eta:
        for epoch in range(cfg.epochs):
            value, grad, frac = objective_and_grad(new, batch, ref, adv, cfg.clip, cfg.eta)
            if not (math.isfinite(value) and np.all(np.isfinite(grad))):
                bad = int(np.sum(~np.isfinite(grad)))
                raise TrainingError(
                    f"non-finite PPO gradient at epoch {epoch}: objective={value}, "
                    f"{bad} bad entries, max|theta|={np.max(np.abs(new.theta)):.3g}"
                )
            fractions.append(frac)
            new.theta = state.optimizer.step(new.theta, grad)
    stats = UpdateStats(
        mean_r_rl=float(np.mean([t.reward.r_rl for t in batch])),
        mean_r_total=float(np.mean([t.r_total for t in batch])),
        mean_kl=float(np.mean([t.kl for t in batch])),
        clip_fraction=float(np.mean(fractions)) if fractions else 0.0,
        baseline=float(state.baseline),
    )
    return new, stats, state


def score_trajectory(traj: Trajectory, ref_formula: Optional[Formula], rewards: RewardFn,
                     weights: RewardWeights) -> Trajectory:
    """Attach the reward vector; ``weights.eta`` scales the trajectory's KL."""
    scores = rewards(traj.x, traj.formula, ref_formula)
    return traj.with_reward(reward_vector(scores, weights, traj.kl))


@dataclass
class TrainResult:
    policy: GrammarPolicy
    curve: List[dict]
    episode_rewards: List[float]
    episode_kl: List[float]

    def window_means(self, width: int = 500) -> Tuple[float, float]:
        r = self.episode_rewards
        if len(r) < width:
            raise ValueError(f"need at least {width} episodes, have {len(r)}")
        return float(np.mean(r[:width])), float(np.mean(r[-width:]))

    def write_curve(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=["step", "mean_r_rl", "mean_r_total", "mean_kl", "clip_fraction"])
            writer.writeheader()
            for row in self.curve:
                writer.writerow({k: row[k] for k in writer.fieldnames})

    def summary(self, dataset: Optional[Sequence[Tuple[str, Formula]]] = None, ref: Optional[GrammarPolicy] = None) -> dict:
        out = {"episodes": len(self.episode_rewards), "updates": len(self.curve)}
        if len(self.episode_rewards) >= 2:
            width = min(500, len(self.episode_rewards) // 2)
            first, last = self.window_means(width)
            out.update(window=width, first_window_r_total=first, last_window_r_total=last)
        if dataset is not None:
            out["exact_match_rate"] = exact_match_rate(self.policy, dataset)
            if ref is not None:
                out["final_policy_kl"] = mean_policy_kl(self.policy, ref, [x for x, _ in dataset])
        return out

    def write_summary(self, path, **kwargs):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(**kwargs), fh, indent=2, sort_keys=True)


def exact_match_rate(policy: GrammarPolicy, dataset: Sequence[Tuple[str, Formula]]) -> float:
    """Fraction of inputs whose greedy derivation renders exactly as the reference."""
    if not dataset:
        return 0.0
    return sum(render(policy.greedy(x)) == render(y) for x, y in dataset) / len(dataset)


def mean_policy_kl(policy: GrammarPolicy, ref: GrammarPolicy, xs: Sequence[str]) -> float:
    from .policy import policy_kl

    unique = sorted(set(xs))
    return float(np.mean([policy_kl(policy, ref, x) for x in unique]))


def train_loop(
    dataset: Sequence[Tuple[str, Optional[Formula]]],
    policy0: GrammarPolicy,
    rewards: RewardFn,
    cfg: PpoConfig = PpoConfig(),
    on_update: Optional[Callable[[int, UpdateStats], None]] = None,
) -> TrainResult:
    """Cycle through ``dataset`` in the given order for ``cfg.total_episodes`` episodes.

    ``rewards(x, hyp, ref)`` returns the four metric scores; reward-model
    sources ignore ``ref``.
    """
    if not dataset:
        raise ValueError("empty training set")
    # the trainer's eta is authoritative for both the reward and the update
    weights = replace(cfg.weights.normalize(), eta=cfg.eta)
    ref = policy0.copy()
    policy = policy0.copy()
    rng = np.random.default_rng(cfg.seed)
    state = PpoState()
    curve: List[dict] = []
    ep_rewards: List[float] = []
    ep_kl: List[float] = []
    episode = 0
    while episode < cfg.total_episodes:
        n = min(cfg.batch_size, cfg.total_episodes - episode)
        batch = []
        for j in range(n):
            x, y = dataset[(episode + j) % len(dataset)]
            traj = policy.sample(x, rng, ref=ref)
            batch.append(score_trajectory(traj, y, rewards, weights))
        episode += n
        policy, stats, state = ppo_update(policy, batch, ref, cfg, state)
        ep_rewards += [t.r_total for t in batch]
        ep_kl += [t.kl for t in batch]
        row = {"step": episode, **asdict(stats)}
        curve.append(row)
        if on_update:
            on_update(episode, stats)
        if len(curve) % 50 == 0:
            log.info("episode %d: r_total %.4f kl %.4f", episode, stats.mean_r_total, stats.mean_kl)
    return TrainResult(policy, curve, ep_rewards, ep_kl)
