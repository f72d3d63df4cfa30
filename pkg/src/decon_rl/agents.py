"""Actor-critic on top of a reward source: vanilla, direct and deconfounding variants.

A reward source turns (state, action) into the reward the learner trains on and,
when a ground truth exists, the reward the environment actually pays:

    OracleSource   contextual task over an exact confounder table; "vanilla"
                   learns from E[r | observed action], "decon" from do-rewards
    ModelSource    rollouts through a fitted model's latent transition
    LoggedSource   replays stored (state, action, reward) tuples ("direct")
"""

from __future__ import annotations

import csv
import json
import math
import struct
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Protocol

import numpy as np

from .causal import DiscreteCPT, default_cpt
from .deconfound import LearnedRewardModel, TableRewardModel, conditional_reward, do_reward_mc
from .envs.confounding import ACTION_BOUND, T1, ConfoundingSpec, action_categories, confounded_policy
from .numerics import autodiff as ad
from .numerics.autodiff import Tensor
from .numerics.nn import MLP, Linear, ParamSet
from .numerics.optim import AdamState, adam_step

ALGOS = ("vanilla", "direct", "decon")
LOG_COLUMNS = ("episode", "total_reward", "moving_avg", "optimal_action_freq", "wall_ms")
STD_FLOOR = 1e-3
INIT_STD = 1.0
HEAD_INIT_SCALE = 0.01
MOVING_WINDOW = 100
POLICY_MAGIC = b"DRLP"
POLICY_VERSION = 1


class SourceMismatchError(ValueError):
    pass


# ------------------------------------------------------------------ policy


class Policy:
    """Actor pi(a | z) and critic V(z), two hidden layers each.

    Continuous actions use a tanh-squashed Gaussian scaled to ``action_bound``;
    ``discrete`` switches the actor to a categorical over {0, 1}.
    """

    def __init__(self, d_z: int, action_bound: float = 2.0, discrete: bool = False, hidden: int = 300, seed: int = 0):
        self.d_z = d_z
        self.action_bound = float(action_bound)
        self.discrete = discrete
        self.hidden = hidden
        self.seed = seed
        self.params = ParamSet(np.random.default_rng(seed))
        P = self.params
        self.actor_body = MLP(P, "actor.body", d_z, [hidden, hidden])
        if discrete:
            self.logits = Linear(P, "actor.logits", hidden, 2)
        else:
            self.mean_head = Linear(P, "actor.mean", hidden, 1)
            self.var_head = Linear(P, "actor.var", hidden, 1)
        self.critic_body = MLP(P, "critic.body", d_z, [hidden, hidden])
        self.value_head = Linear(P, "critic.value", hidden, 1)
        # Start near-state-independent: mean ~0 and std 1 (logits ~0 when discrete),
        # so neither action category is favoured by the random initialisation.
        for head in ("actor.logits",) if discrete else ("actor.mean", "actor.var"):
            P[f"{head}.w"].data *= HEAD_INIT_SCALE
        if not discrete:
            P["actor.var.b"].data[:] = np.log(np.expm1(INIT_STD**2 - STD_FLOOR**2))

    @property
    def d_a(self) -> int:
        return 1

    def config(self) -> dict:
        return {
            "d_z": self.d_z,
            "action_bound": self.action_bound,
            "discrete": self.discrete,
            "hidden": self.hidden,
            "seed": self.seed,
        }

    def value(self, z) -> Tensor:
        return ad.reshape(self.value_head(self.critic_body(ad.as_tensor(z))), (-1,))

    def _gaussian(self, z) -> tuple[Tensor, Tensor]:
        h = self.actor_body(ad.as_tensor(z))
        var = ad.softplus(self.var_head(h)) + STD_FLOOR**2  # soft floor keeps a gradient
        return ad.reshape(self.mean_head(h), (-1,)), ad.reshape(ad.sqrt(var), (-1,))

    def _logits(self, z) -> Tensor:
        return self.logits(self.actor_body(ad.as_tensor(z)))

    def log_prob(self, z, a: np.ndarray) -> Tensor:
        """log pi(a | z) for a batch; continuous actions include the tanh change of variables."""
        a = np.asarray(a, dtype=np.float64).reshape(-1)
        if self.discrete:
            logits = self._logits(z)
            onehot = np.eye(2)[a.astype(np.int64)]
            return ad.sum_(logits * onehot, axis=-1) - ad.reshape(ad.logsumexp(logits, axis=-1), (-1,))
        mean, std = self._gaussian(z)
        y_np = np.arctanh(np.clip(a / self.action_bound, -1.0 + 1e-6, 1.0 - 1e-6))
        y = Tensor(y_np)
        log_n = -0.5 * ad.square((y - mean) / std) - ad.log(std) - 0.5 * math.log(2.0 * math.pi)
        jac = np.log(self.action_bound * (1.0 - np.tanh(y_np) ** 2) + 1e-12)
        return log_n - jac

    def act(self, z, rng: np.random.Generator, greedy: bool = False) -> np.ndarray:
        """Actions of shape (B, 1) for a batch of states (a single state gives (1, 1))."""
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        with ad.no_grad():
            if self.discrete:
                logits = self._logits(z).data
                if greedy:
                    return np.argmax(logits, axis=-1).astype(np.float64)[:, None]
                p = np.exp(logits - logits.max(axis=-1, keepdims=True))
                p /= p.sum(axis=-1, keepdims=True)
                return (rng.random(len(z)) < p[:, 1]).astype(np.float64)[:, None]
            mean, std = self._gaussian(z)
            y = mean.data if greedy else mean.data + std.data * rng.standard_normal(len(z))
        return (self.action_bound * np.tanh(y))[:, None]


class ConstantPolicy:
    """Scripted policy emitting one fixed action, for evaluation baselines."""

    def __init__(self, action: float):
        self.action = float(action)

    def act(self, z, rng: np.random.Generator, greedy: bool = False) -> np.ndarray:
        return np.full((np.atleast_2d(z).shape[0], 1), self.action)


class UniformPolicy:
    def __init__(self, bound: float):
        self.bound = float(bound)

    def act(self, z, rng: np.random.Generator, greedy: bool = False) -> np.ndarray:
        return rng.uniform(-self.bound, self.bound, size=(np.atleast_2d(z).shape[0], 1))


def save_policy(policy: Policy, path: str | Path, extra: dict | None = None) -> None:
    header = {
        "format_version": POLICY_VERSION,
        "policy": policy.config(),
        "params": [[k, list(t.shape)] for k, t in policy.params.items()],
        "extra": extra or {},
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(POLICY_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        for t in policy.params.values():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_policy(path: str | Path) -> tuple[Policy, dict]:
    with open(path, "rb") as fh:
        if fh.read(4) != POLICY_MAGIC:
            raise ValueError(f"{path}: not a policy file")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n).decode("utf-8"))
        body = fh.read()
    if header.get("format_version") != POLICY_VERSION:
        raise ValueError(f"{path}: unsupported policy version {header.get('format_version')}")
    policy = Policy(**header["policy"])
    offset = 0
    for t in policy.params.values():
        size = t.data.size * 8
        if offset + size > len(body):
            raise ValueError(f"{path}: truncated policy weights")
        t.data[...] = np.frombuffer(body, dtype="<f8", count=t.data.size, offset=offset).reshape(t.shape)
        offset += size
    if offset != len(body):
        raise ValueError(f"{path}: trailing bytes after policy weights")
    return policy, header


# ------------------------------------------------------------------ replay


class ReplayMemory:
    """FIFO ring buffer of (z, a, r, z') transitions."""

    def __init__(self, capacity: int, d_z: int, d_a: int = 1):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.z = np.zeros((capacity, d_z))
        self.a = np.zeros((capacity, d_a))
        self.r = np.zeros(capacity)
        self.z_next = np.zeros((capacity, d_z))
        self.size = 0
        self._next = 0
        self.total_pushed = 0

    def __len__(self) -> int:
        return self.size

    def push(self, z, a, r: float, z_next) -> None:
        i = self._next
        self.z[i], self.a[i], self.r[i], self.z_next[i] = z, a, r, z_next
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.total_pushed += 1

    def ordered(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Contents oldest first."""
        idx = (np.arange(self.size) + (self._next - self.size)) % self.capacity
        return self.z[idx], self.a[idx], self.r[idx], self.z_next[idx]

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay memory")
        idx = rng.integers(0, self.size, size=n)
        return self.z[idx], self.a[idx], self.r[idx], self.z_next[idx]


# -------------------------------------------------------- actor-critic step


def advantage(r: np.ndarray, v: np.ndarray, v_next: np.ndarray, gamma: float) -> np.ndarray:
    """One-step advantage r + gamma V(z') - V(z)."""
    return np.asarray(r) + gamma * np.asarray(v_next) - np.asarray(v)


def ac_losses(
    policy: Policy, z, a, r, z_next, gamma: float, target: np.ndarray | None = None
) -> tuple[Tensor, Tensor, np.ndarray]:
    """Actor loss -mean(A * log pi) with A held constant, and critic loss mean(A^2).

    The bootstrap target r + gamma V(z') is a constant (semi-gradient), so the
    critic gradient flows only through V(z). Passing ``target`` pins it.
    """
    z = np.asarray(z, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64).reshape(-1)
    if z.shape[0] != r.shape[0] or np.asarray(a).shape[0] != r.shape[0] or np.asarray(z_next).shape != z.shape:
        raise ValueError("transition batch arrays have mismatched leading dimensions")
    if target is None:
        with ad.no_grad():
            target = r + gamma * policy.value(z_next).data
    v = policy.value(z)
    adv_t = Tensor(target) - v
    adv = adv_t.data.copy()
    actor = -ad.mean(Tensor(adv) * policy.log_prob(z, a))
    critic = ad.mean(ad.square(adv_t))
    return actor, critic, adv


def ac_gradient(policy: Policy, z, a, r, z_next, gamma: float) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients of actor + critic losses for one batch, keyed by parameter name."""
    actor, critic, adv = ac_losses(policy, z, a, r, z_next, gamma)
    ad.backward(actor + critic)
    grads = policy.params.grads()
    policy.params.zero_grad()
    return grads, adv


# ----------------------------------------------------------------- sources


@dataclass
class Step:
    z: np.ndarray  # state the transition starts from
    a: np.ndarray  # action taken there (the policy's, or the logged one)
    r_learn: float  # reward the learner trains on
    r_env: float  # reward actually paid (equals r_learn when no ground truth exists)
    z_next: np.ndarray


class Source(Protocol):
    env_kind: str
    d_z: int
    action_bound: float
    discrete: bool

    def reset(self, rng: np.random.Generator) -> np.ndarray: ...

    def step(self, z: np.ndarray, a: np.ndarray, rng: np.random.Generator) -> Step: ...


def optimal_mask(actions: np.ndarray, env_kind: str, spec=None) -> np.ndarray:
    """True where the action falls in the better (T1) category."""
    return action_categories(np.asarray(actions).reshape(-1), env_kind, spec or ConfoundingSpec()) == T1


class OracleSource:
    """Contextual task over a confounder table; the state is pure noise z ~ N(0, I).

    The environment pays a reward drawn with u sampled independently of the
    action (the interventional world). ``algo`` picks what the learner sees:
    "vanilla" the observational E[r | a], "decon" the Monte-Carlo do-reward,
    "direct" samples logged under the confounded behaviour policy.
    """

    def __init__(
        self,
        algo: str,
        cpt: DiscreteCPT | None = None,
        env_kind: str = "pendulum",
        d_z: int = 4,
        n_u: int = 200,
        u_source: str = "prior",
    ):
        if algo not in ALGOS:
            raise ValueError(f"algo must be one of {ALGOS}")
        self.algo = algo
        self.env_kind = env_kind
        self.d_z = d_z
        self.n_u = n_u
        self.u_source = u_source
        self.action_bound = ACTION_BOUND[env_kind]
        self.discrete = env_kind == "cartpole"
        cpt = cpt or default_cpt()
        if cpt.n_actions != 2 or cpt.confounder_probs.shape[0] != 2:
            raise SourceMismatchError("the oracle environment needs a two-action, binary-confounder table")
        # behaviour policy for logged data follows the table's p(T1 | u)
        self.spec = replace(ConfoundingSpec(), p_T1_given_u=tuple(float(p) for p in cpt.action_probs[:, 0]))
        self.table = TableRewardModel(cpt, lambda a: action_categories(a[..., 0], env_kind, self.spec))
        self._outcome = self.table.cpt.outcome_probs
        self._values = self.table.cpt.outcome_values

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.d_z)

    def _draw_reward(self, category: int, u: int, rng: np.random.Generator) -> float:
        y = int(rng.random() >= self._outcome[u, category, 0])
        return float(self._values[y])

    def env_reward(self, a: np.ndarray, rng: np.random.Generator) -> float:
        u = int(rng.random() < self.table.cpt.confounder_probs[1])
        return self._draw_reward(int(self.table.columns(np.reshape(a, (1, -1)))[0]), u, rng)

    def behaviour_action(self, rng: np.random.Generator) -> tuple[np.ndarray, int]:
        """One logged action from the confounded behaviour policy and its hidden u."""
        u = int(rng.random() < self.table.cpt.confounder_probs[1])
        return np.array([confounded_policy(u, self.spec, rng, self.env_kind)]), u

    def step(self, z: np.ndarray, a: np.ndarray, rng: np.random.Generator) -> Step:
        z_next = self.reset(rng)
        if self.algo == "direct":
            a_log, u = self.behaviour_action(rng)
            r = self._draw_reward(int(self.table.columns(a_log[None])[0]), u, rng)
            return Step(z, a_log, r, self.env_reward(a, rng), z_next)
        if self.algo == "vanilla":
            r_learn = float(conditional_reward(self.table, z, a))
        else:
            r_learn = do_reward_mc(self.table, z, a, self.n_u, "prior", rng).mean
        return Step(z, np.asarray(a, dtype=np.float64).reshape(-1), r_learn, self.env_reward(a, rng), z_next)


class ModelSource:
    """Open-loop rollouts through a fitted model from inferred initial states.

    "vanilla" needs a model without u and trains on the gen_r mean; "decon"
    needs a model with u and trains on Monte-Carlo do-rewards.
    """

    def __init__(self, model, data, algo: str, env_kind: str, n_u: int = 200, u_source: str = "prior"):
        if algo == "decon" and not model.use_u:
            raise SourceMismatchError("do-rewards need a model with a confounder u (variant 'decon')")
        if algo == "vanilla" and model.use_u:
            raise SourceMismatchError("the vanilla learner runs on the model without u (variant 'alt')")
        if algo not in ("vanilla", "decon"):
            raise SourceMismatchError(f"algo {algo!r} does not run on model rollouts")
        if data.B < 1:
            raise ValueError("need at least one sequence for initial states")
        self.model = model
        self.data = data
        self.algo = algo
        self.env_kind = env_kind
        self.d_z = model.dims.D_z
        self.action_bound = model.action_bound
        self.discrete = env_kind == "cartpole"
        self.n_u = n_u
        self.u_source = u_source
        self.rewards = LearnedRewardModel(model)
        self.evidence = None

    def initial_state(self, idx: int) -> np.ndarray:
        seq = self.data.take([idx])
        with ad.no_grad():
            x, a, r = seq.time_major()
            h_left, h_right = self.model.z_states(x, a, r, seq.T)
            z = self.model.infer_z_step(None, None, h_left[0], h_right[0]).mean.data[0]
        self.evidence = seq
        return z

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return self.initial_state(int(rng.integers(0, self.data.B)))

    def step(self, z: np.ndarray, a: np.ndarray, rng: np.random.Generator) -> Step:
        a = np.asarray(a, dtype=np.float64).reshape(-1)
        if self.algo == "vanilla":
            r = float(conditional_reward(self.rewards, z, a))
        else:
            r = do_reward_mc(self.rewards, z, a, self.n_u, self.u_source, rng, evidence=self.evidence).mean
        with ad.no_grad():
            z_next = self.model.gen_z_transition(z[None], a[None]).mean.data[0]
        return Step(z, a, r, r, z_next)


class LoggedSource:
    """Replays stored transitions ("direct" learning straight from the data).

    States are the posterior z means of a fitted model (typically the one without u),
    chained through the inference network along each stored sequence.
    """

    def __init__(self, model, data, env_kind: str):
        self.env_kind = env_kind
        self.d_z = model.dims.D_z
        self.action_bound = model.action_bound
        self.discrete = env_kind == "cartpole"
        with ad.no_grad():
            x, a, r = data.time_major()
            h_left, h_right = model.z_states(x, a, r, data.T)
            zs = []
            for t in range(data.T):
                prev = None if t == 0 else zs[-1]
                a_prev = None if t == 0 else data.a[:, t - 1]
                zs.append(model.infer_z_step(prev, a_prev, h_left[t], h_right[t]).mean.data)
            last = model.gen_z_transition(zs[-1], data.a[:, -1]).mean.data
        z_all = np.stack(zs, axis=1)
        z_next = np.concatenate([z_all[:, 1:], last[:, None]], axis=1)
        self.z = z_all.reshape(-1, self.d_z)
        self.z_next = z_next.reshape(-1, self.d_z)
        self.a = data.a.reshape(-1, data.a.shape[-1])
        self.r = model.denormalise_reward(data.r.reshape(-1))
        self._cursor = 0

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._cursor = int(rng.integers(0, len(self.r)))
        return self.z[self._cursor]

    def step(self, z: np.ndarray, a: np.ndarray, rng: np.random.Generator) -> Step:
        i = self._cursor
        self._cursor = int(rng.integers(0, len(self.r)))
        return Step(self.z[i], self.a[i], float(self.r[i]), float(self.r[i]), self.z_next[i])


# ----------------------------------------------------------------- training


@dataclass(frozen=True)
class ACConfig:
    gamma: float = 0.99
    batch_size: int = 128
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    hidden: int = 300
    replay_capacity: int = 100_000
    reward_scale: float = 0.01
    entropy_coef: float = 0.0
    clip_norm: float | None = 5.0
    seed: int = 0
    record_wall_time: bool = False
    update_every: int = 1  # environment steps per gradient update


@dataclass
class EpisodeLog:
    episode: int
    total_reward: float
    moving_avg: float
    optimal_action_freq: float
    wall_ms: float | None = None

    def row(self) -> list[str]:
        wall = "" if self.wall_ms is None else repr(self.wall_ms)
        return [str(self.episode), repr(self.total_reward), repr(self.moving_avg), repr(self.optimal_action_freq), wall]


@dataclass
class TrainResult:
    policy: Policy
    log: list[EpisodeLog]
    replay: ReplayMemory
    config: dict = field(default_factory=dict)


def entropy_bonus(policy: Policy, z: np.ndarray, eps: np.ndarray | None = None) -> Tensor:
    """Mean entropy of pi(. | z); for continuous actions less the constant 0.5 log(2 pi e).

    For the squashed Gaussian this is the entropy of the bounded action, not of the
    pre-squash variable: H(y) + E[log |da/dy|], with the expectation taken over the
    reparameterised draws ``y = mean + std * eps``. The Jacobian term penalises
    saturation, so the bonus peaks at a finite std.
    """
    if policy.discrete:
        logits = policy._logits(z)
        logp = logits - ad.reshape(ad.logsumexp(logits, axis=-1), (-1, 1))
        return -ad.mean(ad.sum_(ad.exp(logp) * logp, axis=-1))
    mean, std = policy._gaussian(z)
    eps = np.zeros(mean.shape) if eps is None else np.asarray(eps, dtype=np.float64).reshape(mean.shape)
    y = mean + std * eps
    # log(1 - tanh(y)^2) = 2 (log 2 - y - softplus(-2y)), stable for large |y|
    log_jac = 2.0 * (np.log(2.0) - y - ad.softplus(-2.0 * y))
    return ad.mean(ad.log(std)) + ad.mean(log_jac) + np.log(policy.action_bound)


def update(
    policy: Policy,
    batch,
    cfg: ACConfig,
    actor_state: AdamState,
    critic_state: AdamState,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    z, a, r, z_next = batch
    actor, critic, adv = ac_losses(policy, z, a, r * cfg.reward_scale, z_next, cfg.gamma)
    loss = actor + critic
    if cfg.entropy_coef:
        eps = (rng or np.random.default_rng(0)).standard_normal(len(z))
        loss = loss - cfg.entropy_coef * entropy_bonus(policy, z, eps)
    ad.backward(loss)
    grads = policy.params.grads()
    policy.params.zero_grad()
    arrays = policy.params.arrays()
    a_keys = [k for k in grads if k.startswith("actor.")]
    c_keys = [k for k in grads if k.startswith("critic.")]
    adam_step({k: arrays[k] for k in a_keys}, {k: grads[k] for k in a_keys}, actor_state, cfg.lr_actor, clip_norm=cfg.clip_norm)
    adam_step({k: arrays[k] for k in c_keys}, {k: grads[k] for k in c_keys}, critic_state, cfg.lr_critic, clip_norm=cfg.clip_norm)
    return adv


def train_ac(
    source: Source,
    episodes: int,
    steps: int,
    cfg: ACConfig | None = None,
    log_csv: str | Path | None = None,
    policy: Policy | None = None,
) -> TrainResult:
    """Roll out ``episodes`` x ``steps`` transitions, updating every ``cfg.update_every``
    steps once the replay memory holds a full batch."""
    cfg = cfg or ACConfig()
    if episodes < 1 or steps < 1:
        raise ValueError("episodes and steps must be positive")
    if cfg.update_every < 1:
        raise ValueError("update_every must be positive")
    rng = np.random.default_rng(cfg.seed)
    policy = policy or Policy(source.d_z, source.action_bound, source.discrete, cfg.hidden, cfg.seed)
    replay = ReplayMemory(cfg.replay_capacity, source.d_z, 1)
    actor_state, critic_state = AdamState(), AdamState()
    log: list[EpisodeLog] = []
    totals: list[float] = []
    fh = writer = None
    if log_csv is not None:
        fh = open(log_csv, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
    try:
        for ep in range(episodes):
            t0 = time.perf_counter()
            z = source.reset(rng)
            total, hits = 0.0, 0
            for _ in range(steps):
                a = policy.act(z, rng)[0]
                hits += int(optimal_mask(a, source.env_kind)[0])
                st = source.step(z, a, rng)
                replay.push(st.z, st.a, st.r_learn, st.z_next)
                total += st.r_env
                if len(replay) >= cfg.batch_size and replay.total_pushed % cfg.update_every == 0:
                    update(policy, replay.sample(cfg.batch_size, rng), cfg, actor_state, critic_state, rng)
                z = st.z_next
            totals.append(total)
            wall = (time.perf_counter() - t0) * 1000.0 if cfg.record_wall_time else None
            row = EpisodeLog(ep, total, float(np.mean(totals[-MOVING_WINDOW:])), hits / steps, wall)
            log.append(row)
            if writer is not None:
                writer.writerow(row.row())
                fh.flush()
    finally:
        if fh is not None:
            fh.close()
    return TrainResult(policy, log, replay, asdict(cfg))


# --------------------------------------------------------------- evaluation


@dataclass
class EvalReport:
    total_rewards: list[float]
    optimal_action_freq: list[float]

    @property
    def mean_reward(self) -> float:
        return float(np.mean(self.total_rewards))

    @property
    def mean_optimal_freq(self) -> float:
        return float(np.mean(self.optimal_action_freq))

    def to_dict(self) -> dict:
        return {
            "episodes": [
                {"total_reward": r, "optimal_action_freq": f}
                for r, f in zip(self.total_rewards, self.optimal_action_freq)
            ],
            "total_reward": {"mean": self.mean_reward, "std": float(np.std(self.total_rewards))},
            "optimal_action_freq": {"mean": self.mean_optimal_freq, "std": float(np.std(self.optimal_action_freq))},
        }


def evaluate(policy, source: Source, n_episodes: int, steps: int, seed: int = 0, greedy: bool = True) -> EvalReport:
    """Run ``policy`` (greedy by default) and report environment rewards per episode."""
    if n_episodes < 1 or steps < 1:
        raise ValueError("n_episodes and steps must be positive")
    rng = np.random.default_rng(seed)
    totals, freqs = [], []
    for _ in range(n_episodes):
        z = source.reset(rng)
        total, hits = 0.0, 0
        for _ in range(steps):
            a = policy.act(z, rng, greedy=greedy)[0]
            hits += int(optimal_mask(a, source.env_kind)[0])
            st = source.step(z, a, rng)
            total += st.r_env
            z = st.z_next
        totals.append(total)
        freqs.append(hits / steps)
    return EvalReport(totals, freqs)
