"""Removability critic: a three-layer MLP over (padded state, action).

The input is the flattened state matrix concatenated with a one-hot
action channel; the output is the expected long-run removal cost of
taking that action. Everything is float64 numpy with hand-written
forward/backward passes, so gradients are exact and training is
bit-reproducible under a fixed seed.

The public q_all evaluates each row through q_forward (not a batched
matmul) so the two agree to the last bit; training uses an internal
batched path for speed.
"""
from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import features as feat
from . import perception, sim
from .constants import FEATURE_DIM, N_MAX
from .errors import (
    InsufficientDataError,
    MaskedActionError,
    NoValidRowsError,
)
from .features import StateMatrix

STATE_WIDTH = N_MAX * FEATURE_DIM
INPUT_WIDTH = STATE_WIDTH + N_MAX
DEFAULT_HIDDEN = (256, 128)
DEFAULT_GAMMA_W = 0.1
DEFAULT_ACTIVATION = "softplus"
DEFAULT_DEMO_TRANSITIONS = 4000


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z):
    return (z > 0.0).astype(float)


def _softplus(z):
    return np.logaddexp(0.0, z)


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    # Smooth default: the influence path integral is quadrature-friendly
    # only when the activation has no kink.
    "softplus": (_softplus, expit),
}


@dataclass
class CriticParams:
    """Weights and biases of the three linear layers, plus the nonlinearity tag."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    activation: str = DEFAULT_ACTIVATION
    n_max: int = N_MAX
    feature_dim: int = FEATURE_DIM

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def input_width(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_sizes(self) -> tuple[int, int]:
        return (self.w1.shape[1], self.w2.shape[1])

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "w1": self.w1,
            "b1": self.b1,
            "w2": self.w2,
            "b2": self.b2,
            "w3": self.w3,
            "b3": self.b3,
        }

    def copy(self) -> "CriticParams":
        return CriticParams(
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
            w3=self.w3.copy(),
            b3=self.b3.copy(),
            activation=self.activation,
            n_max=self.n_max,
            feature_dim=self.feature_dim,
        )


def init_critic(
    seed,
    hidden: tuple[int, int] = DEFAULT_HIDDEN,
    activation: str = DEFAULT_ACTIVATION,
) -> CriticParams:
    """He-initialized weights, zero biases, seeded and reproducible."""
    rng = np.random.default_rng(seed)
    h1, h2 = hidden
    sizes = [(INPUT_WIDTH, h1), (h1, h2), (h2, 1)]
    ws = [rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
          for fan_in, fan_out in sizes]
    return CriticParams(
        w1=ws[0], b1=np.zeros(h1),
        w2=ws[1], b2=np.zeros(h2),
        w3=ws[2], b3=np.zeros(1),
        activation=activation,
    )


# ---------------------------------------------------------------------------
# forward / backward


def encode_input(state: StateMatrix, action: int) -> np.ndarray:
    """Flattened state with a one-hot action channel appended."""
    x = np.zeros(INPUT_WIDTH)
    x[:STATE_WIDTH] = state.flat()
    x[STATE_WIDTH + action] = 1.0
    return x


def _forward_batch(params: CriticParams, x: np.ndarray):
    act, _ = ACTIVATIONS[params.activation]
    z1 = x @ params.w1 + params.b1
    h1 = act(z1)
    z2 = h1 @ params.w2 + params.b2
    h2 = act(z2)
    q = h2 @ params.w3 + params.b3
    return q[..., 0], (x, z1, h1, z2, h2)


def _check_action(state: StateMatrix, action: int) -> None:
    if not 0 <= action < N_MAX or not state.mask[action]:
        raise MaskedActionError(f"action row {action} is masked or out of range")


def q_forward(params: CriticParams, state: StateMatrix, action: int) -> float:
    """Q-value (removability score) for removing the object at a row."""
    _check_action(state, action)
    q, _ = _forward_batch(params, encode_input(state, action))
    return float(q)


def q_all(params: CriticParams, state: StateMatrix) -> np.ndarray:
    """Q-values over the valid rows, aligned with state.valid_rows()."""
    valid = state.valid_rows()
    if len(valid) == 0:
        raise NoValidRowsError("state has no valid rows")
    return np.array([q_forward(params, state, int(r)) for r in valid])


def input_gradient(params: CriticParams, state: StateMatrix, action: int) -> np.ndarray:
    """Exact dQ/d(state) as an (N_MAX, FEATURE_DIM) matrix.

    Reverse-mode through the three layers; the one-hot action channel's
    gradient components are dropped.
    """
    _check_action(state, action)
    _, grad_act = ACTIVATIONS[params.activation]
    _, (x, z1, _, z2, _) = _forward_batch(params, encode_input(state, action))
    dz2 = params.w3[:, 0] * grad_act(z2)
    dz1 = (params.w2 @ dz2) * grad_act(z1)
    dx = params.w1 @ dz1
    return dx[:STATE_WIDTH].reshape(N_MAX, FEATURE_DIM)


def greedy_action(params: CriticParams, state: StateMatrix) -> int:
    """Row with the highest Q; ties go to the lowest object id."""
    valid = state.valid_rows()
    q = q_all(params, state)
    best = q.max()
    tied = [int(valid[i]) for i in np.flatnonzero(q == best)]
    return min(tied, key=lambda r: state.id_map[r])


# ---------------------------------------------------------------------------
# reward and transitions


def reward(o_d: int, d_total: float, gamma_w: float = DEFAULT_GAMMA_W) -> float:
    """Negative penalty for moved objects and total disturbance."""
    if o_d < 0:
        raise ValueError("o_d must be >= 0")
    if d_total < 0.0:
        raise ValueError("d_total must be >= 0")
    return -(o_d + gamma_w * d_total)


@dataclass(frozen=True)
class Transition:
    state: StateMatrix
    action: int
    reward: float
    next_state: StateMatrix
    done: bool


class ReplayBuffer:
    """Bounded FIFO of transitions with a seeded uniform sampler."""

    def __init__(self, capacity: int, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque[Transition] = deque(maxlen=capacity)
        self._rng = np.random.default_rng(seed)

    def push(self, transition: Transition) -> None:
        self._items.append(transition)

    def __len__(self) -> int:
        return len(self._items)

    def sample(self, batch_size: int, rng: np.random.Generator | None = None) -> list[Transition]:
        if len(self._items) == 0:
            raise InsufficientDataError("buffer is empty")
        gen = rng if rng is not None else self._rng
        idx = gen.integers(0, len(self._items), size=batch_size)
        return [self._items[int(i)] for i in idx]


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for demonstration collection and TD regression."""

    steps: int = 3000
    batch: int = 64
    learning_rate: float = 3e-4
    gamma_d: float = 0.9
    epsilon: float = 0.3
    seed: int = 0
    gamma_w: float = DEFAULT_GAMMA_W
    buffer_capacity: int = 20_000
    target_update_period: int = 100
    tau_move: float = sim.TAU_MOVE_SIM
    activation: str = DEFAULT_ACTIVATION
    weight_decay: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.gamma_d < 1.0:
            raise ValueError("gamma_d must be in [0, 1)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")


def default_scene_factory(seed: int) -> sim.Scene:
    """Training distribution: 30-object layered clutter."""
    return sim.spawn_layered_clutter(seed, n_objects=30, layers=3)


def _derived_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence((seed, k)).generate_state(1)[0])


def collect_demonstrations(
    scene_factory,
    params: CriticParams | None,
    n_transitions: int,
    epsilon: float,
    seed: int,
    capacity: int = 20_000,
    gamma_w: float = DEFAULT_GAMMA_W,
    tau_move: float = sim.TAU_MOVE_SIM,
) -> ReplayBuffer:
    """Roll epsilon-greedy removal episodes and record transitions.

    With params=None the behavior policy is uniform random. Observations
    use the ground-truth bypass; rewards come straight from the removal
    outcome. Episodes end when the scene is empty or the step cap (the
    initial object count) is hit.
    """
    buffer = ReplayBuffer(capacity, seed=_derived_seed(seed, 0))
    rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    pushed = 0
    episode = 0
    while pushed < n_transitions:
        scene = scene_factory(_derived_seed(seed, 100 + episode))
        episode += 1
        ids = sorted(scene.ids())
        row_map = {oid: i for i, oid in enumerate(ids)}
        obs, obs_ids = perception.observe_ground_truth(scene)
        state = feat.assemble_state(obs, obs_ids, row_map)
        steps = 0
        cap = len(ids)
        while state.n_valid() > 0 and steps < cap and pushed < n_transitions:
            valid = state.valid_rows()
            if params is None or rng.random() < epsilon:
                row = int(valid[rng.integers(len(valid))])
            else:
                row = greedy_action(params, state)
            oid = state.id_map[row]
            scene, outcome = sim.remove_object(scene, oid, tau_move=tau_move)
            r = reward(outcome.objects_moved, outcome.d_total, gamma_w)
            if scene.objects:
                obs, obs_ids = perception.observe_ground_truth(scene)
                next_state = feat.assemble_state(obs, obs_ids, row_map)
            else:
                next_state = feat.empty_state()
            done = len(scene.objects) == 0
            buffer.push(Transition(state, row, r, next_state, done))
            pushed += 1
            state = next_state
            steps += 1
    return buffer


# ---------------------------------------------------------------------------
# training


def td_target(transition: Transition, params: CriticParams, gamma_d: float) -> float:
    """One-step bootstrapped regression target."""
    if transition.done:
        return transition.reward
    valid = transition.next_state.valid_rows()
    if len(valid) == 0:
        return transition.reward
    return transition.reward + gamma_d * float(q_all(params, transition.next_state).max())


def _td_targets_batch(batch, target_params, gamma_d) -> np.ndarray:
    """Bootstrap targets; layer 1 shares the per-state product across actions."""
    y = np.array([t.reward for t in batch])
    boot = [
        (bi, t.next_state)
        for bi, t in enumerate(batch)
        if not t.done and t.next_state.n_valid() > 0
    ]
    if not boot:
        return y
    act, _ = ACTIVATIONS[target_params.activation]
    states = np.stack([s.flat() for _, s in boot])
    shared = states @ target_params.w1[:STATE_WIDTH] + target_params.b1
    owner_idx = []
    action_idx = []
    counts = []
    for k, (_, s) in enumerate(boot):
        valid = s.valid_rows()
        owner_idx.append(np.full(len(valid), k))
        action_idx.append(valid)
        counts.append(len(valid))
    owner_idx = np.concatenate(owner_idx)
    action_idx = np.concatenate(action_idx)
    z1 = shared[owner_idx] + target_params.w1[STATE_WIDTH + action_idx]
    h1 = act(z1)
    h2 = act(h1 @ target_params.w2 + target_params.b2)
    q = (h2 @ target_params.w3 + target_params.b3)[:, 0]
    offset = 0
    for (bi, _), count in zip(boot, counts):
        y[bi] += gamma_d * q[offset : offset + count].max()
        offset += count
    return y


def _backward_params(params, cache, dq):
    _, grad_act = ACTIVATIONS[params.activation]
    x, z1, h1, z2, h2 = cache
    d3 = dq[:, None]
    grads = {}
    grads["w3"] = h2.T @ d3
    grads["b3"] = d3.sum(axis=0)
    dh2 = d3 @ params.w3.T
    dz2 = dh2 * grad_act(z2)
    grads["w2"] = h1.T @ dz2
    grads["b2"] = dz2.sum(axis=0)
    dh1 = dz2 @ params.w2.T
    dz1 = dh1 * grad_act(z1)
    grads["w1"] = x.T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    return grads


class _Adam:
    """Per-parameter adaptive moments with decoupled weight decay."""

    def __init__(self, params: CriticParams, lr: float, weight_decay: float = 0.0,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays().items()}

    def step(self, params: CriticParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        arrays = params.arrays()
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            m_hat = self.m[k] / (1 - self.beta1**self.t)
            v_hat = self.v[k] / (1 - self.beta2**self.t)
            arrays[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay and k.startswith("w"):
                arrays[k] -= self.lr * self.weight_decay * arrays[k]


@dataclass
class TrainResult:
    params: CriticParams
    losses: np.ndarray


def train_critic(buffer: ReplayBuffer, config: TrainConfig) -> TrainResult:
    """Minimize squared TD error over sampled batches.

    A frozen copy of the network supplies bootstrap targets and is
    refreshed every target_update_period steps. Fully deterministic for
    a fixed buffer content and config.seed.
    """
    if len(buffer) < config.batch:
        raise InsufficientDataError(
            f"buffer has {len(buffer)} transitions, batch needs {config.batch}"
        )
    ss = np.random.SeedSequence((config.seed, 2))
    init_ss, sample_ss = ss.spawn(2)
    params = init_critic(init_ss, activation=config.activation)
    target = params.copy()
    sample_rng = np.random.default_rng(sample_ss)
    adam = _Adam(params, lr=config.learning_rate, weight_decay=config.weight_decay)
    losses = np.empty(config.steps)

    for step in range(config.steps):
        batch = buffer.sample(config.batch, rng=sample_rng)
        x = np.stack([encode_input(t.state, t.action) for t in batch])
        y = _td_targets_batch(batch, target, config.gamma_d)
        q, cache = _forward_batch(params, x)
        err = q - y
        losses[step] = float(np.mean(err * err))
        dq = 2.0 * err / len(batch)
        grads = _backward_params(params, cache, dq)
        adam.step(params, grads)
        if (step + 1) % config.target_update_period == 0:
            target = params.copy()

    return TrainResult(params=params, losses=losses)


# ---------------------------------------------------------------------------
# checkpoints


def _architecture(params: CriticParams) -> dict:
    return {
        "n_max": params.n_max,
        "feature_dim": params.feature_dim,
        "hidden": list(params.hidden_sizes),
        "activation": params.activation,
    }


def _config_hash(arch: dict) -> str:
    return hashlib.sha256(json.dumps(arch, sort_keys=True).encode()).hexdigest()


def save_checkpoint(params: CriticParams, path) -> None:
    arch = _architecture(params)
    payload = {
        "format_version": 1,
        **arch,
        "config_hash": _config_hash(arch),
        "weights": {k: v.tolist() for k, v in params.arrays().items()},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> CriticParams:
    with open(path) as fh:
        payload = json.load(fh)
    arch = {
        "n_max": payload["n_max"],
        "feature_dim": payload["feature_dim"],
        "hidden": payload["hidden"],
        "activation": payload["activation"],
    }
    if payload.get("config_hash") != _config_hash(arch):
        raise ValueError("checkpoint config hash mismatch")
    if arch["n_max"] != N_MAX or arch["feature_dim"] != FEATURE_DIM:
        raise ValueError(
            f"checkpoint built for {arch['n_max']}x{arch['feature_dim']} state, "
            f"this build uses {N_MAX}x{FEATURE_DIM}"
        )
    weights = {k: np.asarray(v, dtype=float) for k, v in payload["weights"].items()}
    h1, h2 = arch["hidden"]
    expected = {
        "w1": (INPUT_WIDTH, h1), "b1": (h1,),
        "w2": (h1, h2), "b2": (h2,),
        "w3": (h2, 1), "b3": (1,),
    }
    for k, shape in expected.items():
        if weights[k].shape != shape:
            raise ValueError(f"weight {k} has shape {weights[k].shape}, expected {shape}")
    return CriticParams(**weights, activation=arch["activation"])
