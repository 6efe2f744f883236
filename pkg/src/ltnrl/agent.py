"""Double Dueling DQN with uniform experience replay."""

from __future__ import annotations

import copy
import io
import struct
from dataclasses import dataclass
from typing import Any, NamedTuple, Sequence

import numpy as np

from .numcore import (
    Adam,
    ShapeError,
    Tensor,
    conv2d,
    dense,
    forward,
    gather_rows,
    huber_loss,
    init_params,
    no_grad,
)

N_ACTIONS = 4


@dataclass
class AgentConfig:
    gamma: float = 0.9
    batch_size: int = 32
    replay_capacity: int = 10_000
    target_sync_every: int = 500  # optimizer updates
    train_every: int = 200  # environment steps
    updates_per_train: int = 50
    lr: float = 3e-4  # prior maps are cell-constant, so Adam moves their conv1 weights in lockstep
    huber_delta: float = 1.0
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_horizon: int = 10_000

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        for name in ("batch_size", "replay_capacity", "target_sync_every", "train_every",
                     "updates_per_train", "epsilon_horizon"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class CellBatch:
    """Stacked inputs in factored form.

    Channels 0..2 paint ``fg`` where ``masks`` is 1 and ``bg`` elsewhere; the
    remaining channels are constant over each cell. ``masks`` is
    (n, grid, grid, cell*cell) in row-major pixel order within a cell.
    """

    masks: np.ndarray
    fg: np.ndarray  # (n, 3)
    bg: np.ndarray  # (n, 3)
    maps: np.ndarray | None  # (n, grid, grid, k)

    def __len__(self) -> int:
        return len(self.masks)

    @property
    def channels(self) -> int:
        return 3 + (0 if self.maps is None else self.maps.shape[-1])

    @property
    def cell(self) -> int:
        return int(round(np.sqrt(self.masks.shape[-1])))

    def take(self, index) -> "CellBatch":
        return CellBatch(self.masks[index], self.fg[index], self.bg[index],
                         None if self.maps is None else self.maps[index])

    def to_array(self) -> np.ndarray:
        n, grid, _, _ = self.masks.shape
        cell = self.cell
        m = self.masks.reshape(n, grid, grid, cell, cell).transpose(0, 1, 3, 2, 4).reshape(n, grid * cell, grid * cell)
        image = self.bg[:, None, None, :] + m[..., None] * (self.fg - self.bg)[:, None, None, :]
        if self.maps is None:
            return image
        up = np.repeat(np.repeat(self.maps, cell, axis=1), cell, axis=2)
        return np.concatenate([image, up], axis=-1)


def cell_conv(x: CellBatch, weight: Tensor, bias: Tensor) -> Tensor:
    """Convolution with kernel = stride = cell size, evaluated on the factored input.

    Equal to ``conv2d_op(Tensor(x.to_array()), weight, bias, stride=cell)`` up
    to summation order. Gradients flow to ``weight`` and ``bias`` only.
    """
    kh, kw, cin, cout = weight.shape
    n, grid, _, npix = x.masks.shape
    if kh * kw != npix:
        raise ShapeError(f"kernel {kh}x{kw} does not match cell of {npix} pixels")
    if cin != x.channels:
        raise ShapeError(f"input has {x.channels} channels, layer expects {cin}")
    cells = n * grid * grid
    w = weight.data.reshape(npix, cin, cout)
    wsum = w.sum(axis=0)  # (cin, cout)
    m2 = x.masks.reshape(cells, npix).astype(float)
    delta = np.repeat(x.fg - x.bg, grid * grid, axis=0)  # (cells, 3)
    painted = (m2 @ w[:, :3, :].reshape(npix, 3 * cout)).reshape(cells, 3, cout)
    out = np.einsum("ic,ico->io", delta, painted)
    out += np.repeat(x.bg @ wsum[:3], grid * grid, axis=0)
    k = cin - 3
    if k:
        maps2 = x.maps.reshape(cells, k)
        out += maps2 @ wsum[3:]
    out += bias.data

    def backward(g):
        g2 = g.reshape(cells, cout)
        gw = np.empty((npix, cin, cout))
        per_item = g2.reshape(n, grid * grid, cout).sum(axis=1)  # (n, cout)
        weighted = (delta[:, :, None] * g2[:, None, :]).reshape(cells, 3 * cout)
        gw[:, :3, :] = (m2.T @ weighted).reshape(npix, 3, cout)
        gw[:, :3, :] += (x.bg.T @ per_item)[None]
        if k:
            gw[:, 3:, :] = (maps2.T @ g2)[None]
        return gw.reshape(weight.shape), g2.sum(axis=0)

    return Tensor._make(out.reshape(n, grid, grid, cout), (weight, bias), backward)


class QNetwork:
    """Conv trunk with separate value and advantage heads.

    The first convolution tiles the frame into grid cells (kernel = stride =
    ``cell``). ``Q = V + A - mean(A)``.
    """

    def __init__(self, in_channels: int, rng: np.random.Generator, image_size: int = 50, cell: int = 10,
                 conv1: int = 16, conv2: int = 32, hidden: int = 128, n_actions: int = N_ACTIONS):
        if image_size % cell:
            raise ValueError("image size must be a multiple of the cell size")
        self.in_channels = in_channels
        self.image_size = image_size
        grid = image_size // cell
        self.trunk = [
            conv2d(in_channels, conv1, cell, stride=cell),
            conv2d(conv1, conv2, 3, stride=1, padding=True),
            dense(grid * grid * conv2, hidden),
        ]
        self.value_head = dense(hidden, 1)
        self.advantage_head = dense(hidden, n_actions)
        self.layers = {
            "conv1": self.trunk[0],
            "conv2": self.trunk[1],
            "fc": self.trunk[2],
            "value": self.value_head,
            "advantage": self.advantage_head,
        }
        self.params = {name: init_params(spec, rng) for name, spec in self.layers.items()}

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(f"{layer}.{key}", t) for layer, p in self.params.items() for key, t in p.items()]

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def _check(self, x: Tensor) -> None:
        if x.ndim != 4 or x.shape[1:3] != (self.image_size, self.image_size):
            raise ShapeError(f"expected (batch, {self.image_size}, {self.image_size}, channels), got {x.shape}")
        if x.shape[3] != self.in_channels:
            raise ShapeError(f"input has {x.shape[3]} channels, network expects {self.in_channels}")

    def streams(self, x) -> tuple[Tensor, Tensor, Tensor]:
        """(Q, V, A) for a batch; Q is (N, actions), V is (N, 1).

        ``x`` is an (N, H, W, C) array/tensor or a :class:`CellBatch`.
        """
        if isinstance(x, CellBatch):
            if x.channels != self.in_channels:
                raise ShapeError(f"input has {x.channels} channels, network expects {self.in_channels}")
            h = cell_conv(x, self.params["conv1"]["weight"], self.params["conv1"]["bias"]).relu()
        else:
            x = x if isinstance(x, Tensor) else Tensor(x)
            self._check(x)
            h = forward(self.layers["conv1"], self.params["conv1"], x).relu()
        h = forward(self.layers["conv2"], self.params["conv2"], h).relu()
        h = h.reshape(h.shape[0], -1)
        h = forward(self.layers["fc"], self.params["fc"], h).relu()
        v = forward(self.value_head, self.params["value"], h)
        a = forward(self.advantage_head, self.params["advantage"], h)
        q = v + (a - a.mean(axis=1, keepdims=True))
        return q, v, a

    def __call__(self, x) -> Tensor:
        return self.streams(x)[0]

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Q-values without graph recording; accepts one input or a batch."""
        if isinstance(x, CellBatch):
            with no_grad():
                return self(x).data
        x = np.asarray(x, dtype=float)
        single = x.ndim == 3
        with no_grad():
            q = self(x[None] if single else x).data
        return q[0] if single else q

    def copy_from(self, other: "QNetwork") -> None:
        for (_, mine), (_, theirs) in zip(self.named_parameters(), other.named_parameters()):
            mine.data[...] = theirs.data


def dueling_combine(value: float, advantages: Sequence[float]) -> np.ndarray:
    a = np.asarray(advantages, dtype=float)
    return value + a - a.mean()


def q_values(net: QNetwork, x: np.ndarray) -> np.ndarray:
    return net.predict(x)


def select_action(q: Sequence[float], epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; greedy ties go to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(len(q)))
    return int(np.argmax(q))


class Transition(NamedTuple):
    state: Any  # ndarray (H, W, C), or a packed form providing to_array() / stack()
    action: int
    reward: float
    next_state: Any
    done: bool


def stack_inputs(items: Sequence[Any]) -> np.ndarray | CellBatch:
    """Batch replay inputs; packed inputs may provide a vectorised ``stack``."""
    stacker = getattr(type(items[0]), "stack", None)
    if stacker is not None and not isinstance(items[0], np.ndarray):
        return stacker(items)
    return np.stack([x.to_array() if hasattr(x, "to_array") else np.asarray(x, dtype=float) for x in items])


class ReplayBuffer:
    """Fixed-capacity FIFO of transitions with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._slots: list[Transition] = []
        self._next = 0  # slot the next push overwrites once full

    def __len__(self) -> int:
        return len(self._slots)

    @property
    def items(self) -> list[Transition]:
        """Contents, oldest first."""
        return self._slots[self._next:] + self._slots[: self._next]

    def push(self, transition: Transition) -> None:
        if not 0 <= transition.action < N_ACTIONS:
            raise ValueError(f"action {transition.action} outside 0..{N_ACTIONS - 1}")
        if len(self._slots) < self.capacity:
            self._slots.append(transition)
        else:
            self._slots[self._next] = transition
            self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        idx = rng.integers(len(self._slots), size=batch_size)
        return [self._slots[i] for i in idx]


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    @classmethod
    def from_transitions(cls, items: Sequence[Transition]) -> "Batch":
        return cls(
            states=stack_inputs([t.state for t in items]),
            actions=np.array([t.action for t in items], dtype=np.intp),
            rewards=np.array([t.reward for t in items], dtype=float),
            next_states=stack_inputs([t.next_state for t in items]),
            dones=np.array([t.done for t in items], dtype=bool),
        )


def double_dqn_targets(batch: Batch, online: QNetwork, target: QNetwork, gamma: float) -> np.ndarray:
    """r if done, else r + gamma * Q_target(s', argmax_a Q_online(s', a))."""
    if len(batch.rewards) == 0:
        raise ValueError("empty batch")
    if online.in_channels != target.in_channels:
        raise ValueError("online and target networks disagree on input channels")
    live = ~batch.dones
    y = batch.rewards.astype(float).copy()
    if live.any():
        nxt = batch.next_states.take(live) if isinstance(batch.next_states, CellBatch) else batch.next_states[live]
        best = online.predict(nxt).argmax(axis=1)
        evaluated = target.predict(nxt)[np.arange(len(best)), best]
        y[live] += gamma * evaluated
    return y


@dataclass
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.1
    horizon: int = 10_000
    policy: str = "hold"  # "reset" restarts the decay at every phase boundary

    def __post_init__(self):
        if self.policy not in ("reset", "hold"):
            raise ValueError("epsilon policy must be 'reset' or 'hold'")
        if not 0 <= self.end <= self.start <= 1:
            raise ValueError("need 0 <= end <= start <= 1")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")


def epsilon_value(schedule: EpsilonSchedule, t: int, phase_start: int = 0) -> float:
    clock = t - phase_start if schedule.policy == "reset" else t
    if clock < 0:
        raise ValueError("t precedes the phase start")
    frac = min(clock / schedule.horizon, 1.0)
    return schedule.start + frac * (schedule.end - schedule.start)


class DQNAgent:
    def __init__(self, in_channels: int, config: AgentConfig | None = None, seed: int = 0, **net_kwargs):
        self.config = config or AgentConfig()
        init_rng, self.rng = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)]
        self.online = QNetwork(in_channels, init_rng, **net_kwargs)
        self.target = copy.deepcopy(self.online)
        self.optimizer = Adam(lr=self.config.lr)
        self.replay = ReplayBuffer(self.config.replay_capacity)
        self.updates = 0

    @property
    def in_channels(self) -> int:
        return self.online.in_channels

    def q_values(self, x: np.ndarray) -> np.ndarray:
        return self.online.predict(x)

    def remember(self, transition: Transition) -> None:
        self.replay.push(transition)

    def train_step(self) -> float | None:
        """One optimizer update on a uniform replay batch; None if replay is too short."""
        cfg = self.config
        if len(self.replay) < cfg.batch_size:
            return None
        batch = Batch.from_transitions(self.replay.sample(cfg.batch_size, self.rng))
        y = double_dqn_targets(batch, self.online, self.target, cfg.gamma)
        params = self.online.parameters()
        for p in params:
            p.zero_grad()
        q = gather_rows(self.online(batch.states), batch.actions)
        loss = huber_loss(q, y, cfg.huber_delta)
        loss.backward()
        self.optimizer.step(params)
        self.updates += 1
        if self.updates % cfg.target_sync_every == 0:
            self.sync_target()
        return loss.item()

    def sync_target(self) -> None:
        self.target.copy_from(self.online)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(encode_checkpoint(self.online))

    def load(self, path) -> None:
        with open(path, "rb") as fh:
            decode_checkpoint(fh.read(), self.online)
        self.sync_target()


# -- checkpoint format -------------------------------------------------------
# header: magic b"DDQN", uint32 version, uint32 in_channels, uint32 parameter count
# per parameter: uint32 name length, utf-8 name, uint32 rank, rank x uint32 dims,
#                prod(dims) x float64; all little-endian

MAGIC = b"DDQN"
VERSION = 1


def encode_checkpoint(net: QNetwork) -> bytes:
    out = io.BytesIO()
    named = net.named_parameters()
    out.write(MAGIC)
    out.write(struct.pack("<III", VERSION, net.in_channels, len(named)))
    for name, t in named:
        raw = name.encode("utf-8")
        out.write(struct.pack("<I", len(raw)))
        out.write(raw)
        out.write(struct.pack("<I", t.data.ndim))
        out.write(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
        out.write(t.data.astype("<f8").tobytes())
    return out.getvalue()


def decode_checkpoint(blob: bytes, net: QNetwork) -> None:
    view = memoryview(blob)
    if bytes(view[:4]) != MAGIC:
        raise ValueError("not a Q-network checkpoint")
    version, in_channels, count = struct.unpack_from("<III", view, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    if in_channels != net.in_channels:
        raise ValueError(f"checkpoint has {in_channels} input channels, network has {net.in_channels}")
    pos = 16
    params = dict(net.named_parameters())
    loaded = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", view, pos)
        name = bytes(view[pos + 4 : pos + 4 + n]).decode("utf-8")
        pos += 4 + n
        (rank,) = struct.unpack_from("<I", view, pos)
        dims = struct.unpack_from(f"<{rank}I", view, pos + 4)
        pos += 4 + 4 * rank
        size = int(np.prod(dims)) if rank else 1
        loaded[name] = np.frombuffer(view[pos : pos + 8 * size], dtype="<f8").reshape(dims)
        pos += 8 * size
    if set(loaded) != set(params):
        raise ValueError("checkpoint parameter names do not match the network")
    for name, arr in loaded.items():
        if arr.shape != params[name].shape:
            raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {params[name].shape}")
        params[name].data[...] = arr
