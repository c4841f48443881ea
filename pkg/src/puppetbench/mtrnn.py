"""Multiple-timescale recurrent network policy.

Three neuron groups share one weight matrix under a connectivity mask:
input-output (IO), fast context (Cf) and slow context (Cs).  IO talks to Cf,
Cf talks to Cs, Cf and Cs recur within their group; IO and Cs are not
directly connected.  Every neuron is a leaky integrator,

    u_i <- (1 - 1/tau_i) * u_i + (1/tau_i) * (sum_j W_ij * y_j + b_i)
    y_i = tanh(u_i)

where the source activations over the IO block are replaced by the clamped
input vector.  Training is full backpropagation through time with teacher
forcing; each training sequence owns a learnable initial Cs potential, and
closed-loop generation replays a sequence from that vector plus an initial
posture.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .actions import Dataset, NormalizedSequence

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MtrnnConfig:
    n_io: int
    n_cf: int = 60
    n_cs: int = 20
    tau_io: float = 2.0
    tau_cf: float = 5.0
    tau_cs: float = 70.0

    def __post_init__(self):
        if min(self.n_io, self.n_cf, self.n_cs) <= 0:
            raise ValueError("all neuron counts must be > 0")
        if min(self.tau_io, self.tau_cf, self.tau_cs) < 1.0:
            raise ValueError("time constants must be >= 1")

    @property
    def n_total(self) -> int:
        return self.n_io + self.n_cf + self.n_cs

    @property
    def io(self) -> slice:
        return slice(0, self.n_io)

    @property
    def cf(self) -> slice:
        return slice(self.n_io, self.n_io + self.n_cf)

    @property
    def cs(self) -> slice:
        return slice(self.n_io + self.n_cf, self.n_total)

    def tau_vector(self) -> np.ndarray:
        return np.concatenate([
            np.full(self.n_io, self.tau_io),
            np.full(self.n_cf, self.tau_cf),
            np.full(self.n_cs, self.tau_cs),
        ])

    def connectivity_mask(self) -> np.ndarray:
        """mask[i, j] = 1 where a weight from neuron j into neuron i exists."""
        mask = np.zeros((self.n_total, self.n_total))
        io, cf, cs = self.io, self.cf, self.cs
        mask[io, cf] = 1.0
        mask[cf, io] = 1.0
        mask[cf, cf] = 1.0
        mask[cf, cs] = 1.0
        mask[cs, cf] = 1.0
        mask[cs, cs] = 1.0
        return mask


@dataclass
class MtrnnNetwork:
    """Weights, biases and the per-sequence initial-Cs table."""

    config: MtrnnConfig
    W: np.ndarray
    b: np.ndarray
    initial_cs: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @classmethod
    def initialize(cls, config: MtrnnConfig, seed: int = 0) -> "MtrnnNetwork":
        rng = np.random.default_rng(seed)
        mask = config.connectivity_mask()
        fan_in = np.maximum(1.0, mask.sum(axis=1))
        W = rng.normal(0.0, 1.0, mask.shape) * mask / np.sqrt(fan_in)[:, None]
        return cls(config=config, W=W, b=np.zeros(config.n_total), meta={"seed": seed})

    def sequence_names(self) -> list[str]:
        return list(self.initial_cs.keys())


@dataclass(frozen=True)
class NeuronState:
    """Potentials and activations of every neuron."""

    u: np.ndarray
    y: np.ndarray

    @classmethod
    def initial(cls, net: MtrnnNetwork, cs0: Optional[np.ndarray] = None) -> "NeuronState":
        u = np.zeros(net.config.n_total)
        if cs0 is not None:
            cs0 = np.asarray(cs0, dtype=float)
            if cs0.shape != (net.config.n_cs,):
                raise ValueError(f"initial Cs must have length {net.config.n_cs}")
            u[net.config.cs] = cs0
        return cls(u=u, y=np.tanh(u))


def forward_step(
    net: MtrnnNetwork, state: NeuronState, input_vector: Sequence[float]
) -> tuple[NeuronState, np.ndarray]:
    """One leaky-integrator update; returns (next state, IO output)."""
    cfg = net.config
    x = np.asarray(input_vector, dtype=float)
    if x.shape != (cfg.n_io,):
        raise ValueError(f"input must have {cfg.n_io} components, got {x.shape}")
    if np.any(np.abs(x) > 1.0 + 1e-9):
        raise ValueError("input components must lie in [-1, 1]")
    tau = cfg.tau_vector()
    y_eff = state.y.copy()
    y_eff[cfg.io] = x
    u = (1.0 - 1.0 / tau) * state.u + (net.W @ y_eff + net.b) / tau
    y = np.tanh(u)
    return NeuronState(u=u, y=y), y[cfg.io].copy()


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20000
    learning_rate: float = 0.002
    momentum: float = 0.9  # beta1 under the adam optimizer
    clip_norm: float = 1.0
    seed: int = 0
    report_interval: int = 100
    optimizer: str = "momentum"  # "momentum" or "adam"
    lr_decay: float = 1.0  # per-epoch learning-rate multiplier
    adam_beta2: float = 0.999

    def __post_init__(self):
        if self.epochs <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs and learning_rate must be > 0")
        if self.optimizer not in ("momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must be in (0, 1]")
        if not 0.0 < self.adam_beta2 < 1.0:
            raise ValueError("adam_beta2 must be in (0, 1)")


def _pad_dataset(dataset: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack sequences into (S, T, D) with a per-step validity mask and weights."""
    lengths = np.array([len(s) for s in dataset.sequences])
    if np.any(lengths < 2):
        raise ValueError("every sequence needs at least 2 frames to train on")
    S, T, D = len(lengths), int(lengths.max()), dataset.dim
    X = np.zeros((S, T, D))
    step_mask = np.zeros((S, T - 1))
    for s, seq in enumerate(dataset.sequences):
        X[s, : lengths[s]] = seq.vectors
        step_mask[s, : lengths[s] - 1] = 1.0
    # per-sequence loss weight: mean over steps and components, then sequences
    w = 1.0 / (S * (lengths - 1) * D)
    return X, step_mask, w


def _run_bptt(net: MtrnnNetwork, X, step_mask, w, cs0):
    """One forward+backward pass over the padded batch.

    Returns (loss, dW, db, dcs0).  The recurrence follows forward_step
    exactly; gradients flow through the teacher-forced IO clamp boundary
    only via the non-IO source activations.
    """
    cfg = net.config
    S, T, D = X.shape
    N = cfg.n_total
    tau = cfg.tau_vector()
    kappa = 1.0 / tau
    alpha = 1.0 - kappa
    io, cs = cfg.io, cfg.cs
    non_io = np.ones(N)
    non_io[io] = 0.0

    U = np.zeros((S, N))
    U[:, cs] = cs0
    Ys = np.empty((S, T, N))
    Ys[:, 0] = np.tanh(U)
    Yeff = np.empty((S, T - 1, N))
    for t in range(T - 1):
        y_eff = Ys[:, t].copy()
        y_eff[:, io] = X[:, t]
        Yeff[:, t] = y_eff
        U = alpha * U + kappa * (y_eff @ net.W.T + net.b)
        Ys[:, t + 1] = np.tanh(U)

    err = (Ys[:, 1:, io] - X[:, 1:]) * step_mask[:, :, None]
    loss = float(np.sum(w[:, None, None] * err * err))
    dO = 2.0 * w[:, None, None] * err

    A = np.empty((S, T - 1, N))  # dL/ds_t for the pre-activation of step t
    G = np.zeros((S, N))
    for k in range(T - 1, 0, -1):
        h = np.zeros((S, N))
        h[:, io] = dO[:, k - 1]
        if k <= T - 2:
            h += ((kappa * G) @ net.W) * non_io
        G = (1.0 - Ys[:, k] ** 2) * h + alpha * G
        A[:, k - 1] = kappa * G
    h0 = ((kappa * G) @ net.W) * non_io
    G0 = (1.0 - Ys[:, 0] ** 2) * h0 + alpha * G

    flatA = A.reshape(S * (T - 1), N)
    dW = flatA.T @ Yeff.reshape(S * (T - 1), N)
    db = flatA.sum(axis=0)
    dcs0 = G0[:, cs]
    return loss, dW, db, dcs0


def train(
    net: MtrnnNetwork,
    dataset: Dataset,
    cfg: TrainConfig = TrainConfig(),
    progress=None,
) -> tuple[MtrnnNetwork, list[tuple[int, float]]]:
    """Full-BPTT training with teacher forcing and momentum gradient descent.

    Updates W (under the connectivity mask), b and each sequence's initial Cs
    in place; returns the network and the recorded loss curve.  `progress`,
    when given, is called as progress(epoch, loss) at every report interval.
    """
    if not dataset.sequences:
        raise ValueError("dataset is empty")
    if dataset.dim != net.config.n_io:
        raise ValueError(f"dataset dimension {dataset.dim} != n_io {net.config.n_io}")
    mask = net.config.connectivity_mask()
    names = [s.name for s in dataset.sequences]
    if len(set(names)) != len(names):
        raise ValueError("sequence names must be unique")
    X, step_mask, w = _pad_dataset(dataset)
    cs0 = np.zeros((len(names), net.config.n_cs))
    for s, name in enumerate(names):
        if name in net.initial_cs:
            cs0[s] = net.initial_cs[name]

    params = (net.W, net.b, cs0)
    vel = [np.zeros_like(p) for p in params]
    second = [np.zeros_like(p) for p in params]  # adam only
    curve: list[tuple[int, float]] = []
    loss = float("nan")
    lr = cfg.learning_rate
    for epoch in range(1, cfg.epochs + 1):
        loss, dW, db, dcs0 = _run_bptt(net, X, step_mask, w, cs0)
        if not np.isfinite(loss):
            raise RuntimeError(f"training diverged (loss={loss}) at epoch {epoch}")
        dW *= mask
        grads = (dW, db, dcs0)
        gnorm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
        if gnorm > cfg.clip_norm:
            for g in grads:
                g *= cfg.clip_norm / gnorm
        if cfg.optimizer == "adam":
            b1, b2 = cfg.momentum, cfg.adam_beta2
            for p, g, m, v in zip(params, grads, vel, second):
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * g * g
                mhat = m / (1.0 - b1**epoch)
                vhat = v / (1.0 - b2**epoch)
                p -= lr * mhat / (np.sqrt(vhat) + 1e-8)
        else:
            for p, g, v in zip(params, grads, vel):
                v *= cfg.momentum
                v += g
                p -= lr * v
        lr *= cfg.lr_decay
        if epoch % cfg.report_interval == 0 or epoch == cfg.epochs:
            curve.append((epoch, loss))
            if progress is not None:
                progress(epoch, loss)

    net.initial_cs = {name: cs0[s].copy() for s, name in enumerate(names)}
    net.meta.update(
        {
            "epochs": cfg.epochs,
            "final_loss": loss,
            "train_seed": cfg.seed,
            "sequences": [
                {
                    "name": seq.name,
                    "length": len(seq),
                    "rate_hz": seq.rate_hz,
                    "initial_posture": seq.vectors[0].tolist(),
                }
                for seq in dataset.sequences
            ],
        }
    )
    return net, curve


def loss_gradients(net: MtrnnNetwork, dataset: Dataset):
    """Loss plus gradients (dW, db, dcs0) at the current parameters.

    The initial-Cs table must already hold a row per dataset sequence.
    Exposed for gradient verification; training uses the same pass.
    """
    X, step_mask, w = _pad_dataset(dataset)
    cs0 = np.stack([net.initial_cs[s.name] for s in dataset.sequences])
    loss, dW, db, dcs0 = _run_bptt(net, X, step_mask, w, cs0)
    return loss, dW * net.config.connectivity_mask(), db, dcs0


def sequence_loss(net: MtrnnNetwork, dataset: Dataset) -> float:
    loss, _, _, _ = loss_gradients(net, dataset)
    return loss


def _resolve_cs0(net: MtrnnNetwork, key: Union[str, int, np.ndarray]) -> tuple[str, np.ndarray]:
    if isinstance(key, str):
        if key not in net.initial_cs:
            raise KeyError(f"unknown sequence {key!r}")
        return key, net.initial_cs[key]
    if isinstance(key, (int, np.integer)):
        names = net.sequence_names()
        if not 0 <= key < len(names):
            raise KeyError(f"sequence index {key} out of range 0..{len(names) - 1}")
        return names[key], net.initial_cs[names[key]]
    cs0 = np.asarray(key, dtype=float)
    return "custom", cs0


def generate(
    net: MtrnnNetwork,
    sequence: Union[str, int, np.ndarray],
    initial_posture: Sequence[float],
    steps: int,
    rate_hz: Optional[float] = None,
) -> NormalizedSequence:
    """Closed-loop rollout: the first input is the initial posture, every
    later input is the previous output."""
    name, cs0 = _resolve_cs0(net, sequence)
    state = NeuronState.initial(net, cs0)
    x = np.asarray(initial_posture, dtype=float)
    outputs = np.empty((steps, net.config.n_io))
    for t in range(steps):
        state, out = forward_step(net, state, x)
        outputs[t] = out
        x = out
    return NormalizedSequence(name=f"gen_{name}", vectors=outputs, rate_hz=rate_hz)


def rollout_states(
    net: MtrnnNetwork, sequence: Union[str, int, np.ndarray], teacher: NormalizedSequence
) -> np.ndarray:
    """Teacher-forced pass recording Cs activations; returns (T, n_cs)."""
    _, cs0 = _resolve_cs0(net, sequence)
    if teacher.dim != net.config.n_io:
        raise ValueError(f"teacher dimension {teacher.dim} != n_io {net.config.n_io}")
    state = NeuronState.initial(net, cs0)
    rows = np.empty((len(teacher), net.config.n_cs))
    rows[0] = state.y[net.config.cs]
    for t in range(len(teacher) - 1):
        state, _ = forward_step(net, state, teacher.vectors[t])
        rows[t + 1] = state.y[net.config.cs]
    return rows


# Checkpoint codec: structured JSON, reproducible byte for byte.

def network_to_dict(net: MtrnnNetwork) -> dict:
    cfg = net.config
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": {
            "n_io": cfg.n_io,
            "n_cf": cfg.n_cf,
            "n_cs": cfg.n_cs,
            "tau_io": cfg.tau_io,
            "tau_cf": cfg.tau_cf,
            "tau_cs": cfg.tau_cs,
        },
        "W": net.W.tolist(),
        "b": net.b.tolist(),
        "initial_cs": {name: vec.tolist() for name, vec in net.initial_cs.items()},
        "meta": net.meta,
    }


def network_from_dict(doc: dict) -> MtrnnNetwork:
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {doc.get('format_version')!r}")
    cfg = MtrnnConfig(**doc["config"])
    W = np.array(doc["W"], dtype=float)
    if W.shape != (cfg.n_total, cfg.n_total):
        raise ValueError("weight matrix shape does not match config")
    return MtrnnNetwork(
        config=cfg,
        W=W,
        b=np.array(doc["b"], dtype=float),
        initial_cs={k: np.array(v, dtype=float) for k, v in doc["initial_cs"].items()},
        meta=doc.get("meta", {}),
    )


def save_network(net: MtrnnNetwork, path) -> None:
    with open(path, "w") as fh:
        json.dump(network_to_dict(net), fh)
        fh.write("\n")


def load_network(path) -> MtrnnNetwork:
    with open(path) as fh:
        return network_from_dict(json.load(fh))


def save_loss_curve(curve: list[tuple[int, float]], path) -> None:
    with open(path, "w") as fh:
        for epoch, loss in curve:
            fh.write(f"{epoch} {loss!r}\n")
