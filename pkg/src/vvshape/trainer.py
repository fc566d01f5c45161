"""End-to-end training of constellation, partition rings and demapper."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import cpe
from . import numgrad as ng
from .channel import ChannelParams, apply, realize
from .constellation import Constellation, bit_matrix, map_indices_pair, normalize_pair
from .demapper import RxNet, bce_loss, demap
from .rng import stream
from .system import System, estimate_phase, save_system


class TrainingError(RuntimeError):
    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}


@dataclass(frozen=True)
class TrainConfig:
    m: int = 6
    batch_len: int = 4096
    batches: int = 2000
    lr: float = 1e-2
    lr_decay: float = 0.5
    lr_decay_every: int = 500
    snr_db: float = 20.0
    linewidth_hz: float = 100e3
    symbol_rate_baud: float = 32e9
    mu: int = 4
    L: int = 0
    K: int = 32
    activation: str = "sigmoid"
    smooth_radius: int | None = None
    hidden: tuple = (64, 64)
    init_std: float = 0.01
    ring_init: tuple = (10.0, 1.2, 1.6)
    clip_norm: float = 10.0
    train_constellation: bool = True
    train_partition: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.batch_len <= 2 * self.K:
            raise ValueError("batch_len must exceed 2K")
        if self.batches < 0 or self.L < 0 or self.m < 1:
            raise ValueError("counts must be non-negative")
        if self.activation not in cpe.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def vv(self) -> cpe.VVParams:
        return cpe.VVParams(self.mu, self.K)

    @property
    def channel(self) -> ChannelParams:
        return ChannelParams(self.snr_db, self.linewidth_hz, self.symbol_rate_baud, self.seed)

    def lr_at(self, batch: int) -> float:
        return self.lr * self.lr_decay ** (batch // self.lr_decay_every)


@dataclass
class TrainReport:
    losses: list
    system: System
    config: TrainConfig
    wall_time: float = 0.0

    @property
    def constellation(self) -> Constellation:
        return self.system.constellation

    @property
    def partition(self) -> cpe.PartitionParams:
        return self.system.partition

    @property
    def rxnet(self) -> RxNet:
        return self.system.demapper


# --------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    t = state.t + 1
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            new_p[k] = p
            continue
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {k} {p.shape}")
        m = beta1 * state.m.get(k, np.zeros_like(p)) + (1 - beta1) * g
        v = beta2 * state.v.get(k, np.zeros_like(p)) + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        new_p[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, t)


def clip_global_norm(grads: dict, max_norm: float) -> dict:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm or norm == 0:
        return grads
    return {k: g * (max_norm / norm) for k, g in grads.items()}


# --------------------------------------------------------------------------
# model

def initial_params(cfg: TrainConfig) -> dict:
    rng = stream(cfg.seed, "init")
    c = Constellation.perturbed_qam(cfg.m, cfg.init_std, rng)
    net = RxNet.create(cfg.m, cfg.hidden, rng)
    s, t0, t1 = cfg.ring_init
    params = {"const_re": c.points.real.copy(), "const_im": c.points.imag.copy(),
              "rings": cpe.PartitionParams.initial(cfg.L, s, t0, t1).rings}
    params.update({k: v.copy() for k, v in net.params().items()})
    return params


def trainable(cfg: TrainConfig) -> set:
    keys = {f"{p}{i}" for p in "Wb" for i in range(len(cfg.hidden) + 1)}
    if cfg.train_constellation:
        keys |= {"const_re", "const_im"}
    if cfg.train_partition and cfg.L:
        keys.add("rings")
    return keys


@dataclass
class Batch:
    indices: np.ndarray
    bits: np.ndarray
    realization: object


def make_batch(cfg: TrainConfig, b: int) -> Batch:
    rng = stream(cfg.seed, "batch", b)
    idx = rng.integers(0, 2 ** cfg.m, cfg.batch_len)
    real = realize(cfg.channel, cfg.batch_len, initial_phase=0.0, rng=stream(cfg.seed, "channel", b))
    return Batch(idx, bit_matrix(cfg.m)[idx], real)


def forward(params: dict, cfg: TrainConfig, batch: Batch, tape: ng.Tape | None = None):
    """Build the loss graph; returns ``(tape, loss node, leaf nodes)``."""
    tape = tape or ng.Tape()
    leaves = {k: tape.var(v) for k, v in params.items()}
    pts = normalize_pair(leaves["const_re"], leaves["const_im"])
    x = map_indices_pair(pts, batch.indices)
    z, _ = apply(x, cfg.channel, realization=batch.realization)
    rings = [(leaves["rings"][l, 0], leaves["rings"][l, 1], leaves["rings"][l, 2])
             for l in range(cfg.L)]
    track = estimate_phase(z, cfg.vv, pts, rings, cfg.activation,
                           smooth_radius=cfg.smooth_radius)
    y = cpe.derotate(z, track)
    n_layers = len(cfg.hidden) + 1
    rx = {k: leaves[k] for k in leaves if k[0] in "Wb" and k[1:].isdigit() and int(k[1:]) < n_layers}
    llrs = demap(y, _net_shape(cfg), params=rx)
    return tape, bce_loss(batch.bits, llrs), leaves


def _net_shape(cfg):
    return RxNet.zeros(cfg.m, cfg.hidden)


def loss_and_grad(params: dict, cfg: TrainConfig, batch: Batch):
    tape, loss, leaves = forward(params, cfg, batch)
    adj = ng.backward(tape, loss)
    return float(loss.value), {k: adj[v.node_id] for k, v in leaves.items()}


def loss_value(params: dict, cfg: TrainConfig, batch: Batch) -> float:
    return float(forward(params, cfg, batch)[1].value)


def to_system(params: dict, cfg: TrainConfig, system_id: str | None = None) -> System:
    n_layers = len(cfg.hidden) + 1
    net = RxNet.from_params({k: params[k] for k in params
                             if k[0] in "Wb" and k[1:].isdigit() and int(k[1:]) < n_layers})
    pts = params["const_re"] + 1j * params["const_im"]
    pts = pts / math.sqrt(np.mean(np.abs(pts) ** 2))
    sid = system_id or f"mu{cfg.mu}-L{cfg.L}"
    return System(Constellation(pts), cfg.vv, cpe.PartitionParams(params["rings"]),
                  cfg.activation, cfg.smooth_radius, net, system_id=sid)


def train(cfg: TrainConfig, params: dict | None = None, callback=None,
          system_id: str | None = None) -> TrainReport:
    """Adam on the bitwise cross-entropy of the full transmission chain.

    ``callback(batch_index, loss, params)`` runs after every update.
    """
    start = time.perf_counter()
    params = {k: np.array(v, dtype=np.float64) for k, v in (params or initial_params(cfg)).items()}
    keys = trainable(cfg)
    state = AdamState()
    losses = []
    for b in range(cfg.batches):
        batch = make_batch(cfg, b)
        try:
            loss, grads = loss_and_grad(params, cfg, batch)
        except (ng.GraphError, cpe.DegeneratePartitionError) as exc:
            raise TrainingError(f"batch {b}: {exc}", _snapshot(params, cfg, b)) from exc
        if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingError(f"non-finite loss/gradient at batch {b}", _snapshot(params, cfg, b))
        losses.append(loss)
        grads = clip_global_norm({k: grads[k] for k in keys}, cfg.clip_norm)
        params, state = adam_step(params, grads, state, cfg.lr_at(b))
        if callback is not None:
            callback(b, loss, params)
    return TrainReport(losses, to_system(params, cfg, system_id), cfg,
                       time.perf_counter() - start)


def _snapshot(params, cfg, b):
    return {"batch": b, "seed": cfg.seed, "config": asdict(cfg),
            "params": {k: v.copy() for k, v in params.items()}}


def qam_reference(cfg: TrainConfig) -> TrainReport:
    """Square QAM with a demapper trained through the same pipeline."""
    params = initial_params(cfg)
    pts = Constellation.qam(cfg.m).points
    params["const_re"], params["const_im"] = pts.real.copy(), pts.imag.copy()
    return train(replace(cfg, train_constellation=False), params, system_id=f"qam{2 ** cfg.m}-mu{cfg.mu}-L{cfg.L}")


# --------------------------------------------------------------------------
# run directory

def write_loss_curve(losses, path) -> None:
    lines = ["batch\tloss"] + [f"{i}\t{float(v)!r}" for i, v in enumerate(losses)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_loss_curve(path) -> list:
    rows = Path(path).read_text().splitlines()[1:]
    return [float(r.split("\t")[1]) for r in rows if r.strip()]


def save_run(report: TrainReport, run_dir) -> dict:
    """Final artifacts plus loss curve; returns ``{name: path}``."""
    run_dir = Path(run_dir)
    paths = save_system(report.system, run_dir)
    paths["loss.tsv"] = run_dir / "loss.tsv"
    write_loss_curve(report.losses, paths["loss.tsv"])
    paths["partition_grid.tsv"] = run_dir / "partition_grid.tsv"
    cpe.export_partition_grid(report.system.partition, paths["partition_grid.tsv"],
                              report.system.activation)
    return paths
