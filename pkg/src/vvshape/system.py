"""A complete transceiver: constellation, phase estimator, demapper."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cpe
from . import numgrad as ng
from .channel import ChannelParams, apply
from .constellation import Constellation, bit_matrix, normalize_points
from .demapper import RxNet, demap, exact_llrs


@dataclass
class System:
    """Everything needed to turn received symbols into bit LLRs.

    ``demapper=None`` uses exact Gaussian LLRs for the AWGN part of the
    channel.  ``hard_rings > 0`` replaces soft partitioning with the
    amplitude-class selection of :func:`cpe.hard_partition_qam`.
    """

    constellation: Constellation
    vv: cpe.VVParams = field(default_factory=cpe.VVParams)
    partition: cpe.PartitionParams = field(default_factory=cpe.PartitionParams)
    activation: str = "sigmoid"
    smooth_radius: int | None = None
    demapper: RxNet | None = None
    hard_rings: int = 0
    system_id: str = "system"

    @property
    def radius(self) -> int:
        return self.vv.half_window if self.smooth_radius is None else self.smooth_radius

    @classmethod
    def qam_hard(cls, num_rings: int = 2, m: int = 6, half_window: int = 32) -> "System":
        return cls(Constellation.qam(m), cpe.VVParams(4, half_window), hard_rings=num_rings,
                   system_id=f"qam{2 ** m}-hard{num_rings}")


def estimate_phase(z, vv: cpe.VVParams, points, partition=None, activation="sigmoid",
                   hard_rings: int = 0, smooth_radius: int | None = None,
                   true_phase=None) -> cpe.PhaseTrack:
    """Phase track for ``z`` including reference alignment and smoothing.

    ``points`` (array or pair) are the transmit constellation, used to remove
    its mu-th moment phase.  ``partition`` is a :class:`cpe.PartitionParams`
    or a list of node triples; L=0 means plain Viterbi-Viterbi.  With
    ``true_phase`` the genie cycle-slip compensation runs before smoothing.
    """
    radius = vv.half_window if smooth_radius is None else smooth_radius
    rings = cpe._ring_vars(partition) if partition is not None else []
    if hard_rings:
        pts = normalize_points(ng.to_complex(points) if isinstance(points, ng.CPair) else points)
        mask = cpe.hard_partition_qam(z, hard_rings, pts, vv.mu)
        ref = cpe.reference_moment(pts, vv.mu, mask=cpe.hard_partition_qam(pts, hard_rings, pts, vv.mu))
        track = cpe.vv_masked(z, vv, mask, ref)
    elif not rings:
        track = cpe.vv_estimate(z, vv, cpe.reference_moment(points, vv.mu))
    else:
        ref = cpe.reference_moment(points, vv.mu, rings, activation)
        track = cpe.vv_modified(z, vv, rings, activation, ref)
    if true_phase is not None:
        track = cpe.genie_csc(track, true_phase, vv.mu)
    if hard_rings or rings:
        track = cpe.smooth_track(track, radius)
    return track


def receive(system: System, z, noise_var: float | None = None, true_phase=None) -> np.ndarray:
    """LLRs ``(N, m)`` for a received complex sequence."""
    pts = normalize_points(system.constellation.points)
    track = estimate_phase(z, system.vv, pts, system.partition, system.activation,
                           system.hard_rings, system.smooth_radius, true_phase)
    y = cpe.derotate(z, track)
    if system.demapper is None:
        if noise_var is None:
            raise ValueError("exact LLRs need the noise variance")
        return exact_llrs(y, pts, noise_var)
    return demap(y, system.demapper)


def simulate(system: System, params: ChannelParams, n: int, rng: np.random.Generator,
             initial_phase: float | None = None, csc: bool = True):
    """Transmit ``n`` random symbols; returns ``(bits, llrs)``."""
    m = system.constellation.m
    idx = rng.integers(0, 2 ** m, n)
    x = system.constellation.map_indices(idx)
    z, real = apply(x, params, initial_phase=initial_phase, rng=rng)
    llrs = receive(system, z, params.noise_var, real.phase if csc else None)
    return bit_matrix(m)[idx], llrs


# --------------------------------------------------------------------------
# artifacts on disk

ARTIFACTS = ("constellation.tsv", "rxnet.tsv", "partition.tsv", "system.ini")


def save_system(system: System, directory) -> dict:
    """Write the artifact files of ``system``; returns ``{name: path}``."""
    from .constellation import export_tsv
    from .demapper import save_checkpoint

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {name: d / name for name in ARTIFACTS}
    export_tsv(system.constellation, paths["constellation.tsv"])
    if system.demapper is not None:
        save_checkpoint(system.demapper, paths["rxnet.tsv"])
    else:
        paths.pop("rxnet.tsv")
    cpe.export_partition(system.partition, paths["partition.tsv"], system.activation)
    cp = configparser.ConfigParser()
    cp["system"] = {
        "system_id": system.system_id,
        "mu": str(system.vv.mu),
        "half_window": str(system.vv.half_window),
        "activation": system.activation,
        "smooth_radius": "" if system.smooth_radius is None else str(system.smooth_radius),
        "hard_rings": str(system.hard_rings),
        "demapper": "rxnet" if system.demapper is not None else "exact",
    }
    with open(paths["system.ini"], "w") as fh:
        cp.write(fh)
    return paths


def load_system(directory) -> System:
    """Inverse of :func:`save_system`; raises ``FileNotFoundError`` up front."""
    from .constellation import import_tsv
    from .demapper import load_checkpoint

    d = Path(directory)
    ini = d / "system.ini"
    if not ini.is_file():
        raise FileNotFoundError(f"missing artifact {ini}")
    cp = configparser.ConfigParser()
    cp.read(ini)
    s = cp["system"]
    needed = ["constellation.tsv", "partition.tsv"]
    if s.get("demapper", "rxnet") == "rxnet":
        needed.append("rxnet.tsv")
    missing = [str(d / n) for n in needed if not (d / n).is_file()]
    if missing:
        raise FileNotFoundError("missing artifact(s): " + ", ".join(missing))
    partition, activation = cpe.import_partition(d / "partition.tsv")
    radius = s.get("smooth_radius", "")
    return System(
        import_tsv(d / "constellation.tsv"),
        cpe.VVParams(s.getint("mu"), s.getint("half_window")),
        partition,
        s.get("activation", activation),
        int(radius) if radius else None,
        load_checkpoint(d / "rxnet.tsv") if "rxnet.tsv" in needed else None,
        s.getint("hard_rings", 0),
        s.get("system_id", d.name),
    )
