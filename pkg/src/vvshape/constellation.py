"""Bit-labelled constellations and their tab-separated file format.

Point ``i`` carries the bit vector given by the binary expansion of ``i``,
most significant bit first, so the label ``1F`` belongs to ``(0,1,1,1,1,1)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numgrad as ng


class ConstellationFormatError(ValueError):
    pass


def bit_matrix(m: int) -> np.ndarray:
    """``(2**m, m)`` array of labels, MSB first."""
    idx = np.arange(2 ** m)
    return ((idx[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(np.int8)


def bits_to_index(bits) -> np.ndarray:
    bits = np.asarray(bits)
    m = bits.shape[-1]
    weights = 1 << np.arange(m - 1, -1, -1)
    return (bits.astype(np.int64) * weights).sum(axis=-1)


def hex_label(index: int, m: int) -> str:
    width = max(2, -(-m // 4))
    return format(int(index), f"0{width}X")


def gray(n):
    n = np.asarray(n)
    return n ^ (n >> 1)


def square_qam(m: int = 6) -> np.ndarray:
    """Gray-labelled square QAM with unit average power.

    The first ``m/2`` bits select the in-phase level, the rest the quadrature
    level; both follow a binary reflected Gray code.
    """
    if m % 2:
        raise ValueError("square QAM needs an even number of bits")
    h = m // 2
    side = 2 ** h
    levels = np.arange(-(side - 1), side, 2, dtype=np.float64)
    # position p carries Gray code gray(p); invert to get level per label
    level_of = np.empty(side, dtype=np.int64)
    level_of[gray(np.arange(side))] = np.arange(side)
    idx = np.arange(2 ** m)
    i_lab, q_lab = idx >> h, idx & (side - 1)
    pts = levels[level_of[i_lab]] + 1j * levels[level_of[q_lab]]
    return pts / np.sqrt(2 * (2 ** m - 1) / 3)


def normalize_points(points) -> np.ndarray:
    points = np.asarray(points, dtype=np.complex128)
    power = np.mean(np.abs(points) ** 2)
    if power == 0:
        raise ValueError("cannot normalize an all-zero constellation")
    return points / np.sqrt(power)


def symmetry_distance(points, mu: int, grid: int = 3600) -> tuple[float, float]:
    """Mean angular distance of ``points`` to the nearest of ``mu`` symmetry lines.

    The lines sit at multiples of ``2 pi/mu`` after the global rotation that
    minimizes the mean; returns ``(distance, rotation)``.
    """
    from scipy.optimize import minimize_scalar

    ang = np.angle(np.asarray(points, dtype=np.complex128))
    sector = 2 * np.pi / mu

    def mean_dist(alpha):
        return float(np.mean(np.abs(np.angle(np.exp(1j * mu * (ang - alpha))) / mu)))
    cands = np.linspace(0, sector, grid, endpoint=False)
    best = cands[int(np.argmin([mean_dist(a) for a in cands]))]
    step = sector / grid
    fine = minimize_scalar(mean_dist, bounds=(best - step, best + step), method="bounded",
                           options={"xatol": 1e-12})
    if fine.fun < mean_dist(best):
        best = float(fine.x)
    return mean_dist(best), float(np.mod(best, sector))


@dataclass(frozen=True)
class Constellation:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.complex128).copy()
        n = pts.size
        if n < 2 or n & (n - 1):
            raise ValueError(f"need 2**m points, got {n}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return int(self.points.size).bit_length() - 1

    @property
    def bits(self) -> np.ndarray:
        return bit_matrix(self.m)

    @property
    def power(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))

    @classmethod
    def qam(cls, m: int = 6) -> "Constellation":
        return cls(square_qam(m))

    @classmethod
    def perturbed_qam(cls, m: int = 6, std: float = 0.01, rng=None) -> "Constellation":
        rng = np.random.default_rng(rng)
        pts = square_qam(m)
        pts = pts + std * (rng.standard_normal(pts.size) + 1j * rng.standard_normal(pts.size))
        return cls(normalize_points(pts))

    def normalize(self) -> "Constellation":
        return Constellation(normalize_points(self.points))

    def map_bits(self, bits) -> np.ndarray:
        """Symbols for a ``(..., m)`` array of bits, normalized to unit power."""
        bits = np.asarray(bits)
        if bits.shape[-1] != self.m:
            raise ValueError(f"expected {self.m} bits per symbol, got {bits.shape[-1]}")
        return normalize_points(self.points)[bits_to_index(bits)]

    def map_indices(self, idx) -> np.ndarray:
        return normalize_points(self.points)[np.asarray(idx)]

    def __eq__(self, other):
        return isinstance(other, Constellation) and np.array_equal(self.points, other.points)

    __hash__ = None


# --------------------------------------------------------------------------
# differentiable variants on a tape

def normalize_pair(re: ng.Var, im: ng.Var) -> ng.CPair:
    """Scale trainable coordinates to unit mean power, inside the graph."""
    power = ng.mean(ng.abs2(re, im))
    if power.value <= 0:
        raise ng.GraphError("cannot normalize an all-zero constellation")
    scale = ng.div(1.0, ng.sqrt(power))
    return ng.CPair(ng.mul(re, scale), ng.mul(im, scale))


def map_indices_pair(points: ng.CPair, idx) -> ng.CPair:
    return ng.CPair(ng.take(points.re, idx), ng.take(points.im, idx))


# --------------------------------------------------------------------------
# file format

HEADER = "real\timag\tlabel"


def export_tsv(c: Constellation, path) -> None:
    lines = [HEADER]
    for i, p in enumerate(c.points):
        lines.append(f"{float(p.real)!r}\t{float(p.imag)!r}\t{hex_label(i, c.m)}")
    Path(path).write_text("\n".join(lines) + "\n")


def import_tsv(path) -> Constellation:
    text = Path(path).read_text()
    rows = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if lineno == 1 and fields[0].strip() == "real":
            continue
        if len(fields) != 3:
            raise ConstellationFormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
        try:
            re, im = float(fields[0]), float(fields[1])
            label = int(fields[2].strip(), 16)
        except ValueError as exc:
            raise ConstellationFormatError(f"{path}:{lineno}: {exc}") from None
        if label in rows:
            raise ConstellationFormatError(f"{path}:{lineno}: duplicate label {fields[2].strip()}")
        rows[label] = complex(re, im)
    n = len(rows)
    if n == 0:
        raise ConstellationFormatError(f"{path}: no constellation points")
    if n & (n - 1) or sorted(rows) != list(range(n)):
        raise ConstellationFormatError(
            f"{path}: labels must cover 0..2**m-1 exactly, got {n} rows")
    return Constellation(np.array([rows[i] for i in range(n)]))
