"""Bitwise demapping: the receiver network, exact Gaussian LLRs, loss and BMI.

LLR sign convention throughout: ``LLR > 0`` means bit = 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from . import numgrad as ng
from .constellation import bit_matrix

CHECKPOINT_MAGIC = "# vvshape rxnet v1; llr>0 means bit=1"


@dataclass
class RxNet:
    """Feed-forward demapper ``2 -> hidden... -> m`` with relu hidden layers."""

    weights: list
    biases: list

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def m(self) -> int:
        return self.sizes[-1]

    @classmethod
    def create(cls, m: int = 6, hidden=(64, 64), rng=None, zero_output=True) -> "RxNet":
        """He-initialized hidden layers; output layer zeroed so LLRs start at 0."""
        rng = np.random.default_rng(rng)
        sizes = [2, *hidden, m]
        weights, biases = [], []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            if last and zero_output:
                w = np.zeros((a, b))
            else:
                w = rng.standard_normal((a, b)) * math.sqrt(2.0 / a)
            weights.append(w)
            biases.append(np.zeros(b))
        return cls(weights, biases)

    @classmethod
    def zeros(cls, m: int = 6, hidden=(64, 64)) -> "RxNet":
        sizes = [2, *hidden, m]
        return cls([np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(b) for b in sizes[1:]])

    def params(self) -> dict:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{i}"] = w
            out[f"b{i}"] = b
        return out

    @classmethod
    def from_params(cls, params: dict) -> "RxNet":
        n = len([k for k in params if k.startswith("W")])
        return cls([np.asarray(params[f"W{i}"], dtype=np.float64) for i in range(n)],
                   [np.asarray(params[f"b{i}"], dtype=np.float64) for i in range(n)])

    def __call__(self, y):
        return demap(y, self)


def _features(y):
    if isinstance(y, ng.CPair):
        re = y.re if isinstance(y.re, ng.Var) else None
        im = y.im if isinstance(y.im, ng.Var) else None
        tape = (re if re is not None else im).tape
        return ng.stack([re if re is not None else tape.const(y.re),
                         im if im is not None else tape.const(y.im)], axis=1)
    y = np.asarray(y)
    if np.iscomplexobj(y) or y.ndim == 1:
        return np.column_stack([y.real, y.imag])
    return y


def demap(y, net, params: dict | None = None):
    """LLRs ``(N, m)`` for symbols ``y``.

    ``y`` is a complex array or a pair on a tape; ``params`` optionally
    supplies tape nodes replacing the network's weights.
    """
    h = _features(y)
    n_layers = len(net.weights)
    on_tape = isinstance(h, ng.Var) or params is not None
    if on_tape:
        if not isinstance(h, ng.Var):
            h = next(iter(params.values())).tape.const(h)
        for i in range(n_layers):
            w = params[f"W{i}"] if params else net.weights[i]
            b = params[f"b{i}"] if params else net.biases[i]
            h = ng.add(ng.matmul(h, w), b)
            if i < n_layers - 1:
                h = ng.relu(h)
        return h
    h = np.asarray(h, dtype=np.float64)
    for i in range(n_layers):
        h = h @ net.weights[i] + net.biases[i]
        if i < n_layers - 1:
            h = np.maximum(h, 0.0)
    return h


def exact_llrs(y, points, noise_var: float, chunk: int = 1 << 16) -> np.ndarray:
    """Bitwise LLRs from Gaussian likelihoods over all constellation points."""
    y = np.asarray(y, dtype=np.complex128).ravel()
    points = np.asarray(points, dtype=np.complex128)
    m = int(points.size).bit_length() - 1
    bits = bit_matrix(m).astype(bool)
    llr = np.empty((y.size, m))
    for lo in range(0, y.size, chunk):
        metric = -np.abs(y[lo:lo + chunk, None] - points[None, :]) ** 2 / noise_var
        for i in range(m):
            llr[lo:lo + chunk, i] = logsumexp(metric[:, bits[:, i]], axis=1) - \
                logsumexp(metric[:, ~bits[:, i]], axis=1)
    return llr


def bce_loss(bits, llrs):
    """Mean of ``log(1 + exp(-(2b-1) LLR))`` over all bits."""
    sign = 2.0 * np.asarray(bits, dtype=np.float64) - 1.0
    if isinstance(llrs, ng.Var):
        if llrs.value.size == 0:
            raise ValueError("empty batch")
        return ng.mean(ng.softplus(ng.mul(llrs, -sign)))
    llrs = np.asarray(llrs, dtype=np.float64)
    if llrs.size == 0:
        raise ValueError("empty batch")
    return float(np.mean(np.logaddexp(0.0, -sign * llrs)))


def bmi(bits, llrs) -> float:
    """Bitwise mutual information estimate in bit/symbol.

    ``m - (1/N) sum_k sum_i log2(1 + exp(-(2b-1) LLR))``.
    """
    llrs = np.asarray(ng._val(llrs), dtype=np.float64)
    m = llrs.shape[-1]
    return m - m * bce_loss(bits, llrs) / math.log(2)


# --------------------------------------------------------------------------
# checkpoints

def save_checkpoint(net: RxNet, path) -> None:
    """Text checkpoint: a magic line, layer sizes, then one row-major array per line."""
    lines = [CHECKPOINT_MAGIC, "sizes\t" + "\t".join(str(s) for s in net.sizes)]
    for name, arr in net.params().items():
        lines.append(name + "\t" + "\t".join(repr(float(v)) for v in arr.ravel()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> RxNet:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an rxnet v1 checkpoint")
    fields = lines[1].split("\t")
    if fields[0] != "sizes":
        raise ValueError(f"{path}:2: expected sizes header")
    sizes = [int(s) for s in fields[1:]]
    params = {}
    for lineno, line in enumerate(lines[2:], start=3):
        name, *vals = line.split("\t")
        params[name] = np.array([float(v) for v in vals])
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        try:
            params[f"W{i}"] = params[f"W{i}"].reshape(a, b)
        except (KeyError, ValueError):
            raise ValueError(f"{path}: weights W{i} missing or not {a}x{b}") from None
        if params.get(f"b{i}", np.empty(0)).shape != (b,):
            raise ValueError(f"{path}: bias b{i} missing or not length {b}")
    return RxNet.from_params(params)
