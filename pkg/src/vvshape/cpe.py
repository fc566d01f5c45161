"""Differentiable Viterbi-Viterbi carrier phase estimation.

Every estimator accepts either a complex numpy array or a
:class:`~vvshape.numgrad.CPair` of tape nodes.  Numpy input yields numpy
output; pair input keeps the result on the tape so gradients reach the
received symbols, the constellation and the partition rings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import numgrad as ng

ACTIVATIONS = ("sigmoid", "softplus")


class DegeneratePartitionError(ValueError):
    """The partition rings select (almost) no received symbol."""


@dataclass(frozen=True)
class VVParams:
    mu: int = 4
    half_window: int = 32

    def __post_init__(self):
        if not 2 <= self.mu <= 8:
            raise ValueError("mu must be in 2..8")
        if self.half_window < 1:
            raise ValueError("half_window must be >= 1")


@dataclass
class PartitionParams:
    """``L`` rings, one row ``(slope, inner radius, outer radius)`` each."""

    rings: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        self.rings = np.asarray(self.rings, dtype=np.float64).reshape(-1, 3)

    @property
    def L(self) -> int:
        return self.rings.shape[0]

    @classmethod
    def initial(cls, L: int, slope=10.0, inner=0.4, outer=1.6) -> "PartitionParams":
        """Rings tiling ``[inner, outer]`` evenly; one wide ring for ``L=1``."""
        edges = np.linspace(inner, outer, L + 1)
        return cls(np.column_stack([np.full(L, slope), edges[:-1], edges[1:]]))


@dataclass
class PhaseTrack:
    est: object
    weights: object = None

    def numpy(self) -> "PhaseTrack":
        w = None if self.weights is None else np.array(ng._val(self.weights))
        return PhaseTrack(np.array(ng._val(self.est)), w)


def _lift(z):
    if isinstance(z, ng.CPair):
        return z, False
    z = np.asarray(z, dtype=np.complex128)
    tape = ng.Tape()
    return ng.cpair(tape, z), True


def _out(track: PhaseTrack, as_numpy: bool) -> PhaseTrack:
    return track.numpy() if as_numpy else track


# --------------------------------------------------------------------------
# unwrap

def unwrap_shift(angles) -> np.ndarray:
    """Multiples of 2 pi that make ``angles`` jump-free (numpy values)."""
    a = np.asarray(angles, dtype=np.float64)
    if a.size < 2:
        return np.zeros_like(a)
    jumps = np.round(np.diff(a) / (2 * math.pi))
    return -2 * math.pi * np.concatenate([[0.0], np.cumsum(jumps)])


def unwrap(angles):
    """Add the 2 pi multiples minimizing every consecutive step.

    The shift is piecewise constant, so on a tape the gradient passes
    through unchanged.
    """
    if isinstance(angles, ng.Var):
        return ng.add(angles, unwrap_shift(angles.value))
    a = np.asarray(angles, dtype=np.float64)
    return a + unwrap_shift(a)


# --------------------------------------------------------------------------
# estimators

def _rotate_by_reference(s: ng.CPair, reference) -> ng.CPair:
    if reference is None:
        return s
    if not isinstance(reference, ng.CPair):
        reference = ng.CPair(np.real(reference), np.imag(reference))
    return ng.cmul(s, ng.cconj(reference))


def _window_estimate(powered: ng.CPair, p: VVParams, reference) -> ng.Var:
    n = len(ng._val(powered.re))
    if n <= 2 * p.half_window:
        raise ValueError(f"sequence of {n} symbols too short for half_window={p.half_window}")
    s = ng.CPair(ng.moving_sum(powered.re, p.half_window), ng.moving_sum(powered.im, p.half_window))
    s = _rotate_by_reference(s, reference)
    return ng.div(unwrap(ng.carg(s)), p.mu)


def vv_estimate(z, p: VVParams, reference=None) -> PhaseTrack:
    """``(1/mu) unwrap(arg(sum_{|k'-k|<=K} z_k'^mu))`` for every ``k``.

    Windows are clipped at the sequence edges.  ``reference`` is an optional
    complex value whose phase is removed from the window sums before the
    argument is taken (see :func:`reference_moment`).
    """
    zp, as_numpy = _lift(z)
    est = _window_estimate(ng.cpow_int(zp, p.mu), p, reference)
    return _out(PhaseTrack(est), as_numpy)


def _activate(x, activation):
    if activation == "sigmoid":
        return ng.sigmoid(x)
    if activation == "softplus":
        return ng.softplus(x)
    raise ValueError(f"unknown activation {activation!r}")


def _ring_vars(pp):
    """Columns ``(s, theta0, theta1)`` as nodes or arrays."""
    if isinstance(pp, PartitionParams):
        r = pp.rings
        return [(r[l, 0], r[l, 1], r[l, 2]) for l in range(pp.L)]
    return pp


def ring_weight(magnitude, ring, activation="sigmoid"):
    """``act(s (r - theta0)) * act(s (theta1 - r))`` for one ring."""
    s, t0, t1 = ring
    if not isinstance(magnitude, ng.Var) and not any(isinstance(v, ng.Var) for v in ring):
        f = expit if activation == "sigmoid" else (lambda x: np.logaddexp(0.0, x))
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        return f(s * (magnitude - t0)) * f(s * (t1 - magnitude))
    return ng.mul(_activate(ng.mul(s, ng.sub(magnitude, t0)), activation),
                  _activate(ng.mul(s, ng.sub(t1, magnitude)), activation))


def total_weight(magnitude, pp, activation="sigmoid"):
    rings = _ring_vars(pp)
    w = ring_weight(magnitude, rings[0], activation)
    for ring in rings[1:]:
        w = ng.add(w, ring_weight(magnitude, ring, activation)) if isinstance(w, ng.Var) \
            else w + ring_weight(magnitude, ring, activation)
    return w


def select(z, l: int, pp, activation="sigmoid"):
    """Soft ring selection of symbol(s) ``z`` for ring ``l``.

    Returns the unit phasor scaled by both activation factors; the same type
    as ``z`` (complex array or pair).
    """
    if isinstance(z, ng.CPair):
        w = ring_weight(ng.cabs(z), _ring_vars(pp)[l], activation)
        u = ng.cphasor(z)
        return ng.CPair(ng.mul(w, u.re), ng.mul(w, u.im))
    z = np.asarray(z, dtype=np.complex128)
    r = np.abs(z)
    return ring_weight(r, _ring_vars(pp)[l], activation) * z / r


def vv_modified(z, p: VVParams, pp, activation="sigmoid", reference=None,
                min_weight=1e-12) -> PhaseTrack:
    """Viterbi-Viterbi on soft-partitioned phasors.

    ``pp`` is a :class:`PartitionParams` or a list of ``(s, theta0, theta1)``
    node triples.  The result carries the per-symbol total selection weight
    for :func:`smooth_track`.
    """
    rings = _ring_vars(pp)
    if len(rings) < 1:
        raise ValueError("vv_modified needs at least one ring; use vv_estimate for L=0")
    zp, as_numpy = _lift(z)
    u = ng.cphasor(zp)
    w = total_weight(ng.cabs(zp), rings, activation)
    if not isinstance(w, ng.Var):
        w = zp.re.tape.const(w)
    wv = w.value
    window_w = np.convolve(np.abs(wv), np.ones(2 * p.half_window + 1), mode="same") \
        if len(wv) > 2 * p.half_window else np.abs(wv)
    if not np.all(window_w > min_weight):
        raise DegeneratePartitionError(
            f"partition rings select no symbol in {int(np.sum(window_w <= min_weight))} windows")
    powered = ng.cscale(ng.cpow_int(u, p.mu), ng.pow_int(w, p.mu))
    est = _window_estimate(powered, p, reference)
    return _out(PhaseTrack(est, w), as_numpy)


def smooth_track(t: PhaseTrack, radius: int, floor=1e-300) -> PhaseTrack:
    """Weight-weighted moving average of ``t.est`` over ``+-radius`` symbols.

    Symbols whose own weight is negligible inherit their neighbours'
    estimates.  Windows without any weight keep their original value.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if radius == 0 or t.weights is None:
        return t
    est, w = t.est, t.weights
    if isinstance(est, ng.Var) or isinstance(w, ng.Var):
        tape = est.tape if isinstance(est, ng.Var) else w.tape
        if not isinstance(w, ng.Var):
            w = tape.const(w)
        if not isinstance(est, ng.Var):
            est = tape.const(est)
        num = ng.moving_sum(ng.mul(w, est), radius)
        den = ng.moving_sum(w, radius)
        ok = np.abs(den.value) > floor
        safe_den = ng.where(ok, den, 1.0)
        return PhaseTrack(ng.where(ok, ng.div(num, safe_den), est), t.weights)
    est, w = np.asarray(est, dtype=np.float64), np.asarray(w, dtype=np.float64)
    num = ng._moving_sum(w * est, radius)
    den = ng._moving_sum(w, radius)
    ok = np.abs(den) > floor
    return PhaseTrack(np.where(ok, num / np.where(ok, den, 1.0), est), t.weights)


# --------------------------------------------------------------------------
# hard amplitude partitioning (prior-art baseline)

def qam_rings(points, mu: int = 4, tol=1e-9):
    """Distinct amplitude rings of ``points`` ordered by selection priority.

    Rings whose points all lie on the mu-fold symmetry lines come first,
    innermost and outermost before the ones in between; then mixed rings by
    their share of on-line points.  Returns ``(radii, order)``.
    """
    points = np.asarray(points, dtype=np.complex128)
    amps = np.abs(points)
    radii = np.unique(np.round(amps / tol) * tol)
    ang = np.angle(points ** mu)
    ref = np.angle(np.sum(points ** mu)) if abs(np.sum(points ** mu)) > tol else 0.0
    on_line = np.abs(np.angle(np.exp(1j * (ang - ref)))) < 1e-6
    n = len(radii)
    keys = []
    for i, r in enumerate(radii):
        members = np.abs(amps - r) < 1e-6
        frac = on_line[members].mean()
        keys.append((-frac, min(i, n - 1 - i), i))
    order = [k[2] for k in sorted(keys)]
    return radii, order


def hard_partition_qam(z, num_rings: int = 2, reference_points=None, mu: int = 4) -> np.ndarray:
    """Mask of symbols whose amplitude is nearest one of the selected rings.

    ``reference_points`` default to unit-power square 64-QAM; for it,
    ``num_rings=2`` keeps the innermost and outermost rings.
    """
    from .constellation import square_qam

    if reference_points is None:
        reference_points = square_qam(6)
    radii, order = qam_rings(reference_points, mu)
    keep = np.zeros(len(radii), dtype=bool)
    keep[order[:num_rings]] = True
    amps = np.abs(ng.to_complex(z) if isinstance(z, ng.CPair) else np.asarray(z))
    edges = 0.5 * (radii[1:] + radii[:-1])
    return keep[np.searchsorted(edges, amps)]


def vv_masked(z, p: VVParams, mask, reference=None) -> PhaseTrack:
    """Viterbi-Viterbi over the symbols selected by ``mask`` only.

    Windows containing no selected symbol take the nearest available
    estimate.  Numpy only; the hard mask has no useful gradient.
    """
    z = np.asarray(z, dtype=np.complex128)
    mask = np.asarray(mask, dtype=bool)
    if len(z) <= 2 * p.half_window:
        raise ValueError("sequence too short for the window")
    if not mask.any():
        raise DegeneratePartitionError("hard partition kept no symbol")
    s = ng._moving_sum(np.where(mask, z ** p.mu, 0).real, p.half_window) + \
        1j * ng._moving_sum(np.where(mask, z ** p.mu, 0).imag, p.half_window)
    count = ng._moving_sum(mask.astype(np.float64), p.half_window)
    valid = count > 0.5
    if reference is not None:
        s = s * np.conj(reference)
    idx = np.flatnonzero(valid)
    ang = np.angle(s[idx])
    est_valid = unwrap(ang) / p.mu
    # nearest valid estimate for empty windows
    pos = np.searchsorted(idx, np.arange(len(z)))
    left = np.clip(pos - 1, 0, len(idx) - 1)
    right = np.clip(pos, 0, len(idx) - 1)
    k = np.arange(len(z))
    nearest = np.where(np.abs(idx[left] - k) <= np.abs(idx[right] - k), left, right)
    return PhaseTrack(est_valid[nearest], mask.astype(np.float64))


# --------------------------------------------------------------------------
# reference phase, cycle slips, derotation

def reference_moment(points, mu: int, pp=None, activation="sigmoid", mask=None):
    """``sum_i g(x_i)^mu`` over the (noise-free) constellation.

    ``g`` matches the phasor weighting of the estimator in use: identity for
    plain V&V, soft ring selection with ``pp``, or a hard ring ``mask``.
    Passing this as ``reference`` aligns the estimate with the constellation
    so that a correct track sits at zero offset instead of an arbitrary
    bias in ``(-pi/mu, pi/mu]``.
    """
    if isinstance(points, ng.CPair):
        if pp is None or not _ring_vars(pp):
            g = ng.cpow_int(points, mu)
        else:
            w = total_weight(ng.cabs(points), _ring_vars(pp), activation)
            g = ng.cscale(ng.cpow_int(ng.cphasor(points), mu), ng.pow_int(w, mu))
        return ng.CPair(ng.sum(g.re), ng.sum(g.im))
    x = np.asarray(points, dtype=np.complex128)
    if mask is not None:
        return np.sum(np.where(mask, x ** mu, 0))
    if pp is None or not _ring_vars(pp):
        return np.sum(x ** mu)
    w = total_weight(np.abs(x), pp, activation)
    return np.sum((w * x / np.abs(x)) ** mu)


def genie_csc(t: PhaseTrack, true_phase, mu: int) -> PhaseTrack:
    """Shift each estimate by the multiple of 2 pi/mu closest to the truth."""
    est = np.asarray(ng._val(t.est), dtype=np.float64)
    step = 2 * math.pi / mu
    n = np.round((np.asarray(true_phase) - est) / step)
    if isinstance(t.est, ng.Var):
        return PhaseTrack(ng.add(t.est, n * step), t.weights)
    return PhaseTrack(est + n * step, t.weights)


def derotate(z, t: PhaseTrack):
    """``z_k exp(-j est_k)``."""
    est = t.est if isinstance(t, PhaseTrack) else t
    if isinstance(z, ng.CPair) or isinstance(est, ng.Var):
        n_z = len(ng._val(z.re)) if isinstance(z, ng.CPair) else len(z)
        if n_z != len(ng._val(est)):
            raise ValueError("length mismatch between symbols and phase track")
        if not isinstance(z, ng.CPair):
            z = ng.CPair(np.real(z), np.imag(z))
        rot = ng.cexp_j(est)
        return ng.cmul(z, ng.cconj(rot))
    z = np.asarray(z, dtype=np.complex128)
    est = np.asarray(est, dtype=np.float64)
    if z.shape != est.shape:
        raise ValueError("length mismatch between symbols and phase track")
    return z * np.exp(-1j * est)


# --------------------------------------------------------------------------
# partition export

PARTITION_HEADER = "s\ttheta0\ttheta1"


def export_partition(pp: PartitionParams, path, activation="sigmoid") -> None:
    lines = [f"# activation={activation}", PARTITION_HEADER]
    lines += [f"{s!r}\t{a!r}\t{b!r}" for s, a, b in pp.rings.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def import_partition(path) -> tuple[PartitionParams, str]:
    activation = "sigmoid"
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if line.startswith("# activation="):
            activation = line.split("=", 1)[1].strip()
            continue
        if not line.strip() or line.startswith("#") or line.startswith("s\t"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 fields")
        rows.append([float(f) for f in fields])
    return PartitionParams(np.array(rows).reshape(-1, 3)), activation


def export_partition_grid(pp: PartitionParams, path, activation="sigmoid",
                          extent=2.0, cols=50) -> None:
    """Total selection weight on a ``cols x cols`` grid: columns real, imag, partition."""
    axis = np.linspace(-extent, extent, cols)
    lines = [f"# activation={activation}", "real\timag\tpartition"]
    for im in axis.tolist():
        for re in axis.tolist():
            r = math.hypot(re, im)
            w = float(total_weight(np.array(r), pp, activation)) if pp.L else 1.0
            lines.append(f"{re!r}\t{im!r}\t{w!r}")
    Path(path).write_text("\n".join(lines) + "\n")
