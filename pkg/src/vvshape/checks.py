"""Fast invariant suite behind ``vvshape check``.

Each check returns ``(passed, detail)``; they run at reduced sizes so the
whole suite finishes in well under a minute.
"""
from __future__ import annotations

import math
import time

import numpy as np

from . import cpe
from . import numgrad as ng
from .channel import ChannelParams, phase_variance, realize
from .constellation import Constellation
from .demapper import bmi, exact_llrs
from .rng import stream


def _rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)))


def _grad_vs_fd(build, x0, h=1e-5):
    """Max relative error of tape gradient vs central differences."""
    tape = ng.Tape()
    x = tape.var(x0)
    out = ng.sum(build(x))
    g = ng.backward(tape, out)[x.node_id]

    def f(v):
        t = ng.Tape()
        return float(ng.sum(build(t.var(v))).value)
    return _rel_err(g, ng.finite_difference(f, x0, h))


def check_gradient_elementary():
    rng = stream(1, "check", "elementary")
    x = rng.uniform(0.5, 2.0, 8)
    ops = {
        "exp": ng.exp, "log": ng.log, "sqrt": ng.sqrt, "sin": ng.sin, "cos": ng.cos,
        "tanh": ng.tanh, "sigmoid": ng.sigmoid, "softplus": ng.softplus,
        "pow3": lambda v: ng.pow_int(v, 3), "div": lambda v: ng.div(1.0, v),
        "atan2": lambda v: ng.atan2(v, 1.3 - v),
    }
    errs = {k: _grad_vs_fd(f, x) for k, f in ops.items()}
    worst = max(errs, key=errs.get)
    return errs[worst] < 1e-5, f"worst {worst}: {errs[worst]:.2e}"


def check_gradient_complex():
    rng = stream(1, "check", "complex")
    x0 = rng.uniform(0.3, 1.0, 8)

    def pair(v):
        return ng.CPair(ng.cos(v), ng.mul(ng.sin(v), 0.7))
    ops = {
        "carg": lambda v: ng.carg(ng.cpow_int(pair(v), 4)),
        "cabs": lambda v: ng.cabs(ng.cpow_int(pair(v), 3)),
        "cmul": lambda v: ng.cmul(pair(v), pair(ng.mul(v, 2.0))).re,
    }
    errs = {k: _grad_vs_fd(f, x0) for k, f in ops.items()}
    worst = max(errs, key=errs.get)
    return errs[worst] < 1e-5, f"worst {worst}: {errs[worst]:.2e}"


def check_gradient_pipeline():
    from .trainer import TrainConfig, forward, initial_params, make_batch

    cfg = TrainConfig(batch_len=256, K=8, L=1, hidden=(8,), batches=1)
    params = initial_params(cfg)
    batch = make_batch(cfg, 0)
    tape, loss, leaves = forward(params, cfg, batch)
    adj = ng.backward(tape, loss)
    rng = stream(1, "check", "pipeline")
    errs = []
    for _ in range(3):
        d = {k: rng.standard_normal(v.shape) for k, v in params.items()}
        analytic = sum(float(np.sum(adj[leaves[k].node_id] * d[k])) for k in params)
        h = 1e-5
        fp = float(forward({k: params[k] + h * d[k] for k in params}, cfg, batch)[1].value)
        fm = float(forward({k: params[k] - h * d[k] for k in params}, cfg, batch)[1].value)
        errs.append(_rel_err(analytic, (fp - fm) / (2 * h)))
    return max(errs) < 1e-4, f"max directional error {max(errs):.2e}"


def check_unwrap():
    rng = stream(1, "check", "unwrap")
    walk = np.cumsum(rng.normal(0, 0.3, 2000))
    wrapped = np.angle(np.exp(1j * walk))
    out = cpe.unwrap(wrapped)
    ok = np.max(np.abs(np.diff(out))) < math.pi and np.allclose(out, np.unwrap(wrapped))
    return bool(ok), f"max step {np.max(np.abs(np.diff(out))):.3f}"


def check_vv_roots():
    mu, theta = 4, 0.1
    z = np.exp(1j * (2 * math.pi * (np.arange(400) % mu) / mu + theta))
    est = cpe.vv_estimate(z, cpe.VVParams(mu, 8)).est
    err = float(np.max(np.abs(est[8:-8] - theta)))
    return err < 1e-9, f"max error {err:.1e}"


def check_csc_bound():
    rng = stream(1, "check", "csc")
    truth = np.cumsum(rng.normal(0, 0.01, 5000))
    est = truth + rng.normal(0, 0.05, 5000) + (2 * math.pi / 4) * (np.arange(5000) // 1200)
    res = cpe.genie_csc(cpe.PhaseTrack(est), truth, 4).est - truth
    return bool(np.max(np.abs(res)) <= math.pi / 4), f"max residual {np.max(np.abs(res)):.3f}"


def check_wiener_variance():
    p = ChannelParams(20, 1e5, 32e9, seed=3)
    r = realize(p, 200_000, initial_phase=0.0)
    var = float(np.var(np.diff(r.phase)))
    rel = abs(var / phase_variance(p) - 1)
    return rel < 0.02, f"relative deviation {rel:.4f}"


def check_bmi_oracle():
    """Gray 64-QAM on AWGN: toolkit BMI vs a per-dimension quadrature value."""
    from scipy import integrate

    snr_db, n = 19.0, 100_000
    pts = Constellation.qam(6).points
    nv = 10 ** (-snr_db / 10)
    rng = stream(1, "check", "bmi")
    idx = rng.integers(0, 64, n)
    y = pts[idx] + math.sqrt(nv / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    est = bmi(Constellation.qam(6).bits[idx], exact_llrs(y, pts, nv))
    ref = 2 * _pam_bmi(np.unique(pts.real), nv / 2, integrate)
    return abs(est - ref) < 0.03, f"toolkit {est:.4f} vs quadrature {ref:.4f}"


def _pam_bmi(levels, var, integrate):
    """Bitwise MI of Gray 8-PAM by numerical integration over y."""
    from .constellation import gray

    n = len(levels)
    k = int(math.log2(n))
    labels = gray(np.arange(n))
    s = math.sqrt(var)
    total = 0.0
    for i in range(k):
        b = (labels >> (k - 1 - i)) & 1
        for j in range(n):
            def integrand(y, j=j):
                lik = np.exp(-(y - levels) ** 2 / (2 * var))
                p_same = lik[b == b[j]].sum()
                return math.exp(-(y - levels[j]) ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var) * \
                    math.log2(lik.sum() / p_same)
            val, _ = integrate.quad(integrand, levels[j] - 12 * s, levels[j] + 12 * s, limit=200)
            total += val / n
    return k - total


CHECKS = {
    "gradient-elementary": check_gradient_elementary,
    "gradient-complex": check_gradient_complex,
    "gradient-pipeline": check_gradient_pipeline,
    "unwrap": check_unwrap,
    "vv-roots": check_vv_roots,
    "csc-bound": check_csc_bound,
    "wiener-variance": check_wiener_variance,
    "bmi-oracle": check_bmi_oracle,
}


def run_checks(name_filter: str | None = None, out=print) -> list:
    """Run matching checks; returns ``[(name, passed, detail, seconds)]``."""
    results = []
    for name, fn in CHECKS.items():
        if name_filter and name_filter not in name:
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        results.append((name, bool(ok), detail, dt))
        if out:
            out(f"{'PASS' if ok else 'FAIL'} {name}: {detail} ({dt:.1f}s)")
    return results
