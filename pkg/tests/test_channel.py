import math
import warnings

import numpy as np
import pytest

from vvshape import numgrad as ng
from vvshape.channel import ChannelParams, apply, phase_variance, realize
from vvshape.constellation import Constellation


def test_phase_variance_values():
    assert phase_variance(ChannelParams(linewidth_hz=100e3)) == pytest.approx(1.9635e-5, rel=1e-4)
    assert phase_variance(ChannelParams(linewidth_hz=0)) == 0
    assert phase_variance(ChannelParams(linewidth_hz=1e6)) == pytest.approx(1.9635e-4, rel=1e-4)


def test_invalid_params():
    with pytest.raises(ValueError):
        ChannelParams(symbol_rate_baud=0)
    with pytest.raises(ValueError):
        ChannelParams(linewidth_hz=-1)


def qam_symbols(n, seed=0):
    rng = np.random.default_rng(seed)
    return Constellation.qam(6).map_indices(rng.integers(0, 64, n))


def test_identity_channel():
    x = qam_symbols(1000)
    z, _ = apply(x, ChannelParams(snr_db=math.inf, linewidth_hz=0), initial_phase=0.0)
    assert np.array_equal(z, x)


def test_constant_rotation_without_linewidth():
    x = qam_symbols(1000)
    z, r = apply(x, ChannelParams(snr_db=20, linewidth_hz=0, seed=4), initial_phase=0.7)
    assert np.allclose(z, (x + r.noise) * np.exp(0.7j))
    assert np.all(r.phase == 0.7)


def test_noise_power_at_20db():
    n = 1_000_000
    x = qam_symbols(n, 1)
    _, r = apply(x, ChannelParams(snr_db=20, linewidth_hz=0, seed=9), initial_phase=0.0)
    p = np.abs(r.noise) ** 2
    ratio = p.mean() / np.mean(np.abs(x) ** 2)
    # |n|^2 is exponential: std equals mean
    assert abs(ratio - 0.01) < 3 * 0.01 / math.sqrt(n) + 3 * 0.01 * np.std(np.abs(x) ** 2) / math.sqrt(n)
    assert np.var(r.noise.real) == pytest.approx(0.005, rel=0.01)
    assert np.var(r.noise.imag) == pytest.approx(0.005, rel=0.01)


def test_wiener_increment_variance():
    p = ChannelParams(linewidth_hz=100e3, seed=11)
    r = realize(p, 1_000_001, initial_phase=0.0)
    steps = np.diff(r.phase)
    # chi-square relative std for 1e6 samples is sqrt(2/n) ~ 0.14%
    assert np.var(steps) == pytest.approx(phase_variance(p), rel=0.01)
    assert abs(np.corrcoef(steps[:-1], steps[1:])[0, 1]) < 5e-3


def test_initial_phase_uniform_in_validation():
    phis = [realize(ChannelParams(seed=s), 4).phase[0] for s in range(2000)]
    assert 0 <= min(phis) and max(phis) < 2 * math.pi
    assert np.mean(phis) == pytest.approx(math.pi, rel=0.05)


def test_same_seed_same_realization():
    p = ChannelParams(seed=5)
    a, b = realize(p, 100), realize(p, 100)
    assert np.array_equal(a.noise, b.noise) and np.array_equal(a.phase, b.phase)
    c = realize(ChannelParams(seed=6), 100)
    assert not np.array_equal(a.noise, c.noise)
    assert abs(np.corrcoef(a.noise.real, c.noise.real)[0, 1]) < 0.35


def test_empty_sequence_rejected():
    with pytest.raises(ValueError):
        apply(np.array([], dtype=complex), ChannelParams())


def test_power_warning():
    with pytest.warns(UserWarning, match="mean power"):
        apply(2 * qam_symbols(4096), ChannelParams())
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        apply(qam_symbols(4096), ChannelParams())


def test_graph_path_matches_numpy_and_noise_precedes_rotation():
    x = qam_symbols(64)
    p = ChannelParams(snr_db=10, linewidth_hz=1e6, seed=2)
    z_np, r = apply(x, p)
    tape = ng.Tape()
    xp = ng.cpair(tape, x)
    z, _ = apply(xp, p, realization=r)
    assert np.allclose(ng.to_complex(z), z_np)
    assert np.allclose(z_np, (x + r.noise) * np.exp(1j * r.phase))
    # gradient of sum Re(z) w.r.t. Re(x) is cos(phi)
    adj = ng.backward(tape, ng.sum(z.re))
    assert np.allclose(adj[xp.re.node_id], np.cos(r.phase))
