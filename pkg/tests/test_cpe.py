import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vvshape import cpe
from vvshape import numgrad as ng
from vvshape.channel import ChannelParams, apply
from vvshape.constellation import Constellation, square_qam
from vvshape.system import estimate_phase


def wrapped(x, mu):
    """Signed distance to the nearest multiple of 2 pi/mu."""
    return np.angle(np.exp(1j * mu * np.asarray(x))) / mu


# ---------------------------------------------------------------- unwrap

def test_unwrap_example():
    assert cpe.unwrap([3.1, -3.1]) == pytest.approx([3.1, -3.1 + 2 * math.pi])


def test_unwrap_leaves_ramp_alone():
    ramp = np.linspace(-2, 2, 50)
    assert np.array_equal(cpe.unwrap(ramp), ramp)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_unwrap_removes_injected_jumps(seed):
    rng = np.random.default_rng(seed)
    walk = np.cumsum(rng.normal(0, 0.4, 500))
    jumps = 2 * math.pi * np.cumsum(rng.choice([-1, 0, 0, 0, 1], 500))
    out = cpe.unwrap(walk + jumps)
    assert np.max(np.abs(np.diff(out))) < math.pi
    assert out[0] == walk[0] + jumps[0]
    assert np.allclose(out, np.unwrap(walk + jumps))


def test_unwrap_gradient_is_identity():
    tape = ng.Tape()
    a = tape.var([3.1, -3.1, 3.0])
    adj = ng.backward(tape, ng.sum(ng.mul(cpe.unwrap(a), [1.0, 2.0, 3.0])))
    assert adj[a.node_id].tolist() == [1.0, 2.0, 3.0]


# ---------------------------------------------------------------- vv_estimate

@pytest.mark.parametrize("mu", [2, 3, 4, 5, 8])
@pytest.mark.parametrize("theta", [-0.3, 0.1, 0.25])
def test_roots_of_unity_offset(mu, theta):
    if abs(theta) >= math.pi / mu:
        pytest.skip("offset outside the unambiguous range")
    rng = np.random.default_rng(1)
    z = np.exp(1j * (2 * math.pi * rng.integers(0, mu, 300) / mu + theta))
    est = cpe.vv_estimate(z, cpe.VVParams(mu, 10)).est
    assert np.max(np.abs(est - theta)) < 1e-9


def test_qpsk_bias_and_its_removal():
    pts = np.exp(1j * (math.pi / 4 + math.pi / 2 * np.arange(4)))
    z = pts[np.random.default_rng(0).integers(0, 4, 200)]
    p = cpe.VVParams(4, 8)
    assert np.allclose(cpe.vv_estimate(z, p).est, math.pi / 4)
    aligned = cpe.vv_estimate(z, p, cpe.reference_moment(pts, 4)).est
    assert np.max(np.abs(aligned)) < 1e-12


def test_edges_use_clipped_windows():
    rng = np.random.default_rng(2)
    z = rng.standard_normal(40) + 1j * rng.standard_normal(40)
    est = cpe.vv_estimate(z, cpe.VVParams(4, 3)).est
    assert est[0] == pytest.approx(np.angle(np.sum(z[:4] ** 4)) / 4)
    assert wrapped(est[-1] - np.angle(np.sum(z[-4:] ** 4)) / 4, 4) == pytest.approx(0, abs=1e-12)


def test_sequence_too_short():
    with pytest.raises(ValueError):
        cpe.vv_estimate(np.ones(8, complex), cpe.VVParams(4, 4))


def test_vv_params_validation():
    for bad in (dict(mu=1), dict(mu=9), dict(half_window=0)):
        with pytest.raises(ValueError):
            cpe.VVParams(**bad)


@settings(max_examples=40, deadline=None)
@given(st.floats(-math.pi, math.pi), st.integers(0, 1000), st.sampled_from([3, 4, 5]))
def test_rotation_equivariance(alpha, seed, mu):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(200) + 1j * rng.standard_normal(200)
    p = cpe.VVParams(mu, 6)
    diff = cpe.vv_estimate(z * np.exp(1j * alpha), p).est - cpe.vv_estimate(z, p).est
    assert np.max(np.abs(wrapped(diff - alpha, mu))) < 1e-9


def _test_phase_oracle(z, points, centers, half_window, grid=181):
    """Exhaustive test-phase search: per window the rotation minimizing the
    summed squared distance to the nearest constellation point."""
    cands = np.linspace(-math.pi / 4, math.pi / 4, grid, endpoint=False)
    out = []
    for k in centers:
        w = z[max(0, k - half_window):k + half_window + 1]
        rot = w[None, :] * np.exp(-1j * cands)[:, None]
        d = np.min(np.abs(rot[..., None] - points) ** 2, axis=-1).sum(axis=1)
        out.append(cands[np.argmin(d)])
    return np.array(out)


def _qam_at_20db(seed=3, n=4096):
    pts = square_qam(6)
    rng = np.random.default_rng(seed)
    x = pts[rng.integers(0, 64, n)]
    z, r = apply(x, ChannelParams(20, 1e5, seed=seed), rng=rng)
    centers = np.arange(64, n - 64, 97)
    return pts, z, r, centers


def test_vv_matches_direct_window_formula_on_64qam():
    pts, z, r, centers = _qam_at_20db()
    est = cpe.vv_estimate(z, cpe.VVParams(4, 32), cpe.reference_moment(pts, 4)).est
    direct = np.array([np.angle(-np.sum(z[k - 32:k + 33] ** 4)) / 4 for k in centers])
    assert np.max(np.abs(wrapped(est[centers] - direct, 4))) < 1e-12
    # a working tracker: residual far below the uniform-error level pi/(4 sqrt 3)
    rms_vv = np.sqrt(np.mean(wrapped(est[centers] - r.phase[centers], 4) ** 2))
    assert rms_vv < 0.1


@pytest.mark.xfail(strict=True, reason="64-QAM V&V self-noise: measured 3.4-4.6x the test-phase "
                                      "oracle RMS at K=32 over four seeds, not within 2x")
def test_vv_within_twice_test_phase_oracle():
    pts, z, r, centers = _qam_at_20db()
    est = cpe.vv_estimate(z, cpe.VVParams(4, 32), cpe.reference_moment(pts, 4)).est
    oracle = _test_phase_oracle(z, pts, centers, 32)
    rms_vv = np.sqrt(np.mean(wrapped(est[centers] - r.phase[centers], 4) ** 2))
    rms_oracle = np.sqrt(np.mean(wrapped(oracle - r.phase[centers], 4) ** 2))
    assert rms_vv < 2 * rms_oracle


# ---------------------------------------------------------------- select / vv_modified

def test_select_saturated_inside_ring():
    pp = cpe.PartitionParams([[1e3, 0.5, 1.5]])
    z = 0.6 + 0.8j
    assert cpe.select(z, 0, pp) == pytest.approx(z / abs(z))


def test_select_at_inner_radius_is_half():
    pp = cpe.PartitionParams([[50.0, 1.0, 5.0]])
    assert abs(cpe.select(1.0 + 0j, 0, pp)) == pytest.approx(0.5)


def test_select_softplus_example():
    pp = cpe.PartitionParams([[1.0, 1.0, 2.0]])
    w = abs(cpe.select(1j, 0, pp, "softplus"))
    assert w == pytest.approx(math.log(2) * math.log(1 + math.e), rel=1e-12)
    assert w == pytest.approx(0.9103, abs=1e-4)


def test_select_graph_gradients():
    x0 = np.array([0.7, 0.3, 1.4, 0.2, 10.0, 0.5, 1.3])  # re, im, scale, s, theta0, theta1 unused tail

    def f(v, tape=None):
        tape = tape or ng.Tape()
        vs = [tape.var(c) for c in v]
        out = cpe.select(ng.CPair(vs[0], vs[1]), 0, [(vs[4], vs[5], vs[6])])
        return tape, vs, ng.add(out.re, ng.mul(out.im, vs[2]))
    tape, vs, out = f(x0)
    adj = ng.backward(tape, out)
    g = np.array([float(adj[v.node_id]) for v in vs])
    fd = ng.finite_difference(lambda v: float(f(v)[2].value), x0)
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-9)


def test_all_pass_ring_equals_phase_only_vv():
    rng = np.random.default_rng(4)
    z = rng.standard_normal(1000) + 1j * rng.standard_normal(1000)
    p = cpe.VVParams(4, 16)
    pp = cpe.PartitionParams([[1e4, -1.0, 1e3]])
    mod = cpe.vv_modified(z, p, pp).est
    plain = cpe.vv_estimate(z / np.abs(z), p).est
    assert np.max(np.abs(mod - plain)) < 1e-9


def test_degenerate_ring_raises():
    z = np.exp(1j * np.linspace(0, 3, 200))
    with pytest.raises(cpe.DegeneratePartitionError):
        cpe.vv_modified(z, cpe.VVParams(4, 8), cpe.PartitionParams([[100.0, 5.0, 6.0]]))
    with pytest.raises(ValueError):
        cpe.vv_modified(z, cpe.VVParams(4, 8), cpe.PartitionParams())


def test_initial_partition_rings():
    pp = cpe.PartitionParams.initial(1)
    assert pp.rings.tolist() == [[10.0, 0.4, 1.6]]
    assert np.allclose(cpe.PartitionParams.initial(3).rings[:, 1:], [[0.4, 0.8], [0.8, 1.2], [1.2, 1.6]])


# ---------------------------------------------------------------- smooth_track

def test_smooth_radius_zero_is_identity():
    t = cpe.PhaseTrack(np.arange(5.0), np.ones(5))
    assert cpe.smooth_track(t, 0) is t


def test_smooth_constant_track():
    t = cpe.PhaseTrack(np.full(20, 0.3), np.random.default_rng(0).uniform(0, 1, 20))
    assert np.allclose(cpe.smooth_track(t, 3).est, 0.3)


def test_smooth_replaces_zero_weight_outlier():
    est = np.full(11, 0.1)
    est[5] = 2.0
    w = np.ones(11)
    w[5] = 0.0
    w[4], w[6] = 2.0, 1.0
    est[4], est[6] = 0.2, 0.05
    out = cpe.smooth_track(cpe.PhaseTrack(est, w), 1).est
    assert out[5] == pytest.approx((2 * 0.2 + 1 * 0.05) / 3)
    assert out[0] == pytest.approx(0.1)


def test_smooth_rejects_negative_radius():
    with pytest.raises(ValueError):
        cpe.smooth_track(cpe.PhaseTrack(np.zeros(3), np.ones(3)), -1)


# ---------------------------------------------------------------- hard partition

def test_hard_partition_16qam_keeps_inner_and_outer():
    pts = square_qam(4)
    mask = cpe.hard_partition_qam(pts, 2, pts)
    assert mask.sum() == 8
    amps = np.abs(pts[mask])
    assert np.allclose(np.sort(np.unique(np.round(amps, 9))), [np.min(np.abs(pts)), np.max(np.abs(pts))])


def test_hard_partition_all_rings():
    pts = square_qam(6)
    assert cpe.hard_partition_qam(pts, 9, pts).all()


def test_hard_partition_64qam_defaults():
    pts = square_qam(6)
    mask = cpe.hard_partition_qam(pts)
    assert mask.sum() == 8
    rng = np.random.default_rng(5)
    n = 200_000
    z, _ = apply(pts[rng.integers(0, 64, n)], ChannelParams(20, 1e5, seed=5), initial_phase=0.0)
    frac = cpe.hard_partition_qam(z).mean()
    # noise moves some points across ring boundaries; rings are ~0.1 apart
    assert frac == pytest.approx(8 / 64, abs=0.03)


def test_hard_two_rings_beat_all_points():
    pts = square_qam(6)
    rng = np.random.default_rng(6)
    errs = {}
    for name, rings in (("all", 0), ("hard2", 2)):
        sq = []
        for rep in range(4):
            r_rng = np.random.default_rng(100 + rep)
            x = pts[r_rng.integers(0, 64, 16384)]
            z, real = apply(x, ChannelParams(20, 1e5, seed=rep), rng=r_rng)
            track = estimate_phase(z, cpe.VVParams(4, 32), pts, hard_rings=rings, true_phase=real.phase)
            sq.append(np.mean((track.est - real.phase) ** 2))
        errs[name] = math.sqrt(np.mean(sq))
    assert errs["hard2"] < errs["all"], errs
    del rng


def test_masked_vv_fills_empty_windows():
    z = np.exp(1j * (0.2 + math.pi / 2 * np.arange(100)))
    mask = np.zeros(100, bool)
    mask[80:] = True
    t = cpe.vv_masked(z, cpe.VVParams(4, 2), mask)
    assert np.allclose(t.est, 0.2)
    with pytest.raises(cpe.DegeneratePartitionError):
        cpe.vv_masked(z, cpe.VVParams(4, 2), np.zeros(100, bool))


# ---------------------------------------------------------------- csc / derotate

def test_csc_examples():
    truth = np.linspace(0, 1, 50)
    assert np.allclose(cpe.genie_csc(cpe.PhaseTrack(truth + math.pi / 2), truth, 4).est, truth)
    assert np.array_equal(cpe.genie_csc(cpe.PhaseTrack(truth.copy()), truth, 4).est, truth)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([3, 4, 5]))
def test_csc_bound(seed, mu):
    rng = np.random.default_rng(seed)
    truth = np.cumsum(rng.normal(0, 0.02, 3000))
    slips = np.zeros(3000)
    for k in rng.integers(0, 3000, 3):
        slips[k:] += rng.choice([-1, 1]) * 2 * math.pi / mu
    est = truth + slips + rng.normal(0, 0.3, 3000)
    res = cpe.genie_csc(cpe.PhaseTrack(est), truth, mu).est - truth
    assert np.max(np.abs(res)) <= math.pi / mu + 1e-12


def test_derotate():
    rng = np.random.default_rng(8)
    x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    phi = rng.uniform(-3, 3, 64)
    assert np.allclose(cpe.derotate(x * np.exp(1j * phi), cpe.PhaseTrack(phi)), x)
    assert np.array_equal(cpe.derotate(x, cpe.PhaseTrack(np.zeros(64))), x)
    eps = 1e-3
    err = np.abs(cpe.derotate(x * np.exp(1j * phi), cpe.PhaseTrack(phi + eps)) - x)
    assert np.all(err <= np.abs(x) * eps + 1e-15)
    with pytest.raises(ValueError):
        cpe.derotate(x, cpe.PhaseTrack(np.zeros(63)))


# ---------------------------------------------------------------- export

def test_partition_round_trip(tmp_path):
    pp = cpe.PartitionParams([[9.5, 0.41, 1.63], [3.0, 0.1, 0.2]])
    cpe.export_partition(pp, tmp_path / "p.tsv", "softplus")
    back, act = cpe.import_partition(tmp_path / "p.tsv")
    assert act == "softplus" and np.array_equal(back.rings, pp.rings)


def test_partition_grid_layout(tmp_path):
    cpe.export_partition_grid(cpe.PartitionParams.initial(1), tmp_path / "g.tsv")
    lines = (tmp_path / "g.tsv").read_text().splitlines()
    assert lines[0] == "# activation=sigmoid"
    assert lines[1] == "real\timag\tpartition"
    rows = np.array([[float(v) for v in l.split("\t")] for l in lines[2:]])
    assert rows.shape == (2500, 3)
    assert 0 <= rows[:, 2].min() and rows[:, 2].max() <= 1
