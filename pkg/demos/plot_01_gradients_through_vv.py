"""
Gradients through Viterbi-Viterbi phase estimation
==================================================

The estimator raises symbols to the mu-th power, sums a window and takes
the argument.  Every step is differentiable, so a loss computed after
derotation can push gradients back into the transmitted constellation.
"""

import numpy as np

from vvshape import numgrad as ng
from vvshape import cpe
from vvshape.channel import ChannelParams, apply
from vvshape.constellation import Constellation

# A short 64-QAM burst through a noisy, phase-drifting channel.
qam = Constellation.qam(6)
rng = np.random.default_rng(0)
idx = rng.integers(0, 64, 512)
params = ChannelParams(snr_db=20, linewidth_hz=100e3, seed=0)
_, realization = apply(qam.map_indices(idx), params, initial_phase=0.0)

# Put the constellation on a tape and rebuild the received sequence from it.
def residual_energy(points_re, points_im):
    tape = ng.Tape()
    re, im = tape.var(points_re), tape.var(points_im)
    x = ng.CPair(ng.take(re, idx), ng.take(im, idx))
    z, _ = apply(x, params, realization=realization)
    track = cpe.vv_estimate(z, cpe.VVParams(4, 16), cpe.reference_moment(qam.points, 4))
    y = cpe.derotate(z, track)
    err = ng.csub(y, x)
    return tape, re, im, ng.mean(ng.add(ng.mul(err.re, err.re), ng.mul(err.im, err.im)))

tape, re, im, loss = residual_energy(qam.points.real, qam.points.imag)
adj = ng.backward(tape, loss)
print(f"mean squared residual after CPE: {float(loss.value):.5f}")

# Compare one adjoint against a central finite difference.
k = 9  # the constellation point whose real part we nudge
h = 1e-6
bump = np.zeros(64)
bump[k] = h
plus = float(residual_energy(qam.points.real + bump, qam.points.imag)[3].value)
minus = float(residual_energy(qam.points.real - bump, qam.points.imag)[3].value)
print(f"d loss / d Re(x_{k}): tape {adj[re.node_id][k]:+.6e}, finite difference {(plus - minus) / (2 * h):+.6e}")
