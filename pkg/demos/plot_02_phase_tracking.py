"""
Phase tracking on 64-QAM: all points, hard rings and a soft ring
================================================================

Square 64-QAM has only a few amplitude rings whose points lie on the
four-fold symmetry lines.  Keeping just those rings (the classic hard
partition) tracks the laser phase better than feeding every symbol to the
estimator.  A soft ring does the same job differentiably.
"""

import numpy as np

from vvshape import cpe
from vvshape.channel import ChannelParams, apply
from vvshape.constellation import square_qam
from vvshape.system import estimate_phase

points = square_qam(6)
rng = np.random.default_rng(1)
x = points[rng.integers(0, 64, 1 << 15)]
z, real = apply(x, ChannelParams(snr_db=20, linewidth_hz=100e3, seed=1), rng=rng)
vv = cpe.VVParams(mu=4, half_window=32)

# Genie cycle-slip compensation isolates the tracking error from slips.
variants = {
    "all points": dict(),
    "hard rings (inner+outer)": dict(hard_rings=2),
    "soft ring around the corners": dict(partition=cpe.PartitionParams([[20.0, 1.25, 1.8]])),
}
for name, kw in variants.items():
    track = estimate_phase(z, vv, points, true_phase=real.phase, **kw)
    rms = np.sqrt(np.mean((track.est - real.phase) ** 2))
    print(f"{name:30s} residual phase RMS {rms:.4f} rad")

# Which symbols do the hard rings keep?
mask = cpe.hard_partition_qam(points)
print("points kept by the hard partition:", int(mask.sum()), "of 64")
