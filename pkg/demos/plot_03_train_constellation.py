"""
Learning a constellation for Viterbi-Viterbi phase estimation
=============================================================

The transmitter constellation, the optional partition ring and a small
demapper network are trained together with Adam on the bitwise
cross-entropy.  The run below is shortened; ``TrainConfig()`` holds the
full-length defaults used for the reported results.
"""

import numpy as np

from vvshape.constellation import export_tsv, square_qam, symmetry_distance
from vvshape.sweep import SweepGrid, run_sweep
from vvshape.trainer import TrainConfig, qam_reference, train

cfg = TrainConfig(batches=400, batch_len=2048, mu=4, L=0, seed=0)

# Learned geometry against square QAM with an equally trained demapper.
learned = train(cfg)
reference = qam_reference(cfg)
print(f"final training loss {np.mean(learned.losses[-20:]):.4f} (QAM: {np.mean(reference.losses[-20:]):.4f})")

# Validation uses fresh phase-noise realizations and genie slip correction.
grid = SweepGrid(snrs_db=(20.0,), linewidths_hz=(100e3,), reps=4, symbols_per_rep=1 << 15)
for report in (learned, reference):
    row = run_sweep(report.system, grid).rows[0]
    print(f"{report.system.system_id:14s} BMI {row.bmi_mean:.3f} +- {row.bmi_stddev:.3f} bit/symbol")

# Learned points drift towards the four symmetry lines.
dist, _ = symmetry_distance(learned.system.constellation.points, 4)
print(f"mean angle to nearest symmetry line: learned {dist:.3f} rad, QAM {symmetry_distance(square_qam(6), 4)[0]:.3f} rad")

export_tsv(learned.system.constellation, "learned_constellation.tsv")
print("constellation written to learned_constellation.tsv")
