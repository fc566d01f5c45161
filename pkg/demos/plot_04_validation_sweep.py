"""
BMI against laser linewidth
===========================

Validation sweeps an SNR x linewidth grid.  Each cell averages several
independent sequences, each with its own random initial phase, and the
result file has the columns ``linewidth mean stddev snr`` that plotting
tools read directly.
"""

from vvshape.sweep import SweepGrid, export_results, run_sweep
from vvshape.system import System

# The prior-art reference: square 64-QAM with the two-ring hard partition.
baseline = System.qam_hard(num_rings=2)
grid = SweepGrid(snrs_db=(15.0, 17.0, 19.0), linewidths_hz=(0.0, 500e3, 1e6),
                 reps=4, symbols_per_rep=1 << 14, seed=0)
result = run_sweep(baseline, grid)

for row in result.rows:
    print(f"{row.snr_db:5.1f} dB {row.linewidth_hz / 1e3:6.0f} kHz  BMI {row.bmi_mean:.3f} +- {row.bmi_stddev:.3f}")

export_results(result, "qam_hard2.txt")
print(open("qam_hard2.txt").read())
