"""End-to-end constellation shaping through a differentiable Viterbi-Viterbi
carrier phase estimator.

The package is a numpy library: :mod:`numgrad` provides reverse-mode
gradients, :mod:`constellation`, :mod:`channel`, :mod:`cpe` and
:mod:`demapper` are the transmission chain, :mod:`trainer` fits it with Adam
and :mod:`sweep` validates trained systems.  ``vvshape`` on the command line
wraps the same functions.
"""
from .channel import ChannelParams, apply, phase_variance
from .constellation import Constellation, export_tsv, import_tsv
from .cpe import PartitionParams, PhaseTrack, VVParams, genie_csc, vv_estimate, vv_modified
from .demapper import RxNet, bce_loss, bmi, exact_llrs
from .system import System, load_system, save_system, simulate
from .sweep import SweepGrid, SweepResult, export_results, import_results, run_sweep
from .trainer import TrainConfig, TrainReport, qam_reference, train

__version__ = "0.1.0"

__all__ = [
    "ChannelParams", "apply", "phase_variance",
    "Constellation", "export_tsv", "import_tsv",
    "PartitionParams", "PhaseTrack", "VVParams", "genie_csc", "vv_estimate", "vv_modified",
    "RxNet", "bce_loss", "bmi", "exact_llrs",
    "System", "load_system", "save_system", "simulate",
    "SweepGrid", "SweepResult", "export_results", "import_results", "run_sweep",
    "TrainConfig", "TrainReport", "qam_reference", "train",
]
