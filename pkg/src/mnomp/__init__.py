"""Line spectrum estimation from multiple snapshots by Newtonized orthogonal matching pursuit."""

from .crb import CrbInput, SingularFisherError, crb_frequencies, crb_matrix, crb_single_tone, fim, from_normalized
from .estimator import (EstimateSet, IllConditionedError, IterationRecord, MnompConfig, MnompTrace,
                        SinusoidEstimate, cyclic_refine, extract_spectrum, identify, ls_update,
                        stop_statistic, iteration_bound, bound_violations)
from .glrt import GlrtEvaluation, GridScan, glrt_eval, grid_scan, newton_refine
from .signal_model import (GroundTruth, InfeasibleSeparationError, InvalidDimensionError, doa_to_omega,
                           draw_separated_frequencies, noiseless, omega_to_doa, random_ground_truth,
                           steering, steering_matrix, synthesize, wrap, wrap_distance)
from .stopping import (ConvergenceError, MissModel, ThresholdSpec, alpha_factor, chi2_cdf_even, marcum_q, p_miss,
                       threshold_from_poe)

__version__ = "0.1.0"
