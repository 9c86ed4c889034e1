"""Time-bin QKD on entangled-photon arrival times."""
from .encoding import (CheckStatistics, EncodingParams, KeyBatch, SiftedEvent, SiftedEvents, assign_bins,
                       key_frame_mask, sift)
from .metrics import KeyMetrics, joint_histogram, key_metrics, mutual_information, plugin_bias_bound
from .optimize import OptimizationResult, encoding_grid, optimize_encoding
from .security import (Baseline, EpsilonBudget, GaussianExcessNoise, SecurityParams, SecurityReport,
                       finite_size_penalty, security_analysis)
