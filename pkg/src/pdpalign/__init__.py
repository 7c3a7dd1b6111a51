"""PDP-aligned cyclic-shift pilots for multi-cell massive-MIMO OFDM uplinks."""

from .alignment import (AlignmentCost, AlignmentPlan, alignment_cost, max_orthogonal_packing,
                        optimize_exhaustive, optimize_full_length, optimize_tone_groups,
                        pdp_orthogonal)
from .channel import (ArrayConfig, PowerDelayProfile, SpatialScene, Topology, draw_scene,
                      make_pdp, steering_vector)
from .estimation import LinkBudget
from .harness import ExperimentConfig, RunRecord, emit_results, run_experiment
from .ofdm import OfdmConfig, PilotSequence, base_sequence, shifted_sequence, unitary_dft

__version__ = "0.1.0"
