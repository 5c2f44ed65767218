"""Low-resolution fault localization from sparse phasor measurements."""

from .community import (column_correlations, extract_communities, greedy_placement,
                        placement_quality, threshold_adjacency)
from .faultsim import (FaultSpec, NoiseModel, apply_fault, approximate_fault_current, measure,
                       parse_fault, solve_prefault)
from .localizer import (ambiguity_set, build_whitened_model, enumerate_candidates,
                        localize_raw, localize_whitened)
from .matrices import (build_admittance, invert_to_impedance, make_placement, partition,
                       schur_z_blocks)
from .netmodel import NetworkModel, build_index_map, format_network, load_network, parse_network

__version__ = "0.1.0"
