from .basis import BasisTransforms, apply_transforms, predict_output, solve_transforms
from .cluster import ClusterResult, Interval, StationarySet, cluster_states, recluster, stationary_set
from .hankel import HankelMatrix, add_noise, advance, build, gramians
from .ltv import LtvRealization, realize_at, realize_range, reconstruct_markov
from .switch import SwitchEstimate, assemble_phi, detect_switches
