from .samplepath import (DominanceViolation, PolicyNotInP, WorkTrajectory, check_dominance,
                         generate_arrivals, simulate_sample_path)
from .steady import (GENERATOR_ID, SimConfig, SimStats, UnstableRun, control_variate_mean,
                     simulate_ctmc, stats_csv)
from .transient import TransientEstimate, transient_estimate, transient_mean_total_response
