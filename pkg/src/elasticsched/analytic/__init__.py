from .chains import ResponseTimes, build_ef_chain, build_if_chain, mean_response_ef, mean_response_if
from .coxian import CoxianPhases, InfeasibleMoments, coxian_moments, fit_coxian
from .formulas import (Moments3, Unstable, busy_period_moments, counterexample_values,
                       erlang_c, expected_total_response, mm1_mean_response, mmk_mean_response)
from .qbd import (NoConvergence, QbdBlocks, SingularBoundary, StationaryDistribution,
                  homogeneous_qbd, solve_qbd)
