"""Energy-efficient ADC bit allocation for hybrid mmWave MIMO receivers."""

__version__ = "0.1.0"

from .allocation import (AllocationContext, AllocationResult, OpCounter, SaConfig, SolutionSpace,
                         build_solution_space, count_report, fixed_allocation, neighbor, solve_exhaustive,
                         solve_min_crlb, solve_qsearch, solve_sa)
from .channel import ArrayConfig, ChannelRealization, ScattererScenario, generate_channel, svd_factors
from .estimators import AqnmQuantizer, BitAllocator
from .exceptions import (ConfigError, DimensionError, DomainError, EebaError, InfeasibleBudgetError,
                         RankDeficiencyError, SingularityError)
from .metrics import (PowerModel, QTable, RateEnergyReport, build_qtable, energy_efficiency, information_rate,
                      information_rate_matrix, lemma1_approx, lemma2_approx, q_statistic, surrogate_objective,
                      total_power)
from .quantization import DEFAULT_TABLE, DistortionTable, distortion_factor, gain, quantize_uniform
from .transceiver import (CrlbDiagonal, HybridCombiner, LinkModel, analytic_mse, crlb, crlb_matrix,
                          design_combiner, ideal_combiner, pseudo_covariance_test, run_signal_chain)
