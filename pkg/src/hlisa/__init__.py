"""Linear successive allocation precoders for multi-user mmWave hybrid MIMO."""

__version__ = "0.1.0"

from .channel import (ArrayGeometry, Path, PathSet, run_rng, sample_scenario,
                      synthesize_channel, synthesize_channels, upa_response)
from .config import PRESETS, ConfigError, ScenarioConfig, preset
from .numerics import IllConditionedError, NumericalError, SingularMatrixError
from .precoding import (PathModel, PowerAllocation, PrecodingSolution, phase_project,
                        run_h_lisa, run_lc_h_lisa, run_lc_lisa, run_lisa, waterfill)
from .baselines import (BaselineFailure, build_path_codebooks, dpc_sum_capacity,
                        run_2smuhpa, run_bd)
from .evaluation import (evaluate_run, gain_histogram, run_monte_carlo, solution_rate,
                         logdet_sum_rate)
