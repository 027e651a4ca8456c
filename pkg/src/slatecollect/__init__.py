"""Thompson-sampling slate selection with propensity logging and IPS offline evaluation."""

from .bandit import (
    ArmState,
    ArmTable,
    BetaPrior,
    Slate,
    ThetaDraw,
    compute_selection_probs,
    perturb,
    prior_from_ctr,
    sample_slate_exact,
    sample_slate_fast,
    sample_theta,
    select_single,
    select_topn_deterministic,
    update,
)
from .env import Environment, active_pool, draw_rewards, make_environment, staircase
from .evaluation import Policy, ValueEstimate, ips_value, per_slot_ips, true_value
from .logs import LogDataset, LogRecord, deserialize, read_log, serialize, write_log
from .metrics import cold_start_curve, distribution_report, skewness
from .runner import StrategyConfig, chronological_rank, compare, run

__version__ = "0.1.0"
