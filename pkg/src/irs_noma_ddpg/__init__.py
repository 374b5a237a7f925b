"""IRS-assisted NOMA downlink simulator with a from-scratch DDPG optimizer."""

from .channel import (
    ChannelRealization,
    FadingConfig,
    SystemDims,
    complex_normal,
    composite_all,
    composite_channel,
    sample_direct_channel,
    sample_realization,
    sample_rician_channel,
)
from .ddpg import AgentConfig, DdpgAgent, ReplayBuffer, Transition
from .harness import (
    RunConfig,
    evaluate_policy,
    headline_config,
    run_random_baseline,
    run_sweep,
    run_training,
    smoke_config,
)
from .neural import Mlp, BranchedMlp, TrainingDivergenceError
from .noma_env import (
    EnvConfig,
    EnvState,
    NetworkAction,
    ProjectionDegenerateError,
    StepOutcome,
    check_sic_feasibility,
    dbm_to_watts,
    decode_action,
    decoding_order,
    encode_action,
    env_step,
    interference_set,
    project_action,
    rate,
    sinr_observed,
)

__version__ = "0.1.0"
