from .config import (ObjectSpec, RandomizationConfig, WorldConfig, desk_world,
                     easy_world, hexagon_spec, square_spec, with_overrides)
from .env import (CatchEnv, VecCatchEnv, policy_obs_dim, policy_observation,
                  proprio_dim, proprio_state)
from .reward import (DROP_PENALTY, LAM_DROP, RewardBreakdown, check_success,
                     compute_reward, reward_lower_bound,
                     wrapped_angle_distance)
from .shapes import Disk, Polygon, build_shape, shape_features
from .world import (EpisodeParams, HandGeometry, HandState, ObjectState,
                    SimState, hand_model, reset, step)

__all__ = [
    "ObjectSpec", "RandomizationConfig", "WorldConfig", "desk_world",
    "easy_world", "hexagon_spec", "square_spec", "with_overrides", "CatchEnv",
    "VecCatchEnv", "policy_obs_dim", "policy_observation", "proprio_dim",
    "proprio_state", "DROP_PENALTY", "LAM_DROP", "RewardBreakdown",
    "check_success", "compute_reward", "reward_lower_bound",
    "wrapped_angle_distance", "Disk", "Polygon", "build_shape",
    "shape_features", "EpisodeParams", "HandGeometry", "HandState",
    "ObjectState", "SimState", "hand_model", "reset", "step",
]
