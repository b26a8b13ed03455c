from .arbitration import (BlendTrace, DaimConfig, alpha_max, alpha_schedule,
                          blend, dynamic_factor, guided_denoise, sigmoid)
from .teleop import (PROFILES, ChannelMap, RetargetMap, ScriptedOperator,
                     TeleopFrame, default_retarget_map, retarget,
                     scripted_teleop)

__all__ = [
    "BlendTrace", "DaimConfig", "alpha_max", "alpha_schedule", "blend",
    "dynamic_factor", "guided_denoise", "sigmoid", "PROFILES", "ChannelMap",
    "RetargetMap", "ScriptedOperator", "TeleopFrame", "default_retarget_map",
    "retarget", "scripted_teleop",
]
