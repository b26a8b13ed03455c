from .episode import (MODES, Episode, EpisodeResult, evaluate_arm,
                      run_episode, run_recorded_episode)
from .profiles import AppConfig, CollectConfig, ServeConfig, load_config, profile
from .replay import ReplayWriter, read_replay, verify_replay
from .sweep import sweep_beta, write_sweep_csv

__all__ = [
    "MODES", "Episode", "EpisodeResult", "evaluate_arm", "run_episode",
    "run_recorded_episode", "AppConfig", "CollectConfig", "ServeConfig",
    "load_config", "profile", "ReplayWriter", "read_replay", "verify_replay",
    "sweep_beta", "write_sweep_csv",
]
