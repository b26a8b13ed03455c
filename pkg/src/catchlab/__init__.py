"""catchlab: a desk-scale shared-autonomy catching pipeline.

Subpackages:
    numkit    float64 tensors, reverse-mode autodiff, MLP, Adam, checkpoints
    sim       deterministic 2D catching world with the composite reward
    percept   point-cloud sampling, encoder/attention/decoder, recon loss
    ppo       PPO trainer for the expert catching policy
    dataset   quality-gated trajectory store (JSONL + manifest)
    diffusion noise schedules, denoiser, training, inference, MSE eval
    daim      dynamics-gated teleop blending, retargeting, scripted operators
    app       CLI, replay, sweep, and the live session server
"""

__version__ = "0.1.0"
