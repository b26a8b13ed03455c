"""Shared builders for the test suite."""
import numpy as np

from catchlab.daim import ScriptedOperator, default_retarget_map, retarget
from catchlab.dataset import TrajMeta, Trajectory
from catchlab.sim import Disk, hand_model
from catchlab.sim.world import HandGeometry, HandState, ObjectState, SimState


def make_state(rng, config):
    """Random but well-formed SimState for reward property tests."""
    model = hand_model(config)
    q = rng.uniform(model.lo, model.hi)
    qd = rng.uniform(-1.0, 1.0, size=config.dof) * model.qd_max * 0.2
    geom = HandGeometry(model, q)
    hand = HandState(q=q, qd=qd,
                     applied_torques=rng.uniform(-1, 1, config.dof) * model.tau_limit,
                     tips=geom.tips,
                     tip_velocities=rng.normal(size=(config.fingers, 2)),
                     tip_omegas=rng.normal(size=config.fingers))
    obj = ObjectState(position=rng.uniform(-0.5, 0.5, 2) + [0.0, 0.4],
                      velocity=rng.normal(size=2),
                      theta=rng.uniform(-4, 4), omega=rng.normal(),
                      shape=Disk(0.05), mass=0.06, inertia=7.5e-5,
                      friction=0.8, target_theta=rng.uniform(-4, 4), name="disk")
    return SimState(object=obj, hand=hand, t=int(rng.integers(0, 100)),
                    dropped=False, hold_counter=0)


def make_traj(dropped, final_distance, object_class="disk", n=4):
    """Synthetic trajectory with a controlled final object-palm distance."""
    states = np.zeros((n, 23))
    states[:, 0:2] = [0.1, 0.2]
    states[:, 7:9] = [0.1, 0.2]
    states[-1, 0] = states[-1, 7] + final_distance
    return Trajectory(states, np.zeros((n, 8, 2)), np.zeros((n, 6)),
                      TrajMeta(seed=0, dropped=dropped,
                               final_distance=final_distance,
                               success=not dropped,
                               object_class=object_class))


def expert_source_factory(world):
    """Dataset-collection source wrapping the scripted expert operator."""
    mapping = default_retarget_map(world)

    def factory(episode, rng):
        op = ScriptedOperator("expert", world, rng)
        return lambda state, t: retarget(op.frame(state, t), mapping)
    return factory
