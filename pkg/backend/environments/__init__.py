"""
Experiment environments and data generators
"""
from backend.environments.base import EnvSpec, Environment, StepResult, one_hot
from backend.environments.classic_control import Acrobot, MountainCar
from backend.environments.gridworld import Gridworld

ENVIRONMENTS = {
    "gridworld": Gridworld,
    "mountain_car": MountainCar,
    "acrobot": Acrobot,
}


def make_env(name: str, seed: int = 0, **kwargs) -> Environment:
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ValueError(f"unknown environment '{name}', expected one of {sorted(ENVIRONMENTS)}") from None
    return cls(seed=seed, **kwargs)


__all__ = ["EnvSpec", "Environment", "StepResult", "one_hot", "make_env", "ENVIRONMENTS"]
