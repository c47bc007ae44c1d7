from .base import EpisodicEnv, VisitationLog
from .maze import MazeEnv, parse_layout
from .swingup import SparseCartPoleSwingupEnv

ENVIRONMENTS = {"maze": MazeEnv, "swingup": SparseCartPoleSwingupEnv}


def make_env(name: str, **kwargs):
    try:
        return ENVIRONMENTS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None


__all__ = ["EpisodicEnv", "VisitationLog", "MazeEnv", "SparseCartPoleSwingupEnv", "parse_layout",
           "make_env", "ENVIRONMENTS"]
