from .base import Head, TaskSpace, detect_space, read_ppm
from .gridworld import GoalGridSpace, GridWorldSpace
from .maniplite import ManipLiteSpace


def get_space(name, **kw):
    if name == "grid":
        return GridWorldSpace()
    if name == "manip":
        return ManipLiteSpace()
    if name == "grid_goal":
        return GoalGridSpace(**kw)
    raise ValueError(f"unknown task space {name!r}")


__all__ = ["Head", "TaskSpace", "GridWorldSpace", "GoalGridSpace", "ManipLiteSpace",
           "get_space", "detect_space", "read_ppm"]
