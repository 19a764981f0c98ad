from enum import Enum


class FieldMode(Enum):
    """Which part of the environment a density field lets vary in time."""

    DYNAMIC_OBSTACLE = "dynamic-obstacle"
    DYNAMIC_TARGET = "dynamic-target"
    STATIC = "static"
