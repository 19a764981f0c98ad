import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angle(angle):
    """Wrap angle(s) to (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), TWO_PI)
    return wrapped if np.ndim(wrapped) else float(wrapped)


def angle_difference(a, b):
    """Shortest signed angle from b to a."""
    return wrap_angle(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


def headings_from_velocities(velocities, min_speed: float = 1e-6) -> np.ndarray:
    """Heading of each velocity row; rows slower than `min_speed` repeat the previous heading."""
    velocities = np.asarray(velocities, dtype=float)
    headings = np.arctan2(velocities[:, 1], velocities[:, 0])
    moving = np.linalg.norm(velocities, axis=1) > min_speed
    last = 0.0
    for i in range(len(headings)):
        if moving[i]:
            last = headings[i]
        else:
            headings[i] = last
    return headings


def heading_total_variation(headings) -> float:
    """Sum of absolute wrap-aware heading increments."""
    headings = np.asarray(headings, dtype=float)
    if headings.size < 2:
        return 0.0
    return float(np.sum(np.abs(angle_difference(headings[1:], headings[:-1]))))


def total_variation(values) -> float:
    """Sum over steps of the norm of the increment (rows are time)."""
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return 0.0
    steps = np.diff(values, axis=0)
    if steps.ndim == 1:
        return float(np.sum(np.abs(steps)))
    return float(np.sum(np.linalg.norm(steps, axis=1)))
