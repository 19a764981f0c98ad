from typing import Literal

SINGLE_INTEGRATOR = "single-integrator"
DOUBLE_INTEGRATOR = "double-integrator"
UNICYCLE = "unicycle"

GRADIENT = "gradient"
BACKSTEPPING = "backstepping"
SFM = "sfm"

type RobotKind = Literal["single-integrator", "double-integrator", "unicycle"]
type ControllerKind = Literal["gradient", "backstepping", "sfm"]

ROBOT_KINDS: tuple[RobotKind, ...] = (SINGLE_INTEGRATOR, DOUBLE_INTEGRATOR, UNICYCLE)
CONTROLLER_KINDS: tuple[ControllerKind, ...] = (GRADIENT, BACKSTEPPING, SFM)

# controllers each robot model can run
COMPATIBLE_CONTROLLERS: dict[str, tuple[str, ...]] = {
    SINGLE_INTEGRATOR: (GRADIENT,),
    UNICYCLE: (GRADIENT,),
    DOUBLE_INTEGRATOR: (BACKSTEPPING, SFM),
}
