"""Four-joint arm pick-and-place simulation with a robust MPC obstacle-avoidance mode."""
from .arm_model import ArmGeometry, ControlInput, InputLimits, JointLimits, JointState, end_effector, step
from .rmpc_controller import CostWeights, RmpcProblem, RmpcSolution, solve_rmpc
from .sim_harness import Scenario, batch, builtin_scenario, load_scenario, run

__all__ = [
    "ArmGeometry", "ControlInput", "InputLimits", "JointLimits", "JointState", "end_effector", "step",
    "CostWeights", "RmpcProblem", "RmpcSolution", "solve_rmpc",
    "Scenario", "batch", "builtin_scenario", "load_scenario", "run",
]
__version__ = "0.1.0"
