"""Two-agent alternating gradient descent on misaligned least-squares objectives."""
from .adversary import AttackDesign, check_asymmetric, design_attack, evaluate_attack, victim_residual
from .dynamics import AgentSpec, Trajectory, run_alternating, solve_fixed_point, stability_check
from .errors import A2AError
from .geometry import ObjectivePair, TaskData, generate_task, make_task, pair_with_angle, task_geometry
from .harness import ExactOracle, ExperimentConfig, LsaAgent, run_experiment, run_interaction
from .lsa import LsaParams, TrainConfig, lsa_predict, train_lsa
from .predictor import angle_bounds, plateau_prediction

__version__ = "0.1.0"

__all__ = [
    "A2AError", "AgentSpec", "AttackDesign", "ExactOracle", "ExperimentConfig", "LsaAgent",
    "LsaParams", "ObjectivePair", "TaskData", "TrainConfig", "Trajectory",
    "angle_bounds", "check_asymmetric", "design_attack", "evaluate_attack", "generate_task",
    "lsa_predict", "make_task", "pair_with_angle", "plateau_prediction", "run_alternating",
    "run_experiment", "run_interaction", "solve_fixed_point", "stability_check", "task_geometry",
    "train_lsa", "victim_residual",
]
