"""Topology optimization with a neural reparameterization and a
differentiable sparse finite-element solver."""
from .drivers import NeuralHyper, RunHistory, evaluate, run_neural, run_simp
from .fem import Material, Mesh
from .optim import OCParams, grayness
from .problems import ProblemSpec, make_problem

__version__ = "0.1.0"

__all__ = [
    "Material", "Mesh", "NeuralHyper", "OCParams", "ProblemSpec", "RunHistory",
    "evaluate", "grayness", "make_problem", "run_neural", "run_simp",
]
