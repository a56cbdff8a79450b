"""Symbolic expression-graph engine: hash-consed DAG, reverse-mode
Jacobians, structural statistics and flat evaluation tapes."""
from .diff import GraphStats, SparseJacobian, gradient, graph_stats, jacobian
from .graph import DomainError, ExprGraph, Op
from .sym import Sym, constant, node_id, parameters, variables
from .tape import Tape, available_backends, set_backend
from . import sym, tape

__all__ = [
    "DomainError", "ExprGraph", "GraphStats", "Op", "SparseJacobian", "Sym", "Tape",
    "available_backends", "constant", "gradient", "graph_stats", "jacobian",
    "node_id", "parameters", "set_backend", "sym", "tape", "variables",
]
