"""roacert: neural controller + Zubov-style Lyapunov synthesis with
formally certified regions of attraction."""

from .boxes import Box
from .nets import (Controller, LyapunovNet, Mlp, controller_eval, forward, grad,
                   load_checkpoint, lyapunov_eval, save_checkpoint)
from .graph import ExprGraph, compose_closed_loop, controller_to_graph, \
    gradient_graph, lyapunov_to_graph
from .systems import SystemSpec, SYSTEM_NAMES, build_system, closed_loop, \
    load_system, resolve_system, save_system
from .simulate import Trajectory, simulate

__version__ = "0.1.0"
