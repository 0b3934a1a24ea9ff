"""Spectral stability and synchronization tests for networks of identical linear systems."""

from .delay import DelaySpec, build_kernels, is_delay_stable, monodromy, monodromy_by_stepping
from .lti import (
    CouplingMatrix, LtiSystem, SyncReport, Verdict, check_network_stability, check_synchronization,
    closed_loop, complete_graph, observable_part, spectrum, sync_projection, unobservable_subspace,
)
from .netsim import NetworkSpec, ParabolicNode, simulate, sync_error_series, verify_prediction
from .parabolic import Boundary, ParabolicSpec, boundary_lift, closed_loop_boundary, discretize

__version__ = "0.1.0"
