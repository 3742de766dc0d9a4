"""Iterative-learning difficulty control for a simulated stroke-rehabilitation patient."""
from ._backend import BACKEND
from .controllers import (NOMINAL, ControllerConfig, ControllerState, Law, ilc_update,
                          rule_based_update, simulate_update_sequence)
from .elbow import JointParams, JointState, analytic_response, simulate, tracking_start
from .experiment import (AggregateStats, Condition, ScenarioConfig, TrialRecord,
                         prepare_patient, run_experiment, run_session, run_sweep, run_trial)
from .narx import NarxNetwork, NarxTopology, forward_closed_loop, init, lesion, train
from .task import (TaskSpec, Trajectory, Unit, error_l2_norm, sample_task,
                   target_motor_command)

__version__ = "0.1.0"
