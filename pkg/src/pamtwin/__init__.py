"""Digital twin of an antagonistic pneumatic-muscle joint actuator.

Simulates the full nonlinear hybrid plant (orifice flow, gas energy balance,
contraction forces, stick-slip friction), estimates joint angle and torque
from pressure measurements alone with an unscented Kalman filter, and closes
sensor-less PI tracking loops on the estimates.
"""

from . import backend
from .params import PamParams, load_config, apply_overrides
from .pneumatics import (
    DEFAULT_OPEN_RATE_MAP,
    FlowResult,
    OpenRateMap,
    balance_pressure,
    calibrate_open_rate_map,
    mass_flow_in,
    mass_flow_out,
    open_rate,
    pressure_rate,
    valve_mass_flow,
)
from .plant import (
    ControlInput,
    JointState,
    PlantOutput,
    contraction_force,
    coulomb_terms,
    friction_torque,
    joint_torque,
    muscle_lengths,
    muscle_volume,
    muscle_volume_rate,
    output,
    state_derivative,
    steady_state,
    step,
)
from .ukf import GaussianBelief, NoiseSpec, SigmaSet, filter_step, predict, sigma_points, update
from .estimator import EstimateRecord, PamUkfEstimator, measurement_map
from .control import ANGLE_GAINS, TORQUE_GAINS, PiController, pi_step, run_sensorless_loop
from .trace import Metrics, SignalMetrics, Trace, metric_linf, metric_ratio, metric_rmse
from .harness import Scenario, bench, compare_offline, generate_profile, run, sweep

__version__ = "0.1.0"
