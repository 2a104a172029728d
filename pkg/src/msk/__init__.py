"""Differentiable musculoskeletal dynamics toolkit."""

from .model import (ActuatorSpec, ContactSphereSpec, GeneralizedState,
                    JointSpec, KineticState, MarkerSpec, ModelError,
                    MuscleSpec, NumericalError, SegmentSpec, SkeletonModel,
                    Trajectory, canonicalize_state, load_model, make_model,
                    pack, save_model, scale_model, state_from_q, state_to_q,
                    validate_model)
from .kinematics import (PoseResult, contact_jacobian, forward_kinematics,
                         marker_jacobian, marker_positions, point_jacobian,
                         point_positions, segment_pose)
from .dynamics import (ContactResult, IdResult, bias_forces, contact_forces,
                       forward_dynamics, gravity_forces, inverse_dynamics,
                       mass_matrix, muscle_torques, total_energy)
from .integrator import (ControlTrajectory, ode_rhs, rollout,
                         rollout_with_sensitivities, step)
from .ik import (IkError, IkSolution, MarkerFrame, check_observability,
                 differentiate_trajectory, solve_ik_frame, solve_ik_sequence)
from .ocp import (OcpProblem, OcpSolution, extract_reference_kinetics,
                  solve_ocp, transcribe)
from .consistency import (LossWeights, RoundtripReport, SurrogateId,
                          TrainingReport, consistency_loss, fit_surrogate_id,
                          joint_positions, kinetic_loss, load_surrogate,
                          roundtrip_check, save_surrogate, surrogate_loss)
from .csvio import (read_controls, read_kinetics, read_markers,
                    read_trajectory, write_controls, write_kinetics,
                    write_markers, write_report, write_trajectory)

__version__ = "0.1.0"

__all__ = [
    "ActuatorSpec", "ContactResult", "ContactSphereSpec",
    "ControlTrajectory", "GeneralizedState", "IdResult", "IkError",
    "IkSolution", "JointSpec", "KineticState", "LossWeights", "MarkerFrame",
    "MarkerSpec", "ModelError", "MuscleSpec", "NumericalError", "OcpProblem",
    "OcpSolution", "PoseResult", "RoundtripReport", "SegmentSpec",
    "SkeletonModel", "SurrogateId", "Trajectory", "TrainingReport",
    "bias_forces", "canonicalize_state", "check_observability",
    "consistency_loss", "contact_forces", "contact_jacobian",
    "differentiate_trajectory", "extract_reference_kinetics",
    "fit_surrogate_id", "forward_dynamics", "forward_kinematics",
    "gravity_forces", "inverse_dynamics", "joint_positions", "kinetic_loss",
    "load_model", "load_surrogate", "make_model", "marker_jacobian",
    "marker_positions", "mass_matrix", "muscle_torques", "ode_rhs", "pack",
    "point_jacobian", "point_positions", "read_controls", "read_kinetics",
    "read_markers", "read_trajectory", "rollout",
    "rollout_with_sensitivities", "roundtrip_check", "save_model",
    "save_surrogate", "scale_model", "segment_pose", "solve_ik_frame",
    "solve_ik_sequence", "solve_ocp", "state_from_q", "state_to_q", "step",
    "surrogate_loss", "total_energy", "transcribe", "validate_model",
    "write_controls", "write_kinetics", "write_markers", "write_report",
    "write_trajectory",
]
