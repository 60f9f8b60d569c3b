"""Forward statics of continuum parallel robots with linear-strain rod elements.

Nodal poses live on SE(3); each element carries an affine strain field whose
end-to-end transform comes from a fourth-order Magnus expansion.  The
equilibrium is found by Newton's method on the product manifold.
"""

from .assembly import (
    EE,
    GeneralizedState,
    LoadSet,
    MotorAxis,
    NodalWrench,
    PulleyLoad,
    Robot,
    RodSpec,
    assemble,
    assemble_residual,
    assemble_tangent,
    tangent_dimension,
)
from .element import ElementKinematics, ElementMaterial, ElementState, interpolate_pose, recover_kinematics
from .errors import (
    CPRError,
    DescriptionError,
    ElementRotationTooLarge,
    NoConvergence,
    OutOfElement,
    PulleyCoincident,
    RotationNearPi,
    SingularAMatrix,
    SingularTangent,
    SweepAborted,
)
from .scenario import (
    ActuationProtocol,
    RobotDescription,
    SectionMaterial,
    TrajectoryRecord,
    compute_error_metrics,
    export,
    generate_protocol,
    load_description,
    load_prototype,
    run_sweep,
)
from .solver import SolverConfig, SolveReport, initial_guess, predict, retract, solve

__version__ = "0.1.0"
