"""Grey-box nonlinear state-space identification for mechanical vibrations.

The toolkit identifies discrete-time state-space models whose nonlinear
terms are monomials of measured outputs, in two steps: a frequency-domain
subspace estimate treating the nonlinear basis signals as extra measured
inputs, followed by weighted least-squares refinement with analytic
Jacobians under Levenberg-Marquardt.  Identified models convert to
frequency-dependent physical nonlinear coefficients for validation.
"""

from .basis import BasisFunctionSet, Monomial, eval_basis, eval_basis_derivative
from .coefficients import (
    NonlinearCoefficientEstimate,
    coefficient_summary,
    convert_coefficients,
)
from .exceptions import (
    ConvergenceFailure,
    DataFormatError,
    GreyBoxError,
    NumericalError,
    SimulationDivergence,
)
from .model import (
    GreyBoxModel,
    ModalParameters,
    ParameterLayout,
    ParameterVector,
    extended_frf,
    modal_parameters,
    pack_parameters,
    unpack_parameters,
)
from .optimize import (
    LMConfig,
    LMTrace,
    MLProblem,
    cost_value,
    jacobian,
    levenberg_marquardt,
    residuals,
)
from .signals import (
    MultisineSpec,
    NoiseModel,
    SignalRecord,
    SpectrumRecord,
    add_output_noise,
    average_periods,
    default_estimation_lines,
    dft_lines,
    differentiate_periodic,
    empirical_frf,
    estimate_noise_variance,
    generate_multisine,
    trim_transient,
)
from .simulate import (
    IntegratorConfig,
    MechanicalSystemSpec,
    NonlinearElement,
    discretize_zoh,
    greybox_from_mechanical,
    simulate_greybox,
    simulate_newton,
    steady_state_response,
)
from .subspace import (
    StabilizationDiagram,
    SubspaceConfig,
    build_extended_input_spectra,
    fnsi_identify,
    stabilization_diagram,
)

__version__ = "0.1.0"
