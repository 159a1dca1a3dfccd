"""certcrit: certified numerical solving of rational critical-point equations
for statistical and scattering models.

Workflow: build a model, take the gradient of its log-linear potential, run
monodromy once to populate a generic instance, track all solutions to the
data of interest by a coefficient parameter homotopy, certify the endpoints
with interval arithmetic, and extract the MLE or evaluate amplitudes.
"""

from .amplitude import AmplitudeResult, amplitude, oracle_amplitude
from .certify import Certificate, CertifySummary, certify_set, krawczyk_certify
from .expr import (Expression, Potential, RationalSystem, SingularEvaluationError,
                   build_potential, differentiate, gradient)
from .inference import (MLDegreeResult, MLEResult, SolveOptions, StartSystemCache,
                        ml_degree, mle, prepare_start_system, solve_model)
from .kinematics import MandelstamK2, MandelstamK3, complete_k2, complete_k3
from .models import (ModelSpec, PositiveChart, cegm3_model, chy_model,
                     independence_model, make_model, positive_chart,
                     random_linear_model, simplex_model, tensor_model)
from .monodromy import MonodromyOptions, monodromy_solve
from .program import CompiledPotential, evaluate, jacobian, toric_hessian
from .solutions import SolutionSet
from .tracking import PathOutcome, PathStatus, TrackerOptions, parameter_homotopy, track_path

__version__ = "0.1.0"
