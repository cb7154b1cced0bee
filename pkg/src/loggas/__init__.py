"""Log-gases, Dyson Brownian motion and the parabolic systems along their paths.

Submodules: core (configurations, potentials, boundary data), equilibrium
(equilibrium densities), samplers (tridiagonal, Wigner, MALA), dynamics
(DBM and Hessian kernels), parabolic (propagators and estimates),
inequalities (discrete Gagliardo-Nirenberg type checks), statistics (gap
statistics) and the experiment harness (config, rng, runner, cli).
"""

__version__ = "0.1.0"

from .core import (BoundaryData, ExternalPotential, ParticleConfiguration, PotentialModel,  # noqa: E402
                   Scaling, check_regular_potential)
from .equilibrium import (EquilibriumDensity, classical_locations, semicircle,  # noqa: E402
                          solve_equilibrium_density)
from .errors import *  # noqa: E402,F401,F403
from .samplers import (ChainParams, LogGasMeasure, VarianceProfile, local_gaussian_gas,  # noqa: E402
                       sample_gaussian_beta_tridiagonal, sample_generalized_wigner,
                       sample_log_gas_mcmc)
from .dynamics import DbmPath, DtParams, HessianKernel, build_hessian_kernel, integrate_dbm  # noqa: E402
from .parabolic import check_nash_decay, propagate  # noqa: E402
from .config import ExperimentConfig  # noqa: E402
from .runner import ExperimentRecord, replay, run_experiment  # noqa: E402
