"""Simulator and verification harness for graph diffusion driven by the
discrete p-Laplacian with radial absorption on truncations of infinite
weighted graphs."""

from .graphs import (LatticeSpec, WeightedGraph, ball_volume, build_lattice,
                     distance, lattice_ball_count, load_edge_list,
                     volume_growth_constant)
from .integrate import (DecaySeries, MassBalanceError, SimConfig,
                        StiffnessError, mass, run, step)
from .operators import (AbsorptionProfile, ScalarField, box_field,
                        delta_field, load_field, p_laplacian, q_eval, rhs,
                        validate_monotonicity)
from .theory import (CoercivitySample, RateModel, coercivity_gap,
                     critical_exponent, dissipation_residual,
                     find_coercivity_constant, mass_envelope, phi,
                     phi_inverse, sup_envelope)
from .harness import (ConfigError, ExperimentPlan, InitialSpec, ReportRow,
                      RunCase, fit_decay_exponent, parse_config,
                      parse_model_file, run_experiment, theory_report)

__version__ = "0.1.0"

__all__ = [
    "AbsorptionProfile", "CoercivitySample", "ConfigError", "DecaySeries",
    "ExperimentPlan", "InitialSpec", "LatticeSpec", "MassBalanceError",
    "RateModel", "ReportRow", "RunCase", "ScalarField", "SimConfig",
    "StiffnessError", "WeightedGraph", "ball_volume", "box_field",
    "build_lattice", "coercivity_gap", "critical_exponent", "delta_field",
    "dissipation_residual", "distance", "find_coercivity_constant",
    "fit_decay_exponent", "lattice_ball_count", "load_edge_list",
    "load_field", "mass", "mass_envelope", "p_laplacian", "parse_config",
    "parse_model_file", "phi", "phi_inverse", "q_eval", "rhs", "run",
    "run_experiment", "step", "sup_envelope", "theory_report",
    "validate_monotonicity", "volume_growth_constant",
]
