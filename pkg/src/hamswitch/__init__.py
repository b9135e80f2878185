"""Simulation and validation toolkit for switched functional stochastic Hamiltonian systems."""
from .model import (Coefficients, Diffusion, FunctionalDrift, ModelSpec, PointDrift, RateSpec,
                    dominating_matrix, eval_b1, eval_b2, eval_sigma, generator_apply,
                    validate_assumptions)
from .montecarlo import EstimateReport, compare_estimates, rng_stream, run_ensemble
from .sde import (HybridPath, integrate_batch, simulate_coupled_pair, simulate_hybrid,
                  step_hamiltonian)
from .segment import Segment, distance_r, r_norm, shift_append, weighted_history_integral
from .switching import build_intervals, count_jumps, h_map, simulate_markov_chain, thinning_decision

__version__ = "0.1.0"
