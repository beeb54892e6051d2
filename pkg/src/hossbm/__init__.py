"""Higher-order spike-and-slab Boltzmann machine.

Library layout:

- model:      parameters, energy, exact conditionals, energy gradients
- oracle:     brute-force enumeration ground truth for tiny models
- meanfield:  three-stage damped fixed-point variational inference
- gibbs:      block Gibbs kernel and persistent chains
- train:      stochastic maximum-likelihood training loop
- toydata:    synthetic color/position dataset with factor labels
- features:   representation extraction and linear-decoder evaluation
- checkpoint: HOSS1 binary checkpoint format
- checks:     seeded verification suites (also behind `hossbm verify`)
- cli:        command-line entry points
"""

from .model import (BlockShape, GaussianSpec, LatentSample, ModelParams,
                    ParamGrad, cond_f, cond_g, cond_h, cond_s,
                    cond_v_given_fgh, cond_v_given_sfgh, energy, energy_grad,
                    free_energy)
from .oracle import (EnumBudget, exact_log_z, exact_loglik,
                     exact_loglik_grad, exact_posterior)

__all__ = [
    "BlockShape", "GaussianSpec", "LatentSample", "ModelParams", "ParamGrad",
    "cond_f", "cond_g", "cond_h", "cond_s", "cond_v_given_fgh",
    "cond_v_given_sfgh", "energy", "energy_grad", "free_energy",
    "EnumBudget", "exact_log_z", "exact_loglik", "exact_loglik_grad",
    "exact_posterior",
]
