"""samplebench: benchmark suite for variational sampling methods.

Targets with analytic scores, annealing/MCMC kernels, sequential importance
samplers, diffusion-based samplers, mean-field VI, and the full evaluation
criteria suite including mode-coverage metrics, driven by a small experiment
harness.
"""

__version__ = "0.1.0"
