"""cutoffcert: certify cutoff bounds for safety of first-order transition
systems by validating user-provided size-reducing simulations with an SMT
solver, then model-checking all instances up to the certified bound."""

__version__ = "0.1.0"
