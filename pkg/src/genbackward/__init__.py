"""Generalized backward equations for one-dimensional processes, numerically.

Submodules: :mod:`process_models`, :mod:`function_space`, :mod:`marginals`,
:mod:`measures`, :mod:`stochastic_calculus`, :mod:`verifier`, :mod:`cli`.
"""

__version__ = "0.1.0"
