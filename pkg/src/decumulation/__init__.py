"""Retirement decumulation with a means-tested Age Pension.

Dynamic-programming solver, forward simulator and maximum-likelihood
calibration for drawdown, risky-asset share and housing choices.
"""

__version__ = "0.1.0"
