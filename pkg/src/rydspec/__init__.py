"""Spectral statistics of single-excitation transport in frozen dipolar gases.

The package samples blockade-constrained random clouds, builds the dipolar
coupling matrix and its surrogate ensembles, pools eigenvalue statistics
(density of states, unfolded level spacings, Poisson/Wigner transition
energies), and solves self-consistent resolvent approximations for the
ensemble-averaged spectral density.
"""

from . import analytic, cloud, ensembles, locator, persist, runner, spectra

__version__ = "0.1.0"

__all__ = ["analytic", "cloud", "ensembles", "locator", "persist", "runner",
           "spectra", "__version__"]
