"""Maximum-correntropy estimation for errors-in-variables models.

Submodules: ``model`` (data synthesis), ``estimators`` (MSE/LAD/TLS/MCC),
``bounds`` (error bounds), ``experiments`` (Monte Carlo sweeps), ``cli``.
"""
__version__ = "0.1.0"
