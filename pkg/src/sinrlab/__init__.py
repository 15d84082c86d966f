"""SINR estimation lab for LEO user-centric beamforming.

Geometry and channel model, MMSE beamforming oracle, a small reverse-mode
autodiff engine, the dual masked self-attention estimator, schedulers and
the experiment harness.
"""

__version__ = "0.1.0"
