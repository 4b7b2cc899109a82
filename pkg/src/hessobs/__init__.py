"""hessobs: penalized solver and estimate monitors for obstacle problems of
Hessian-type fully nonlinear elliptic equations on chart domains."""

__version__ = "0.1.0"
