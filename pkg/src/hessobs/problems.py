"""Bundled benchmark problems and their closed-form references.

Four problems ship with the package as config files:

  laplacian_obstacle        trace-operator (k = 1) ceiling-obstacle problem on
                            the square whose exact solution is the classical
                            radial gluing: contact disc of radius `a`, free
                            equation with a log term outside.  Gentle contact
                            force (tight penalization error) combined with a
                            steep obstacle wall outside the contact disc
                            (sharp free-boundary localization).
  laplacian_obstacle_strong same construction with a strong contact force, for
                            epsilon-uniformity sweeps that must saturate the
                            penalty already at eps = 1e-2.
  ma_manufactured           det^(1/2) (k = n = 2) with manufactured solution
                            exp(r^2/2); the obstacle sits one unit above the
                            solution and never binds.
  ma_obstacle               det^(1/2) with paraboloid data pressed against a
                            shallow paraboloid ceiling; deep contact, the
                            sigma_2 workhorse for theta certificates, audits
                            and uniformity sweeps.

The radial construction: inside r <= a the solution coincides with the
obstacle branch h0 + (psi0 + force)/4 * r^2 (so the trace operator exceeds
psi0 by exactly `force` on the contact set); outside it solves the free
equation psi0 r^2/4 + alpha log r + beta with C^1 matching at r = a, which
pins alpha = force a^2 / 2.  The obstacle adds d_steep * (r - a)_+^2 outside,
which only steepens the gap without moving the solution.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

__all__ = [
    "RadialObstacleParams",
    "radial_params",
    "radial_exact",
    "radial_obstacle",
    "bundled_config_text",
    "bundled_config_path",
    "BUNDLED",
]


@dataclass(frozen=True)
class RadialObstacleParams:
    psi0: float
    force: float  # trace excess on the contact set
    a: float  # free-boundary radius
    d_steep: float  # extra obstacle curvature outside the contact disc
    h0: float = 0.0

    @property
    def c_in(self) -> float:
        return (self.psi0 + self.force) / 4.0

    @property
    def alpha(self) -> float:
        return self.force * self.a**2 / 2.0

    @property
    def beta(self) -> float:
        return (
            self.h0
            + self.c_in * self.a**2
            - self.psi0 * self.a**2 / 4.0
            - self.alpha * np.log(self.a)
        )


def radial_params(kind: str) -> RadialObstacleParams:
    if kind == "weak":
        return RadialObstacleParams(psi0=2.0, force=0.05, a=0.5, d_steep=10.0)
    if kind == "strong":
        return RadialObstacleParams(psi0=2.0, force=5.0, a=0.6, d_steep=10.0)
    raise ValueError(f"unknown radial problem kind {kind!r}")


def radial_exact(par: RadialObstacleParams, pts: np.ndarray) -> np.ndarray:
    """Closed-form solution; pts has coordinates in the last axis."""
    rsq = (pts**2).sum(axis=-1)
    r = np.sqrt(rsq)
    return (
        par.psi0 * rsq / 4.0
        + par.alpha * np.log(np.maximum(r, par.a))
        + par.beta
        - (par.force / 4.0) * np.maximum(0.0, par.a**2 - rsq)
    )


def radial_obstacle(par: RadialObstacleParams, pts: np.ndarray) -> np.ndarray:
    rsq = (pts**2).sum(axis=-1)
    r = np.sqrt(rsq)
    return par.h0 + par.c_in * rsq + par.d_steep * np.maximum(0.0, r - par.a) ** 2


def _g(v: float) -> str:
    """Shortest round-trip decimal for config embedding."""
    return repr(float(v))


def _radial_config_text(par: RadialObstacleParams, m: int, eps0: float,
                        eps_min: float, tol: float, seed: int) -> str:
    rsq = "(x1^2+x2^2)"
    r = f"sqrt({rsq})"
    u_star = (
        f"{_g(par.psi0 / 4.0)}*{rsq} + {_g(par.alpha)}*log(max({r}, {_g(par.a)})) "
        f"+ {_g(par.beta)} - {_g(par.force / 4.0)}*max(0, {_g(par.a**2)} - {rsq})"
    )
    h = f"{_g(par.h0)} + {_g(par.c_in)}*{rsq} + {_g(par.d_steep)}*max(0, {r} - {_g(par.a)})^2"
    return f"""\
# classical radial ceiling-obstacle problem for the trace operator;
# exact solution and free boundary (r = {par.a}) are known in closed form
function {{
  family = sigma_k_root
  k = 1
  n = 2
}}
grid {{
  lo = -1 -1
  hi = 1 1
  m = {m}
}}
metric {{
  kind = flat
}}
coefficients {{
  A = zero
  psi = "{_g(par.psi0)}"
}}
obstacle {{
  h = "{h}"
}}
boundary {{
  phi = "{u_star}"
}}
subsolution {{
  u = "{u_star}"
}}
schedule {{
  eps0 = {_g(eps0)}
  ratio = 0.1
  eps_min = {_g(eps_min)}
}}
newton {{
  tol = {_g(tol)}
  max_iters = 60
}}
audit {{
  enabled = true
  c_audit = 0
  theta_samples = 4000
  seed = {seed}
}}
"""


def _ma_manufactured_text(m: int) -> str:
    ustar = "exp((x1^2+x2^2)/2)"
    return f"""\
# manufactured det^(1/2) problem: solution exp(r^2/2), obstacle inactive
function {{
  family = sigma_k_root
  k = 2
  n = 2
}}
grid {{
  lo = -1 -1
  hi = 1 1
  m = {m}
}}
metric {{
  kind = flat
}}
coefficients {{
  A = zero
  psi = "{ustar}*sqrt(1+x1^2+x2^2)"
}}
obstacle {{
  h = "{ustar} + 1"
}}
boundary {{
  phi = "{ustar}"
}}
subsolution {{
  u = "{ustar}"
}}
schedule {{
  eps0 = 0.01
  ratio = 0.1
  eps_min = 1e-06
}}
newton {{
  tol = 1e-10
  max_iters = 60
}}
audit {{
  enabled = true
  c_audit = 0
  theta_samples = 4000
  seed = 42
}}
"""


def _ma_obstacle_text(m: int) -> str:
    return f"""\
# det^(1/2) ceiling-obstacle problem: the strict paraboloid subsolution
# 0.625 r^2 (det-root 1.25 against psi = 1) is pressed by its own boundary
# data against a ceiling a constant 0.3 above it; gentle contact force 0.25
# keeps the free-boundary layer resolved down to eps = 1e-6
function {{
  family = sigma_k_root
  k = 2
  n = 2
}}
grid {{
  lo = -2 -2
  hi = 2 2
  m = {m}
}}
metric {{
  kind = flat
}}
coefficients {{
  A = zero
  psi = "1"
}}
obstacle {{
  h = "0.625*(x1^2+x2^2) + 0.3"
}}
boundary {{
  phi = "0.625*(x1^2+x2^2)"
}}
subsolution {{
  u = "0.625*(x1^2+x2^2)"
}}
schedule {{
  eps0 = 0.01
  ratio = 0.1
  eps_min = 1e-06
}}
newton {{
  tol = 1e-08
  max_iters = 80
}}
audit {{
  enabled = true
  c_audit = 0
  theta_samples = 10000
  seed = 42
}}
"""


BUNDLED = {
    # single-entry schedule: the gentle contact force that keeps the
    # penalization error inside the oracle tolerance cannot saturate the
    # penalty above eps ~ 1e-5, so a long sweep would not be eps-uniform
    "laplacian_obstacle": lambda: _radial_config_text(
        radial_params("weak"), m=129, eps0=1e-6, eps_min=1e-6, tol=1e-9, seed=42
    ),
    "laplacian_obstacle_strong": lambda: _radial_config_text(
        radial_params("strong"), m=65, eps0=1e-2, eps_min=1e-6, tol=1e-9, seed=42
    ),
    "ma_manufactured": lambda: _ma_manufactured_text(m=65),
    "ma_obstacle": lambda: _ma_obstacle_text(m=65),
}


def bundled_config_text(name: str) -> str:
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled problem {name!r}; have {sorted(BUNDLED)}")
    return BUNDLED[name]()


def bundled_config_path(name: str):
    """Filesystem path of a bundled config (shipped with the package)."""
    return resources.files("hessobs").joinpath("configs", f"{name}.cfg")


def write_bundled_configs(dirpath) -> list:
    """Regenerate the shipped config files from the canonical definitions."""
    import pathlib

    out = []
    d = pathlib.Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    for name in sorted(BUNDLED):
        p = d / f"{name}.cfg"
        p.write_text(bundled_config_text(name))
        out.append(p)
    return out
