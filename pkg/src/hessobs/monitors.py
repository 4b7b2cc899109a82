"""Per-epsilon monitors of the quantities the a priori estimates bound, plus
pointwise audits of the key differential inequalities on solved states.

The audits compare, at every interior point x, the normals nu of the level
sets of f at mu(x) (from the subsolution) and lam(x) (from the solution).
Points split into case 1 (normal gap >= zeta0) where the supporting-plane
excess theta enters, and case 2 (gap < zeta0) where the diagonal bound on
F^{ii} and the plain concavity inequality apply.  Discrete audits tolerate
an O(h^2) slack band since the underlying inequalities hold for the
continuous solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MonitorError, NotAdmissible
from .geometry import ChartGrid
from .operator import Problem, evaluate_state, operator_L
from .symfunc import estimate_theta, sample_cone_points

__all__ = [
    "NormBundle",
    "InequalityAudit",
    "ContactSet",
    "SweepReport",
    "compute_norm_bundle",
    "audit_inequalities",
    "extract_contact_set",
    "contact_radius",
    "sweep_summary",
]


@dataclass
class NormBundle:
    epsilon: float
    c0_norm: float  # max |u| over the closed chart
    grad_norm: float  # max |Du| (centered differences, interior)
    hess_norm: float  # max_i |lambda_i(nabla^2 u + A)| over interior points
    hess_entry_norm: float  # max |(nabla^2 u)_ij| in chart coordinates
    penalty_sup: float
    obstacle_violation: float  # max (u - h)_+
    bound_ok: bool  # violation <= (penalty_sup * eps)^(1/3) + 1e-12


def compute_norm_bundle(u: np.ndarray, prob: Problem, epsilon: float) -> NormBundle:
    """Uniform-estimate monitors of a solved state."""
    st = evaluate_state(u, prob, epsilon)
    if not st.admissible:
        raise NotAdmissible([], "norm bundle requested at a non-admissible state")
    grad_norm = float(np.linalg.norm(st.p, axis=1).max())
    hess_norm = float(np.abs(st.lam).max())
    hess_entry = float(np.abs(st.hess_cov).max())
    violation = float(np.maximum(u - prob.h, 0.0).max())
    penalty_sup = float(st.beta.max())
    bound_ok = violation <= (penalty_sup * epsilon) ** (1.0 / 3.0) + 1e-12
    return NormBundle(
        epsilon=epsilon,
        c0_norm=float(np.abs(u).max()),
        grad_norm=grad_norm,
        hess_norm=hess_norm,
        hess_entry_norm=hess_entry,
        penalty_sup=penalty_sup,
        obstacle_violation=violation,
        bound_ok=bound_ok,
    )


# ---------------------------------------------------------------------------
# inequality audits
# ---------------------------------------------------------------------------

@dataclass
class InequalityAudit:
    epsilon: float
    zeta0: float
    theta_hat: float | None  # None = vacuous (no sampled pair met the premise)
    case1_points: int
    case2_points: int
    worst_slack_case1: float  # min over case-1 points, must be >= -tol_audit
    worst_slack_case2: float  # min over case-2 points of the order-zero bound
    worst_slack_diag: float  # min over case-2 points of the F^{ii} lower bound
    fprime_worst: float  # sharp diagonal-bound slack; exactly 0 for linear f
    tol_audit: float
    c_audit: float
    violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0


def audit_inequalities(
    u: np.ndarray,
    u_sub: np.ndarray,
    prob: Problem,
    epsilon: float,
    c_audit: float | None = None,
    theta_samples: int = 4000,
    seed: int = 0,
) -> InequalityAudit:
    """Audit the two-case differential inequalities on a solved state.

    Case 1 (normal gap >= zeta0):
        L(usub - u) + beta_eps(u - h) >= (theta_hat/2) (1 + sum f_i) - tol
    Case 2 (gap < zeta0):
        min_i f_i >= (zeta0/sqrt(n)) sum f_i - tol       (diagonal bound)
        L(usub - u) + beta_eps(u - h) >= -tol            (order-zero bound)

    theta_hat is halved to keep sampling optimism out of the pass/fail line.
    fprime_worst records the diagonal bound with its sharp per-point constant
    min_i nu_i(lam)/sqrt(n) instead of zeta0/sqrt(n); for linear f this slack
    is identically zero.
    """
    grid = prob.grid
    n = grid.n
    st = evaluate_state(u, prob, epsilon)
    st_sub = evaluate_state(u_sub, prob, epsilon)
    if not (st.admissible and st_sub.admissible):
        raise NotAdmissible([], "audit requires admissible solution and subsolution")

    mu = st_sub.lam  # (N, n)
    fg_mu = st_sub.fgrad
    nu_mu = fg_mu / np.linalg.norm(fg_mu, axis=1, keepdims=True)
    fg = st.fgrad
    nu = fg / np.linalg.norm(fg, axis=1, keepdims=True)
    sum_fi = fg.sum(axis=1)

    zeta0 = float(min(nu_mu.min() / 2.0, (1.0 - 1e-6) / (2.0 * np.sqrt(n))))
    if zeta0 <= 0.0:
        raise MonitorError("zeta0 not positive: subsolution normals degenerate")

    # theta over K = {mu(x)} (deduplicated) and lambda samples that include
    # the audited state's own eigenvalue field, which keeps the certificate
    # coherent with the per-point audit below.
    K = np.unique(np.round(mu, 12), axis=0)
    lam_rand = sample_cone_points(prob.fspec, theta_samples, seed)
    lam_all = np.vstack([lam_rand, st.lam])
    cert = estimate_theta(prob.fspec, K, zeta0, lam_all)
    theta_hat = cert.theta_hat

    gap = np.linalg.norm(nu_mu - nu, axis=1)
    case1 = gap >= zeta0
    case2 = ~case1

    Lv = operator_L(u, prob, epsilon, u_sub - u).ravel()
    beta = st.beta
    h2 = float(grid.spacing.max()) ** 2
    hess_norm = float(np.abs(st.lam).max())
    c_aud = 10.0 * hess_norm if c_audit is None else float(c_audit)
    tol = c_aud * h2

    violations = 0
    if np.any(case1):
        if theta_hat is None:
            raise MonitorError("case-1 points present but theta certificate vacuous")
        s1 = Lv[case1] + beta[case1] - 0.5 * theta_hat * (1.0 + sum_fi[case1])
        worst1 = float(s1.min())
        violations += int(np.count_nonzero(s1 < -tol))
    else:
        worst1 = np.inf

    if np.any(case2):
        s2 = Lv[case2] + beta[case2]
        worst2 = float(s2.min())
        violations += int(np.count_nonzero(s2 < -tol))
        diag = fg[case2].min(axis=1) - (zeta0 / np.sqrt(n)) * sum_fi[case2]
        worst_diag = float(diag.min())
        violations += int(np.count_nonzero(diag < -tol))
    else:
        worst2 = np.inf
        worst_diag = np.inf

    sharp = fg.min(axis=1) - (nu.min(axis=1) / np.sqrt(n)) * sum_fi
    fprime_worst = float(sharp.min())

    return InequalityAudit(
        epsilon=epsilon,
        zeta0=zeta0,
        theta_hat=theta_hat,
        case1_points=int(case1.sum()),
        case2_points=int(case2.sum()),
        worst_slack_case1=worst1,
        worst_slack_case2=worst2,
        worst_slack_diag=worst_diag,
        fprime_worst=fprime_worst,
        tol_audit=tol,
        c_audit=c_aud,
        violations=violations,
    )


# ---------------------------------------------------------------------------
# contact set
# ---------------------------------------------------------------------------

@dataclass
class ContactSet:
    tau: float
    mask: np.ndarray  # interior-shaped indicator of {u >= h - tau}
    interface: np.ndarray  # contact cells with a non-contact axis neighbor
    cells: int
    interface_cells: int


def extract_contact_set(
    u: np.ndarray,
    h: np.ndarray,
    grid: ChartGrid,
    epsilon: float,
    penalty_sup: float,
    hess_norm: float,
    h_above_phi_on_boundary: bool = True,
) -> ContactSet:
    """Indicator of the approximate contact set and its interface cells.

    The threshold combines the penalization depth (penalty_sup * eps)^(1/3)
    with a discretization band 2 h^2 * hess_norm.  When the obstacle clears
    the boundary data, no contact cell may touch the chart boundary; that is
    asserted here (it mirrors the barrier argument's conclusion).
    """
    hmax = float(grid.spacing.max())
    tau = (max(penalty_sup, 0.0) * epsilon) ** (1.0 / 3.0) + 2.0 * hmax**2 * hess_norm
    mask = (u[grid.interior] >= h[grid.interior] - tau)
    interface = np.zeros_like(mask)
    if mask.any():
        n = grid.n
        padded = np.pad(mask, 1, mode="constant", constant_values=False)
        neighbor_all = np.ones_like(mask, dtype=bool)
        for d in range(n):
            for s in (+1, -1):
                sl = [slice(1, -1)] * n
                lo, hi = 1 + s, padded.shape[d] - 1 + s
                sl[d] = slice(lo, hi if hi != padded.shape[d] else None)
                neighbor_all &= padded[tuple(sl)]
        interface = mask & ~neighbor_all
        if h_above_phi_on_boundary:
            edge = np.zeros_like(mask)
            for d in range(n):
                sl = [slice(None)] * n
                for e in (0, -1):
                    sl[d] = e
                    edge[tuple(sl)] = True
            if bool((mask & edge).any()):
                raise MonitorError(
                    "contact set touches the chart boundary although h > phi there"
                )
    return ContactSet(
        tau=float(tau),
        mask=mask,
        interface=interface,
        cells=int(mask.sum()),
        interface_cells=int(interface.sum()),
    )


def contact_radius(contact: ContactSet, grid: ChartGrid) -> float:
    """Area-equivalent radius of the contact set (2d charts)."""
    if grid.n != 2:
        raise ValueError("contact_radius is defined for 2d charts")
    cell_area = float(np.prod(grid.spacing))
    return float(np.sqrt(contact.cells * cell_area / np.pi))


# ---------------------------------------------------------------------------
# sweep summary
# ---------------------------------------------------------------------------

@dataclass
class SweepReport:
    rows: list  # one dict per epsilon (norm bundle fields + extras)
    ratios: dict  # max/min across the sweep per monitored field
    warnings: list  # field names whose ratio exceeds 2

    @property
    def uniform(self) -> bool:
        return not self.warnings


def _ratio(values) -> float:
    vmax = max(values)
    vmin = min(values)
    if vmax == 0.0:
        return 1.0  # identically zero across the sweep: trivially uniform
    if vmin == 0.0:
        return float("inf")
    return vmax / vmin


def sweep_summary(bundles: list[NormBundle]) -> SweepReport:
    """Tabulate monitors against epsilon and flag non-uniform fields."""
    if not bundles:
        raise ValueError("sweep_summary needs at least one norm bundle")
    rows = []
    for b in bundles:
        rows.append(
            {
                "epsilon": b.epsilon,
                "c0_norm": b.c0_norm,
                "grad_norm": b.grad_norm,
                "hess_norm": b.hess_norm,
                "hess_entry_norm": b.hess_entry_norm,
                "penalty_sup": b.penalty_sup,
                "obstacle_violation": b.obstacle_violation,
                "bound_ok": b.bound_ok,
            }
        )
    fields = ["c0_norm", "grad_norm", "hess_norm", "penalty_sup"]
    ratios = {f: _ratio([r[f] for r in rows]) for f in fields}
    warnings = [f for f, v in ratios.items() if v > 2.0]
    return SweepReport(rows=rows, ratios=ratios, warnings=warnings)
