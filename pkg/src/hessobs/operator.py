"""Penalized residual, its linearization, and the first-order linear operator.

The residual at an interior point is

    r = f(lam(nabla^2 u + A(x, u, Du))) - psi(x, u, Du) - beta_eps(u - h),

with the cubic penalty beta_eps(z) = z^3/eps for z > 0.  The Jacobian is
assembled spectrally: in the g-orthonormal eigenframe of U = nabla^2 u + A,
dF = sum_a f_a(lam) v_a (x) v_a, pushed back through the Cholesky congruence;
chain-rule contributions of A_z, A_p, psi_z, psi_p and beta' complete the
stencil.  The assembled sparse matrix is the exact Jacobian of the discrete
residual (the spectral first derivative is exact, ties handled by cluster
averaging).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import BadEpsilon, NotAdmissible, PsiNotPositive
from .expressions import Expression, parse_expression
from .geometry import (
    ChartGrid,
    MetricField,
    covariant_hessian,
    eigen_wrt_metric_field,
    gradient_centered,
)
from .symfunc import SymmetricFunctionSpec, f_and_grad_masked, sigma_margins

__all__ = [
    "CoefficientField",
    "Problem",
    "StateEval",
    "LinearizedSystem",
    "penalty",
    "residual",
    "linearize",
    "operator_L",
    "assemble_operator",
    "coefficients_from_expressions",
    "laplace_beltrami_solve",
]

PSI_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

@dataclass
class CoefficientField:
    """A(x, z, p) tensor and psi(x, z, p) right side with their z/p
    derivatives.  Callbacks are batched: x (N, n), z (N,), p (N, n),
    g (N, n, n); A-shaped outputs are (N, n, n), A_p is (N, n, n, n) with the
    p-component index first after the batch axis."""

    a_eval: callable
    a_z: callable
    a_p: callable
    psi_eval: callable
    psi_z: callable
    psi_p: callable
    tag: str = "custom"
    certified: bool | None = None  # set by the coefficient sampling certification


def _zeros_like_A(x, n):
    return np.zeros((x.shape[0], n, n))


def coefficients_from_expressions(
    n: int,
    psi_text: str,
    a_mode: str = "zero",
    a_param=None,
) -> CoefficientField:
    """Build coefficients from expression strings.

    a_mode:
      - "zero":           A = 0
      - "kappa_zg":       A = kappa * z * g              (a_param = kappa)
      - "scalar_metric":  A = s(x, z, p) * g             (a_param = expression)
    """
    psi = parse_expression(psi_text, n)
    psi_dz = psi.derivative("z")
    psi_dp = [psi.derivative(f"p{i+1}") for i in range(n)]

    def env(x, z, p):
        e = {f"x{i+1}": x[:, i] for i in range(n)}
        e["z"] = z
        e.update({f"p{i+1}": p[:, i] for i in range(n)})
        return e

    def psi_eval(x, z, p, g):
        return np.broadcast_to(psi(**env(x, z, p)), z.shape).astype(float)

    def psi_z(x, z, p, g):
        return np.broadcast_to(psi_dz(**env(x, z, p)), z.shape).astype(float)

    def psi_p(x, z, p, g):
        out = np.empty((z.shape[0], n))
        e = env(x, z, p)
        for i in range(n):
            out[:, i] = np.broadcast_to(psi_dp[i](**e), z.shape)
        return out

    if a_mode == "zero":
        coeff = CoefficientField(
            a_eval=lambda x, z, p, g: _zeros_like_A(x, n),
            a_z=lambda x, z, p, g: _zeros_like_A(x, n),
            a_p=lambda x, z, p, g: np.zeros((x.shape[0], n, n, n)),
            psi_eval=psi_eval,
            psi_z=psi_z,
            psi_p=psi_p,
            tag="zero",
        )
    elif a_mode == "kappa_zg":
        kappa = float(a_param)

        coeff = CoefficientField(
            a_eval=lambda x, z, p, g: kappa * z[:, None, None] * g,
            a_z=lambda x, z, p, g: kappa * g,
            a_p=lambda x, z, p, g: np.zeros((x.shape[0], n, n, n)),
            psi_eval=psi_eval,
            psi_z=psi_z,
            psi_p=psi_p,
            tag=f"kappa_zg({kappa})",
        )
    elif a_mode == "scalar_metric":
        s = a_param if isinstance(a_param, Expression) else parse_expression(str(a_param), n)
        s_dz = s.derivative("z")
        s_dp = [s.derivative(f"p{i+1}") for i in range(n)]

        def a_eval(x, z, p, g):
            return np.broadcast_to(s(**env(x, z, p)), z.shape)[:, None, None] * g

        def a_z(x, z, p, g):
            return np.broadcast_to(s_dz(**env(x, z, p)), z.shape)[:, None, None] * g

        def a_p(x, z, p, g):
            out = np.empty((z.shape[0], n, n, n))
            e = env(x, z, p)
            for i in range(n):
                out[:, i] = np.broadcast_to(s_dp[i](**e), z.shape)[:, None, None] * g
            return out

        coeff = CoefficientField(a_eval=a_eval, a_z=a_z, a_p=a_p,
                                 psi_eval=psi_eval, psi_z=psi_z, psi_p=psi_p,
                                 tag="scalar_metric")
    else:
        raise ValueError(f"unknown A mode {a_mode!r}")
    return coeff


# ---------------------------------------------------------------------------
# problem container
# ---------------------------------------------------------------------------

@dataclass
class Problem:
    """Everything a solve needs: discretized domain, operator family,
    coefficients, obstacle, boundary data and optional subsolution."""

    grid: ChartGrid
    metric: MetricField
    fspec: SymmetricFunctionSpec
    coeff: CoefficientField
    h: np.ndarray  # obstacle sampled on the grid
    phi: np.ndarray  # boundary-data extension sampled on the grid
    subsolution: np.ndarray | None = None  # sampled subsolution (pinned to phi)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._x_int = self.grid.interior_points().reshape(-1, self.grid.n)
        self._g_int = self.metric.g[self.grid.interior].reshape(-1, self.grid.n, self.grid.n)
        self._h_int = self.h[self.grid.interior].ravel()

    @property
    def x_interior(self):
        return self._x_int

    @property
    def g_interior(self):
        return self._g_int

    @property
    def h_interior(self):
        return self._h_int


# ---------------------------------------------------------------------------
# penalty
# ---------------------------------------------------------------------------

def penalty(epsilon: float, z):
    """Cubic penalty (value, first, second derivative); C^2 at z = 0.

    value = z^3/eps for z > 0 and 0 otherwise; all three outputs are >= 0.
    """
    if not (0.0 < epsilon < 1.0):
        raise BadEpsilon(f"epsilon must lie in (0, 1), got {epsilon}")
    z = np.asarray(z, dtype=float)
    pos = z > 0.0
    zp = np.where(pos, z, 0.0)
    val = zp**3 / epsilon
    d1 = 3.0 * zp**2 / epsilon
    d2 = 6.0 * zp / epsilon
    if z.ndim == 0:
        return float(val), float(d1), float(d2)
    return val, d1, d2


# ---------------------------------------------------------------------------
# state evaluation
# ---------------------------------------------------------------------------

@dataclass
class StateEval:
    """All pointwise quantities of one iterate, flattened over interior points."""

    z: np.ndarray  # u at interior points
    p: np.ndarray  # centered gradient (N, n)
    hess_cov: np.ndarray  # covariant Hessian (N, n, n)
    A: np.ndarray  # (N, n, n)
    U: np.ndarray  # hess_cov + A
    lam: np.ndarray  # pencil eigenvalues, descending (N, n)
    V: np.ndarray  # g-orthonormal frames (N, n, n)
    fval: np.ndarray  # f(lam), NaN where outside the cone
    fgrad: np.ndarray  # Df(lam), tie-averaged
    ok: np.ndarray  # admissibility mask
    sig: np.ndarray  # sigma_1..sigma_k margins (N, k)
    psi: np.ndarray
    beta: np.ndarray
    dbeta: np.ndarray

    @property
    def admissible(self) -> bool:
        return bool(self.ok.all())

    @property
    def margin(self) -> float:
        """min over interior points of min_j sigma_j(lam(U))."""
        return float(self.sig.min())

    def residual_values(self) -> np.ndarray:
        return self.fval - self.psi - self.beta


def _average_tied_gradients(lam: np.ndarray, fg: np.ndarray) -> np.ndarray:
    """Average f_i over clusters of (numerically) repeated eigenvalues.

    For symmetric f the analytic values already agree on ties; averaging
    removes the frame ambiguity of round-off-split eigenvalues.
    """
    N, n = lam.shape
    tol = 1e-10 * (1.0 + np.abs(lam).max(axis=1))
    out = fg.copy()
    if n == 2:
        tie = (lam[:, 0] - lam[:, 1]) <= tol
        mean = 0.5 * (fg[:, 0] + fg[:, 1])
        out[tie, 0] = mean[tie]
        out[tie, 1] = mean[tie]
        return out
    if n == 3:
        t01 = (lam[:, 0] - lam[:, 1]) <= tol
        t12 = (lam[:, 1] - lam[:, 2]) <= tol
        allt = t01 & t12
        mean3 = fg.mean(axis=1)
        for j in range(3):
            out[allt, j] = mean3[allt]
        only01 = t01 & ~allt
        m01 = 0.5 * (fg[:, 0] + fg[:, 1])
        out[only01, 0] = m01[only01]
        out[only01, 1] = m01[only01]
        only12 = t12 & ~allt
        m12 = 0.5 * (fg[:, 1] + fg[:, 2])
        out[only12, 1] = m12[only12]
        out[only12, 2] = m12[only12]
        return out
    raise NotImplementedError("tie averaging implemented for n in {2, 3}")


def evaluate_state(u: np.ndarray, prob: Problem, epsilon: float) -> StateEval:
    """Evaluate every pointwise ingredient of the residual at iterate u."""
    grid = prob.grid
    n = grid.n
    z = u[grid.interior].ravel()
    p = gradient_centered(u, grid).reshape(-1, n)
    Hc = covariant_hessian(u, prob.metric, grid).reshape(-1, n, n)
    x = prob.x_interior
    g = prob.g_interior
    A = prob.coeff.a_eval(x, z, p, g)
    U = Hc + A
    lam_g, V_g = eigen_wrt_metric_field(
        U.reshape(grid.interior_shape + (n, n)), prob.metric, grid
    )
    lam = lam_g.reshape(-1, n)
    V = V_g.reshape(-1, n, n)
    sig = sigma_margins(prob.fspec, lam)
    fval, fgrad, ok = f_and_grad_masked(prob.fspec, lam)
    if np.any(ok):
        fgrad[ok] = _average_tied_gradients(lam[ok], fgrad[ok])
    psi = prob.coeff.psi_eval(x, z, p, g)
    if psi.min() < PSI_FLOOR:
        raise PsiNotPositive(
            f"psi minimum {psi.min():.3e} below floor {PSI_FLOOR}; the method requires psi > 0"
        )
    beta, dbeta, _ = penalty(epsilon, z - prob.h_interior)
    return StateEval(z=z, p=p, hess_cov=Hc, A=A, U=U, lam=lam, V=V,
                     fval=fval, fgrad=fgrad, ok=ok, sig=sig,
                     psi=psi, beta=beta, dbeta=dbeta)


@dataclass
class ResidualResult:
    values: np.ndarray  # interior-shaped field, NaN at inadmissible points
    ok: np.ndarray  # admissibility mask, interior-shaped
    margin: float
    state: StateEval

    @property
    def admissible(self) -> bool:
        return bool(self.ok.all())

    def flagged_points(self, grid: ChartGrid):
        """Interior multi-indices where the residual is undefined."""
        bad = np.argwhere(~self.ok)
        return [tuple(int(v) + 1 for v in row) for row in bad]


def residual(u: np.ndarray, prob: Problem, epsilon: float) -> ResidualResult:
    """Penalized residual on interior points with admissibility flag.

    Values at flagged (non-admissible) points are NaN and must not be used.
    """
    st = evaluate_state(u, prob, epsilon)
    vals = st.residual_values().reshape(prob.grid.interior_shape)
    ok = st.ok.reshape(prob.grid.interior_shape)
    return ResidualResult(values=vals, ok=ok, margin=st.margin, state=st)


# ---------------------------------------------------------------------------
# linearization
# ---------------------------------------------------------------------------

@dataclass
class LinearizedSystem:
    """Pointwise coefficients and the assembled sparse Jacobian.

    first_order holds the covariant-operator coefficient
    (F^{ij} A^{ij}_{p_k} - psi_{p_k}); the assembled stencil additionally
    carries the -F^{ij} Gamma^k_{ij} correction from the covariant Hessian.
    """

    Fij: np.ndarray  # (N, n, n), dF/dU in chart coordinates
    first_order: np.ndarray  # (N, n)
    zero_order: np.ndarray  # (N,)
    matrix: sp.csr_matrix  # Jacobian over interior unknowns
    state: StateEval


def _spectral_Fij(state: StateEval) -> np.ndarray:
    return np.einsum("...ia,...a,...ja->...ij", state.V, state.fgrad, state.V)


def linearize(u: np.ndarray, prob: Problem, epsilon: float) -> LinearizedSystem:
    """Exact Jacobian of the discrete residual at an admissible iterate."""
    st = evaluate_state(u, prob, epsilon)
    if not st.admissible:
        bad = np.argwhere(~st.ok.reshape(prob.grid.interior_shape))
        raise NotAdmissible([tuple(int(v) + 1 for v in row) for row in bad])
    grid = prob.grid
    n = grid.n
    x, g = prob.x_interior, prob.g_interior
    Fij = _spectral_Fij(st)
    A_p = prob.coeff.a_p(x, st.z, st.p, g)  # (N, k, n, n)
    psi_p = prob.coeff.psi_p(x, st.z, st.p, g)
    A_z = prob.coeff.a_z(x, st.z, st.p, g)
    psi_z = prob.coeff.psi_z(x, st.z, st.p, g)

    first_order = np.einsum("...ij,...kij->...k", Fij, A_p) - psi_p
    zero_order = np.einsum("...ij,...ij->...", Fij, A_z) - psi_z - st.dbeta

    if prob.metric.is_flat:
        c1_stencil = first_order
    else:
        gamma = prob.metric.christoffel[grid.interior].reshape(-1, n, n, n)
        c1_stencil = first_order - np.einsum("...ij,...kij->...k", Fij, gamma)

    J = assemble_operator(grid, Fij, c1_stencil, zero_order)
    return LinearizedSystem(Fij=Fij, first_order=first_order,
                            zero_order=zero_order, matrix=J, state=st)


def assemble_operator(grid: ChartGrid, Fij: np.ndarray, c1: np.ndarray,
                      c0: np.ndarray | float) -> sp.csr_matrix:
    """Assemble sum_ij F^{ij} d_ij + sum_k c1_k d_k + c0 over interior
    unknowns with centered stencils; Dirichlet neighbors are dropped.

    Fij: (N, n, n); c1: (N, n); c0: (N,) or scalar.
    """
    n = grid.n
    h = grid.spacing
    N = grid.n_interior
    idx = grid.interior_index_map()
    c0 = np.broadcast_to(np.asarray(c0, dtype=float), (N,))

    def nb_index(offset):
        sl = []
        for d, s in enumerate(offset):
            lo, hi = 1 + s, grid.m[d] - 1 + s
            sl.append(slice(lo, hi if hi != grid.m[d] else None))
        return idx[tuple(sl)].ravel()

    rows_all, cols_all, data_all = [], [], []
    rows = np.arange(N)

    def push(offset, vals):
        cols = nb_index(offset)
        keep = cols >= 0
        rows_all.append(rows[keep])
        cols_all.append(cols[keep])
        data_all.append(vals[keep])

    center = c0.copy()
    for d in range(n):
        center -= 2.0 * Fij[:, d, d] / h[d] ** 2
    push((0,) * n, center)

    for d in range(n):
        for s in (+1, -1):
            off = [0] * n
            off[d] = s
            vals = Fij[:, d, d] / h[d] ** 2 + s * c1[:, d] / (2.0 * h[d])
            push(tuple(off), vals)

    for d in range(n):
        for e in range(d + 1, n):
            for sd in (+1, -1):
                for se in (+1, -1):
                    off = [0] * n
                    off[d], off[e] = sd, se
                    vals = sd * se * Fij[:, d, e] / (2.0 * h[d] * h[e])
                    push(tuple(off), vals)

    J = sp.coo_matrix(
        (np.concatenate(data_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(N, N),
    )
    return J.tocsr()


def operator_L(u: np.ndarray, prob: Problem, epsilon: float, v: np.ndarray) -> np.ndarray:
    """Apply the first-order linear operator at state u to the field v:

        L v = F^{ij} (nabla^2 v)_{ij} + (F^{ij} A^{ij}_{p_k} - psi_{p_k}) d_k v

    (principal and first-order parts only, no zero-order term).  Returns an
    interior-shaped field.
    """
    st = evaluate_state(u, prob, epsilon)
    if not st.admissible:
        bad = np.argwhere(~st.ok.reshape(prob.grid.interior_shape))
        raise NotAdmissible([tuple(int(vv) + 1 for vv in row) for row in bad])
    grid = prob.grid
    n = grid.n
    Fij = _spectral_Fij(st)
    A_p = prob.coeff.a_p(prob.x_interior, st.z, st.p, prob.g_interior)
    psi_p = prob.coeff.psi_p(prob.x_interior, st.z, st.p, prob.g_interior)
    c1 = np.einsum("...ij,...kij->...k", Fij, A_p) - psi_p
    Hv = covariant_hessian(v, prob.metric, grid).reshape(-1, n, n)
    dv = gradient_centered(v, grid).reshape(-1, n)
    out = np.einsum("...ij,...ij->...", Fij, Hv) + np.einsum("...k,...k->...", c1, dv)
    return out.reshape(grid.interior_shape)


# ---------------------------------------------------------------------------
# coefficient certification
# ---------------------------------------------------------------------------

@dataclass
class CoefficientCertification:
    passed: bool
    checks: dict  # name -> worst slack (>= -tol means pass)
    witness: tuple | None
    failed_condition: str | None


def certify_coefficients(prob: Problem, samples: int = 200, seed: int = 0,
                         tol: float = 1e-8) -> CoefficientCertification:
    """Sampling certification of the coefficient sign/concavity conditions:
    concavity of A^{xi xi} and of -psi in p, A^{xi xi}_z >= 0, -psi_z >= 0,
    and positivity of psi.

    Sampled over grid points, a z box around the boundary/subsolution range
    and a p ball; a certification, not a proof.  Sets coeff.certified.
    """
    rng = np.random.default_rng(seed)
    grid = prob.grid
    n = grid.n
    pts = grid.points().reshape(-1, n)
    x = pts[rng.integers(0, pts.shape[0], size=samples)]
    zscale = 1.0 + 2.0 * max(1.0, float(np.abs(prob.phi).max()))
    if prob.subsolution is not None:
        zscale = max(zscale, 1.0 + 2.0 * float(np.abs(prob.subsolution).max()))
    z = rng.uniform(-zscale, zscale, size=samples)
    p = rng.uniform(-10.0, 10.0, size=(samples, n))
    g = np.broadcast_to(np.eye(n), (samples, n, n)) if prob.metric.is_flat else \
        prob.metric.g.reshape(-1, n, n)[rng.integers(0, pts.shape[0], size=samples)]

    checks = {}
    witness = None
    failed = None

    def record(name, slack_arr, idx_fn):
        nonlocal witness, failed
        worst = float(np.min(slack_arr))
        checks[name] = worst
        if worst < -tol and failed is None:
            i = int(np.argmin(slack_arr))
            witness = idx_fn(i)
            failed = name

    psi = prob.coeff.psi_eval(x, z, p, g)
    record("psi > 0", psi - PSI_FLOOR, lambda i: (x[i], z[i], p[i]))

    psi_z = prob.coeff.psi_z(x, z, p, g)
    record("-psi_z >= 0", -psi_z, lambda i: (x[i], z[i], p[i]))

    A_z = prob.coeff.a_z(x, z, p, g)
    record("A^xx_z >= 0", np.linalg.eigvalsh(A_z)[:, 0], lambda i: (x[i], z[i], p[i]))

    # concavity in p by random-direction second differences
    t = 1e-3 * (1.0 + np.linalg.norm(p, axis=1, keepdims=True))
    dp = rng.standard_normal((samples, n))
    dp /= np.linalg.norm(dp, axis=1, keepdims=True)
    pp, pm = p + t * dp, p - t * dp
    scale2 = t.ravel() ** 2

    psi_pp = prob.coeff.psi_eval(x, z, pp, g)
    psi_pm = prob.coeff.psi_eval(x, z, pm, g)
    sec_psi = (psi_pp - 2.0 * psi + psi_pm) / scale2
    # -psi concave in p means the second difference of psi is >= 0
    record("-psi concave in p", sec_psi, lambda i: (x[i], z[i], p[i]))

    xi = rng.standard_normal((samples, n))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)

    def a_quad(parg):
        A = prob.coeff.a_eval(x, z, parg, g)
        return np.einsum("...i,...ij,...j->...", xi, A, xi)

    sec_A = (a_quad(pp) - 2.0 * a_quad(p) + a_quad(pm)) / scale2
    record("A^xx concave in p", -sec_A, lambda i: (x[i], z[i], p[i]))

    passed = failed is None
    prob.coeff.certified = passed
    return CoefficientCertification(passed=passed, checks=checks,
                                    witness=witness, failed_condition=failed)


# ---------------------------------------------------------------------------
# linear solves with the Laplace-Beltrami operator (initializer plumbing)
# ---------------------------------------------------------------------------

def laplace_beltrami_solve(grid: ChartGrid, metric: MetricField,
                           boundary_values: np.ndarray,
                           rhs: np.ndarray | float = 0.0) -> np.ndarray:
    """Solve g^{ij} (nabla^2 v)_{ij} = rhs with Dirichlet data; returns the
    full-grid field (boundary layer holds the data exactly)."""
    from scipy.sparse.linalg import spsolve

    n = grid.n
    N = grid.n_interior
    ginv = metric.ginv[grid.interior].reshape(-1, n, n)
    if metric.is_flat:
        c1 = np.zeros((N, n))
    else:
        gamma = metric.christoffel[grid.interior].reshape(-1, n, n, n)
        c1 = -np.einsum("...ij,...kij->...k", ginv, gamma)
    Lap = assemble_operator(grid, ginv, c1, 0.0)

    # move boundary contributions to the right side
    full = np.array(boundary_values, dtype=float, copy=True)
    full[grid.interior] = 0.0
    bc_field = _apply_full_operator(grid, metric, ginv, c1, full)
    b = np.broadcast_to(np.asarray(rhs, dtype=float), (N,)) - bc_field
    v_int = spsolve(Lap, b)
    out = np.array(boundary_values, dtype=float, copy=True)
    out[grid.interior] = v_int.reshape(grid.interior_shape)
    return out


def _apply_full_operator(grid, metric, Fij, c1, w):
    """Apply the plain-partial (Fij, c1) stencil operator to a full-grid
    field; this matches assemble_operator's discretization exactly."""
    from .geometry import hessian_centered

    n = grid.n
    Hw = hessian_centered(w, grid).reshape(-1, n, n)
    dw = gradient_centered(w, grid).reshape(-1, n)
    return np.einsum("...ij,...ij->...", Fij, Hw) + np.einsum("...k,...k->...", c1, dw)
