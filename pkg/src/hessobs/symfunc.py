"""Symmetric eigenvalue functions on Garding cones.

Implements the two operator families

    f(lam) = sigma_k(lam)^(1/k)                 on Gamma_k
    f(lam) = (sigma_k(lam)/sigma_l(lam))^(1/(k-l))   on Gamma_k, 1 <= l < k

together with first and second derivatives, cone classification, numerical
certification of the structure conditions (monotonicity, concavity,
positivity/boundary decay, the Euler-type lower bound, the negative-component
gradient bound, divergence along the diagonal ray), and a sampling-based
estimate of the uniform constant in the supporting-hyperplane inequality used
by the second-order estimates.

Internally both families share one code path: the pure root family is the
quotient with l = 0 and sigma_0 = 1.  All derivative formulas run through
logarithmic differentiation, which stays stable for eigenvalues spanning many
orders of magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutsideCone, StructureViolation

__all__ = [
    "SymmetricFunctionSpec",
    "ConePoint",
    "ThetaCertificate",
    "StructureReport",
    "sigma",
    "eval_f",
    "grad_f",
    "hess_f",
    "normal_vector",
    "cone_membership",
    "cone_tolerances",
    "check_structure_conditions",
    "sample_cone_points",
    "estimate_theta",
    "f_and_grad_masked",
    "sigma_margins",
]


@dataclass(frozen=True)
class SymmetricFunctionSpec:
    """Which symmetric function to use: dimension n, top index k, quotient
    index l (l = 0 selects the pure root family sigma_k^(1/k))."""

    n: int
    k: int
    l: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"dimension n must be >= 2, got {self.n}")
        if not (1 <= self.k <= self.n):
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.l and not (1 <= self.l < self.k):
            raise ValueError(f"quotient index needs 1 <= l < k, got l={self.l}, k={self.k}")

    @property
    def degree(self) -> int:
        """Homogeneity denominator k - l (both families are degree-1 in lam)."""
        return self.k - self.l

    @property
    def family(self) -> str:
        return "sigma_k_root" if self.l == 0 else "sigma_quotient_root"

    def __str__(self):
        if self.l == 0:
            return f"sigma_{self.k}^(1/{self.k}) on Gamma_{self.k}, n={self.n}"
        return f"(sigma_{self.k}/sigma_{self.l})^(1/{self.degree}) on Gamma_{self.k}, n={self.n}"


@dataclass(frozen=True)
class ConePoint:
    """Cone classification of one eigenvalue tuple."""

    lam: np.ndarray
    membership: str  # "interior" | "boundary" | "outside"
    tol: np.ndarray  # per-degree tolerance band actually used
    sigmas: np.ndarray  # sigma_1..sigma_k

    @property
    def interior(self) -> bool:
        return self.membership == "interior"


@dataclass(frozen=True)
class ThetaCertificate:
    """Sampled lower bound for the constant in the supporting-hyperplane
    inequality.  `theta_hat is None` means the normal-gap premise was never
    satisfied (vacuous)."""

    theta_hat: float | None
    zeta: float
    sample_count: int
    pair_count: int
    worst_pair: tuple | None  # (mu, lam) achieving theta_hat
    violations_at_zero: int
    min_bracket: float

    @property
    def vacuous(self) -> bool:
        return self.theta_hat is None


# ---------------------------------------------------------------------------
# elementary symmetric polynomials (batched)
# ---------------------------------------------------------------------------

def elementary_symmetric(lam: np.ndarray, kmax: int) -> np.ndarray:
    """sigma_0..sigma_kmax of each row of lam, shape (N, kmax+1).

    Built by the one-variable-at-a-time recurrence e_j += lam_c * e_{j-1},
    O(n*kmax) per point, no combinatorial enumeration.
    """
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    npts, n = lam.shape
    e = np.zeros((npts, kmax + 1))
    e[:, 0] = 1.0
    for c in range(n):
        jtop = min(kmax, c + 1)
        for j in range(jtop, 0, -1):
            e[:, j] += lam[:, c] * e[:, j - 1]
    return e


def _prefix_suffix_tables(lam: np.ndarray, kmax: int):
    """Prefix/suffix elementary-symmetric tables used for one-entry removal.

    P[:, i] holds sigma_0..sigma_kmax of lam[:, :i]; S[:, i] of lam[:, i:].
    """
    lam = np.atleast_2d(lam)
    npts, n = lam.shape
    P = np.zeros((npts, n + 1, kmax + 1))
    S = np.zeros((npts, n + 1, kmax + 1))
    P[:, 0, 0] = 1.0
    S[:, n, 0] = 1.0
    for i in range(n):
        P[:, i + 1] = P[:, i]
        jtop = min(kmax, i + 1)
        for j in range(jtop, 0, -1):
            P[:, i + 1, j] += lam[:, i] * P[:, i, j - 1]
    for i in range(n - 1, -1, -1):
        S[:, i] = S[:, i + 1]
        jtop = min(kmax, n - i)
        for j in range(jtop, 0, -1):
            S[:, i, j] += lam[:, i] * S[:, i + 1, j - 1]
    return P, S


def sigma_removed_one(lam: np.ndarray, j: int) -> np.ndarray:
    """sigma_j of lam with entry i removed, for every i: shape (N, n).

    Uses prefix/suffix convolution (the stable products-except-self scheme)
    rather than the cancellation-prone division recurrence.
    """
    lam = np.atleast_2d(lam)
    npts, n = lam.shape
    if j < 0:
        return np.zeros((npts, n))
    P, S = _prefix_suffix_tables(lam, j)
    out = np.zeros((npts, n))
    for i in range(n):
        acc = np.zeros(npts)
        for a in range(j + 1):
            acc += P[:, i, a] * S[:, i + 1, j - a]
        out[:, i] = acc
    return out


def _sigma_removed_two(lam: np.ndarray, j: int) -> np.ndarray:
    """sigma_j of lam with entries i1 and i2 removed, shape (N, n, n).

    Diagonal (i1 == i2) is left at zero; only needed off-diagonal.
    """
    lam = np.atleast_2d(lam)
    npts, n = lam.shape
    out = np.zeros((npts, n, n))
    if j < 0:
        return out
    for i1 in range(n):
        for i2 in range(i1 + 1, n):
            keep = [c for c in range(n) if c not in (i1, i2)]
            e = elementary_symmetric(lam[:, keep], j)
            out[:, i1, i2] = e[:, j]
            out[:, i2, i1] = e[:, j]
    return out


def sigma(j: int, lam) -> float:
    """j-th elementary symmetric polynomial of the tuple lam (sigma_0 = 1)."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not (0 <= j <= n):
        raise ValueError(f"need 0 <= j <= {n}, got {j}")
    return float(elementary_symmetric(lam[None, :], j)[0, j])


# ---------------------------------------------------------------------------
# cone membership
# ---------------------------------------------------------------------------

def cone_tolerances(spec: SymmetricFunctionSpec, lam: np.ndarray) -> np.ndarray:
    """Per-sigma tolerance band 1e-12 * (1 + |lam|)^j for j = 1..k.

    sigma_j is homogeneous of degree j, so the band must scale with degree;
    a single (1+|lam|)^k band misclassifies sigma_1 at large radii.
    """
    lam = np.atleast_2d(lam)
    r = 1.0 + np.linalg.norm(lam, axis=-1)
    j = np.arange(1, spec.k + 1)
    return 1e-12 * r[:, None] ** j[None, :]


def sigma_margins(spec: SymmetricFunctionSpec, lam: np.ndarray) -> np.ndarray:
    """sigma_1..sigma_k of each row, shape (N, k)."""
    e = elementary_symmetric(lam, spec.k)
    return e[:, 1 : spec.k + 1]


def cone_membership(spec: SymmetricFunctionSpec, lam, tol_cone=None) -> ConePoint:
    """Classify lam against Gamma_k: interior, boundary band, or outside."""
    lam = np.asarray(lam, dtype=float)
    sig = sigma_margins(spec, lam[None, :])[0]
    tol = (
        cone_tolerances(spec, lam[None, :])[0]
        if tol_cone is None
        else np.full(spec.k, float(tol_cone))
    )
    if np.any(sig < 0.0):
        membership = "outside"
    elif np.all(sig > tol):
        membership = "interior"
    else:
        membership = "boundary"
    return ConePoint(lam=lam, membership=membership, tol=tol, sigmas=sig)


def _require_inside(spec: SymmetricFunctionSpec, lam: np.ndarray):
    """Raise OutsideCone unless every sigma_j, j <= k, is strictly positive."""
    e = elementary_symmetric(lam[None, :], spec.k)[0]
    for j in range(1, spec.k + 1):
        if e[j] <= 0.0:
            raise OutsideCone(lam, e, j)
    return e


# ---------------------------------------------------------------------------
# f, Df, D^2 f
# ---------------------------------------------------------------------------

def _f_batch(spec: SymmetricFunctionSpec, lam: np.ndarray):
    """f on rows of lam via log form; caller guarantees positivity of sigmas.

    Returns (f, sig_k, sig_l).
    """
    e = elementary_symmetric(lam, spec.k)
    sk = e[:, spec.k]
    sl = e[:, spec.l] if spec.l else np.ones_like(sk)
    f = np.exp((np.log(sk) - np.log(sl)) / spec.degree)
    return f, sk, sl


def eval_f(spec: SymmetricFunctionSpec, lam) -> float:
    """Evaluate f(lam); positive and homogeneous of degree one on Gamma_k."""
    lam = np.asarray(lam, dtype=float)
    _require_inside(spec, lam)
    return float(_f_batch(spec, lam[None, :])[0][0])


def grad_f(spec: SymmetricFunctionSpec, lam) -> np.ndarray:
    """Gradient (f_1, ..., f_n); strictly positive on the cone interior."""
    lam = np.asarray(lam, dtype=float)
    _require_inside(spec, lam)
    f, g = _grad_batch(spec, lam[None, :])
    return g[0]


def _grad_batch(spec: SymmetricFunctionSpec, lam: np.ndarray):
    """(f, Df) on rows of lam.  Df by logarithmic differentiation:

        f_i = f/(k-l) * ( sigma_{k-1}(lam|i)/sigma_k - sigma_{l-1}(lam|i)/sigma_l ).
    """
    lam = np.atleast_2d(lam)
    f, sk, sl = _f_batch(spec, lam)
    rk = sigma_removed_one(lam, spec.k - 1)
    term = rk / sk[:, None]
    if spec.l:
        rl = sigma_removed_one(lam, spec.l - 1)
        term = term - rl / sl[:, None]
    grad = f[:, None] * term / spec.degree
    return f, grad


def hess_f(spec: SymmetricFunctionSpec, lam) -> np.ndarray:
    """Hessian D^2 f(lam); negative semidefinite on the cone (concavity)."""
    lam = np.asarray(lam, dtype=float)
    _require_inside(spec, lam)
    lam2 = lam[None, :]
    f, sk, sl = _f_batch(spec, lam2)
    n, m = spec.n, spec.degree

    def quotient_term(order, s_ord):
        # T_ij = d_j [ sigma_{order-1}(lam|i)/sigma_order ]
        r1 = sigma_removed_one(lam2, order - 1)  # (1, n)
        r2 = _sigma_removed_two(lam2, order - 2)  # (1, n, n), zero diagonal
        s = r1 / s_ord[:, None]
        return r2[0] / s_ord[0] - np.outer(s[0], s[0]), s[0]

    Tk, s_k = quotient_term(spec.k, sk)
    if spec.l:
        Tl, s_l = quotient_term(spec.l, sl)
    else:
        Tl, s_l = np.zeros((n, n)), np.zeros(n)
    g = (s_k - s_l) / m
    H = f[0] * (np.outer(g, g) + (Tk - Tl) / m)
    return 0.5 * (H + H.T)


def normal_vector(spec: SymmetricFunctionSpec, lam) -> np.ndarray:
    """Unit normal Df(lam)/|Df(lam)| to the level hypersurface through lam."""
    g = grad_f(spec, lam)
    return g / np.linalg.norm(g)


def f_and_grad_masked(spec: SymmetricFunctionSpec, lam: np.ndarray):
    """Batched (f, Df, ok) with NaN rows where lam is not strictly inside.

    The non-raising entry point for field-level operator assembly; callers
    must honor the mask.
    """
    lam = np.atleast_2d(lam)
    sig = sigma_margins(spec, lam)
    ok = np.all(sig > 0.0, axis=1)
    f = np.full(lam.shape[0], np.nan)
    grad = np.full(lam.shape, np.nan)
    if np.any(ok):
        f_ok, g_ok = _grad_batch(spec, lam[ok])
        f[ok] = f_ok
        grad[ok] = g_ok
    return f, grad, ok


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_cone_points(
    spec: SymmetricFunctionSpec,
    count: int,
    seed: int,
    rmin: float = 1e-3,
    rmax: float = 1e3,
    boundary_fraction: float = 0.1,
) -> np.ndarray:
    """Pseudo-random strictly interior points of Gamma_k.

    Directions are an even mix of positive-orthant and unrestricted Gaussian
    draws (rejection against the cone), radius is log-uniform on
    [rmin, rmax].  A `boundary_fraction` share is pushed along random exit
    segments to 0.999 of the exit parameter, which supplies near-boundary
    eigenvalue tuples with strongly tilted normals.
    """
    rng = np.random.default_rng(seed)
    pts = []
    n_boundary = int(count * boundary_fraction)
    n_bulk = count - n_boundary
    attempts = 0
    while len(pts) < n_bulk:
        attempts += 1
        if attempts > 500 * count:
            raise RuntimeError("cone sampler failed to reach requested count")
        d = rng.standard_normal(spec.n)
        if rng.random() < 0.5:
            d = np.abs(d) + 1e-3
        d /= np.linalg.norm(d)
        r = rmin * (rmax / rmin) ** rng.random()
        lam = r * d
        if np.all(sigma_margins(spec, lam[None, :])[0] > 0.0):
            pts.append(lam)
    while len(pts) < count:
        base = pts[rng.integers(0, n_bulk)] if n_bulk else np.ones(spec.n)
        d = rng.standard_normal(spec.n)
        d /= np.linalg.norm(d)
        t_exit = _exit_parameter(spec, base, d)
        if t_exit is None:
            continue
        lam = base + 0.999 * t_exit * d
        if np.all(sigma_margins(spec, lam[None, :])[0] > 0.0):
            pts.append(lam)
    return np.asarray(pts)


def _exit_parameter(spec, base, d, t_cap_factor=50.0, bisect_iters=80):
    """Smallest t with base + t*d outside Gamma_k, or None if the ray stays in."""

    def inside(t):
        return np.all(sigma_margins(spec, (base + t * d)[None, :])[0] > 0.0)

    scale = t_cap_factor * (1.0 + np.linalg.norm(base))
    t_hi = None
    t = 1e-3 * scale / t_cap_factor
    while t <= scale:
        if not inside(t):
            t_hi = t
            break
        t *= 2.0
    if t_hi is None:
        return None
    t_lo = 0.0
    for _ in range(bisect_iters):
        mid = 0.5 * (t_lo + t_hi)
        if inside(mid):
            t_lo = mid
        else:
            t_hi = mid
    return t_hi


# ---------------------------------------------------------------------------
# structure-condition certification
# ---------------------------------------------------------------------------

@dataclass
class StructureReport:
    spec: SymmetricFunctionSpec
    sample_count: int
    min_grad_component: float
    max_hess_eig_scaled: float  # lambda_max(D^2 f) / (1 + |D^2 f|_inf), worst case
    min_f: float
    boundary_decay_ratios: list  # f_last/f_first per sampled boundary ray
    min_euler_bound: float  # min of sum f_i lam_i + K0 (1 + sum f_i)
    K0: float
    nu0_hat: float | None  # min f_j/(1+sum f_i) over samples with lam_j < 0
    ladder_values: list  # f(2^s * 1), s = 0..40
    ladder_monotone: bool

    def passed(self) -> bool:
        ok = (
            self.min_grad_component > 0.0
            and self.max_hess_eig_scaled <= 1e-8
            and self.min_f > 0.0
            and self.min_euler_bound >= 0.0
            and self.ladder_monotone
        )
        if self.nu0_hat is not None:
            ok = ok and self.nu0_hat > 0.0
        return ok


def check_structure_conditions(
    spec: SymmetricFunctionSpec,
    sample_count: int,
    seed: int,
    K0: float = 0.0,
    n_rays: int = 8,
) -> StructureReport:
    """Certify the structure conditions on pseudo-random interior samples.

    Checks, in order: positivity of every gradient component; concavity via
    the largest Hessian eigenvalue; positivity of f with decay to zero along
    sampled rays to the cone boundary; the Euler-type lower bound
    sum f_i lam_i + K0 (1 + sum f_i) >= 0; the empirical gradient bound at
    samples with a negative component; divergence of f along R * (1,..,1)
    for R on a doubling ladder up to 2^40.

    Raises StructureViolation with the witness point on the first failure.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    lam = sample_cone_points(spec, sample_count, seed)
    f, grad = _grad_batch(spec, lam)

    min_grad = float(grad.min())
    if min_grad <= 0.0:
        idx = np.unravel_index(np.argmin(grad), grad.shape)[0]
        raise StructureViolation("monotonicity f_i > 0", lam[idx], f"min f_i = {min_grad:.3e}")

    worst_scaled = -np.inf
    for p in range(lam.shape[0]):
        H = hess_f(spec, lam[p])
        top = float(np.linalg.eigvalsh(H)[-1])
        scaled = top / (1.0 + np.abs(H).max())
        if scaled > worst_scaled:
            worst_scaled = scaled
            worst_pt = lam[p]
    if worst_scaled > 1e-8:
        raise StructureViolation("concavity of f", worst_pt, f"lambda_max(D^2 f) slack {worst_scaled:.3e}")

    min_f = float(f.min())
    if min_f <= 0.0:
        raise StructureViolation("positivity f > 0", lam[np.argmin(f)], f"min f = {min_f:.3e}")

    decay = _boundary_decay(spec, seed + 1, n_rays)

    euler = np.einsum("ij,ij->i", grad, lam) + K0 * (1.0 + grad.sum(axis=1))
    min_euler = float(euler.min())
    if min_euler < 0.0:
        raise StructureViolation(
            "Euler-type bound sum f_i lam_i + K0 (1+sum f_i) >= 0",
            lam[np.argmin(euler)],
            f"value {min_euler:.3e} with K0 = {K0}",
        )

    neg = lam < 0.0
    if np.any(neg):
        denom = 1.0 + grad.sum(axis=1)
        ratios = np.where(neg, grad, np.inf) / denom[:, None]
        nu0 = float(ratios.min())
        if nu0 <= 0.0:
            bad = np.unravel_index(np.argmin(ratios), ratios.shape)[0]
            raise StructureViolation("gradient bound at negative components", lam[bad], f"nu0 = {nu0:.3e}")
    else:
        nu0 = None

    ladder = [eval_f(spec, (2.0**s) * np.ones(spec.n)) for s in range(41)]
    monotone = all(b > a for a, b in zip(ladder, ladder[1:])) and ladder[-1] > 1e9 * ladder[0]
    if not monotone:
        raise StructureViolation("divergence of f(R*1)", 2.0**40 * np.ones(spec.n), "ladder not monotone divergent")

    return StructureReport(
        spec=spec,
        sample_count=sample_count,
        min_grad_component=min_grad,
        max_hess_eig_scaled=worst_scaled,
        min_f=min_f,
        boundary_decay_ratios=decay,
        min_euler_bound=min_euler,
        K0=K0,
        nu0_hat=nu0,
        ladder_values=ladder,
        ladder_monotone=monotone,
    )


def _boundary_decay(spec, seed, n_rays, s_max=40):
    """f along segments halving the distance to sampled boundary points.

    Near a generic boundary point f vanishes like delta^(1/(k-l)), so over
    the last ten halvings the value must drop by about 2^(-10/(k-l));
    that rate is checked with a 4x band (scale-free, so prefactors from the
    exit geometry cannot pollute it), together with tail monotonicity and
    absolute smallness of the final sample.  Returns the decade rates.
    """
    rng = np.random.default_rng(seed)
    anchor = np.ones(spec.n)
    rates = []
    tries = 0
    target_rate = 4.0 * 2.0 ** (-10.0 / spec.degree)
    while len(rates) < n_rays:
        tries += 1
        if tries > 200 * n_rays:
            raise RuntimeError("no exiting rays found")
        d = rng.standard_normal(spec.n)
        d /= np.linalg.norm(d)
        t_exit = _exit_parameter(spec, anchor, d)
        if t_exit is None:
            continue
        vals = []
        for s in range(s_max + 1):
            pt = anchor + (1.0 - 2.0**-s) * t_exit * d
            sig = sigma_margins(spec, pt[None, :])[0]
            if np.any(sig <= 0.0):
                break
            vals.append(float(_f_batch(spec, pt[None, :])[0][0]))
        if len(vals) < 12:
            continue
        tail = vals[-5:]
        if not all(b < a for a, b in zip(tail, tail[1:])):
            raise StructureViolation("decay of f toward the cone boundary", anchor + t_exit * d,
                                     "tail not decreasing")
        rate = vals[-1] / vals[-11]
        if rate > target_rate:
            raise StructureViolation("decay of f toward the cone boundary", anchor + t_exit * d,
                                     f"decade rate {rate:.3e} > target {target_rate:.3e}")
        if vals[-1] > 0.05 * max(vals):
            raise StructureViolation("decay of f toward the cone boundary", anchor + t_exit * d,
                                     f"final value {vals[-1]:.3e} not small against max {max(vals):.3e}")
        rates.append(rate)
    return rates


# ---------------------------------------------------------------------------
# supporting-hyperplane constant
# ---------------------------------------------------------------------------

def estimate_theta(
    spec: SymmetricFunctionSpec,
    K_samples: np.ndarray,
    zeta: float,
    lambda_samples: np.ndarray,
    zero_guard: float = 1e-10,
) -> ThetaCertificate:
    """Sampled minimum of the normalized supporting-hyperplane excess.

    Over all pairs (mu, lam) with |nu_mu - nu_lam| >= zeta, returns

        theta_hat = min [ sum_i f_i(lam)(mu_i - lam_i) - f(mu) + f(lam) ]
                        / (1 + sum_i f_i(lam)).

    Vacuous (theta_hat = None) when no sampled pair meets the normal-gap
    premise.  Every pair, gap or not, is also checked against the plain
    concavity inequality (the bracket must be >= 0 up to round-off); failures
    are counted in `violations_at_zero` and indicate an implementation bug.
    """
    if zeta <= 0.0:
        raise ValueError("zeta must be positive")
    K = np.atleast_2d(np.asarray(K_samples, dtype=float))
    lams = np.atleast_2d(np.asarray(lambda_samples, dtype=float))
    for row in K:
        _require_inside(spec, row)
    for row in lams:
        _require_inside(spec, row)

    f_lam, g_lam = _grad_batch(spec, lams)
    f_mu, g_mu = _grad_batch(spec, K)
    nu_lam = g_lam / np.linalg.norm(g_lam, axis=1, keepdims=True)
    nu_mu = g_mu / np.linalg.norm(g_mu, axis=1, keepdims=True)
    denom = 1.0 + g_lam.sum(axis=1)

    theta = np.inf
    worst = None
    pair_count = 0
    violations = 0
    min_bracket = np.inf
    # chunk over K to bound the pair matrices
    chunk = max(1, int(2e6 / max(1, lams.shape[0])))
    for s in range(0, K.shape[0], chunk):
        mu_blk = K[s : s + chunk]
        # bracket[t, j] for lam_t, mu_j
        bracket = g_lam @ mu_blk.T - np.einsum("ij,ij->i", g_lam, lams)[:, None] \
            - f_mu[s : s + chunk][None, :] + f_lam[:, None]
        scale = 1.0 + np.abs(f_lam)[:, None] + np.abs(f_mu[s : s + chunk])[None, :]
        violations += int(np.count_nonzero(bracket < -zero_guard * scale))
        min_bracket = min(min_bracket, float(bracket.min()))
        gaps = np.linalg.norm(nu_lam[:, None, :] - nu_mu[None, s : s + chunk, :], axis=2)
        mask = gaps >= zeta
        pair_count += int(np.count_nonzero(mask))
        if np.any(mask):
            ratios = np.where(mask, bracket / denom[:, None], np.inf)
            idx = np.unravel_index(np.argmin(ratios), ratios.shape)
            if ratios[idx] < theta:
                theta = float(ratios[idx])
                worst = (mu_blk[idx[1]].copy(), lams[idx[0]].copy())

    if pair_count == 0:
        return ThetaCertificate(None, zeta, lams.shape[0], 0, None, violations, min_bracket)
    if theta <= 0.0:
        raise StructureViolation(
            "supporting-hyperplane constant",
            worst,
            f"theta_hat = {theta:.3e} <= 0 despite normal gap >= {zeta}",
        )
    return ThetaCertificate(theta, zeta, lams.shape[0], pair_count, worst, violations, min_bracket)
