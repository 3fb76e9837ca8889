"""Smooth bump and decay profiles driving the local surgery.

Two ingredients:

* ``BumpZ`` -- an even C^inf bump Z with Z(0) = 1, support in (-rho/2, rho/2)
  and |Z'| < 4/rho (plateau + integrated-bump ramps keep a ~35% slope margin).

* ``BetaProfile`` -- the decreasing C^inf profile beta with beta(t) = b on
  [0, t1], support in [0, r0] (r0 = k/2 <= k), and the hard envelope
  -k <= beta'(t) t <= 0.  It is built in logarithmic time u = ln(r0/t) by
  integrating an explicit rate

      psi(t) t = Phi(u) = min(k/m_k, (lh/(2 m_pd)) e^{u/(2 m_pd)})
                  * ramp(u) * ramp(L - u),          lh = lam_s/2,

  whose exponential branch keeps beta(t) + 2 beta'(t) t >= -lam_s (1 - margin)
  pointwise.  That lower bound is what makes the perturbed 2x2 tangent block
  positive definite at desk scale, where k is comparable to lam_s and the
  asymptotic smallness arguments give no slack.  The plateau height is pinned
  by solving the total mass for the cutoff time L, so beta(0) = b lands at the
  midpoint of (1 - lam_c, 1 - lam_c + k).

Every profile is validated on construction (grid checks of the envelope, the
monotonicity, the positive-definiteness margin and the mass); a profile that
fails any check is never returned.  The budget b/k fixes the number of
log-decades the decay must span, so t1 ~ r0 e^{-b m/k}; if that underflows
double precision the construction refuses with the required t1 attached.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

MIN_REPRESENTABLE_T1 = 1e-280


class ProfileInfeasibleError(ValueError):
    def __init__(self, message, required_t1):
        super().__init__(message)
        self.required_t1 = required_t1


class _Ramp:
    """C^inf ramp 0 -> 1 on [0, 1], flat to all orders at both ends.

    Normalized cumulative of w(s) = exp(-eta/(s(1-s))); small eta keeps the
    max slope close to 1 (about 1.09 for eta = 0.02).
    """

    def __init__(self, eta=0.02, nodes=4097):
        self.eta = eta
        s = np.linspace(0.0, 1.0, nodes)
        w = self._w(s)
        self.mass = quad(lambda u: float(np.exp(-eta / (u * (1 - u)))), 0, 1,
                         limit=200)[0]
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(s))])
        cum *= 1.0 / cum[-1]
        self._spline = CubicSpline(s, cum)
        self.max_slope = float(w.max() / self.mass)

    def _w(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        m = (s > 0.0) & (s < 1.0)
        out[m] = np.exp(-self.eta / (s[m] * (1.0 - s[m])))
        return out

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        inner = self._spline(np.clip(s, 0.0, 1.0))
        out = np.where(s <= 0.0, 0.0, np.where(s >= 1.0, 1.0, np.clip(inner, 0.0, 1.0)))
        return out if out.ndim else float(out)

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        out = np.where((s <= 0.0) | (s >= 1.0), 0.0, self._w(np.clip(s, 0.0, 1.0)) / self.mass)
        return out if out.ndim else float(out)


_RAMP = _Ramp()


@dataclass(frozen=True)
class BumpZ:
    """Even C^inf bump: Z(0)=1, supp Z in (-rho/2, rho/2), |Z'| < 4/rho."""

    rho: float
    plateau: float = 0.15     # |2z/rho| <= plateau is the flat top
    max_abs_deriv: float = field(default=0.0)

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        zg = np.linspace(-self.rho / 2, self.rho / 2, 100001)
        md = float(np.abs(self.deriv(zg)).max())
        object.__setattr__(self, "max_abs_deriv", md)
        if not md < 4.0 / self.rho:
            raise ArithmeticError("bump slope bound |Z'| < 4/rho violated")
        if abs(self(0.0) - 1.0) > 1e-15:
            raise ArithmeticError("Z(0) != 1")

    def _arg(self, z):
        w = np.abs(2.0 * np.asarray(z, dtype=float) / self.rho)
        return (1.0 - w) / (1.0 - self.plateau)

    def __call__(self, z):
        return _RAMP(self._arg(z))

    def deriv(self, z):
        z = np.asarray(z, dtype=float)
        w = 2.0 * z / self.rho
        slope = _RAMP.deriv(self._arg(z)) / (1.0 - self.plateau)
        out = -np.sign(w) * slope * (2.0 / self.rho)
        return out if out.ndim else float(out)


def make_Z(rho):
    return BumpZ(rho=rho)


@dataclass
class BetaProfile:
    """Decreasing C^inf profile with plateau b, support [0, r0] and
    validated envelope/positivity margins (see module docstring)."""

    k: float
    b: float                  # plateau height beta(0)
    r0: float                 # support end (beta = 0 for t >= r0)
    t1: float                 # plateau end  (beta = b for t <= t1)
    L: float                  # log-length: t1 = r0 exp(-L)
    lam_hat: float            # positivity reserve in the exponential branch
    m_pd: float
    m_k: float
    u_ramp: float
    diagnostics: dict

    # ---- construction -----------------------------------------------------

    @classmethod
    def build(cls, lam_s, lam_c, k, m_pd=1.05, m_k=1.05, u_ramp=1.0):
        gap = lam_c - lam_s
        if not 0.0 < k < gap:
            raise ValueError(f"need 0 < k < lambda_c - lambda_s = {gap:.6g}, got {k:.6g}")
        r0 = 0.5 * k
        b_target = (1.0 - lam_c) + 0.5 * k      # midpoint of (1-lam_c, 1-lam_c+k)
        lam_hat = 0.5 * lam_s

        def phi(u, L):
            u = np.asarray(u, dtype=float)
            ideal = np.minimum(k / m_k,
                               (lam_hat / (2.0 * m_pd)) * np.exp(u / (2.0 * m_pd)))
            return ideal * _RAMP(u / u_ramp) * _RAMP((L - u) / u_ramp)

        def mass(L):
            uu = np.linspace(0.0, L, 20001)
            return float(np.trapezoid(phi(uu, L), uu))

        # the k-rate branch dominates the budget: L ~ m_k b / k, plus the
        # exponential ramp-in; bracket generously and solve for the cutoff
        L_hi = m_k * b_target / k + 4.0 * m_pd * np.log(1.0 + 4.0 * k / lam_hat) + 8.0
        L_max_repr = np.log(r0 / MIN_REPRESENTABLE_T1)
        if L_hi > L_max_repr and mass(L_max_repr) < b_target:
            need = r0 * np.exp(-L_hi)
            raise ProfileInfeasibleError(
                f"profile budget needs t1 ~ {need:.3e}, below the representable "
                f"floor {MIN_REPRESENTABLE_T1:.0e}; increase k or lower b",
                required_t1=need,
            )
        L = brentq(lambda L: mass(L) - b_target, 1.0, min(L_hi, L_max_repr),
                   xtol=1e-12, rtol=8.9e-16)

        self = cls(k=k, b=b_target, r0=r0, t1=r0 * np.exp(-L), L=L,
                   lam_hat=lam_hat, m_pd=m_pd, m_k=m_k, u_ramp=u_ramp,
                   diagnostics={})
        self._phi_raw = phi
        self._tabulate()
        self.b = self._cum[-1]  # exact mass; within brentq tolerance of target
        self._validate(lam_s, lam_c, b_target)
        return self

    def _tabulate(self):
        # graded u-grid: dense through both ramps, uniform across the k-rate run
        L, u_r = self.L, self.u_ramp
        lead = np.linspace(0.0, min(2.0 * u_r, 0.25 * L), 3001)
        bulk = np.linspace(lead[-1], L - 2.0 * u_r, 24001)[1:]
        tail = np.linspace(L - 2.0 * u_r, L, 3001)[1:]
        ug = np.concatenate([lead, bulk, tail])
        # cumulative via per-interval 3-point Gauss-Legendre
        x3 = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
        w3 = np.array([5.0, 8.0, 5.0]) / 9.0
        a, bnd = ug[:-1], ug[1:]
        mid, half = 0.5 * (a + bnd), 0.5 * (bnd - a)
        nodes = mid[:, None] + half[:, None] * x3[None, :]
        vals = self.phi_u(nodes.ravel()).reshape(nodes.shape)
        incr = half * (vals @ w3)
        cum = np.concatenate([[0.0], np.cumsum(incr)])
        self._ugrid = ug
        self._cum = cum
        self._beta_u_spline = CubicSpline(ug, cum)

    # ---- evaluation -------------------------------------------------------

    def phi_u(self, u):
        """psi(t) t = -beta'(t) t at u = ln(r0/t)."""
        return self._phi_raw(u, self.L)

    def _u_of_t(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(self.r0 / np.maximum(t, 1e-300))

    def beta(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("beta is defined for t >= 0")
        u = self._u_of_t(t)
        inner = self._beta_u_spline(np.clip(u, 0.0, self.L))
        out = np.where(t >= self.r0, 0.0, np.where(u >= self.L, self.b, inner))
        out = np.clip(out, 0.0, self.b)
        return out if out.ndim else float(out)

    def beta_prime_times_t(self, t):
        """beta'(t) * t, the safe product form; in [-k, 0] everywhere."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("beta is defined for t >= 0")
        u = self._u_of_t(t)
        out = np.where((t >= self.r0) | (u >= self.L), 0.0,
                       -self.phi_u(np.clip(u, 0.0, self.L)))
        return out if out.ndim else float(out)

    def beta_prime(self, t):
        t = np.asarray(t, dtype=float)
        out = self.beta_prime_times_t(t) / np.maximum(t, 1e-300)
        return out if out.ndim else float(out)

    def lambda1(self, t):
        """beta(t) + 2 beta'(t) t  (smaller tangent-block eigenvalue part)."""
        return self.beta(t) + 2.0 * self.beta_prime_times_t(t)

    def lambda2(self, t):
        return self.beta(t)

    def y_star(self, lam_c):
        """Central half-width of the widened fixed-point pair:
        beta(y*^2) = 1 - lam_c."""
        target = 1.0 - lam_c
        if not 0.0 < target < self.b:
            raise ValueError("1 - lam_c outside (0, beta(0))")
        f = lambda lu: float(self._beta_u_spline(lu) - target)
        u = brentq(f, 1e-12, self.L - 1e-12, xtol=1e-14, rtol=8.9e-16)
        return float(np.sqrt(self.r0 * np.exp(-u)))

    # ---- validation -------------------------------------------------------

    def _validate(self, lam_s, lam_c, b_target):
        k = self.k
        if abs(self.b - b_target) > 1e-8:
            raise ArithmeticError("profile mass missed the plateau target")
        if not (1.0 - lam_c < self.b < 1.0 - lam_c + k):
            raise ArithmeticError("plateau height outside (1-lam_c, 1-lam_c+k)")
        if not (lam_s + self.b < 1.0 < lam_c + self.b < 1.0 + k):
            raise ArithmeticError("spectral modification inequalities violated")
        tg = self.r0 * np.exp(-np.linspace(0.0, self.L, 20001))
        bt = self.beta(tg)
        bpt = self.beta_prime_times_t(tg)
        checks = [
            (np.all(bpt <= 0.0) and np.all(bpt >= -k), "envelope -k <= beta' t <= 0"),
            (np.all(np.diff(self.beta(np.sort(tg))) <= 1e-15), "beta decreasing"),
            (np.all(-2.0 * bpt <= 2.0 * k + 1e-15), "eigenvalue slack <= 2k"),
            (np.all(bt + 2.0 * bpt >= -k), "lambda1 > -k"),
        ]
        pd_margin = float((lam_s + bt + 2.0 * bpt).min())
        checks.append((pd_margin > 0.1 * lam_s,
                       "positive-definiteness margin lam_s + lambda1"))
        for ok, name in checks:
            if not ok:
                raise ArithmeticError(f"beta profile invariant violated: {name}")
        self.diagnostics = {
            "max_abs_beta_prime_t": float(np.abs(bpt).max()),
            "min_lambda1": float((bt + 2.0 * bpt).min()),
            "pd_margin": pd_margin,
            "max_beta_sqrt_r": float((bt * np.sqrt(tg)).max()),
            "c0_image_s": float((np.sqrt(tg) * (lam_s + bt)).max()),
            "c0_image_c": float((np.sqrt(tg) * (lam_c + bt)).max()),
            "mass": float(self._cum[-1]),
        }


def make_beta(model, k, **kw):
    """Profile for a model and modification size k (0 < k < lam_c - lam_s)."""
    return BetaProfile.build(model.lambda_s, model.lambda_c, k, **kw)


def eval_beta(profile, t):
    return profile.beta(t)


def eval_betaprime(profile, t):
    return profile.beta_prime(t)


def eval_Z(bump, z):
    return bump(z)


def eval_Zprime(bump, z):
    return bump.deriv(z)
