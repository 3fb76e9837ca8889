"""The locally modified automorphism g: evaluation, inverse, exact Jacobian.

In the adapted chart (x, y, z) around the fixed point p = pi(0),

    g(x, y, z) = (lam_s x, lam_c y, lam_u z) + Z(z) beta(r) (x, y, 0),
    r = x^2 + y^2,

and g = B outside the support cylinder {r < r0, |z| < rho/2}.  The support
cylinder is required to sit inside the adapted ball B(p, rho) (k <= 3 rho^2/4)
so the two branches agree identically on the overlap, and rho is small enough
that the 27 lattice translates of the ball are disjoint; the surgery is then
well defined on the torus.

The inverse exploits the triangular structure.  B^{-1} = M^2 is an integer
matrix, so eta -> M^2 eta (mod 1) is exact; that IS the preimage unless the
true preimage lies in the support cylinder.  In-cylinder preimages are found
by scanning the lifts of eta along the unstable line: writing a candidate lift
as t e_u + (d1, d2, 0), the transversal chart offset (u1, u2) is constant in t
and indexed by the plane crossings W_j = trace(eta) + j tau (mod Z^2) of the
linear return translation, so candidates are exactly the j with W_j inside a
small image box.  Each candidate reduces to a scalar radial equation
(positive-definiteness of the tangent block makes the in-cylinder branch
injective), solved by bisection.
"""

from dataclasses import dataclass, field

import numpy as np

from . import torus
from .family import AnosovModel, make_model
from .profiles import BetaProfile, BumpZ, make_Z, make_beta

_LD = np.longdouble


def default_rho(k):
    """Smallest comfortable surgical radius: at least 1/8, raised when the
    support cylinder (radius sqrt(k), half-height rho/2) needs more room to
    fit inside the adapted ball of radius rho."""
    need = 1.05 * 2.0 * np.sqrt(k / 3.0)
    return float(min(0.24, max(0.125, need)))


def _inv_longdouble(A):
    # LAPACK has no extended-precision path; one Newton step refines the
    # double-precision inverse to ~1e-19
    A = np.asarray(A, dtype=_LD)
    X = np.linalg.inv(np.asarray(A, dtype=float)).astype(_LD)
    for _ in range(2):
        X = X @ (2.0 * np.eye(3, dtype=_LD) - A @ X)
    return X


@dataclass
class DAParams:
    """Modified-map parameter record; immutable after construction."""

    model: AnosovModel
    k: float
    rho: float
    Z: BumpZ | None
    beta: BetaProfile | None
    bundle_iterations: int = field(default=0)
    scan_jmax: int = field(default=0)
    box_s: float = field(default=0.0)
    box_c: float = field(default=0.0)

    @classmethod
    def build(cls, model_or_a=3, k="auto", rho=None, **profile_kw):
        model = (model_or_a if isinstance(model_or_a, AnosovModel)
                 else make_model(model_or_a))
        if k == "auto":
            k = 0.9 * model.spectral_gap
        k = float(k)
        if k == 0.0:
            self = cls(model=model, k=0.0, rho=rho or 0.125, Z=None, beta=None)
            self._finish()
            return self
        rho = default_rho(k) if rho is None else float(rho)
        if not 0.0 < k < model.spectral_gap:
            raise ValueError("need 0 < k < lambda_c - lambda_s")
        if not np.sqrt(k) < rho:
            raise ValueError("need sqrt(k) < rho")
        if k > 0.75 * rho ** 2:
            raise ValueError("support cylinder does not fit in the adapted "
                             "rho-ball; raise rho or lower k")
        if rho >= 0.25:
            raise ValueError("rho must stay below 1/4 (adapted units)")
        if 2.0 * rho >= model.min_lattice_gap:
            raise ValueError("rho-ball lattice translates overlap")
        beta = make_beta(model, k, **profile_kw)
        self = cls(model=model, k=k, rho=rho, Z=make_Z(rho), beta=beta)
        self._finish()
        return self

    def _finish(self):
        lam_s, lam_c, lam_u = self.model.spectrum
        e_u3 = self.model.frame.e_u[2]
        if not self.is_linear:
            d = self.beta.diagnostics
            self.box_s = 1.25 * d["c0_image_s"]
            self.box_c = 1.25 * d["c0_image_c"]
            self.scan_jmax = int(np.ceil((lam_u * self.rho / 2.0) * e_u3)) + 3
            lip_sup = (lam_c + self.beta.b + self.k) / lam_u
        else:
            lip_sup = lam_c / lam_u
        n = 1
        while 2.0 * lip_sup ** n >= 1e-10:
            n += 1
        self.bundle_iterations = max(n, 2)
        self._tau_raw = self.model.frame.e_u[:2] / e_u3
        self._R2 = self.model.frame.inverse[:2, :2]
        self._row3 = self.model.frame.inverse[2, :2]
        self._B_ld = np.asarray(self.model.B_int, dtype=_LD)
        self._Binv_ld = np.asarray(self.model.B_inv_int, dtype=_LD)
        self._F_ld = np.asarray(self.model.frame.basis, dtype=_LD)
        self._Finv_ld = _inv_longdouble(self.model.frame.basis)

    @property
    def is_linear(self):
        return self.beta is None

    @property
    def r0(self):
        return 0.0 if self.is_linear else self.beta.r0

    @property
    def sup_c0_distance(self):
        """sup-norm of g - B in the adapted metric: max beta(r) sqrt(r)."""
        return 0.0 if self.is_linear else self.beta.diagnostics["max_beta_sqrt_r"]

    # ---- chart helpers ----------------------------------------------------

    def chart(self, xi):
        return self.model.frame.nearest_lift_chart(xi)

    def in_support(self, c):
        """Support-cylinder membership of chart points (..., 3)."""
        if self.is_linear:
            return np.zeros(np.asarray(c).shape[:-1], dtype=bool)
        r = c[..., 0] ** 2 + c[..., 1] ** 2
        return (r < self.r0) & (np.abs(c[..., 2]) < self.rho / 2.0)

    def correction_chart(self, c):
        """Chart components of g - B at chart points: Z(z) beta(r) (x, y, 0)."""
        c = np.asarray(c, dtype=float)
        out = np.zeros_like(c)
        if self.is_linear:
            return out
        m = self.in_support(c)
        if np.any(m):
            cm = c[m]
            r = cm[:, 0] ** 2 + cm[:, 1] ** 2
            amp = self.Z(cm[:, 2]) * self.beta.beta(r)
            out[m, 0] = amp * cm[:, 0]
            out[m, 1] = amp * cm[:, 1]
        return out

    # ---- the map ----------------------------------------------------------

    def apply_g(self, xi, longdouble=False):
        """g on the torus, batched over (..., 3)."""
        xi = np.asarray(xi)
        if longdouble:
            xi = xi.astype(_LD)
            lin = xi @ self._B_ld.T
        else:
            xi = np.asarray(xi, dtype=float)
            lin = xi @ self.model.B.T
        if not self.is_linear:
            c = self.chart(np.asarray(xi, dtype=float))
            corr = self.correction_chart(c) @ self.model.frame.basis.T
            lin = lin + corr
        return np.mod(lin, 1.0) if longdouble else torus.project(lin)

    def apply_g_inverse(self, eta, longdouble=False, check=False):
        """g^{-1} on the torus, batched over (n, 3) or (3,)."""
        was_1d = np.asarray(eta).ndim == 1
        eta = np.atleast_2d(np.asarray(eta))
        dt = _LD if longdouble else float
        eta = eta.astype(dt)
        Binv = self._Binv_ld if longdouble else self.model.B_inv
        out = np.mod(eta @ Binv.T, 1.0)
        if not self.is_linear:
            hit_idx, hit_chart = self._support_preimages(np.asarray(eta, dtype=float))
            if hit_idx.size:
                F = self._F_ld if longdouble else self.model.frame.basis
                lift = hit_chart.astype(dt) @ F.T
                out[hit_idx] = np.mod(lift, 1.0)
            if check:
                res = torus.adapted_distance(
                    np.asarray(self.apply_g(out), dtype=float),
                    np.asarray(eta, dtype=float), self.model.frame)
                if np.any(res > 1e-10):
                    raise ArithmeticError(
                        f"inverse residual {res.max():.2e} exceeds 1e-10")
        out = np.where(np.abs(out) < torus.SNAP_TOL, 0.0, out)
        return out[0] if was_1d else out

    def _support_preimages(self, eta):
        """Indices of eta rows whose g-preimage lies in the support cylinder,
        with the preimage chart coordinates (see module docstring)."""
        lam_s, lam_c, lam_u = self.model.spectrum
        e_u = self.model.frame.e_u
        n = eta.shape[0]
        t0 = eta[:, 2] / e_u[2]
        trace = eta[:, :2] - eta[:, 2, None] * self._tau_raw[None, :]
        jj = np.arange(-self.scan_jmax, self.scan_jmax + 1)
        W = trace[:, None, :] + jj[None, :, None] * self._tau_raw[None, None, :]
        d = np.mod(W + 0.5, 1.0) - 0.5                       # (n, J, 2)
        u12 = d @ self._R2.T                                  # (n, J, 2)
        u3 = (t0[:, None] - jj[None, :] / e_u[2]) + d @ self._row3
        cand = ((np.abs(u12[..., 0]) <= self.box_s)
                & (np.abs(u12[..., 1]) <= self.box_c)
                & (np.abs(u3) < lam_u * self.rho / 2.0))
        if not np.any(cand):
            return np.empty(0, dtype=int), np.empty((0, 3))
        pi_idx, j_idx = np.nonzero(cand)
        u1s, u2s = u12[pi_idx, j_idx, 0], u12[pi_idx, j_idx, 1]
        zs = u3[pi_idx, j_idx] / lam_u
        Zv = self.Z(zs)
        sol = self._radial_solve(u1s, u2s, Zv)
        ok = ~np.isnan(sol[:, 0])
        keep = np.zeros(n, dtype=bool)
        out_idx, out_chart = [], []
        for row, z, s, good in zip(pi_idx, zs, sol, ok):
            if good and not keep[row]:   # injectivity: at most one hit per row
                keep[row] = True
                out_idx.append(row)
                out_chart.append((s[0], s[1], z))
        return np.asarray(out_idx, dtype=int), np.asarray(out_chart, dtype=float).reshape(-1, 3)

    def _radial_solve(self, u1, u2, Zv, iters=60):
        """Solve x (lam_s + Z beta(r)) = u1, y (lam_c + Z beta(r)) = u2 with
        r = x^2 + y^2 < r0; NaN row when no in-support root exists."""
        lam_s, lam_c, _ = self.model.spectrum
        r0 = self.r0

        def resid(r):
            be = Zv * self.beta.beta(r)
            return (u1 / (lam_s + be)) ** 2 + (u2 / (lam_c + be)) ** 2 - r

        # sign scan on a log grid (the profile lives on log scales)
        grid = np.concatenate([[0.0], np.geomspace(1e-300, r0, 600)])
        vals = np.stack([resid(np.full_like(u1, g)) for g in grid])  # (G, m)
        sgn = vals > 0
        flip = sgn[:-1] & ~sgn[1:]
        has = flip.any(axis=0)
        first = np.argmax(flip, axis=0)
        lo = grid[first]
        hi = grid[first + 1]
        lo = np.where(has, lo, np.nan)
        hi = np.where(has, hi, np.nan)
        for _ in range(iters):
            mid = np.where(lo > 0, np.sqrt(lo * hi), 0.5 * (lo + hi))
            vm = resid(mid)
            pos = vm > 0
            lo = np.where(pos, mid, lo)
            hi = np.where(pos, hi, mid)
        r = 0.5 * (lo + hi)
        be = Zv * self.beta.beta(r)
        x = u1 / (lam_s + be)
        y = u2 / (lam_c + be)
        bad = ~has | (r >= r0) | ~(Zv > 0)
        x = np.where(bad, np.nan, x)
        y = np.where(bad, np.nan, y)
        return np.stack([x, y], axis=1)

    # ---- derivatives ------------------------------------------------------

    def jacobian_chart(self, c):
        """Exact Jacobian (adapted chart) at chart points (..., 3).

        Products involving beta' use the safe form (beta'(r) r)(x^2/r), which
        stays bounded by k where beta' itself is steep.
        """
        c = np.asarray(c, dtype=float)
        lam_s, lam_c, lam_u = self.model.spectrum
        J = np.zeros(c.shape[:-1] + (3, 3))
        J[..., 0, 0] = lam_s
        J[..., 1, 1] = lam_c
        J[..., 2, 2] = lam_u
        if self.is_linear:
            return J
        m = self.in_support(c)
        if np.any(m):
            cm = c[m]
            x, y, z = cm[:, 0], cm[:, 1], cm[:, 2]
            r = x ** 2 + y ** 2
            Zv = self.Z(z)
            Zp = self.Z.deriv(z)
            be = self.beta.beta(r)
            bpt = self.beta.beta_prime_times_t(r)        # beta'(r) * r
            with np.errstate(invalid="ignore", divide="ignore"):
                fx = np.where(r > 0, x * x / r, 0.0)
                fy = np.where(r > 0, y * y / r, 0.0)
                fxy = np.where(r > 0, x * y / r, 0.0)
            J[m, 0, 0] += Zv * (be + 2.0 * bpt * fx)
            J[m, 1, 1] += Zv * (be + 2.0 * bpt * fy)
            J[m, 0, 1] = J[m, 1, 0] = Zv * 2.0 * bpt * fxy
            J[m, 0, 2] = Zp * be * x
            J[m, 1, 2] = Zp * be * y
        return J

    def jacobian(self, xi):
        return self.jacobian_chart(self.chart(xi))

    def jacobian_decomposition(self, xi):
        """(J, A, M): J = A + M with A the diagonal part
        diag(lam_s + Z beta, lam_c + Z beta, lam_u)."""
        c = self.chart(xi)
        J = self.jacobian_chart(c)
        lam_s, lam_c, lam_u = self.model.spectrum
        A = np.zeros_like(J)
        A[..., 0, 0] = lam_s
        A[..., 1, 1] = lam_c
        A[..., 2, 2] = lam_u
        if not self.is_linear:
            m = self.in_support(c)
            if np.any(m):
                cm = c[m]
                amp = self.Z(cm[:, 2]) * self.beta.beta(cm[:, 0] ** 2 + cm[:, 1] ** 2)
                A[m, 0, 0] += amp
                A[m, 1, 1] += amp
        return J, A, J - A

    def M_norm_bound(self):
        """max{2k, 8 beta(0) sqrt(k) / rho}, the perturbation-norm envelope."""
        if self.is_linear:
            return 0.0
        return max(2.0 * self.k, 8.0 * self.beta.b * np.sqrt(self.k) / self.rho)

    def central_eigenstructure_S(self, xi):
        """Eigenvalues (lam1, lam2) of the symmetric in-plane perturbation
        block S, with eigenvectors (x, y) and (-y, x):
        lam1 = Z(z)(beta(r) + 2 beta'(r) r), lam2 = Z(z) beta(r)."""
        c = np.atleast_2d(self.chart(xi))
        x, y, z = c[:, 0], c[:, 1], c[:, 2]
        r = x ** 2 + y ** 2
        if self.is_linear:
            lam1 = lam2 = np.zeros_like(r)
        else:
            Zv = self.Z(z)
            lam1 = Zv * (self.beta.beta(r) + 2.0 * self.beta.beta_prime_times_t(r))
            lam2 = Zv * self.beta.beta(r)
        return lam1, lam2

    def rate_functions(self, xi, n=None):
        """Pointwise expansion rates (||dg|E^s||, ||dg|E^c||, ||dg|E^u||)
        along the numerically converged invariant directions."""
        from . import sections
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        n = n or max(self.bundle_iterations, 8) if not self.is_linear else 2
        J = self.jacobian(xi)
        u = sections.unstable_direction_chart(self, xi, n)
        lam_u_rate = np.linalg.norm(np.einsum("...ij,...j->...i", J, u), axis=-1)
        vs, vc = _plane_splitting(self, xi, n)
        T = J[..., :2, :2]
        lam_s_rate = np.linalg.norm(np.einsum("...ij,...j->...i", T, vs), axis=-1)
        lam_c_rate = np.linalg.norm(np.einsum("...ij,...j->...i", T, vc), axis=-1)
        return lam_s_rate, lam_c_rate, lam_u_rate


def _plane_splitting(params, xi, n):
    """Unit directions of E^s_g and E^c_g inside the invariant plane.

    For the modified map the plane E^s_B + E^c_B is exactly invariant, so the
    splitting is that of the 2x2 block cocycle: E^c is the forward-dominant
    in-plane direction seeded in the past, E^s the minor right-singular
    direction of the forward block product.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    back = [xi]
    for _ in range(n):
        back.append(params.apply_g_inverse(back[-1]))
    vc = np.zeros(xi.shape[:-1] + (2,))
    vc[..., 1] = 1.0
    for j in range(n, 0, -1):
        T = params.jacobian(back[j])[..., :2, :2]
        vc = np.einsum("...ij,...j->...i", T, vc)
        vc /= np.linalg.norm(vc, axis=-1, keepdims=True)
    pts = xi
    prod = np.broadcast_to(np.eye(2), xi.shape[:-1] + (2, 2)).copy()
    for _ in range(n):
        T = params.jacobian(pts)[..., :2, :2]
        prod = np.einsum("...ij,...jk->...ik", T, prod)
        pts = params.apply_g(pts)
    _, _, Vt = np.linalg.svd(prod)
    vs = Vt[..., 1, :]   # minor right-singular direction: stable
    return vs, vc
