"""The special family of hyperbolic toral automorphisms.

M_a (a >= 3) is the integer matrix

        [ 0      -1     0 ]
        [ 1    a^2-1    a ]
        [ 0    a^3+a    1 ]

with characteristic polynomial P_a(t) = -t^3 + a^2 t^2 + a^4 t + 1 and three
real eigenvalues alpha_a in (-2a^2/3, -a^2/3), beta_a in (-1, 0) and gamma_a
in (a^2, 2a^2).  The base automorphism is B_a = (M_a^2)^{-1}, an integer
matrix in SL(3,Z) with partially hyperbolic spectrum

        lambda_s = 1/gamma^2 < lambda_c = 1/alpha^2 < 1 < lambda_u = 1/beta^2.

Root isolation is by bisection inside the bracketing intervals above (each
bracket is sign-certified before refinement), followed by a Newton polish that
stays within the certified enclosure.
"""

from dataclasses import dataclass, field

import numpy as np

from .torus import AdaptedFrame

_MIN_A = 3
ROOT_INTERVAL_WIDTH = 1e-12


def make_Ma(a):
    """Integer matrix M_a of the family.  Rejects a < 3."""
    a = int(a)
    if a < _MIN_A:
        raise ValueError(f"family parameter must be >= 3, got {a}")
    return np.array(
        [[0, -1, 0], [1, a * a - 1, a], [0, a ** 3 + a, 1]], dtype=object
    )


def det3(A):
    """Determinant of a 3x3 matrix in exact (object/int) arithmetic."""
    return (
        A[0, 0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
        - A[0, 1] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
        + A[0, 2] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0])
    )


def adjugate3(A):
    """Adjugate of a 3x3 matrix in exact arithmetic (A^-1 when det = 1)."""
    C = np.empty((3, 3), dtype=object)
    for i in range(3):
        for j in range(3):
            m = [
                [A[r, c] for c in range(3) if c != j]
                for r in range(3)
                if r != i
            ]
            C[i, j] = (-1) ** (i + j) * (m[0][0] * m[1][1] - m[0][1] * m[1][0])
    return C.T


def char_poly_eval(a, lam):
    """P_a(lam) = -lam^3 + a^2 lam^2 + a^4 lam + 1."""
    a = int(a)
    lam = np.asarray(lam, dtype=float)
    out = -lam ** 3 + a ** 2 * lam ** 2 + a ** 4 * lam + 1.0
    return out if out.ndim else float(out)


def char_poly_deriv(a, lam):
    a = int(a)
    lam = np.asarray(lam, dtype=float)
    out = -3.0 * lam ** 2 + 2.0 * a ** 2 * lam + a ** 4
    return out if out.ndim else float(out)


def _certified_bisect(a, lo, hi, width=ROOT_INTERVAL_WIDTH):
    """Bisection on P_a over [lo, hi]; requires a sign change at the ends."""
    flo, fhi = char_poly_eval(a, lo), char_poly_eval(a, hi)
    if flo == 0.0:
        return (lo, lo)
    if fhi == 0.0:
        return (hi, hi)
    if (flo > 0) == (fhi > 0):
        raise ArithmeticError(
            f"bracket [{lo}, {hi}] shows no sign change for a={a}: "
            f"P({lo})={flo}, P({hi})={fhi}"
        )
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        fm = char_poly_eval(a, mid)
        if fm == 0.0:
            return (mid, mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return (lo, hi)


def _newton_polish(a, x, lo, hi, iters=4):
    """A few Newton steps on P_a from x, clipped to the enclosure."""
    for _ in range(iters):
        step = char_poly_eval(a, x) / char_poly_deriv(a, x)
        x = min(max(x - step, lo), hi)
    return x


def isolate_roots(a, width=ROOT_INTERVAL_WIDTH):
    """Certified enclosing intervals for the three roots of P_a.

    Returns ((lo, hi) for alpha, for beta, for gamma), each of width < `width`
    with a verified sign change at the endpoints, bisected inside the
    analytic brackets (-2a^2/3, -a^2/3), (-1, 0), (a^2, 2a^2).
    """
    a = int(a)
    if a < _MIN_A:
        raise ValueError(f"family parameter must be >= 3, got {a}")
    brackets = [
        (-2.0 * a * a / 3.0, -a * a / 3.0),
        (-1.0, 0.0),
        (float(a * a), 2.0 * a * a),
    ]
    return tuple(_certified_bisect(a, lo, hi, width) for lo, hi in brackets)


def _roots(a):
    ivals = isolate_roots(a)
    out = []
    for lo, hi in ivals:
        out.append(_newton_polish(a, 0.5 * (lo + hi), lo, hi))
    return tuple(out), ivals  # (alpha, beta, gamma), intervals


def _eigenvector(a, mu):
    """Eigenvector of M_a for eigenvalue mu, from the row relations.

    Row 1 gives v2 = -mu v1, row 3 gives v3 = -(a^3+a) mu / (mu - 1) v1.
    """
    v = np.array([1.0, -mu, -(a ** 3 + a) * mu / (mu - 1.0)])
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class AnosovModel:
    """Certified spectral data of one family member B_a = (M_a^2)^{-1}."""

    a: int
    M: np.ndarray              # M_a, integer (object dtype)
    B_int: np.ndarray          # B_a as exact integers (object dtype)
    B: np.ndarray              # B_a as floats
    B_inv: np.ndarray          # B_a^{-1} = M_a^2 as floats
    B_inv_int: np.ndarray      # M_a^2 exact
    spectrum: tuple            # (lambda_s, lambda_c, lambda_u)
    mu_roots: tuple            # (alpha, beta, gamma) roots of P_a
    root_intervals: tuple      # certified enclosures for the roots
    frame: AdaptedFrame
    K: float                   # lambda_s * a^4
    K_prime: float             # lambda_c * a^4
    min_lattice_gap: float = field(default=0.0)

    @property
    def lambda_s(self):
        return self.spectrum[0]

    @property
    def lambda_c(self):
        return self.spectrum[1]

    @property
    def lambda_u(self):
        return self.spectrum[2]

    @property
    def spectral_gap(self):
        return self.spectrum[1] - self.spectrum[0]


def _min_lattice_gap(frame, radius=2):
    best = np.inf
    rng = range(-radius, radius + 1)
    for m1 in rng:
        for m2 in rng:
            for m3 in rng:
                if m1 == m2 == m3 == 0:
                    continue
                best = min(best, float(np.linalg.norm(frame.inverse @ (m1, m2, m3))))
    return best


def make_model(a):
    """Build the certified AnosovModel for family parameter a."""
    a = int(a)
    M = make_Ma(a)
    if det3(M) != 1:
        raise ArithmeticError(f"det(M_{a}) != 1, construction is broken")
    M2 = M @ M
    if det3(M2) != 1:
        raise ArithmeticError("det(M^2) != 1")
    B_int = adjugate3(M2)  # exact inverse, det(M^2) = 1

    (alpha, beta, gamma), intervals = _roots(a)
    lam_s, lam_c, lam_u = 1.0 / gamma ** 2, 1.0 / alpha ** 2, 1.0 / beta ** 2

    e_s = _eigenvector(a, gamma)
    e_c = _eigenvector(a, alpha)
    e_u = _eigenvector(a, beta)
    # orientation conventions pin the signs for reproducibility
    if e_u[2] < 0:
        e_u = -e_u
    if abs(e_u[2]) < 1e-8:
        raise ArithmeticError(
            f"unstable direction not transverse to the z=0 plane for a={a}; "
            "a coordinate permutation would be required (never observed)"
        )
    if e_s[0] < 0:
        e_s = -e_s
    if e_c[0] < 0:
        e_c = -e_c
    frame = AdaptedFrame(np.column_stack([e_s, e_c, e_u]))

    B = np.array(B_int, dtype=float)
    model = AnosovModel(
        a=a,
        M=M,
        B_int=B_int,
        B=B,
        B_inv=np.array(M2, dtype=float),
        B_inv_int=M2,
        spectrum=(lam_s, lam_c, lam_u),
        mu_roots=(alpha, beta, gamma),
        root_intervals=intervals,
        frame=frame,
        K=lam_s * a ** 4,
        K_prime=lam_c * a ** 4,
        min_lattice_gap=_min_lattice_gap(frame),
    )
    _validate_model(model)
    return model


def _validate_model(model):
    lam_s, lam_c, lam_u = model.spectrum
    a = model.a
    checks = [
        (0.0 < lam_s < lam_c < 1.0 < lam_u, "spectrum ordering"),
        (abs(lam_s * lam_c * lam_u - 1.0) < 1e-10, "determinant of B"),
        (0.1 < model.K < model.K_prime < 10.0, "K_a bounds"),
        (
            -2.0 * a * a / 3.0 < model.mu_roots[0] < -a * a / 3.0,
            "alpha bracket",
        ),
        (-1.0 < model.mu_roots[1] < 0.0, "beta bracket"),
        (a * a < model.mu_roots[2] < 2.0 * a * a, "gamma bracket"),
    ]
    for ok, name in checks:
        if not ok:
            raise ArithmeticError(f"AnosovModel invariant violated: {name} (a={a})")
    # residuals are relative to ||B||: the matrix scale a^6 times machine eps
    # is the floor any float64 eigenpair can reach (cancellation in B v)
    B_scale = float(np.linalg.norm(model.B, 2))
    for v, lam in zip(
        (model.frame.e_s, model.frame.e_c, model.frame.e_u), model.spectrum
    ):
        res = np.linalg.norm(model.B @ v - lam * v) / B_scale
        if res > 1e-12:
            raise ArithmeticError(
                f"scaled eigen-residual {res:.2e} exceeds 1e-12 for a={a}"
            )


def translation_vector(model, raw=False):
    """Displacement of the linear first-return holonomy on T^2.

    The unstable line from (x, y, 0) next meets an integer z-level after the
    standard displacement e_u / (e_u)_3, so the induced translation is
    ((e_u)_1/(e_u)_3, (e_u)_2/(e_u)_3), taken mod 1 unless `raw`.
    """
    e_u = model.frame.e_u
    if abs(e_u[2]) < 1e-8:
        raise ArithmeticError("unstable direction not transverse to T^2")
    t = np.array([e_u[0] / e_u[2], e_u[1] / e_u[2]])
    return t if raw else np.mod(t, 1.0)


def continued_fraction(x, depth=25):
    """Continued-fraction expansion of x in (0,1); stops early on exact
    termination (rational x at double precision)."""
    coeffs = []
    y = float(x)
    for _ in range(depth):
        y = 1.0 / y
        q = int(np.floor(y))
        coeffs.append(q)
        y -= q
        if y < 1e-15:
            break
    return coeffs
