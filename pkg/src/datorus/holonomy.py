"""First-return holonomy of the unstable line field on the section T^2.

The section is the plane {third standard coordinate = 0}.  The oriented unit
field spanning the unstable bundle has third component bounded away from zero
(the bundle sits in a narrow cone around e_u), so the leaf through a point
crosses successive integer z-levels monotonically and the first return is the
z = +1 crossing of the lifted leaf.  That makes z itself the natural
integration parameter: we integrate dX/dz = V_xy / V_z from z = 0 to 1 with a
classical 4-stage step, landing on the section exactly, with no event search.
The returned point is smooth in the initial condition, which keeps nearby
pairs meaningful down to separations near the coordinate floor.

Away from the surgery the field equals e_u up to the slope tail (< 1e-9), so
straight segments are advanced in closed form.  The leaf needs fine
integration only where it meets the support tube; those windows are located
in closed form from the linear return structure: the transversal chart offset
of the leaf line is constant within a lattice cell, so the tube is entered at
the integer z-layer crossings whose wrapped trace falls inside the tube's
transversal section (the same bookkeeping the inverse map uses).

The linear control (k = 0) reproduces the translation T_B exactly up to
roundoff, and the reverse orientation integrates z down to -1, giving f^{-1}.
"""

from dataclasses import dataclass

import numpy as np

from . import sections, torus
from .family import translation_vector


@dataclass
class ReturnConfig:
    """Integrator settings for the first-return map."""

    step: float = 0.01          # fine RK4 step in z through tube windows
    event_tol: float = 1e-12    # section-landing tolerance (z-exact here)
    n_bundle: int | None = None  # fiber iterations for the field (None: auto)
    margin: float = 0.05        # transversality floor for the field's V_z
    pad: float = 1.6            # tube-window inflation factor

    def bundle_iterations(self, params):
        return self.n_bundle if self.n_bundle else params.bundle_iterations


def T_B_map(model, x):
    """The linear first-return translation on T^2."""
    tau = translation_vector(model)
    return np.mod(np.asarray(x, dtype=float) + tau, 1.0)


def _field(params, cfg, pts):
    """Unit unstable field (standard coords, V_z > 0) at torus points."""
    V = sections.unstable_direction(params, pts, cfg.bundle_iterations(params))
    vz = V[..., 2]
    if np.any(vz < cfg.margin):
        bad = np.argmin(vz)
        raise ArithmeticError(
            f"transversality margin violated: V_z = {vz.min():.3e} at "
            f"{np.atleast_2d(pts)[bad]}")
    return V


def _tube_windows(params, cfg, xy, z0, layer):
    """Per-point fine-integration window [z_lo, z_hi] around an integer
    z-layer, or an empty window when the leaf line misses the tube there.

    The leaf line through (xy, z0) crosses the layer at plane offset
    W = xy + (layer - z0) tau; its (constant-in-z) transversal chart offset is
    R2 wrap(W), and the tube is met iff that offset lies in the r0-disc.  The
    tube's extent along the line is |z_chart| < rho/2 centered where z_chart
    vanishes, i.e. shifted by the in-plane part row3 . d of the chart.
    """
    e_u3 = params.model.frame.e_u[2]
    W = xy + (layer - z0)[..., None] * params._tau_raw
    d = np.mod(W + 0.5, 1.0) - 0.5
    u12 = d @ params._R2.T
    rr = u12[..., 0] ** 2 + u12[..., 1] ** 2
    hit = rr < params.r0 * cfg.pad ** 2
    center = layer - (d @ params._row3) * e_u3
    half = 0.5 * params.rho * cfg.pad * e_u3
    z_lo = np.where(hit, center - half, np.inf)
    z_hi = np.where(hit, center + half, np.inf)
    return z_lo, z_hi


def _rhs(params, cfg, xy, z):
    """dX/dz and the adapted arclength rate d(s)/dz along the field."""
    pts = torus.project(np.concatenate([xy, z[..., None]], axis=-1))
    V = _field(params, cfg, pts)
    vz = V[..., 2:3]
    rate = params.model.frame.adapted_norm(V) / vz[..., 0]
    return V[..., :2] / vz, rate


def _rk4_fine(params, cfg, xy, z, dz, nsteps):
    """Fixed-count RK4 advance of (xy, arclength) from z by dz."""
    s = np.zeros(xy.shape[:-1])
    h = dz / nsteps
    for _ in range(nsteps):
        k1, r1 = _rhs(params, cfg, xy, z)
        k2, r2 = _rhs(params, cfg, xy + 0.5 * h[..., None] * k1, z + 0.5 * h)
        k3, r3 = _rhs(params, cfg, xy + 0.5 * h[..., None] * k2, z + 0.5 * h)
        k4, r4 = _rhs(params, cfg, xy + h[..., None] * k3, z + h)
        xy = xy + (h[..., None] / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        s = s + (h / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
        z = z + h
    return xy, z, s


def _advance(params, cfg, xy, z, s, z_stop, direction):
    """Straight advance along e_u (exact for the linear field)."""
    dz = z_stop - z
    xy = xy + dz[..., None] * params._tau_raw
    s = s + np.abs(dz) / params.model.frame.e_u[2]
    return xy, z_stop, s


def _return_segment(params, cfg, xy0, z0, z1):
    """Integrate the leaf from (xy0, z0) to the z = z1 level (batched).

    Returns the lift translate of the endpoint's (x, y) (unreduced, so lift
    displacements are available to callers) and the adapted leaf length.
    """
    xy0 = np.atleast_2d(np.asarray(xy0, dtype=float))
    n = xy0.shape[0]
    z0v = np.broadcast_to(np.asarray(z0, dtype=float), (n,)).astype(float)
    z1v = np.broadcast_to(np.asarray(z1, dtype=float), (n,)).astype(float)
    direction = 1.0 if float(np.max(z1v - z0v)) > 0 else -1.0

    if params.is_linear:
        xy, z, s = _advance(params, cfg, xy0, z0v.copy(),
                            np.zeros(n), z1v, direction)
        return xy, s

    lo_layer = int(np.floor(min(z0v.min(), z1v.min()) - 0.3))
    hi_layer = int(np.ceil(max(z0v.max(), z1v.max()) + 0.3))
    layers = (range(lo_layer, hi_layer + 1) if direction > 0
              else range(hi_layer, lo_layer - 1, -1))

    xy = xy0.copy()
    z = z0v.copy()
    s = np.zeros(n)
    for layer in layers:
        lv = np.full(n, float(layer))
        w_lo, w_hi = _tube_windows(params, cfg, xy0, z0v, lv)
        # clip the window into the remaining segment
        if direction > 0:
            a = np.maximum(np.minimum(w_lo, z1v), z)
            b = np.maximum(np.minimum(w_hi, z1v), z)
        else:
            a = np.minimum(np.maximum(w_hi, z1v), z)
            b = np.minimum(np.maximum(w_lo, z1v), z)
        live = np.isfinite(a) & (np.abs(b - a) > 1e-15)
        if np.any(live):
            # straight to the window mouth, fine RK4 through it
            xy[live], z[live], s[live] = _advance(
                params, cfg, xy[live], z[live], s[live], a[live], direction)
            span = b[live] - a[live]
            nsteps = max(1, int(np.ceil(np.abs(span).max() / cfg.step)))
            fx, fz, fs = _rk4_fine(params, cfg, xy[live], z[live], span, nsteps)
            xy[live], z[live] = fx, fz
            s[live] += fs
    xy, z, s = _advance(params, cfg, xy, z, s, z1v, direction)
    return xy, s


def first_return(params, cfg, xi, direction=1):
    """First return of a T^3 point to the section along the oriented leaf.

    Returns (point of T^2, adapted leaf length).  The leaf is integrated in
    the z-parametrization, so the landing is exact in z and within
    cfg.event_tol trivially.
    """
    xi = np.atleast_2d(torus.project(xi))
    z0 = xi[:, 2]
    target = np.floor(z0) + 1.0 if direction > 0 else np.ceil(z0) - 1.0
    xy, s = _return_segment(params, cfg, xi[:, :2], z0, target)
    return torus.project2(xy), s


def f_map(params, cfg, x, direction=1, with_lift=False):
    """The holonomy return map on T^2 (direction=-1 gives f^{-1}).

    with_lift=True also returns the unreduced lift displacement of the step,
    used by rotation-vector estimates.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xy, s = _return_segment(params, cfg, x, np.zeros(x.shape[0]),
                            float(direction) * np.ones(x.shape[0]))
    out = torus.project2(xy)
    if with_lift:
        return out, xy - x, s
    return out


def h_hat(field, x):
    """Induced semiconjugacy on T^2: slide the shadowed image along e_u back
    to the section, \\hat h(x) = P(h(x))."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    params = field.params
    sup_dev = field.sup_deviation
    if sup_dev >= 0.25:
        raise ArithmeticError(
            f"||h - id|| = {sup_dev:.3g} >= 1/4; projection undefined")
    lifts = np.concatenate([x, np.zeros((x.shape[0], 1))], axis=1)
    q = field.compute_H(lifts)
    slid = q[:, :2] - q[:, 2:3] * params._tau_raw[None, :]
    return torus.project2(slid)
