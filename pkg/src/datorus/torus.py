"""Coordinates on the 3-torus: lifts, mod-1 projection, and the adapted chart.

All dynamical modules share these conventions.  Points on T^3 = R^3/Z^3 are
stored in standard coordinates in [0,1)^3; the "adapted" chart expresses a
point in the eigenbasis (e_s, e_c, e_u) of the base automorphism, which makes
the eigendirections orthonormal for the adapted inner product
<u, v> = (F^-1 u) . (F^-1 v), F the matrix of eigenvectors.

Torus reduction always happens in standard coordinates (the integer lattice is
only a lattice there); the adapted metric is realized purely by coordinate
change.
"""

import numpy as np

# mod-1 values within this of 1.0 snap to 0.0 to avoid 1.0-vs-0.0 flapping
SNAP_TOL = 1e-14

# offsets of the 27 neighboring lattice translates, shape (27, 3)
_NEIGHBOR_OFFSETS = np.array(
    [[i, j, l] for i in (-1, 0, 1) for j in (-1, 0, 1) for l in (-1, 0, 1)],
    dtype=float,
)


def project(p):
    """Reduce a lift in R^3 (or a batch, shape (..., 3)) to T^3 = [0,1)^3."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("non-finite coordinates cannot be projected to the torus")
    q = np.mod(p, 1.0)
    # snap: values that round-trip to ~1.0 belong at 0.0
    q = np.where(q >= 1.0 - SNAP_TOL, 0.0, q)
    q = np.where(np.abs(q) < SNAP_TOL, 0.0, q)
    return q


def project2(p):
    """Same as :func:`project` for points of T^2."""
    return project(np.asarray(p, dtype=float))


class AdaptedFrame:
    """Eigenbasis frame of the base automorphism.

    basis (3x3): columns are the unit eigenvectors (e_s, e_c, e_u);
    inverse:     its inverse, rows are the dual basis.
    """

    def __init__(self, basis):
        basis = np.asarray(basis, dtype=float)
        if basis.shape != (3, 3):
            raise ValueError("frame basis must be 3x3")
        self.basis = basis
        self.inverse = np.linalg.inv(basis)
        if not np.allclose(self.basis @ self.inverse, np.eye(3), atol=1e-12):
            raise ValueError("frame basis not invertible to 1e-12")
        self.e_s = basis[:, 0].copy()
        self.e_c = basis[:, 1].copy()
        self.e_u = basis[:, 2].copy()
        # chart offsets of the 27 neighbor translates, shape (27, 3)
        self._neighbor_chart = _NEIGHBOR_OFFSETS @ self.inverse.T

    def to_chart_vector(self, v):
        """Adapted (eigenbasis) components of a tangent vector batch."""
        return np.asarray(v, dtype=float) @ self.inverse.T

    def from_chart_vector(self, c):
        """Standard coordinates of a vector given in the eigenbasis."""
        return np.asarray(c, dtype=float) @ self.basis.T

    def adapted_norm(self, v):
        """Adapted length of a tangent vector batch."""
        return np.linalg.norm(self.to_chart_vector(v), axis=-1)

    def nearest_lift_chart(self, xi):
        """Chart coordinates of the lift of `xi` nearest to the origin.

        Minimizes the adapted norm over the 27 lattice translates of the
        representative in [0,1)^3; ties break toward the lexicographically
        smallest translate (scan order of the offsets guarantees this with
        strict-inequality updates).
        """
        xi = project(xi)
        base = xi @ self.inverse.T                       # (..., 3)
        cand = base[..., None, :] + self._neighbor_chart  # (..., 27, 3)
        norms = np.linalg.norm(cand, axis=-1)
        best = np.argmin(norms, axis=-1)
        return np.take_along_axis(cand, best[..., None, None], axis=-2)[..., 0, :]


def local_chart(xi, frame):
    """Adapted chart coordinates (x, y, z) of a torus point (nearest lift)."""
    return frame.nearest_lift_chart(xi)


def chart_to_torus(c, frame):
    """Inverse of :func:`local_chart`: torus point of chart coordinates."""
    return project(frame.from_chart_vector(c))


def adapted_distance(xi, eta, frame):
    """Adapted distance on T^3: min over 27 neighbor translates of the
    adapted norm of the difference."""
    xi = project(xi)
    eta = project(eta)
    diff = (xi - eta) @ frame.inverse.T
    cand = diff[..., None, :] + frame._neighbor_chart
    return np.min(np.linalg.norm(cand, axis=-1), axis=-1)


def torus2_distance(x, y):
    """Euclidean distance on T^2 (min over the 9 neighbor translates)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = np.mod(x - y, 1.0)
    d = np.minimum(d, 1.0 - d)
    return np.linalg.norm(d, axis=-1)


def wrap_difference(x, y):
    """Representative of x - y (componentwise) in [-1/2, 1/2)."""
    d = np.mod(np.asarray(x, dtype=float) - np.asarray(y, dtype=float) + 0.5, 1.0) - 0.5
    return d
