"""Uniform 1-D meshes: the interval (0, L) and the radial ball of radius L.

Both kinds share one finite-volume layout. Interior node ``i`` (1-based) sits
at ``i*h`` with ``h = L/(n+1)``. Edge ``k`` (``k = 0..n``) joins node ``k`` and
node ``k+1``; nodes ``0`` and ``n+1`` are the Dirichlet boundary (value 0).

For the ball the operator is the radial reduction
``-r^{1-N} (r^{N-1} |u'|^{p-2} u')'``. Edge ``k >= 1`` sits at ``(k+1/2) h``
and carries the weight ``r^{N-1}``. Edge 0 is the symmetry axis: its weight is
zero (``u'(0) = 0``), and the first control volume reaches down to ``r = 0``.
"""

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np

INTERVAL = "interval"
RADIAL = "radial"
KINDS = (INTERVAL, RADIAL)


def sphere_area(N):
    """Surface measure of the unit sphere in R^N."""
    return 2.0 * pi ** (N / 2.0) / gamma(N / 2.0)


@dataclass(frozen=True)
class Mesh:
    """Immutable uniform mesh with precomputed finite-volume geometry.

    Attributes
    ----------
    kind : str
        ``"interval"`` or ``"radial"``.
    n : int
        Number of interior nodes.
    L : float
        Interval length or ball radius.
    delta : float
        Width of the boundary strip.
    N : int
        Ambient dimension (1 for the interval).
    """

    kind: str
    n: int
    L: float
    delta: float
    N: int = 1
    h: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False)
    edge_weights: np.ndarray = field(init=False, repr=False)
    volumes: np.ndarray = field(init=False, repr=False)
    quad_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        h = self.L / (self.n + 1)
        nodes = h * np.arange(1, self.n + 1, dtype=float)
        if self.kind == INTERVAL:
            weights = np.ones(self.n + 1)
            volumes = np.full(self.n, h)
            quad = volumes.copy()
        else:
            N = self.N
            edges = h * (np.arange(self.n + 1) + 0.5)
            edges[0] = 0.0
            weights = edges ** (N - 1)
            weights[0] = 0.0
            volumes = (edges[1:] ** N - edges[:-1] ** N) / N
            quad = sphere_area(N) * volumes
        for arr in (nodes, weights, volumes, quad):
            arr.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edge_weights", weights)
        object.__setattr__(self, "volumes", volumes)
        object.__setattr__(self, "quad_weights", quad)

    def integrate(self, values):
        """Quadrature of a nodal field over the domain."""
        return float(np.dot(self.quad_weights, values))

    def gradient(self, values):
        """Edge differences ``(u_{k+1} - u_k)/h`` including both boundary edges."""
        padded = np.concatenate(([0.0], values, [0.0]))
        return np.diff(padded) / self.h

    def describe(self):
        return {"kind": self.kind, "n": self.n, "L": self.L, "delta": self.delta, "N": self.N}


def build_mesh(kind, n, L, delta=None, N=None):
    """Construct a uniform mesh.

    Parameters
    ----------
    kind : {"interval", "radial"}
        Domain type. ``"radial-ball"`` and ``"ball"`` are accepted aliases.
    n : int
        Interior node count, at least 3.
    L : float
        Length of the interval or radius of the ball.
    delta : float, optional
        Strip width, defaults to ``L/50``. Must satisfy ``0 < delta < L/2``.
    N : int, optional
        Ambient dimension; required (>= 2) for the radial kind.

    Returns
    -------
    Mesh
    """
    if kind in ("radial-ball", "ball"):
        kind = RADIAL
    if kind not in KINDS:
        raise ValueError(f"unknown mesh kind {kind!r}")
    if int(n) != n or n < 3:
        raise ValueError(f"n too small: need n >= 3, got {n}")
    if not L > 0:
        raise ValueError(f"L must be positive, got {L}")
    if delta is None:
        delta = L / 50.0
    if not 0 < delta < L / 2:
        raise ValueError(f"delta must lie in (0, L/2), got {delta}")
    if kind == RADIAL:
        if N is None or N < 2:
            raise ValueError("radial ball needs ambient dimension N >= 2")
        return Mesh(RADIAL, int(n), float(L), float(delta), int(N))
    return Mesh(INTERVAL, int(n), float(L), float(delta), 1)


def distance_field(mesh):
    """Distance of each interior node to the boundary."""
    x = mesh.nodes
    if mesh.kind == INTERVAL:
        return np.minimum(x, mesh.L - x)
    return mesh.L - x


def strip_mask(mesh):
    """Boolean mask of the interior nodes with ``d(x) < delta``."""
    return distance_field(mesh) < mesh.delta
