"""Pointwise operators: radial absorption density and the graph p-Laplacian.

The diffusion operator evaluated here is

    L_p u(x) = (1/m(x)) * sum_{y ~ x} |u(y)-u(x)|^(p-2) (u(y)-u(x)) w(x,y)

with p >= 2.  Ghost neighbors (see :mod:`plapdecay.graphs`) contribute with
value 0 and their recorded ghost weight.  The absorption density q is radial:
it is evaluated at the combinatorial distance to the root.

All operations are pure functions over immutable inputs; per-vertex sums run
in adjacency (storage) order, so results are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import WeightedGraph

# A solution snapshot is a plain float array indexed like the graph vertices.
ScalarField = np.ndarray

_PROFILE_KINDS = ("constant", "power", "power_log")


@dataclass(frozen=True)
class AbsorptionProfile:
    """Radial density q(s) from one of three families.

    constant   q(s) = c
    power      q(s) = max(s, 1)^(-alpha)
    power_log  q(s) = max(s, e)^(-alpha) * log(max(s, e))^beta

    The pivots make q total and continuous on s >= 0 (the power-log family
    needs log s > 0, hence the pivot at e).  ``alpha1 <= alpha2`` delimit the
    monotonicity window checked by :func:`validate_monotonicity`:
    q(s)*s^alpha2 nondecreasing and q(s)*s^alpha1 nonincreasing.

    ``constant`` admits c = 0, which switches absorption off; that case is
    used by conservation oracles and is outside the q > 0 regime the decay
    estimates assume.
    """

    kind: str
    c: float = 1.0
    alpha: float = 0.0
    beta: float = 0.0
    alpha1: float = 0.0
    alpha2: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in _PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind == "constant" and self.c < 0:
            raise ValueError(f"constant level must be >= 0, got {self.c}")
        if self.kind != "constant" and self.alpha < 0:
            raise ValueError(f"power exponent must be >= 0, got {self.alpha}")
        if not 0 <= self.alpha1 <= self.alpha2:
            raise ValueError(
                f"need 0 <= alpha1 <= alpha2, got ({self.alpha1}, {self.alpha2})")

    @classmethod
    def constant(cls, c: float = 1.0) -> "AbsorptionProfile":
        return cls("constant", c=c)

    @classmethod
    def power(cls, alpha: float, alpha1: float | None = None,
              alpha2: float | None = None) -> "AbsorptionProfile":
        # q(s)*s^alpha is constant, so [alpha, alpha] is always admissible.
        return cls("power", alpha=alpha,
                   alpha1=alpha if alpha1 is None else alpha1,
                   alpha2=alpha if alpha2 is None else alpha2)

    @classmethod
    def power_log(cls, alpha: float, beta: float, alpha1: float = 0.0,
                  alpha2: float | None = None) -> "AbsorptionProfile":
        return cls("power_log", alpha=alpha, beta=beta, alpha1=alpha1,
                   alpha2=alpha if alpha2 is None else alpha2)

    def describe(self) -> str:
        if self.kind == "constant":
            return f"constant(c={self.c:g})"
        if self.kind == "power":
            return f"power(alpha={self.alpha:g})"
        return f"power_log(alpha={self.alpha:g}, beta={self.beta:g})"


def q_eval(profile: AbsorptionProfile, s):
    """Evaluate the density at distance s >= 0 (scalar or array)."""
    scalar = np.isscalar(s)
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0):
        raise ValueError("distance argument must be >= 0")
    if profile.kind == "constant":
        out = np.full_like(s, profile.c)
    elif profile.kind == "power":
        out = np.maximum(s, 1.0) ** (-profile.alpha)
    else:
        sp = np.maximum(s, math.e)
        out = sp ** (-profile.alpha) * np.log(sp) ** profile.beta
    return float(out) if scalar else out


def validate_monotonicity(profile: AbsorptionProfile, s_max: int) -> bool:
    """Check q(s)*s^alpha2 nondecreasing and q(s)*s^alpha1 nonincreasing on
    the integers 1..s_max."""
    if s_max < 2:
        raise ValueError(f"s_max must be >= 2, got {s_max}")
    s = np.arange(1, s_max + 1, dtype=np.float64)
    q = q_eval(profile, s)
    up = q * s ** profile.alpha2
    down = q * s ** profile.alpha1
    slack_up = 1e-12 * np.abs(up[:-1])
    slack_down = 1e-12 * np.abs(down[:-1])
    return bool(np.all(np.diff(up) >= -slack_up)
                and np.all(np.diff(down) <= slack_down))


def _check_field(g: WeightedGraph, u: ScalarField, nonneg: bool) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (g.n,):
        raise ValueError(f"field shape {u.shape} does not match graph size {g.n}")
    if not np.isfinite(u).all():
        raise ValueError("field contains non-finite values: corrupted state")
    if nonneg and u.min() < 0:
        raise ValueError("field must be nonnegative")
    return u


def p_laplacian(g: WeightedGraph, u: ScalarField, p: float) -> ScalarField:
    """Evaluate the graph p-Laplacian of u, ghost neighbors held at 0."""
    if p < 2:
        raise ValueError(f"need p >= 2, got {p}")
    u = _check_field(g, u, nonneg=False)
    acc = np.zeros(g.n)
    if len(g.indices):
        du = u[g.indices] - u[g.src]
        if p == 2:
            flux = du * g.weights
        else:
            flux = np.abs(du) ** (p - 2.0) * du * g.weights
        acc = np.add.reduceat(flux, g.indptr[:-1])
    if p == 2:
        acc -= g.ghost * u
    else:
        acc -= g.ghost * np.abs(u) ** (p - 2.0) * u
    return acc / g.measure


def rhs(g: WeightedGraph, u: ScalarField, p: float, r: float,
        profile: AbsorptionProfile) -> ScalarField:
    """Right-hand side of the evolution: L_p u - q(d(x)) * u^r.

    The parameter window 2 <= p < r+1 is enforced at configuration time, not
    here; u must be a nonnegative snapshot.
    """
    u = _check_field(g, u, nonneg=True)
    qvec = q_eval(profile, g.dist.astype(np.float64))
    return p_laplacian(g, u, p) - qvec * u ** r


def delta_field(g: WeightedGraph, mass: float = 1.0) -> ScalarField:
    """Point mass at the root, scaled so the weighted total equals ``mass``."""
    if not mass > 0:
        raise ValueError(f"mass must be > 0, got {mass}")
    u = np.zeros(g.n)
    u[g.root] = mass / g.measure[g.root]
    return u


def box_field(g: WeightedGraph, width: int, mass: float = 1.0) -> ScalarField:
    """Uniform profile on the ball of radius ``width``, total mass ``mass``."""
    if width < 0 or width > g.radius:
        raise ValueError(f"box width {width} outside [0, {g.radius}]")
    if not mass > 0:
        raise ValueError(f"mass must be > 0, got {mass}")
    inside = g.dist <= width
    u = np.zeros(g.n)
    u[inside] = mass / float(g.measure[inside].sum())
    return u


def load_field(g: WeightedGraph, path) -> ScalarField:
    """Read one value per vertex (in stored vertex order) from a text file."""
    values = [float(line) for line in open(path)
              if line.strip() and not line.startswith("#")]
    if len(values) != g.n:
        raise ValueError(
            f"{path}: expected {g.n} values, found {len(values)}")
    return _check_field(g, np.asarray(values), nonneg=False)
