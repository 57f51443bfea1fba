"""Prox geometry: start point, Bregman divergence, the Mirr step, set radius.

Two setups are supported.

* ``euclidean``: d(x) = ||x - x1||^2 / 2 on any supported set, so d(x1) = 0
  and grad d(x1) = 0 hold literally. Mirr is the Euclidean projection of
  x - h v onto Q.
* ``entropy``: d(x) = sum x_i ln x_i + ln n on the simplex, 1-strongly convex
  w.r.t. the l1 norm. x1 is the uniform point; Mirr is the multiplicative
  update y_i ~ x_i exp(-h v_i).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError, UnboundedSet
from .problem import Box, EuclideanBall, NonnegativeOrthant, Simplex
from .sparse import SparseVector

EUCLIDEAN = "euclidean"
ENTROPY = "entropy"


@dataclass(frozen=True)
class ProxSetup:
    kind: str
    feasible_set: object
    x1: np.ndarray
    Rbar2: float | None = None
    R2: float | None = None

    @property
    def dual_norm_ord(self):
        """Order of the dual norm used for subgradient bounds."""
        return 2 if self.kind == EUCLIDEAN else np.inf


def project_simplex(z) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort based)."""
    z = np.asarray(z, dtype=np.float64)
    u = np.sort(z)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, z.size + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(z - tau, 0.0)


def start_point(kind, feasible_set, center=None) -> np.ndarray:
    """x1 = argmin_Q d, for the configured center (default the origin)."""
    n = feasible_set.dim
    c = np.zeros(n) if center is None else np.asarray(center, dtype=np.float64)
    if c.shape != (n,):
        raise DimensionMismatch(f"center has shape {c.shape}, expected ({n},)")
    if kind == ENTROPY:
        if not isinstance(feasible_set, Simplex):
            raise ValueError("entropy prox is only defined on the simplex")
        return np.full(n, 1.0 / n)
    if kind != EUCLIDEAN:
        raise ValueError(f"unknown prox kind {kind!r}")
    if isinstance(feasible_set, Box):
        return np.clip(c, feasible_set.lo, feasible_set.hi)
    if isinstance(feasible_set, EuclideanBall):
        return feasible_set.center.copy()
    if isinstance(feasible_set, NonnegativeOrthant):
        return np.maximum(c, 0.0)
    if isinstance(feasible_set, Simplex):
        return project_simplex(c)
    raise TypeError(f"unsupported feasible set {feasible_set!r}")


def radius_bound(kind, feasible_set) -> float:
    """Upper bound on max_{x,y in Q} V_x(y).

    For entropy on the simplex the true supremum is infinite; ln n bounds
    V_{x1}(y) from the uniform start, which is the quantity the guarantees use.
    """
    if isinstance(feasible_set, NonnegativeOrthant):
        raise UnboundedSet("the nonnegative orthant is unbounded; supply Rbar2 explicitly")
    if kind == ENTROPY:
        return math.log(feasible_set.n)
    if isinstance(feasible_set, Box):
        return 0.5 * float(np.sum((feasible_set.hi - feasible_set.lo) ** 2))
    if isinstance(feasible_set, EuclideanBall):
        return 2.0 * feasible_set.radius ** 2
    if isinstance(feasible_set, Simplex):
        return 1.0
    raise TypeError(f"unsupported feasible set {feasible_set!r}")


def make_setup(feasible_set, kind=EUCLIDEAN, center=None, R2=None, Rbar2=None) -> ProxSetup:
    """Assemble a ProxSetup; Rbar2 is computed for bounded sets unless given."""
    x1 = start_point(kind, feasible_set, center)
    if Rbar2 is None and not isinstance(feasible_set, NonnegativeOrthant):
        Rbar2 = radius_bound(kind, feasible_set)
    x1.setflags(write=False)
    return ProxSetup(kind, feasible_set, x1, Rbar2, R2)


def prox_function(setup: ProxSetup, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if setup.kind == EUCLIDEAN:
        return 0.5 * float(np.sum((x - setup.x1) ** 2))
    pos = x[x > 0]
    return float(np.sum(pos * np.log(pos))) + math.log(x.size)


def prox_gradient(setup: ProxSetup, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if setup.kind == EUCLIDEAN:
        return x - setup.x1
    if np.any(x <= 0):
        raise DomainError("entropy gradient needs a strictly positive point")
    return 1.0 + np.log(x)


def bregman(setup: ProxSetup, x, y) -> float:
    """V_x(y) = d(y) - d(x) - <grad d(x), y - x>."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if setup.kind == EUCLIDEAN:
        return 0.5 * float(np.sum((y - x) ** 2))
    if np.any((x <= 0) & (y > 0)):
        raise DomainError("KL divergence is infinite: x_i = 0 where y_i > 0")
    mask = y > 0
    kl = float(np.sum(y[mask] * np.log(y[mask] / x[mask])))
    # generalized KL; the mass terms cancel on the simplex
    return max(kl - float(y.sum()) + float(x.sum()), 0.0)


def mirror_step(setup: ProxSetup, x, v: SparseVector, h: float) -> np.ndarray:
    """argmin_{y in Q} <h v, y - x> + V_x(y), returned as a new array."""
    x = np.asarray(x, dtype=np.float64)
    Q = setup.feasible_set
    if setup.kind == ENTROPY:
        logits = np.log(x)
        logits[v.indices] -= h * v.values
        logits -= logits.max()
        w = np.exp(logits)
        return w / w.sum()
    if isinstance(Q, Box):
        y = x.copy()
        idx = v.indices
        y[idx] = np.clip(x[idx] - h * v.values, Q.lo[idx], Q.hi[idx])
        return y
    if isinstance(Q, NonnegativeOrthant):
        y = x.copy()
        idx = v.indices
        y[idx] = np.maximum(x[idx] - h * v.values, 0.0)
        return y
    z = x.copy()
    z[v.indices] -= h * v.values
    if isinstance(Q, EuclideanBall):
        d = z - Q.center
        norm = float(np.linalg.norm(d))
        if norm <= Q.radius:
            return z
        return Q.center + d * (Q.radius / norm)
    if isinstance(Q, Simplex):
        return project_simplex(z)
    raise TypeError(f"unsupported feasible set {Q!r}")


def mirror_deltas(setup: ProxSetup, x: list, v: SparseVector, h: float):
    """The Mirr step as a list of (j, new x_j) for coordinates that may change.

    ``x`` is the Python list held by a ProductState. Box and orthant steps touch
    only the support of v; other setups fall back to the dense step.
    """
    Q = setup.feasible_set
    if setup.kind == EUCLIDEAN and isinstance(Q, Box):
        lo, hi = Q.bound_lists()
        out = []
        idx, val = v.pairs()
        for j, vj in zip(idx, val):
            t = x[j] - h * vj
            if t < lo[j]:
                t = lo[j]
            elif t > hi[j]:
                t = hi[j]
            out.append((j, t))
        return out
    if setup.kind == EUCLIDEAN and isinstance(Q, NonnegativeOrthant):
        idx, val = v.pairs()
        out = []
        for j, vj in zip(idx, val):
            t = x[j] - h * vj
            out.append((j, t if t > 0.0 else 0.0))
        return out
    old = np.array(x)
    new = mirror_step(setup, old, v, h)
    changed = np.flatnonzero(new != old)
    return list(zip(changed.tolist(), new[changed].tolist()))

