"""Problem data for the facility location model with decision-dependent demand.

An :class:`Instance` holds the deterministic side of the problem (sites,
costs, capacities); a :class:`DemandModel` holds the stochastic side: the
empirical moments, how strongly each facility shifts them, the finite demand
support, and the moment-window radii that control robustness.

The mean and variance of demand at customer ``j`` are affine in the
open-facility indicator vector ``y``::

    mu_j(y)      = bar_mu_j    * (1 + sum_i lambda_mu[j, i]  * y_i)
    sigma2_j(y)  = bar_sigma_j**2 * (1 - sum_i lambda_sigma[j, i] * y_i)

with ``sum_i lambda_sigma[j, i] < 1`` so the variance stays positive.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Instance",
    "DemandModel",
    "LocationDecision",
    "arithmetic_support",
    "mean_of",
    "variance_of",
    "second_moment_window",
    "big_lambda",
    "lambda_from_distance",
    "lambda_rho_means",
    "apply_robustness_level",
    "validate",
    "save_problem",
    "load_problem",
    "problem_to_dict",
    "problem_from_dict",
]

# Absolute tolerance for invariant checks.
TOL = 1e-9


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Instance:
    """Facility candidates, customer sites and the cost structure between them.

    ``cost[i, j]`` is the unit transportation cost from facility ``i`` to
    customer ``j``.  Ids are arbitrary integers (1-based in the generators);
    arrays are positional and aligned with the id tuples.
    """

    facility_ids: tuple[int, ...]
    facility_coords: np.ndarray      # (|I|, 2)
    open_cost: np.ndarray            # f_i
    capacity: np.ndarray             # C_i
    customer_ids: tuple[int, ...]
    customer_coords: np.ndarray      # (|J|, 2)
    penalty: np.ndarray              # p_j
    revenue: np.ndarray              # r_j
    cost: np.ndarray                 # (|I|, |J|)

    def __post_init__(self):
        for name in ("facility_coords", "open_cost", "capacity",
                     "customer_coords", "penalty", "revenue", "cost"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "facility_ids", tuple(int(i) for i in self.facility_ids))
        object.__setattr__(self, "customer_ids", tuple(int(j) for j in self.customer_ids))
        if self.cost.shape != (self.n_facilities, self.n_customers):
            raise ValueError("cost matrix shape does not match site counts")

    @property
    def n_facilities(self) -> int:
        return len(self.facility_ids)

    @property
    def n_customers(self) -> int:
        return len(self.customer_ids)

    def facility_index(self, fid: int) -> int:
        try:
            return self.facility_ids.index(fid)
        except ValueError:
            raise KeyError(f"unknown facility id {fid!r}") from None

    def customer_index(self, cid: int) -> int:
        try:
            return self.customer_ids.index(cid)
        except ValueError:
            raise KeyError(f"unknown customer id {cid!r}") from None

    @staticmethod
    def from_sites(facility_coords, open_cost, capacity,
                   customer_coords, penalty, revenue,
                   cost_multiplier: float = 1.0,
                   facility_ids=None, customer_ids=None) -> "Instance":
        """Build an instance with Euclidean transport costs between sites."""
        fc = np.asarray(facility_coords, dtype=float)
        cc = np.asarray(customer_coords, dtype=float)
        diff = fc[:, None, :] - cc[None, :, :]
        cost = cost_multiplier * np.hypot(diff[..., 0], diff[..., 1])
        if facility_ids is None:
            facility_ids = tuple(range(1, len(fc) + 1))
        if customer_ids is None:
            customer_ids = tuple(range(1, len(cc) + 1))
        return Instance(tuple(facility_ids), fc, np.asarray(open_cost, float),
                        np.asarray(capacity, float), tuple(customer_ids), cc,
                        np.asarray(penalty, float), np.asarray(revenue, float), cost)


@dataclass(frozen=True)
class DemandModel:
    """Moment information of the random demand and its decision dependency.

    ``support`` is the common finite support of demand at every customer,
    strictly increasing with at least two points.  ``eps_mu`` is the absolute
    half-width of the mean window; ``eps_sigma_lo``/``eps_sigma_hi`` scale the
    second-moment window, with ``0 <= lo <= 1 <= hi``.
    """

    bar_mu: np.ndarray              # (|J|,)
    bar_sigma: np.ndarray           # (|J|,)
    lambda_mu: np.ndarray           # (|J|, |I|)
    lambda_sigma: np.ndarray        # (|J|, |I|)
    support: np.ndarray             # (K,), strictly increasing
    eps_mu: np.ndarray              # (|J|,)
    eps_sigma_lo: np.ndarray        # (|J|,)
    eps_sigma_hi: np.ndarray        # (|J|,)
    customer_ids: tuple[int, ...] = ()

    def __post_init__(self):
        for name in ("bar_mu", "bar_sigma", "lambda_mu", "lambda_sigma",
                     "support", "eps_mu", "eps_sigma_lo", "eps_sigma_hi"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not self.customer_ids:
            object.__setattr__(self, "customer_ids",
                               tuple(range(1, len(self.bar_mu) + 1)))
        else:
            object.__setattr__(self, "customer_ids",
                               tuple(int(j) for j in self.customer_ids))

    @property
    def n_customers(self) -> int:
        return len(self.bar_mu)

    @property
    def n_facilities(self) -> int:
        return self.lambda_mu.shape[1]

    @property
    def support_size(self) -> int:
        return len(self.support)

    def customer_index(self, cid: int) -> int:
        try:
            return self.customer_ids.index(cid)
        except ValueError:
            raise KeyError(f"unknown customer id {cid!r}") from None

    def replace(self, **changes) -> "DemandModel":
        fields = {
            "bar_mu": self.bar_mu, "bar_sigma": self.bar_sigma,
            "lambda_mu": self.lambda_mu, "lambda_sigma": self.lambda_sigma,
            "support": self.support, "eps_mu": self.eps_mu,
            "eps_sigma_lo": self.eps_sigma_lo, "eps_sigma_hi": self.eps_sigma_hi,
            "customer_ids": self.customer_ids,
        }
        fields.update(changes)
        return DemandModel(**fields)


@dataclass(frozen=True)
class LocationDecision:
    """Binary open/close plan over the facility candidates."""

    y: np.ndarray
    budget: int | None = None

    def __post_init__(self):
        y = np.asarray(self.y)
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("location decision entries must be 0/1")
        object.__setattr__(self, "y", _frozen(y, dtype=np.int8))
        if self.budget is not None and int(self.y.sum()) > self.budget:
            raise ValueError("plan opens more facilities than the budget allows")

    @property
    def open_indices(self):
        return tuple(int(i) for i in np.flatnonzero(self.y))


def _as_y(y) -> np.ndarray:
    if isinstance(y, LocationDecision):
        return np.asarray(y.y, dtype=float)
    return np.asarray(y, dtype=float)


def arithmetic_support(lo: float, hi: float, k: int) -> np.ndarray:
    """Evenly spaced support ``d_0 < ... < d_{K-1}`` from ``lo`` to ``hi``.

    Built as ``lo + n * step`` with the last point pinned to ``hi`` so that
    serialization via (min, max, step) reproduces it bit-exactly.
    """
    if k < 2:
        raise ValueError("support needs at least two points")
    step = (hi - lo) / (k - 1)
    d = lo + step * np.arange(k, dtype=float)
    d[-1] = hi
    return d


# ---------------------------------------------------------------------------
# Decision-dependent moments
# ---------------------------------------------------------------------------

def mean_of(model: DemandModel, y, j: int) -> float:
    """Mean demand mu_j(y) at customer id ``j`` under plan ``y``."""
    jj = model.customer_index(j)
    return float(model.bar_mu[jj] * (1.0 + model.lambda_mu[jj] @ _as_y(y)))


def variance_of(model: DemandModel, y, j: int) -> float:
    """Variance sigma_j^2(y) at customer id ``j`` under plan ``y``."""
    jj = model.customer_index(j)
    return float(model.bar_sigma[jj] ** 2 * (1.0 - model.lambda_sigma[jj] @ _as_y(y)))


def means_vector(model: DemandModel, y) -> np.ndarray:
    """mu_j(y) for every customer, in customer order."""
    return model.bar_mu * (1.0 + model.lambda_mu @ _as_y(y))


def variances_vector(model: DemandModel, y) -> np.ndarray:
    """sigma_j^2(y) for every customer, in customer order."""
    return model.bar_sigma ** 2 * (1.0 - model.lambda_sigma @ _as_y(y))


def second_moment_window(model: DemandModel, y, j: int) -> tuple[float, float]:
    """Admissible range for E[d_j^2]: ``(sigma^2 + mu^2)`` scaled by the radii."""
    jj = model.customer_index(j)
    s = variance_of(model, y, j) + mean_of(model, y, j) ** 2
    return (s * float(model.eps_sigma_lo[jj]), s * float(model.eps_sigma_hi[jj]))


def big_lambda(model: DemandModel, j: int, i: int) -> float:
    """Combined moment coefficient of facility ``i`` at customer ``j``.

    This is the per-facility slope of ``sigma_j^2(y) + mu_j(y)^2`` once the
    square of the affine mean is expanded over binary ``y``:

        -bar_sigma_j^2 * ls + bar_mu_j^2 * (2*lm + lm**2)
    """
    jj = model.customer_index(j)
    if not 0 <= i < model.n_facilities:
        raise KeyError(f"unknown facility index {i!r}")
    lm = model.lambda_mu[jj, i]
    ls = model.lambda_sigma[jj, i]
    return float(-model.bar_sigma[jj] ** 2 * ls
                 + model.bar_mu[jj] ** 2 * (2.0 * lm + lm ** 2))


def big_lambda_matrix(model: DemandModel) -> np.ndarray:
    """All combined moment coefficients, shape (|J|, |I|)."""
    lm = model.lambda_mu
    ls = model.lambda_sigma
    return (-(model.bar_sigma ** 2)[:, None] * ls
            + (model.bar_mu ** 2)[:, None] * (2.0 * lm + lm ** 2))


# ---------------------------------------------------------------------------
# Dependency-weight recipes
# ---------------------------------------------------------------------------

def lambda_from_distance(instance: Instance, decay_scale: float = 25.0,
                         target_row_sum: float = 0.5):
    """Distance-decay dependency weights ``exp(-c_ij / decay_scale)``.

    Each customer row is rescaled to sum to ``target_row_sum``; the same
    matrix is used for the mean and the variance weights.
    """
    if not 0.0 < target_row_sum < 1.0:
        raise ValueError("target_row_sum must lie in (0, 1) to keep variances positive")
    raw = np.exp(-instance.cost.T / decay_scale)      # (|J|, |I|)
    lam = raw * (target_row_sum / raw.sum(axis=1, keepdims=True))
    return lam.copy(), lam.copy()


def lambda_rho_means(instance: Instance, rho: int, sigma_row_scale: float = 0.99):
    """Uniform 1/rho weights on the rho nearest facilities of each customer.

    Ties in distance are broken toward the smaller facility id.  The variance
    rows are shrunk by ``sigma_row_scale`` because a row sum of exactly 1
    would drive the variance to zero with every neighborhood open.
    """
    n_i = instance.n_facilities
    if not 1 <= rho <= n_i:
        raise ValueError(f"rho must be between 1 and {n_i}")
    lam_mu = np.zeros((instance.n_customers, n_i))
    ids = np.asarray(instance.facility_ids)
    for jj in range(instance.n_customers):
        order = np.lexsort((ids, instance.cost[:, jj]))
        lam_mu[jj, order[:rho]] = 1.0 / rho
    return lam_mu, sigma_row_scale * lam_mu


def apply_robustness_level(model: DemandModel, kappa: float) -> DemandModel:
    """Set the moment-window radii from a single robustness level in [0, 1]."""
    if not 0.0 <= kappa <= 1.0:
        raise ValueError("kappa must lie in [0, 1]")
    n = model.n_customers
    return model.replace(
        eps_mu=kappa * model.bar_mu,
        eps_sigma_lo=np.full(n, 1.0 - kappa),
        eps_sigma_hi=np.full(n, 1.0 + kappa),
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate(instance: Instance, model: DemandModel | None = None) -> list[str]:
    """Check every structural invariant; return one message per violation."""
    v = []
    inst = instance
    if np.any(inst.capacity <= 0):
        for i in np.flatnonzero(inst.capacity <= 0):
            v.append(f"facility {inst.facility_ids[i]}: capacity must be positive")
    if np.any(inst.open_cost < 0):
        for i in np.flatnonzero(inst.open_cost < 0):
            v.append(f"facility {inst.facility_ids[i]}: opening cost must be nonnegative")
    if np.any(inst.revenue < 0):
        for j in np.flatnonzero(inst.revenue < 0):
            v.append(f"customer {inst.customer_ids[j]}: revenue must be nonnegative")
    if np.any(inst.cost < 0):
        v.append("transport costs must be nonnegative")
    bad = inst.penalty[None, :] <= inst.cost
    if np.any(bad):
        for i, j in zip(*np.nonzero(bad)):
            v.append(f"pair ({inst.facility_ids[i]}, {inst.customer_ids[j]}): "
                     "penalty not strictly greater than transport cost")
    if model is None:
        return v

    if model.n_customers != inst.n_customers or model.n_facilities != inst.n_facilities:
        v.append("demand model dimensions do not match the instance")
        return v
    if np.any(model.bar_mu < 0) or np.any(model.bar_sigma < 0):
        v.append("empirical moments must be nonnegative")
    rows = model.lambda_sigma.sum(axis=1)
    for j in np.flatnonzero(rows >= 1.0 - TOL):
        v.append(f"customer {model.customer_ids[j]}: variance dependency row sums to "
                 f"{rows[j]:.6g}, must stay strictly below 1")
    for name, lam in (("lambda_mu", model.lambda_mu), ("lambda_sigma", model.lambda_sigma)):
        if np.any(lam < -TOL) or np.any(lam > 1.0 + TOL):
            v.append(f"{name} entries must lie in [0, 1]")
    d = model.support
    if len(d) < 2:
        v.append("support needs at least two points")
    elif np.any(np.diff(d) <= 0):
        v.append("support must be strictly increasing")
    if np.any(model.eps_mu < 0):
        v.append("eps_mu must be nonnegative")
    if np.any(model.eps_sigma_lo < -TOL) or np.any(model.eps_sigma_lo > 1.0 + TOL):
        v.append("eps_sigma_lo must lie in [0, 1]")
    if np.any(model.eps_sigma_hi < 1.0 - TOL):
        v.append("eps_sigma_hi must be at least 1")
    return v


# ---------------------------------------------------------------------------
# Serialization (JSON; lossless at double precision)
# ---------------------------------------------------------------------------

def _support_fields(support: np.ndarray) -> dict:
    lo, hi = float(support[0]), float(support[-1])
    k = len(support)
    step = (hi - lo) / (k - 1)
    rebuilt = arithmetic_support(lo, hi, k)
    if not np.array_equal(rebuilt, support):
        raise ValueError("only evenly spaced supports serialize to {min, max, step}")
    return {"min": lo, "max": hi, "step": step}


def _support_from_fields(d: dict) -> np.ndarray:
    k = int(round((d["max"] - d["min"]) / d["step"])) + 1
    return arithmetic_support(d["min"], d["max"], k)


def problem_to_dict(instance: Instance, model: DemandModel) -> dict:
    return {
        "facilities": [
            {"id": instance.facility_ids[i],
             "x": float(instance.facility_coords[i, 0]),
             "y": float(instance.facility_coords[i, 1]),
             "f": float(instance.open_cost[i]),
             "C": float(instance.capacity[i])}
            for i in range(instance.n_facilities)
        ],
        "customers": [
            {"id": instance.customer_ids[j],
             "x": float(instance.customer_coords[j, 0]),
             "y": float(instance.customer_coords[j, 1]),
             "p": float(instance.penalty[j]),
             "r": float(instance.revenue[j])}
            for j in range(instance.n_customers)
        ],
        "cost": instance.cost.tolist(),
        "demand": {
            "bar_mu": model.bar_mu.tolist(),
            "bar_sigma": model.bar_sigma.tolist(),
            "lambda_mu": model.lambda_mu.tolist(),
            "lambda_sigma": model.lambda_sigma.tolist(),
            "support": _support_fields(model.support),
            "eps_mu": model.eps_mu.tolist(),
            "eps_lo": model.eps_sigma_lo.tolist(),
            "eps_hi": model.eps_sigma_hi.tolist(),
        },
    }


def problem_from_dict(doc: dict) -> tuple[Instance, DemandModel]:
    fac = doc["facilities"]
    cus = doc["customers"]
    instance = Instance(
        facility_ids=tuple(f["id"] for f in fac),
        facility_coords=np.array([[f["x"], f["y"]] for f in fac]),
        open_cost=np.array([f["f"] for f in fac]),
        capacity=np.array([f["C"] for f in fac]),
        customer_ids=tuple(c["id"] for c in cus),
        customer_coords=np.array([[c["x"], c["y"]] for c in cus]),
        penalty=np.array([c["p"] for c in cus]),
        revenue=np.array([c["r"] for c in cus]),
        cost=np.array(doc["cost"]),
    )
    dm = doc["demand"]
    model = DemandModel(
        bar_mu=np.array(dm["bar_mu"]),
        bar_sigma=np.array(dm["bar_sigma"]),
        lambda_mu=np.array(dm["lambda_mu"]),
        lambda_sigma=np.array(dm["lambda_sigma"]),
        support=_support_from_fields(dm["support"]),
        eps_mu=np.array(dm["eps_mu"]),
        eps_sigma_lo=np.array(dm["eps_lo"]),
        eps_sigma_hi=np.array(dm["eps_hi"]),
        customer_ids=instance.customer_ids,
    )
    return instance, model


def save_problem(path: str, instance: Instance, model: DemandModel) -> None:
    """Write instance + demand model atomically (temp file then rename)."""
    doc = problem_to_dict(instance, model)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_problem(path: str) -> tuple[Instance, DemandModel]:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))
