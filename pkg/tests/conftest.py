import numpy as np
import pytest

from ddrloc.instance import DemandModel, Instance, arithmetic_support


def toy_instance(cost, capacity, penalty, revenue, open_cost=None):
    """Instance with an explicit cost matrix and dummy coordinates."""
    cost = np.atleast_2d(np.asarray(cost, dtype=float))
    n_i, n_j = cost.shape
    return Instance(
        facility_ids=tuple(range(1, n_i + 1)),
        facility_coords=np.zeros((n_i, 2)),
        open_cost=np.zeros(n_i) if open_cost is None else np.asarray(open_cost, float),
        capacity=np.asarray(capacity, dtype=float),
        customer_ids=tuple(range(1, n_j + 1)),
        customer_coords=np.zeros((n_j, 2)),
        penalty=np.asarray(penalty, dtype=float),
        revenue=np.asarray(revenue, dtype=float),
        cost=cost,
    )


def toy_model(instance, bar_mu, bar_sigma, lambda_mu=None, lambda_sigma=None,
              support=(1.0, 100.0, 10), eps_mu=None, eps_lo=None, eps_hi=None):
    n_j = instance.n_customers
    n_i = instance.n_facilities
    z = np.zeros((n_j, n_i))
    return DemandModel(
        bar_mu=np.asarray(bar_mu, dtype=float),
        bar_sigma=np.asarray(bar_sigma, dtype=float),
        lambda_mu=z.copy() if lambda_mu is None else np.asarray(lambda_mu, float),
        lambda_sigma=z.copy() if lambda_sigma is None else np.asarray(lambda_sigma, float),
        support=arithmetic_support(*support),
        eps_mu=np.zeros(n_j) if eps_mu is None else np.asarray(eps_mu, float),
        eps_sigma_lo=np.ones(n_j) if eps_lo is None else np.asarray(eps_lo, float),
        eps_sigma_hi=np.ones(n_j) if eps_hi is None else np.asarray(eps_hi, float),
        customer_ids=instance.customer_ids,
    )


def random_problem(seed, n_facilities, n_customers, support_size=10, kappa=0.0,
                   **overrides):
    from ddrloc.experiments import ExperimentConfig, generate_instance
    cfg = ExperimentConfig(n_facilities=n_facilities, n_customers=n_customers,
                           seed=seed, support_size=support_size, kappa=kappa,
                           **overrides)
    return generate_instance(cfg)


@pytest.fixture
def small_problem():
    return random_problem(11, 3, 5, support_size=8)
