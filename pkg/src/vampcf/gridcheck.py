"""Finite-difference verification of ELBO gradients over the model grid.

Builds a tiny model for every valid configuration cell, freezes the
sampling noise, and compares tape gradients of -ELBO against central
differences for every parameter entry (pseudo-inputs included).
"""
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .model import ModelConfig, elbo, init_params

TINY = {"n_items": 30, "hidden": 16, "d": 4, "n_pseudo": 3}
TOLERANCE = 1e-4


def grid_cells():
    """All valid (name, config kwargs) cells of the model grid.

    two_level requires the vamp prior, so the grid has 12 cells, not 16.
    """
    cells = []
    for hierarchy in ("flat", "two_level"):
        for prior in ("standard", "vamp"):
            if hierarchy == "two_level" and prior != "vamp":
                continue
            for gated in (True, False):
                for likelihood in ("multinomial", "bernoulli"):
                    name = "-".join([
                        hierarchy, prior, "gated" if gated else "ungated", likelihood])
                    cells.append((name, {
                        "prior": prior, "hierarchy": hierarchy,
                        "gated": gated, "likelihood": likelihood,
                    }))
    return cells


def tiny_config(**cell):
    return ModelConfig(
        n_items=TINY["n_items"], hidden=TINY["hidden"], depth=1,
        d_z1=TINY["d"], d_z2=TINY["d"], n_pseudo=TINY["n_pseudo"], **cell)


def _tiny_batch(rng, n_users, n_items):
    x = (rng.random((n_users, n_items)) < 0.25).astype(np.float64)
    for r in range(n_users):
        if x[r].sum() == 0:
            x[r, rng.integers(n_items)] = 1.0
    return x


def check_cell(cell_kwargs, seed=0, beta=1.0, corrupt=False):
    """Max relative gradient error of -ELBO for one grid cell.

    ``corrupt`` injects a tape-only term into the objective so analytic
    gradients disagree with finite differences; a negative control for
    the checker itself.
    """
    cfg = tiny_config(**cell_kwargs)
    rng = np.random.default_rng(seed)
    x_train = _tiny_batch(rng, 8, cfg.n_items)
    params = init_params(cfg, rng, train_matrix=x_train)
    x = ad.constant(_tiny_batch(rng, 4, cfg.n_items))
    noise = {"z2": rng.standard_normal((x.rows, cfg.d_z2))}
    if cfg.two_level:
        noise["z1"] = rng.standard_normal((x.rows, cfg.d_z1))

    def objective():
        res = elbo(x, params, beta, mode="eval", noise=noise)
        out = ad.scale(res.elbo, -1.0)
        if corrupt and ad._ACTIVE is not None:
            out = ad.add(out, ad.scale(ad.sum_all(params.head_out.W), 0.01))
        return out

    return ad.grad_check(objective, list(params.named_parameters().values()))


@dataclass
class CellResult:
    name: str
    max_rel_err: float
    passed: bool


def run_grid(seed=0, tolerance=TOLERANCE, corrupt_cell=None):
    """Gradient-check every grid cell; returns one CellResult per cell."""
    results = []
    for name, kwargs in grid_cells():
        err = check_cell(kwargs, seed=seed, corrupt=(name == corrupt_cell))
        results.append(CellResult(name=name, max_rel_err=err, passed=err < tolerance))
    if corrupt_cell is not None and corrupt_cell not in [r.name for r in results]:
        raise ConfigError(f"unknown grid cell {corrupt_cell!r}")
    return results
