"""Finite-difference gradient checking.

The loss-builder callback is re-run for every probe so the graph is
rebuilt from the perturbed data; the comparison is therefore fully
independent of the backward implementation it validates.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

FD_STEP = 1e-5
REL_TOL = 1e-4


def _rel_error(a: float, n: float, floor: float = 1e-6) -> float:
    denom = max(abs(a), abs(n), floor)
    return abs(a - n) / denom


def numerical_grad(loss_fn, tensor: Tensor, flat_index: int, h: float = FD_STEP) -> float:
    """Central difference of loss_fn() w.r.t. one coordinate of ``tensor``."""
    flat = tensor.data.reshape(-1)
    orig = flat[flat_index]
    flat[flat_index] = orig + h
    up = loss_fn().item()
    flat[flat_index] = orig - h
    down = loss_fn().item()
    flat[flat_index] = orig
    return (up - down) / (2.0 * h)


def max_rel_error(loss_fn, wrt, max_coords_per_tensor: int | None = None,
                  h: float = FD_STEP, seed: int = 0) -> float:
    """Largest relative error between analytic and numerical gradients.

    ``wrt`` is a list of Tensors (requires_grad) to probe. When a tensor has
    more coordinates than ``max_coords_per_tensor``, a seeded subset is
    sampled; with None every coordinate is checked.
    """
    for t in wrt:
        t.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = []
    for t in wrt:
        if t.grad is None:
            raise AssertionError("a probed tensor received no gradient")
        analytic.append(t.grad.reshape(-1).copy())
        t.zero_grad()

    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, a in zip(wrt, analytic):
        n_coords = t.size
        if max_coords_per_tensor is not None and n_coords > max_coords_per_tensor:
            coords = rng.choice(n_coords, size=max_coords_per_tensor, replace=False)
        else:
            coords = range(n_coords)
        for idx in coords:
            num = numerical_grad(loss_fn, t, int(idx), h=h)
            worst = max(worst, _rel_error(a[int(idx)], num))
    return worst


def assert_gradients_close(loss_fn, wrt, max_coords_per_tensor: int | None = None,
                           tol: float = REL_TOL, h: float = FD_STEP, seed: int = 0):
    err = max_rel_error(loss_fn, wrt, max_coords_per_tensor=max_coords_per_tensor,
                        h=h, seed=seed)
    if err >= tol:
        raise AssertionError(f"gradient check failed: max rel err {err:.3e} >= {tol:.0e}")
    return err
