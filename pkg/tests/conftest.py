"""Shared test helpers: random instances and the finite-difference oracle."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from gpl_lab.graph import Graph

FD_STEP = 1e-5
FD_TOL = 1e-4


def random_graph(rng: np.random.Generator, n: int, d: int, p: float = 0.5) -> Graph:
    feats = rng.standard_normal((n, d))
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return Graph(feats, edges)


def random_connected_graph(rng: np.random.Generator, n: int, d: int, p: float = 0.4) -> Graph:
    feats = rng.standard_normal((n, d))
    edges = {(i - 1, i) for i in range(1, n)}  # path backbone keeps it connected
    edges |= {
        (i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p
    }
    return Graph(feats, sorted(edges))


def finite_diff_grad(f, x: torch.Tensor, step: float = FD_STEP) -> torch.Tensor:
    """Central finite differences of a scalar function of one tensor."""
    x0 = x.detach().clone()
    grad = torch.zeros_like(x0)
    flat = grad.reshape(-1)
    for i in range(x0.numel()):
        xp = x0.clone().reshape(-1)
        xm = x0.clone().reshape(-1)
        xp[i] += step
        xm[i] -= step
        flat[i] = (
            f(xp.reshape(x0.shape)) - f(xm.reshape(x0.shape))
        ) / (2.0 * step)
    return grad


def rel_err(a: torch.Tensor, b: torch.Tensor) -> float:
    scale = max(1e-8, float(a.abs().max()), float(b.abs().max()))
    return float((a - b).abs().max()) / scale


def grad_check(build_loss, x0: torch.Tensor, tol: float = FD_TOL) -> float:
    """Assert the autograd gradient of build_loss matches finite differences.

    build_loss must be a pure function of its tensor argument.
    """
    leaf = x0.detach().clone().requires_grad_(True)
    loss = build_loss(leaf)
    (analytic,) = torch.autograd.grad(loss, [leaf])
    fd = finite_diff_grad(lambda t: float(build_loss(t)), x0)
    err = rel_err(analytic, fd)
    assert err < tol, f"gradient mismatch: rel err {err:.3e} >= {tol}"
    return err


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
