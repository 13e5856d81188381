"""Runtime checks behind ``psgeval kernels selftest``."""
from __future__ import annotations

import numpy as np

from psgeval.kernels import PromptTokens, encode_patch_token, prompt_coefficients, relation_loss, sigmoid

FD_STEP = 1e-5
GRAD_RTOL = 1e-6
BCE_ATOL = 1e-12


def finite_difference_grad(x, y, w, step=FD_STEP):
    grad = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += step
        down[idx] -= step
        grad[idx] = (relation_loss(up, y, w)[0] - relation_loss(down, y, w)[0]) / (2 * step)
    return grad


def gradient_relative_error(analytic, numeric) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-300)
    return float(np.linalg.norm(analytic - numeric) / scale)


def random_batch(rng):
    n, p = int(rng.integers(1, 6)), int(rng.integers(1, 5))
    x = rng.normal(0.0, 2.0, size=(n, p))
    y = (rng.random((n, p)) < 0.4).astype(float)
    w = rng.uniform(0.5, 5.0, size=p)
    return x, y, w


def plain_bce(x, y) -> float:
    s = 1.0 / (1.0 + np.exp(-x))
    return float(np.mean(-(y * np.log(s) + (1 - y) * np.log(1 - s))))


def run_selftest(seed: int = 0, batches: int = 100, draws: int = 1000):
    rng = np.random.default_rng(seed)
    results = []

    worst = 0.0
    for _ in range(batches):
        x, y, w = random_batch(rng)
        worst = max(worst, gradient_relative_error(relation_loss(x, y, w)[1], finite_difference_grad(x, y, w)))
    results.append(("relation_loss gradient", worst < GRAD_RTOL, f"max relative error {worst:.3e} over {batches} batches"))

    worst = 0.0
    for _ in range(batches):
        x, y, _ = random_batch(rng)
        worst = max(worst, abs(relation_loss(x, y, np.ones(x.shape[1]))[0] - plain_bce(x, y)))
    results.append(("unit weights reduce to BCE", worst <= BCE_ATOL, f"max abs difference {worst:.3e}"))

    bad = 0
    for _ in range(draws):
        a, b = rng.random(2)
        if a + b > 1:
            a, b = 1 - a, 1 - b
        if sum(prompt_coefficients(a, b)) != 1.0:
            bad += 1
    results.append(("prompt coefficients sum to 1", bad == 0, f"{bad} of {draws} draws off"))

    basis = PromptTokens(*np.eye(3))
    got = encode_patch_token(np.zeros(3), 0.25, 0.5, basis)
    results.append(("prompt encoding example", bool(np.array_equal(got, [0.25, 0.5, 0.25])), f"{got.tolist()}"))

    s = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    results.append(("stable sigmoid", bool(np.all(np.isfinite(s))) and s[1] == 0.5, f"{s.tolist()}"))
    return results
