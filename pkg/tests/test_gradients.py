"""Finite-difference validation of the training gradients.

The loss treats the self-adversarial weights as constants, so the
finite-difference oracle evaluates the loss with the weights frozen at
the linearization point; that is the gradient the optimizer consumes.
"""

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from conftest import randomized_model
from rotkge import models

FD_STEP = 1e-5
REL_TOL = 1e-4


def frozen_weight_loss(model, h, r, t, neg_t, weights):
    pos = model.score(h, r, t)
    k = neg_t.shape[1]
    rr = r.unsqueeze(1).expand(-1, k).reshape(-1)
    hh = h.unsqueeze(1).expand(-1, k).reshape(-1)
    neg = model.score(hh, rr, neg_t.reshape(-1)).reshape(-1, k)
    return (-F.logsigmoid(pos) - (weights * F.logsigmoid(-neg)).sum(-1)).mean()


def check_model_gradients(kind, seed, n_checks_per_tensor=4):
    m = randomized_model(kind, n_ent=6, n_rel=2, dim=4, seed=seed, scale=0.15)
    rng = np.random.default_rng(seed)
    h = torch.tensor(rng.integers(0, 6, size=2))
    r = torch.tensor(rng.integers(0, 2, size=2))
    t = torch.tensor(rng.integers(0, 6, size=2))
    neg_t = torch.tensor(rng.integers(0, 6, size=(2, 3)))
    with torch.no_grad():
        rr = r.unsqueeze(1).expand(-1, 3).reshape(-1)
        hh = h.unsqueeze(1).expand(-1, 3).reshape(-1)
        neg = m.score(hh, rr, neg_t.reshape(-1)).reshape(-1, 3)
        weights = torch.softmax(neg, dim=-1)

    loss = frozen_weight_loss(m, h, r, t, neg_t, weights)
    tensors = m.trainable_tensors()
    grads = torch.autograd.grad(loss, list(tensors.values()), allow_unused=True)

    for (name, tensor), grad in zip(tensors.items(), grads):
        if grad is None:
            continue
        flat = tensor.detach().reshape(-1)
        gflat = grad.reshape(-1)
        idx = rng.choice(flat.numel(),
                         size=min(n_checks_per_tensor, flat.numel()),
                         replace=False)
        for i in idx:
            orig = float(flat[i])
            flat[i] = orig + FD_STEP
            up = float(frozen_weight_loss(m, h, r, t, neg_t, weights).detach())
            flat[i] = orig - FD_STEP
            down = float(frozen_weight_loss(m, h, r, t, neg_t, weights).detach())
            flat[i] = orig
            fd = (up - down) / (2 * FD_STEP)
            analytic = float(gflat[i])
            rel = abs(analytic - fd) / max(1e-6, abs(analytic), abs(fd))
            assert rel < REL_TOL, (kind, name, int(i), analytic, fd)


@pytest.mark.parametrize("kind", models.MODEL_KINDS)
def test_loss_gradient_matches_finite_differences(kind):
    for seed in range(5):
        check_model_gradients(kind, seed)


@pytest.mark.parametrize("kind", models.MODEL_KINDS)
def test_score_gradient_matches_finite_differences(kind):
    # Gradient of the raw score F(h, r, t) itself, not just the loss.
    m = randomized_model(kind, n_ent=5, n_rel=2, dim=4, seed=11, scale=0.15)
    rng = np.random.default_rng(11)

    def score():
        return m.score([1], [0], [3])[0]

    s = score()
    tensors = m.trainable_tensors()
    grads = torch.autograd.grad(s, list(tensors.values()), allow_unused=True)
    for (name, tensor), grad in zip(tensors.items(), grads):
        if grad is None:
            continue
        flat = tensor.detach().reshape(-1)
        gflat = grad.reshape(-1)
        idx = rng.choice(flat.numel(), size=min(4, flat.numel()), replace=False)
        for i in idx:
            orig = float(flat[i])
            flat[i] = orig + FD_STEP
            up = float(score().detach())
            flat[i] = orig - FD_STEP
            down = float(score().detach())
            flat[i] = orig
            fd = (up - down) / (2 * FD_STEP)
            analytic = float(gflat[i])
            rel = abs(analytic - fd) / max(1e-6, abs(analytic), abs(fd))
            assert rel < REL_TOL, (kind, name, int(i), analytic, fd)
