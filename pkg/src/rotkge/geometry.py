"""Poincare-ball and Euclidean vector kernels shared by all scoring models.

All functions operate on torch tensors whose last axis is the embedding
dimension and broadcast over any leading axes.  Everything here is a pure
function: no shared state, safe to call concurrently, differentiable
end-to-end in float64.
"""

import torch

# Numerical guards.  BALL_EPS keeps points strictly inside the open ball,
# ATANH_EPS bounds the arctanh argument away from 1, DENOM_EPS protects the
# flexible-addition denominator, NORM_EPS avoids 0/0 in the radial maps.
BALL_EPS = 1e-5
ATANH_EPS = 1e-10
DENOM_EPS = 1e-6
NORM_EPS = 1e-15


def _sq_norm(x):
    return (x * x).sum(dim=-1, keepdim=True)


def _norm(x):
    return _sq_norm(x).clamp_min(NORM_EPS * NORM_EPS).sqrt()


def project_to_ball(x, c):
    """Rescale x onto radius (1 - BALL_EPS)/sqrt(c) when it falls outside.

    Points already inside the ball pass through unchanged.
    """
    max_norm = (1.0 - BALL_EPS) / torch.as_tensor(c, dtype=x.dtype).sqrt()
    norm = _norm(x)
    scale = torch.where(norm > max_norm, max_norm / norm, torch.ones_like(norm))
    return x * scale


def mobius_add(x, y, c):
    """Mobius addition x (+)_c y on the ball of curvature -c.

    The result is projected back into the open ball so that downstream
    kernels always see in-domain points.
    """
    c = torch.as_tensor(c, dtype=x.dtype)
    xy = (x * y).sum(dim=-1, keepdim=True)
    x2 = _sq_norm(x)
    y2 = _sq_norm(y)
    num = (1 + 2 * c * xy + c * y2) * x + (1 - c * x2) * y
    den = 1 + 2 * c * xy + c * c * x2 * y2
    return project_to_ball(num / den.clamp_min(NORM_EPS), c)


def exp_map0(x, c):
    """Exponential map at the origin: tangent vector -> ball point."""
    c = torch.as_tensor(c, dtype=x.dtype)
    sqrt_c = c.sqrt()
    norm = _norm(x)
    return torch.tanh(sqrt_c * norm) * x / (sqrt_c * norm)


def log_map0(x, c):
    """Logarithmic map at the origin: ball point -> tangent vector.

    Callers must project x into the ball first; the arctanh argument is
    additionally clamped as a last-resort guard.
    """
    c = torch.as_tensor(c, dtype=x.dtype)
    sqrt_c = c.sqrt()
    norm = _norm(x)
    arg = (sqrt_c * norm).clamp(max=1.0 - ATANH_EPS)
    return torch.arctanh(arg) * x / (sqrt_c * norm)


def normalize_givens_pairs(r_hat):
    """Normalize each consecutive coordinate pair of r_hat to unit norm.

    A zero-norm pair degenerates to the identity block (1, 0) so the
    resulting block-diagonal matrix is always a true rotation.
    """
    pairs = r_hat.reshape(*r_hat.shape[:-1], -1, 2)
    norm = pairs.pow(2).sum(dim=-1, keepdim=True).sqrt()
    identity = torch.zeros_like(pairs)
    identity[..., 0] = 1.0
    safe = torch.where(norm > NORM_EPS, pairs / norm.clamp_min(NORM_EPS), identity)
    return safe.reshape(r_hat.shape)


def givens_rotate(r_hat, x):
    """Apply the block-diagonal Givens rotation parameterized by r_hat to x.

    Each consecutive pair (a, b) of r_hat forms the 2x2 block
    [[a, -b], [b, a]]; pairs are normalized at use time, so the map is
    norm-preserving and runs in O(d) without materializing a matrix.
    """
    g = normalize_givens_pairs(r_hat).reshape(*r_hat.shape[:-1], -1, 2)
    xp = x.reshape(*x.shape[:-1], -1, 2)
    a, b = g[..., 0], g[..., 1]
    x1, x2 = xp[..., 0], xp[..., 1]
    out = torch.stack((a * x1 - b * x2, b * x1 + a * x2), dim=-1)
    return out.reshape(torch.broadcast_shapes(r_hat.shape, x.shape))


def mobius_matvec_rot(r_hat, x, c):
    """Mobius rotation: exp0(Rot(r_hat) . log0(x)).

    Only the Givens-rotation case of the general Mobius matrix-vector
    product is supported.
    """
    return exp_map0(givens_rotate(r_hat, log_map0(x, c)), c)


def flexible_add(x, y, alpha):
    """Flexible addition alpha * (x + y) / (1 + <x, y>).

    alpha broadcasts against the result: a shared d-vector, a per-row
    scalar of shape (..., 1), or a plain scalar.  A vanishing denominator
    is replaced by a sign-preserving DENOM_EPS.
    """
    den = 1.0 + (x * y).sum(dim=-1, keepdim=True)
    den = torch.where(den.abs() < DENOM_EPS,
                      torch.copysign(torch.full_like(den, DENOM_EPS), den), den)
    return (x + y) * (alpha / den)


def hyperbolic_distance(x, y, c):
    """Geodesic distance (2/sqrt(c)) * arctanh(sqrt(c) ||(-x) (+)_c y||)."""
    c = torch.as_tensor(c, dtype=x.dtype)
    sqrt_c = c.sqrt()
    diff = mobius_add(-x, y, c)
    arg = (sqrt_c * _norm(diff)).clamp(max=1.0 - ATANH_EPS)
    return (2.0 / sqrt_c * torch.arctanh(arg)).squeeze(-1)
