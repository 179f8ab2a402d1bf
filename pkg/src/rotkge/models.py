"""The four scoring models: RotE, RotH, RotL and Rot2L.

Every model scores a triple as F(h, r, t) = D(Q(h, r), t) + b_h + b_t,
where Q transforms the head embedding with relation parameters and D is a
(negated) distance.  All math runs in float64 on CPU; batched candidate
scoring uses exactly the same kernel path as single-triple scoring, so the
two agree to machine precision.
"""

import hashlib
import json
import math
import os

import numpy as np
import torch

from . import geometry as geo

MODEL_KINDS = ("rote", "roth", "rotl", "rot2l")
ALPHA_MODES = ("shared-vector", "per-relation-scalar")

INIT_STD = 1e-3
# softplus(raw) == 1  =>  raw = log(e - 1)
CURV_RAW_FOR_UNIT = math.log(math.e - 1.0)


def phi(x):
    """Distance nonlinearity x * exp(x); strictly increasing on x >= 0."""
    return x * torch.exp(x)


def build_stacked_layer_params(m_row, f):
    """Construct a layer's translation vector and Givens parameters.

    The first half of (m_row, f) is interleaved into the translation
    vector; the second half supplies the d/2 rotation pairs.  f is shared
    across relations, halving the per-relation parameter cost.
    """
    d = m_row.shape[-1]
    half = d // 2
    m_row, f = torch.broadcast_tensors(m_row, f)
    trans = torch.stack((m_row[..., :half], f[..., :half]), dim=-1)
    trans = trans.reshape(*trans.shape[:-2], d)
    rot = torch.stack((m_row[..., half:], f[..., half:]), dim=-1)
    rot = rot.reshape(*rot.shape[:-2], d)
    return trans, rot


def mid_layer(h, q, gamma):
    """Inter-layer activation tanh(q) + gamma * h."""
    return torch.tanh(q) + gamma * h


class KGEModel:
    """Common storage and scoring plumbing for the four model kinds.

    Entity embeddings and biases live in `ent` / `bias`; relation
    parameters in the `rel` dict (contents depend on `kind`).  Scoring is
    read-only: concurrent readers are safe as long as no optimizer step
    runs at the same time.
    """

    kind = None

    def __init__(self, n_ent, n_rel, dim, gamma=0.5, alpha_mode="shared-vector",
                 use_phi=True, seed=0):
        if dim % 2 != 0:
            raise ValueError("embedding dimension must be even")
        if alpha_mode not in ALPHA_MODES:
            raise ValueError(f"unknown alpha mode {alpha_mode!r}")
        self.n_ent = n_ent
        self.n_rel = n_rel
        self.dim = dim
        self.gamma = gamma
        self.alpha_mode = alpha_mode
        self.use_phi = use_phi
        self.seed = seed
        g = torch.Generator().manual_seed(seed)
        self.ent = self._init_emb(g, n_ent, dim)
        self.bias = torch.zeros(n_ent, dtype=torch.float64, requires_grad=True)
        self.rel = {}
        self._init_relation_params(g)

    @staticmethod
    def _init_emb(g, n, d):
        t = torch.randn(n, d, generator=g, dtype=torch.float64) * INIT_STD
        return t.requires_grad_(True)

    def _alpha_param(self):
        if self.alpha_mode == "shared-vector":
            t = torch.ones(self.dim, dtype=torch.float64)
        else:
            t = torch.ones(self.n_rel, dtype=torch.float64)
        return t.requires_grad_(True)

    def _alpha_for(self, name, r):
        """Indexed alpha ready to broadcast against a (..., d) tensor."""
        a = self.rel[name]
        if self.alpha_mode == "shared-vector":
            return a
        return a[r].unsqueeze(-1)

    def _init_relation_params(self, g):
        raise NotImplementedError

    # -- parameter bookkeeping ------------------------------------------

    def trainable_tensors(self):
        out = {"ent": self.ent, "bias": self.bias}
        out.update(self.rel)
        return out

    def relation_param_count(self):
        """Number of trainable relation parameters (entities excluded)."""
        return sum(t.numel() for t in self.rel.values())

    # -- scoring --------------------------------------------------------

    def _transform(self, h, r):
        """Q(h, r) with h of shape (..., d) and r broadcastable ids."""
        raise NotImplementedError

    def _neg_distance(self, q, t, r):
        raise NotImplementedError

    def score(self, h, r, t):
        """Score a batch of triples; h, r, t are equal-length id tensors."""
        h = torch.as_tensor(h, dtype=torch.long)
        r = torch.as_tensor(r, dtype=torch.long)
        t = torch.as_tensor(t, dtype=torch.long)
        self._check_ids(h, self.n_ent)
        self._check_ids(r, self.n_rel)
        self._check_ids(t, self.n_ent)
        q = self._transform(self.ent[h], r)
        return self._neg_distance(q, self.ent[t], r) + self.bias[h] + self.bias[t]

    def score_tails(self, h, r, candidates=None):
        """Score (h, r, c) for every candidate tail c; returns (B, C).

        Row i, column j equals score(h[i], r[i], candidates[j]) exactly:
        the broadcasted path runs the same kernels.
        """
        h = torch.as_tensor(h, dtype=torch.long)
        r = torch.as_tensor(r, dtype=torch.long)
        if candidates is None:
            candidates = torch.arange(self.n_ent)
        c = torch.as_tensor(candidates, dtype=torch.long)
        self._check_ids(h, self.n_ent)
        self._check_ids(r, self.n_rel)
        self._check_ids(c, self.n_ent)
        if c.numel() == 0:
            return torch.zeros(h.shape[0], 0, dtype=torch.float64)
        q = self._transform(self.ent[h], r).unsqueeze(1)      # (B, 1, d)
        t = self.ent[c].unsqueeze(0)                          # (1, C, d)
        d = self._neg_distance(q, t, r.unsqueeze(1))
        return d + self.bias[h].unsqueeze(1) + self.bias[c].unsqueeze(0)

    def score_heads(self, t, r, candidates=None):
        """Score (c, r, t) over candidate heads; for reciprocal-off eval."""
        t = torch.as_tensor(t, dtype=torch.long)
        r = torch.as_tensor(r, dtype=torch.long)
        if candidates is None:
            candidates = torch.arange(self.n_ent)
        c = torch.as_tensor(candidates, dtype=torch.long)
        self._check_ids(t, self.n_ent)
        self._check_ids(r, self.n_rel)
        self._check_ids(c, self.n_ent)
        if c.numel() == 0:
            return torch.zeros(t.shape[0], 0, dtype=torch.float64)
        h = self.ent[c].unsqueeze(0)                          # (1, C, d)
        q = self._transform(h, r.unsqueeze(1))                # (B, C, d)
        tv = self.ent[t].unsqueeze(1)                         # (B, 1, d)
        d = self._neg_distance(q, tv, r.unsqueeze(1))
        return d + self.bias[c].unsqueeze(0) + self.bias[t].unsqueeze(1)

    @staticmethod
    def _check_ids(ids, bound):
        if ids.numel() and (ids.min() < 0 or ids.max() >= bound):
            raise IndexError("entity/relation id out of range")

    # -- persistence ----------------------------------------------------

    def config(self):
        return {
            "kind": self.kind,
            "n_ent": self.n_ent,
            "n_rel": self.n_rel,
            "dim": self.dim,
            "gamma": self.gamma,
            "alpha_mode": self.alpha_mode,
            "use_phi": self.use_phi,
            "seed": self.seed,
        }

    def state_dict(self):
        return {k: v.detach().clone() for k, v in self.trainable_tensors().items()}

    def load_state_dict(self, state):
        with torch.no_grad():
            for k, v in self.trainable_tensors().items():
                v.copy_(state[k])

    def save_checkpoint(self, out_dir, dictionary=None, extra=None):
        """Write a manifest plus one flat little-endian f64 file per tensor."""
        os.makedirs(out_dir, exist_ok=True)
        manifest = dict(self.config())
        manifest["tensors"] = {}
        if dictionary is not None:
            manifest["entity_dict_sha256"] = dictionary.entity_hash()
            manifest["relation_dict_sha256"] = dictionary.relation_hash()
        if extra:
            manifest.update(extra)
        for name, tensor in self.trainable_tensors().items():
            arr = tensor.detach().numpy().astype("<f8")
            fname = f"{name}.f64"
            arr.tofile(os.path.join(out_dir, fname))
            manifest["tensors"][name] = {"file": fname, "shape": list(tensor.shape)}
        with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load_checkpoint(cls, ckpt_dir):
        with open(os.path.join(ckpt_dir, "manifest.json")) as fh:
            manifest = json.load(fh)
        model = create_model(
            manifest["kind"], manifest["n_ent"], manifest["n_rel"], manifest["dim"],
            gamma=manifest["gamma"], alpha_mode=manifest["alpha_mode"],
            use_phi=manifest["use_phi"], seed=manifest["seed"])
        state = {}
        for name, info in manifest["tensors"].items():
            arr = np.fromfile(os.path.join(ckpt_dir, info["file"]), dtype="<f8")
            state[name] = torch.from_numpy(arr.reshape(info["shape"]).copy())
        model.load_state_dict(state)
        return model, manifest

    # -- training hooks -------------------------------------------------

    def post_step(self):
        """Constraint projection after an optimizer step; default no-op."""


class RotE(KGEModel):
    """Euclidean rotation + translation with squared-distance scoring."""

    kind = "rote"

    def _init_relation_params(self, g):
        self.rel["rel_rot"] = self._init_emb(g, self.n_rel, self.dim)
        self.rel["rel_trans"] = self._init_emb(g, self.n_rel, self.dim)

    def _transform(self, h, r):
        return geo.givens_rotate(self.rel["rel_rot"][r], h) + self.rel["rel_trans"][r]

    def _neg_distance(self, q, t, r):
        return -((q - t) ** 2).sum(dim=-1)


class RotH(KGEModel):
    """Hyperbolic translation-rotation-translation with per-relation curvature."""

    kind = "roth"

    def _init_relation_params(self, g):
        self.rel["rel_rot"] = self._init_emb(g, self.n_rel, self.dim)
        self.rel["rel_trans1"] = self._init_emb(g, self.n_rel, self.dim)
        self.rel["rel_trans2"] = self._init_emb(g, self.n_rel, self.dim)
        raw = torch.full((self.n_rel,), CURV_RAW_FOR_UNIT, dtype=torch.float64)
        self.rel["rel_curv"] = raw.requires_grad_(True)

    def curvature(self, r):
        """Effective curvature c_r = softplus(raw) > 0, shaped (..., 1)."""
        return torch.nn.functional.softplus(self.rel["rel_curv"][r]).unsqueeze(-1)

    def max_curvature(self):
        return float(torch.nn.functional.softplus(self.rel["rel_curv"].detach()).max())

    def _transform(self, h, r):
        c = self.curvature(r)
        hb = geo.project_to_ball(h, c)
        t1 = geo.project_to_ball(self.rel["rel_trans1"][r], c)
        t2 = geo.project_to_ball(self.rel["rel_trans2"][r], c)
        q = geo.mobius_add(hb, t1, c)
        q = geo.mobius_matvec_rot(self.rel["rel_rot"][r], q, c)
        return geo.mobius_add(q, t2, c)

    def _neg_distance(self, q, t, r):
        c = self.curvature(r)
        tb = geo.project_to_ball(t, c)
        return -geo.hyperbolic_distance(q, tb, c) ** 2

    def post_step(self):
        # Keep entity rows valid for every relation's ball.
        with torch.no_grad():
            self.ent.copy_(geo.project_to_ball(self.ent, self.max_curvature()))


class RotL(KGEModel):
    """Euclidean rotation + flexible-addition translation, phi distance."""

    kind = "rotl"

    def _init_relation_params(self, g):
        self.rel["rel_rot"] = self._init_emb(g, self.n_rel, self.dim)
        self.rel["rel_trans"] = self._init_emb(g, self.n_rel, self.dim)
        self.rel["alpha_q"] = self._alpha_param()
        self.rel["alpha_d"] = self._alpha_param()

    def _transform(self, h, r):
        rotated = geo.givens_rotate(self.rel["rel_rot"][r], h)
        return geo.flexible_add(rotated, self.rel["rel_trans"][r],
                                self._alpha_for("alpha_q", r))

    def _neg_distance(self, q, t, r):
        res = geo.flexible_add(-q, t, self._alpha_for("alpha_d", r))
        norm = geo._norm(res).squeeze(-1)
        return -phi(norm) if self.use_phi else -norm ** 2


class Rot2L(KGEModel):
    """Two stacked rotation-translation layers with shared vectors f1/f2."""

    kind = "rot2l"

    def _init_relation_params(self, g):
        self.rel["rel_m1"] = self._init_emb(g, self.n_rel, self.dim)
        self.rel["rel_m2"] = self._init_emb(g, self.n_rel, self.dim)
        self.rel["f1"] = (torch.randn(self.dim, generator=g, dtype=torch.float64)
                          * INIT_STD).requires_grad_(True)
        self.rel["f2"] = (torch.randn(self.dim, generator=g, dtype=torch.float64)
                          * INIT_STD).requires_grad_(True)
        self.rel["alpha1"] = self._alpha_param()
        self.rel["alpha2"] = self._alpha_param()
        self.rel["alpha_d"] = self._alpha_param()

    def _layer(self, h, m_name, f_name, alpha_name, r):
        trans, rot = build_stacked_layer_params(self.rel[m_name][r], self.rel[f_name])
        rotated = geo.givens_rotate(rot, h)
        return geo.flexible_add(rotated, trans, self._alpha_for(alpha_name, r))

    def _transform(self, h, r):
        inner = self._layer(h, "rel_m2", "f2", "alpha2", r)
        mid = mid_layer(h, inner, self.gamma)
        return self._layer(mid, "rel_m1", "f1", "alpha1", r)

    def _neg_distance(self, q, t, r):
        res = geo.flexible_add(-q, t, self._alpha_for("alpha_d", r))
        norm = geo._norm(res).squeeze(-1)
        return -phi(norm) if self.use_phi else -norm ** 2


_MODEL_CLASSES = {"rote": RotE, "roth": RotH, "rotl": RotL, "rot2l": Rot2L}


def create_model(kind, n_ent, n_rel, dim, **kwargs):
    try:
        cls = _MODEL_CLASSES[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return cls(n_ent, n_rel, dim, **kwargs)


def expected_relation_param_count(kind, n_rel, dim):
    """Closed-form relation-parameter counts (non-reciprocal counting).

    RotH's curvature contributes one scalar per relation, hence the
    3*N_r*d + N_r total.
    """
    if kind == "rote":
        return 2 * n_rel * dim
    if kind == "roth":
        return 3 * n_rel * dim + n_rel
    if kind == "rotl":
        return 2 * (n_rel + 1) * dim
    if kind == "rot2l":
        return (2 * n_rel + 5) * dim
    raise ValueError(f"unknown model kind {kind!r}")


def dict_hash(names):
    h = hashlib.sha256()
    for n in names:
        h.update(n.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()
