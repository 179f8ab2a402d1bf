"""Negative-sampling loss, Adam updates and the training loop.

The loop records per-epoch wall-clock time and loss, validates MRR /
Hits@10 periodically, keeps the best-validation parameters and stops
early once validation goes stale.  Given (seed, config, data) the whole
run is deterministic.
"""

import logging
import time
from dataclasses import dataclass, field, asdict

import numpy as np
import torch
import torch.nn.functional as F

log = logging.getLogger(__name__)

LR_GRID = (0.0005, 0.001, 0.005)
BATCH_GRID = (100, 200, 500)
NEG_GRID = (50, 200, 500)
GAMMA_GRID = (0.1, 0.3, 0.5, 1.0)


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 500
    negatives: int = 50
    epochs: int = 100
    dim: int = 32
    gamma: float = 0.5
    adv_temperature: float = 1.0
    seed: int = 1
    patience: int = 10
    eval_every: int = 5

    def warn_off_grid(self):
        grids = (("lr", LR_GRID), ("batch_size", BATCH_GRID),
                 ("negatives", NEG_GRID), ("gamma", GAMMA_GRID))
        for name, grid in grids:
            if getattr(self, name) not in grid:
                log.warning("%s=%s is outside the recommended grid %s",
                            name, getattr(self, name), grid)


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)  # dicts: epoch/seconds/loss/...
    best_val_mrr: float = float("nan")
    best_epoch: int = -1
    stopped_early: bool = False

    def write_tsv(self, path):
        cols = ("epoch", "seconds", "loss", "val_mrr", "val_hits10")
        with open(path, "w") as fh:
            fh.write("\t".join(cols) + "\n")
            for rec in self.epochs:
                fh.write("\t".join(_fmt(rec.get(c)) for c in cols) + "\n")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def nss_loss(pos_scores, neg_scores, adv_temperature=1.0):
    """Negative-sampling loss with self-adversarial weighting.

    L = -log sigmoid(F_pos) - sum_i p_i * log sigmoid(-F_neg_i), where
    p = softmax(F_neg / T) is treated as constant (no gradient flows
    through the weights).  Accepts (B,) positives with (B, k) negatives
    and averages over the batch.
    """
    pos_scores = torch.as_tensor(pos_scores, dtype=torch.float64)
    neg_scores = torch.as_tensor(neg_scores, dtype=torch.float64)
    if neg_scores.dim() == 1:
        neg_scores = neg_scores.unsqueeze(0)
        pos_scores = pos_scores.reshape(1)
    weights = torch.softmax(neg_scores / adv_temperature, dim=-1).detach()
    pos_term = -F.logsigmoid(pos_scores)
    neg_term = -(weights * F.logsigmoid(-neg_scores)).sum(dim=-1)
    return (pos_term + neg_term).mean()


class AdamState:
    """First/second-moment accumulators plus a step counter."""

    def __init__(self, tensors):
        self.m = {k: torch.zeros_like(t) for k, t in tensors.items()}
        self.v = {k: torch.zeros_like(t) for k, t in tensors.items()}
        self.step = 0


def adam_step(tensors, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, applied in place.

    Returns False (and leaves everything untouched) if any gradient is
    non-finite, so the caller can skip the batch.
    """
    for g in grads.values():
        if g is not None and not torch.isfinite(g).all():
            log.warning("non-finite gradient; skipping batch")
            return False
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    with torch.no_grad():
        for name, t in tensors.items():
            g = grads.get(name)
            if g is None:
                continue
            m = state.m[name]
            v = state.v[name]
            m.mul_(beta1).add_(g, alpha=1.0 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
            t.addcdiv_(m / bc1, (v / bc2).sqrt().add_(eps), value=-lr)
    return True


def _sample_batch(train, order, start, batch_size, n_ent, k, reciprocal, rng):
    idx = order[start:start + batch_size]
    batch = train[idx]
    draws = rng.integers(0, n_ent - 1, size=(len(idx), k))
    if reciprocal:
        corrupt_head = np.zeros((len(idx), k), dtype=bool)
    else:
        corrupt_head = rng.random((len(idx), k)) < 0.5
    # Skip over the gold entity of the corrupted slot: uniform over the
    # other N_e - 1 ids, so negatives never duplicate the positive.
    gold = np.where(corrupt_head, batch[:, [0]], batch[:, [2]])
    neg = draws + (draws >= gold)
    return batch, neg, corrupt_head


def _batch_loss(model, batch, neg, corrupt_head, adv_temperature):
    h = torch.from_numpy(batch[:, 0])
    r = torch.from_numpy(batch[:, 1])
    t = torch.from_numpy(batch[:, 2])
    pos = model.score(h, r, t)

    k = neg.shape[1]
    neg_ids = torch.from_numpy(neg)
    hh = h.unsqueeze(1).expand(-1, k).clone()
    tt = t.unsqueeze(1).expand(-1, k).clone()
    mask = torch.from_numpy(corrupt_head)
    hh[mask] = neg_ids[mask]
    tt[~mask] = neg_ids[~mask]
    rr = r.unsqueeze(1).expand(-1, k)
    negs = model.score(hh.reshape(-1), rr.reshape(-1), tt.reshape(-1)).reshape(-1, k)
    return nss_loss(pos, negs, adv_temperature)


def train(model, store, config, validate=None, progress=None):
    """Run the optimization loop; returns (model, TrainLog).

    `validate` is an optional callable model -> (mrr, hits10) invoked
    every `config.eval_every` epochs; the model is restored to its best
    validation checkpoint before returning.  `progress` is an optional
    per-epoch callback receiving the epoch record dict.
    """
    config.warn_off_grid()
    rng = np.random.default_rng(config.seed)
    tensors = model.trainable_tensors()
    state = AdamState(tensors)
    train_log = TrainLog()
    best_state = None
    stale = 0

    n = len(store.train)
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, config.batch_size):
            batch, neg, corrupt_head = _sample_batch(
                store.train, order, start, config.batch_size, model.n_ent,
                config.negatives, store.reciprocal, rng)
            for t in tensors.values():
                if t.grad is not None:
                    t.grad = None
            loss = _batch_loss(model, batch, neg, corrupt_head,
                               config.adv_temperature)
            loss.backward()
            grads = {k: t.grad for k, t in tensors.items()}
            if adam_step(tensors, grads, state, config.lr):
                model.post_step()
            epoch_loss += float(loss.detach())
            n_batches += 1
        seconds = time.perf_counter() - t0
        rec = {"epoch": epoch, "seconds": seconds,
               "loss": epoch_loss / max(n_batches, 1),
               "val_mrr": None, "val_hits10": None}

        if validate is not None and epoch % config.eval_every == 0:
            mrr, hits10 = validate(model)
            rec["val_mrr"], rec["val_hits10"] = mrr, hits10
            if not (mrr <= train_log.best_val_mrr):  # NaN-safe "improved"
                train_log.best_val_mrr = mrr
                train_log.best_epoch = epoch
                best_state = model.state_dict()
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    train_log.epochs.append(rec)
                    if progress:
                        progress(rec)
                    train_log.stopped_early = True
                    break
        train_log.epochs.append(rec)
        if progress:
            progress(rec)

    if best_state is not None:
        model.load_state_dict(best_state)
    return model, train_log


def benchmark_epoch_time(model_factory, store, config, kinds=("rote", "roth", "rotl", "rot2l"),
                         epochs=5):
    """Median per-epoch seconds per model kind, plus ratios against RotH.

    Every kind runs the identical workload (same data, batch size,
    negative count, thread budget); absolute times are hardware-specific,
    the ratios are the claim under test.
    """
    results = {}
    for kind in kinds:
        model = model_factory(kind)
        times = []
        rng = np.random.default_rng(config.seed)
        tensors = model.trainable_tensors()
        state = AdamState(tensors)
        n = len(store.train)
        for _ in range(epochs):
            t0 = time.perf_counter()
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                batch, neg, corrupt_head = _sample_batch(
                    store.train, order, start, config.batch_size, model.n_ent,
                    config.negatives, store.reciprocal, rng)
                for t in tensors.values():
                    if t.grad is not None:
                        t.grad = None
                loss = _batch_loss(model, batch, neg, corrupt_head,
                                   config.adv_temperature)
                loss.backward()
                grads = {k: t.grad for k, t in tensors.items()}
                if adam_step(tensors, grads, state, config.lr):
                    model.post_step()
            times.append(time.perf_counter() - t0)
        results[kind] = float(np.median(times))
    ratios = {}
    if "roth" in results:
        for kind in results:
            if kind != "roth":
                ratios[f"{kind}/roth"] = results[kind] / results["roth"]
    return {"seconds": results, "ratios": ratios}


def config_dict(config):
    return asdict(config)
