import os
import sys

import numpy as np
import pytest
import torch

sys.path.insert(0, os.path.dirname(__file__))

from rotkge import models

# Full-dataset runs (WN18RR / FB15k237) are only attempted when the data
# is available under ROTKGE_DATA_ROOT.
DATA_ROOT = os.environ.get("ROTKGE_DATA_ROOT", os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data"))


def dataset_dir(name):
    path = os.path.join(DATA_ROOT, name)
    if not all(os.path.isfile(os.path.join(path, f))
               for f in ("train.txt", "valid.txt", "test.txt")):
        pytest.skip(f"dataset {name} not available under {DATA_ROOT}")
    return path


TOY_TRIPLES = [
    ("alice", "knows", "bob"),
    ("bob", "knows", "carol"),
    ("carol", "likes", "dave"),
    ("alice", "likes", "dave"),
    ("dave", "knows", "alice"),
    ("bob", "likes", "eve"),
    ("eve", "knows", "carol"),
    ("carol", "knows", "alice"),
]


@pytest.fixture
def toy_dataset_dir(tmp_path):
    """A 5-entity, 2-relation dataset written as train/valid/test files."""
    d = tmp_path / "toykg"
    d.mkdir()
    splits = {
        "train.txt": TOY_TRIPLES[:5],
        "valid.txt": TOY_TRIPLES[5:6],
        "test.txt": TOY_TRIPLES[6:],
    }
    for fname, triples in splits.items():
        with open(d / fname, "w") as fh:
            for h, r, t in triples:
                fh.write(f"{h}\t{r}\t{t}\n")
    return str(d)


def randomized_model(kind, n_ent=8, n_rel=3, dim=4, seed=0, scale=0.3, **kwargs):
    """A model with parameters perturbed away from the tiny init so that
    scores and gradients are non-trivial."""
    m = models.create_model(kind, n_ent, n_rel, dim, seed=seed, **kwargs)
    g = torch.Generator().manual_seed(seed + 1000)
    with torch.no_grad():
        for t in m.trainable_tensors().values():
            t.add_(torch.randn(t.shape, generator=g, dtype=torch.float64) * scale)
    return m


def rng(seed=0):
    return np.random.default_rng(seed)
