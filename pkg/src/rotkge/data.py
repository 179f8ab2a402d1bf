"""Dataset ingestion: id dictionaries, triple splits and the filter index.

Input format is the standard `head<TAB>relation<TAB>tail` text layout in
`train.txt` / `valid.txt` / `test.txt`.  Pre-built `entities.dict` /
`relations.dict` files (id<TAB>name per line) are honored when present.
Loading is deterministic: same files always produce the same ids.
"""

import os
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .models import dict_hash

SPLIT_FILES = ("train.txt", "valid.txt", "test.txt")
RECIPROCAL_SUFFIX = "_reciprocal"


class DataError(Exception):
    """Malformed or inconsistent dataset input."""


@dataclass
class Dictionary:
    """Dense bijective name<->id maps for entities and relations."""

    entity_to_id: dict
    relation_to_id: dict

    @property
    def n_ent(self):
        return len(self.entity_to_id)

    @property
    def n_rel(self):
        return len(self.relation_to_id)

    def entity_names(self):
        names = [None] * self.n_ent
        for name, i in self.entity_to_id.items():
            names[i] = name
        return names

    def relation_names(self):
        names = [None] * self.n_rel
        for name, i in self.relation_to_id.items():
            names[i] = name
        return names

    def entity_hash(self):
        return dict_hash(self.entity_names())

    def relation_hash(self):
        return dict_hash(self.relation_names())


@dataclass
class TripleStore:
    """Integer-encoded train/valid/test triples as (N, 3) int64 arrays."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    n_base_relations: int = 0
    reciprocal: bool = False

    def splits(self):
        return {"train": self.train, "valid": self.valid, "test": self.test}


@dataclass
class FilterIndex:
    """All known-true completions, for filtered ranking.

    tails[(h, r)] is the set of every tail seen with (h, r) in any split;
    heads[(t, r)] mirrors it on the head side.
    """

    tails: dict = field(default_factory=lambda: defaultdict(set))
    heads: dict = field(default_factory=lambda: defaultdict(set))

    def add(self, h, r, t):
        self.tails[(h, r)].add(t)
        self.heads[(t, r)].add(h)


def _read_triples(path):
    triples = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated "
                                f"fields, got {len(parts)}")
            triples.append(tuple(parts))
    return triples


def _read_dict_file(path):
    mapping = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected `id<TAB>name`")
            idx, name = int(parts[0]), parts[1]
            mapping[name] = idx
    ids = sorted(mapping.values())
    if ids != list(range(len(ids))):
        raise DataError(f"{path}: ids are not dense in [0, N)")
    return mapping


def load_dataset(dir_path, reciprocal=True):
    """Load a dataset directory into (Dictionary, TripleStore, FilterIndex).

    With reciprocal=True every relation r gains an inverse r', doubling
    N_r; each training triple (h, r, t) is mirrored as (t, r', h) and head
    queries are later answered through the inverse relation.
    """
    paths = [os.path.join(dir_path, f) for f in SPLIT_FILES]
    for p in paths:
        if not os.path.isfile(p):
            raise DataError(f"missing split file: {p}")
    raw = {f: _read_triples(os.path.join(dir_path, f)) for f in SPLIT_FILES}

    ent_path = os.path.join(dir_path, "entities.dict")
    rel_path = os.path.join(dir_path, "relations.dict")
    if os.path.isfile(ent_path) and os.path.isfile(rel_path):
        e2i = _read_dict_file(ent_path)
        r2i = _read_dict_file(rel_path)
        for fname in SPLIT_FILES:
            for h, r, t in raw[fname]:
                if h not in e2i or t not in e2i:
                    raise DataError(f"{fname}: entity not in entities.dict: "
                                    f"{h if h not in e2i else t}")
                if r not in r2i:
                    raise DataError(f"{fname}: relation not in relations.dict: {r}")
    else:
        # First-appearance order over sorted split file names.
        e2i, r2i = {}, {}
        for fname in sorted(SPLIT_FILES):
            for h, r, t in raw[fname]:
                for name in (h, t):
                    if name not in e2i:
                        e2i[name] = len(e2i)
                if r not in r2i:
                    r2i[r] = len(r2i)

    n_base = len(r2i)
    if reciprocal:
        for name in list(sorted(r2i, key=r2i.get)):
            r2i[name + RECIPROCAL_SUFFIX] = r2i[name] + n_base
    dictionary = Dictionary(e2i, r2i)

    def encode(triples):
        if not triples:
            return np.zeros((0, 3), dtype=np.int64)
        return np.array([(e2i[h], r2i[r], e2i[t]) for h, r, t in triples],
                        dtype=np.int64)

    train = encode(raw["train.txt"])
    valid = encode(raw["valid.txt"])
    test = encode(raw["test.txt"])

    if reciprocal and len(train):
        mirrored = train[:, [2, 1, 0]].copy()
        mirrored[:, 1] += n_base
        train = np.concatenate([train, mirrored], axis=0)

    store = TripleStore(train, valid, test, n_base_relations=n_base,
                        reciprocal=reciprocal)

    index = FilterIndex()
    for arr in (train, valid, test):
        for h, r, t in arr:
            index.add(int(h), int(r), int(t))
    if reciprocal:
        # valid/test are stored un-mirrored; index their inverses too so
        # head queries (t, r', ?) are filtered correctly.
        for arr in (valid, test):
            for h, r, t in arr:
                index.add(int(t), int(r) + n_base, int(h))
    return dictionary, store, index


def negative_sample(store, triple, k, rng):
    """Draw k uniformly corrupted variants of `triple`.

    In reciprocal mode only tails are corrupted (head queries are covered
    by the mirrored triples); otherwise corruption alternates head/tail
    with probability 1/2 per sample.  Replacements are uniform over the
    other N_e - 1 entities, so a corrupted triple never equals the input
    triple.  `rng` is a numpy Generator, so the output is deterministic
    under a fixed seed.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n_ent = _n_entities(store)
    h, r, t = (int(x) for x in triple)
    draws = rng.integers(0, n_ent - 1, size=k)
    if store.reciprocal:
        corrupt_head = np.zeros(k, dtype=bool)
    else:
        corrupt_head = rng.random(k) < 0.5
    out = []
    for i in range(k):
        if corrupt_head[i]:
            e = int(draws[i]) + (draws[i] >= h)
            out.append((e, r, t))
        else:
            e = int(draws[i]) + (draws[i] >= t)
            out.append((h, r, e))
    return out


def _n_entities(store):
    ids = [arr[:, [0, 2]].max() for arr in store.splits().values() if len(arr)]
    return int(max(ids)) + 1


def make_toy_store(n_ent, n_rel, n_train, n_valid=0, n_test=0, seed=0,
                   reciprocal=False):
    """Random synthetic KG, used by tests and the timing benchmark."""
    rng = np.random.default_rng(seed)

    def draw(n):
        if n == 0:
            return np.zeros((0, 3), dtype=np.int64)
        h = rng.integers(0, n_ent, size=n)
        r = rng.integers(0, n_rel, size=n)
        t = rng.integers(0, n_ent, size=n)
        return np.stack([h, r, t], axis=1).astype(np.int64)

    train, valid, test = draw(n_train), draw(n_valid), draw(n_test)
    if reciprocal:
        mirrored = train[:, [2, 1, 0]].copy()
        mirrored[:, 1] += n_rel
        train = np.concatenate([train, mirrored], axis=0)
    store = TripleStore(train, valid, test, n_base_relations=n_rel,
                        reciprocal=reciprocal)
    index = FilterIndex()
    for arr in (train, valid, test):
        for h, r, t in arr:
            index.add(int(h), int(r), int(t))
    if reciprocal:
        for arr in (valid, test):
            for h, r, t in arr:
                index.add(int(t), int(r) + n_rel, int(h))
    return store, index
