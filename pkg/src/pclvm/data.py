"""Synthetic datasets and the line-oriented file formats for them.

Generators:

* ``gen_toy_1d``       -- three labelled intervals on the real line
* ``gen_semisup_5d``   -- two-blob 5-d mixture, labels from a thin band in dim 1
* ``gen_vowels_corpus``-- pixel-letter LDA corpus, label = "a vowel is present"
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .mixture import LabeledVectorDataset


# ---------------------------------------------------------------------------
# documents and corpora
# ---------------------------------------------------------------------------

@dataclass
class BagOfWordsDocument:
    ids: np.ndarray
    counts: np.ndarray
    y: Optional[np.ndarray] = None
    doc_id: str = ""

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.ids.shape != self.counts.shape or self.ids.ndim != 1:
            raise ValueError("ids and counts must be 1-d arrays of equal length")
        if self.ids.size == 0:
            raise ValueError("document %r is empty" % self.doc_id)
        if np.any(self.counts < 1):
            raise ValueError("document %r has a count below 1" % self.doc_id)
        if np.any(self.ids < 0) or len(np.unique(self.ids)) != self.ids.size:
            raise ValueError("document %r has negative or repeated term ids" % self.doc_id)
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.int64)

    @property
    def N(self) -> int:
        return int(self.counts.sum())

    @property
    def labeled(self) -> bool:
        return self.y is not None

    def dense(self, V: int) -> np.ndarray:
        x = np.zeros(V)
        x[self.ids] = self.counts
        return x

    @classmethod
    def from_dense(cls, x, y=None, doc_id=""):
        x = np.asarray(x)
        ids = np.flatnonzero(x)
        return cls(ids, x[ids].astype(np.int64), y, doc_id)


@dataclass
class Corpus:
    V: int
    C: int
    docs: list
    splits: dict = field(default_factory=dict)  # split name -> list of doc indices

    def __post_init__(self):
        for d in self.docs:
            if np.any(d.ids >= self.V):
                raise ValueError("document %r has a term id >= V=%d" % (d.doc_id, self.V))
            if d.y is not None and d.y.shape != (self.C,):
                raise ValueError("document %r has %d labels, expected C=%d"
                                 % (d.doc_id, d.y.size, self.C))
        seen = set()
        for name, idx in self.splits.items():
            s = set(int(i) for i in idx)
            if s & seen:
                raise ValueError("split %r overlaps another split" % name)
            seen |= s

    def __len__(self):
        return len(self.docs)

    def subset(self, idx) -> "Corpus":
        return Corpus(self.V, self.C, [self.docs[i] for i in idx])

    def split(self, name: str) -> "Corpus":
        return self.subset(self.splits[name])

    def count_matrix(self) -> np.ndarray:
        X = np.zeros((len(self.docs), self.V))
        for i, d in enumerate(self.docs):
            X[i, d.ids] = d.counts
        return X

    def label_matrix(self):
        """(labels with 0 where missing, boolean labeled mask)."""
        Y = np.zeros((len(self.docs), self.C))
        mask = np.zeros(len(self.docs), dtype=bool)
        for i, d in enumerate(self.docs):
            if d.y is not None:
                Y[i] = d.y
                mask[i] = True
        return Y, mask


# ---------------------------------------------------------------------------
# toy 1-d
# ---------------------------------------------------------------------------

@dataclass
class Toy1DSpec:
    counts: tuple = (175, 100, 75)
    bounds: tuple = ((-1.0, 1.0), (1.0, 1.5), (1.5, 2.0))
    seed: int = 0

    def __post_init__(self):
        if any(c <= 0 for c in self.counts):
            raise ValueError("interval counts must be positive")
        for (a, b), (c, _) in zip(self.bounds, self.bounds[1:]):
            if not (a < b <= c):
                raise ValueError("intervals must be ordered and non-overlapping")


def gen_toy_1d(spec: Toy1DSpec = Toy1DSpec()) -> LabeledVectorDataset:
    """Interval A has coin-flip labels, B is all positive, C all negative."""
    rng = np.random.default_rng(spec.seed)
    (na, nb, nc), (ia, ib, ic) = spec.counts, spec.bounds
    x = np.concatenate([rng.uniform(*ia, size=na), rng.uniform(*ib, size=nb),
                        rng.uniform(*ic, size=nc)])
    y = np.concatenate([rng.integers(0, 2, size=na), np.ones(nb), np.zeros(nc)])
    return LabeledVectorDataset.fully_labeled(x[:, None], y)


# ---------------------------------------------------------------------------
# semi-supervised 5-d
# ---------------------------------------------------------------------------

@dataclass
class SemiSup5DSpec:
    N: int = 5000
    labeled_frac: float = 1.0
    threshold: float = 0.1
    seed: int = 0
    # False: labeled items are a uniform subset.  True: half of them are
    # drawn from the positives (as many as exist) and the rest from negatives.
    balanced: bool = False

    def __post_init__(self):
        if not 0 < self.labeled_frac <= 1:
            raise ValueError("labeled fraction must lie in (0, 1]")


SEMISUP_MEANS = np.array([[-1.0, 0, 0, 0, 0], [1.0, 0, 0, 0, 0]])
SEMISUP_VARS = np.array([[2.0, 1, 1, 0.5, 1], [2.0, 1, 1, 1, 0.5]])


def semisup_label_rule(X, threshold=0.1):
    return (np.abs(np.asarray(X)[:, 1]) < threshold).astype(float)


def gen_semisup_5d(spec: SemiSup5DSpec = SemiSup5DSpec()) -> LabeledVectorDataset:
    rng = np.random.default_rng(spec.seed)
    comp = rng.integers(0, 2, size=spec.N)
    X = SEMISUP_MEANS[comp] + rng.standard_normal((spec.N, 5)) * np.sqrt(SEMISUP_VARS[comp])
    y = semisup_label_rule(X, spec.threshold)
    n_lab = int(math.ceil(spec.labeled_frac * spec.N - 1e-9))
    mask = np.zeros(spec.N, dtype=bool)
    if spec.balanced and n_lab < spec.N:
        pos, neg = np.flatnonzero(y == 1), np.flatnonzero(y == 0)
        n_pos = min(len(pos), n_lab // 2)
        mask[rng.choice(pos, size=n_pos, replace=False)] = True
        mask[rng.choice(neg, size=n_lab - n_pos, replace=False)] = True
    else:
        mask[rng.choice(spec.N, size=n_lab, replace=False)] = True
    return LabeledVectorDataset(X, y, mask)


# ---------------------------------------------------------------------------
# vowels-from-consonants
# ---------------------------------------------------------------------------

# 5 wide x 7 tall.  E/F and I/J are near-duplicates on purpose.
GLYPHS = {
    "A": [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
    "B": ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."],
    "C": [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."],
    "D": ["####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."],
    "E": ["#####", "#....", "#....", "####.", "#....", "#....", "#####"],
    "F": ["#####", "#....", "#....", "####.", "#....", "#....", "#...."],
    "G": [".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".###."],
    "H": ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
    "I": [".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."],
    "J": [".###.", "..#..", "..#..", "..#..", "..#..", "#.#..", ".#..."],
    "K": ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"],
    "L": ["#....", "#....", "#....", "#....", "#....", "#....", "#####"],
    "M": ["#...#", "##.##", "#.#.#", "#...#", "#...#", "#...#", "#...#"],
    "N": ["#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"],
    "O": [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
    "P": ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."],
    "Q": [".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"],
    "R": ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"],
    "S": [".####", "#....", "#....", ".###.", "....#", "....#", "####."],
    "T": ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."],
    "U": ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
    "V": ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."],
    "W": ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "##.##", "#...#"],
    "X": ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"],
    "Y": ["#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."],
    "Z": ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"],
}
LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
VOWELS = frozenset("AEIOU")
GRID = 26

# Glyph origins (row, col) on a 4 x 6 lattice of overlapping 7 x 5 cells.
# Confusable pairs share a cell; every other letter has its own.
_CELL_ORDER = ["A", "B", "C", "D", "EF", "G",
               "H", "IJ", "K", "L", "OM", "N",
               "P", "Q", "R", "S", "T", "U",
               "V", "W", "X", "Y", "Z"]


def letter_origins():
    rows, cols = (0, 6, 12, 18), (0, 4, 8, 12, 16, 20)
    cells = [(r, c) for r in rows for c in cols]
    out = {}
    for cell, group in zip(cells, _CELL_ORDER):
        for ch in group:
            out[ch] = cell
    return out


def glyph_pixels(letter: str) -> np.ndarray:
    """Flat vocabulary ids of the active pixels of ``letter`` on the grid."""
    r0, c0 = letter_origins()[letter]
    ids = [(r0 + r) * GRID + (c0 + c)
           for r, line in enumerate(GLYPHS[letter]) for c, ch in enumerate(line) if ch == "#"]
    return np.array(sorted(ids))


@dataclass
class VowelsSpec:
    grid: int = GRID
    n_background: int = 4
    min_topics: int = 2
    max_topics: int = 4
    min_tokens: int = 100
    max_tokens: int = 400
    background_prob: float = 0.5
    doc_topic_conc: float = 1.0
    background_conc: float = 1.0
    n_train: int = 10000
    n_valid: int = 500
    n_test: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.grid != GRID:
            raise ValueError("the built-in font needs a %d x %d grid" % (GRID, GRID))
        if not 1 <= self.min_topics <= self.max_topics:
            raise ValueError("bad topic-count range")

    @property
    def V(self) -> int:
        return self.grid * self.grid


def vowels_true_topics(spec: VowelsSpec):
    """(phi of shape (26 + n_background, V), topic names)."""
    rng = np.random.default_rng([spec.seed, 7])
    V = spec.V
    rows, names = [], []
    for ch in LETTERS:
        row = np.zeros(V)
        row[glyph_pixels(ch)] = 1.0
        rows.append(row / row.sum())
        names.append(ch)
    for b in range(spec.n_background):
        rows.append(rng.dirichlet(np.full(V, spec.background_conc)))
        names.append("bg%d" % b)
    return np.array(rows), names


def gen_vowels_corpus(spec: VowelsSpec = VowelsSpec()):
    """Returns ``(corpus, true_phi, topic_names, active_topics_per_doc)``."""
    phi, names = vowels_true_topics(spec)
    rng = np.random.default_rng(spec.seed)
    n_letters = len(LETTERS)
    vowel_ids = {i for i, ch in enumerate(LETTERS) if ch in VOWELS}
    total = spec.n_train + spec.n_valid + spec.n_test
    docs, actives = [], []
    for d in range(total):
        n_active = rng.integers(spec.min_topics, spec.max_topics + 1)
        letters = list(rng.permutation(n_letters))
        backs = list(n_letters + rng.permutation(spec.n_background))
        active = [letters.pop()]
        for _ in range(n_active - 1):
            if backs and rng.random() < spec.background_prob:
                active.append(backs.pop())
            else:
                active.append(letters.pop())
        props = rng.dirichlet(np.full(len(active), spec.doc_topic_conc))
        N = rng.integers(spec.min_tokens, spec.max_tokens + 1)
        x = rng.multinomial(N, props @ phi[active])
        y = np.array([int(any(a in vowel_ids for a in active))])
        docs.append(BagOfWordsDocument.from_dense(x, y, doc_id="d%05d" % d))
        actives.append(sorted(int(a) for a in active))
    ids = np.arange(total)
    splits = {"train": list(ids[:spec.n_train]),
              "valid": list(ids[spec.n_train:spec.n_train + spec.n_valid]),
              "test": list(ids[spec.n_train + spec.n_valid:])}
    return Corpus(spec.V, 1, docs, splits), phi, names, actives


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def write_corpus(corpus: Corpus, path, splits_path=None):
    """``V=<int> C=<int>`` header, then ``id | labels-or-NA | term:count ...``."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write("V=%d C=%d\n" % (corpus.V, corpus.C))
        for d in corpus.docs:
            labels = "NA" if d.y is None else " ".join(str(int(v)) for v in d.y)
            terms = " ".join("%d:%d" % (i, c) for i, c in zip(d.ids, d.counts))
            fh.write("%s | %s | %s\n" % (d.doc_id, labels, terms))
    if corpus.splits:
        write_splits({n: [corpus.docs[i].doc_id for i in idx] for n, idx in corpus.splits.items()},
                     splits_path or path.with_suffix(path.suffix + ".splits"))


def _parse_header(line, keys, path):
    try:
        fields = dict(tok.split("=", 1) for tok in line.split())
        return [int(fields[k]) for k in keys]
    except (ValueError, KeyError):
        raise ValueError("%s:1: malformed header %r" % (path, line.strip()))


def read_corpus(path, splits_path=None) -> Corpus:
    path = Path(path)
    docs = []
    with path.open() as fh:
        V, C = _parse_header(fh.readline(), ("V", "C"), path)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = [p.strip() for p in line.split("|")]
            if len(parts) != 3:
                raise ValueError("%s:%d: expected 3 '|'-separated fields" % (path, lineno))
            doc_id, labels, terms = parts
            try:
                y = None if labels == "NA" else np.array([int(v) for v in labels.split()])
                pairs = [t.split(":") for t in terms.split()]
                ids = [int(a) for a, _ in pairs]
                counts = [int(b) for _, b in pairs]
            except ValueError:
                raise ValueError("%s:%d: malformed document line" % (path, lineno))
            if y is not None and (y.size != C or np.any((y != 0) & (y != 1))):
                raise ValueError("%s:%d: expected %d binary labels or NA" % (path, lineno, C))
            if any(i >= V or i < 0 for i in ids):
                raise ValueError("%s:%d: term id out of range [0, %d)" % (path, lineno, V))
            try:
                docs.append(BagOfWordsDocument(ids, counts, y, doc_id))
            except ValueError as err:
                raise ValueError("%s:%d: %s" % (path, lineno, err))
    splits = {}
    sp = Path(splits_path) if splits_path else path.with_suffix(path.suffix + ".splits")
    if sp.exists():
        index = {d.doc_id: i for i, d in enumerate(docs)}
        for name, ids in read_splits(sp).items():
            splits[name] = [index[i] for i in ids]
    return Corpus(V, C, docs, splits)


def write_splits(splits: dict, path):
    with Path(path).open("w") as fh:
        for name, ids in splits.items():
            for i in ids:
                fh.write("%s %s\n" % (i, name))


def read_splits(path) -> dict:
    out = {}
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError("%s:%d: expected '<doc_id> <split>'" % (path, lineno))
            out.setdefault(parts[1], []).append(parts[0])
    return out


def write_vectors(data: LabeledVectorDataset, path):
    """``D=<int>`` header, then ``id | label-or-NA | x_1 ... x_D``."""
    with Path(path).open("w") as fh:
        fh.write("D=%d\n" % data.D)
        for i in range(data.N):
            lab = "%d" % data.y[i] if data.labeled_mask[i] else "NA"
            fh.write("%d | %s | %s\n" % (i, lab, " ".join(repr(float(v)) for v in data.X[i])))


def read_vectors(path) -> LabeledVectorDataset:
    path = Path(path)
    X, y, mask = [], [], []
    with path.open() as fh:
        (D,) = _parse_header(fh.readline(), ("D",), path)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = [p.strip() for p in line.split("|")]
            try:
                if len(parts) != 3:
                    raise ValueError
                row = [float(v) for v in parts[2].split()]
                if len(row) != D:
                    raise ValueError
                lab = parts[1]
                y.append(0.0 if lab == "NA" else float(int(lab)))
                mask.append(lab != "NA")
            except ValueError:
                raise ValueError("%s:%d: malformed vector line" % (path, lineno))
            X.append(row)
    return LabeledVectorDataset(np.array(X).reshape(-1, D), np.array(y), np.array(mask))
