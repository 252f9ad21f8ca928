"""Corpus-level word statistics and the confidence-weighted pivot lexicon.

The lexicon bridges two vocabularies with weighted word pairs: ordinary
words frequent in both corpora paired with themselves, optionally merged
with a hand-made variant lexicon (e.g. social-media normalization
pairs).  Each pair carries a confidence in (0, 1], the Sorensen-Dice
coefficient of the two normalized frequencies.
"""

import logging
from dataclasses import dataclass, field

DEFAULT_TOP_K = 5000

log = logging.getLogger(__name__)


class CorpusError(ValueError):
    pass


def tokenize(line):
    """Lowercased whitespace tokens; embedding vocabularies are lowercase."""
    return line.lower().split()


@dataclass
class FrequencyTable:
    """Word occurrence counts for one raw corpus."""

    counts: dict
    total_tokens: int = 0
    max_count: int = 0

    def __post_init__(self):
        if self.total_tokens == 0 and self.counts:
            self.total_tokens = sum(self.counts.values())
            self.max_count = max(self.counts.values())

    def count(self, word):
        return self.counts.get(word, 0)

    def smoothed_count(self, word):
        """Count with add-one floor for unseen words (keeps confidences > 0)."""
        return max(self.counts.get(word, 0), 1)

    def normalized(self, word):
        """Frequency relative to the most frequent word, smoothed."""
        return self.smoothed_count(word) / self.max_count

    def save(self, path):
        items = sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))
        with open(path, "w", encoding="utf-8") as fh:
            for word, n in items:
                fh.write(f"{word} {n}\n")

    @classmethod
    def load(cls, path):
        counts = {}
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                cols = line.split()
                if len(cols) != 2:
                    raise CorpusError(f"{path}: line {i}: expected 2 columns")
                counts[cols[0]] = counts.get(cols[0], 0) + int(cols[1])
        if not counts:
            raise CorpusError("empty corpus")
        return cls(counts)


def count_frequencies(sentences):
    """Count token multiplicities over an iterable of token lists.

    Order and chunking of the stream are irrelevant: counting is a
    commutative merge.  Raises CorpusError on a tokenless corpus.
    """
    counts = {}
    total = 0
    for sent in sentences:
        for tok in sent:
            counts[tok] = counts.get(tok, 0) + 1
            total += 1
    if total == 0:
        raise CorpusError("empty corpus")
    return FrequencyTable(counts)


def count_corpus_file(path):
    """Frequency table of a one-sentence-per-line UTF-8 text file."""
    with open(path, encoding="utf-8") as fh:
        return count_frequencies(tokenize(line) for line in fh)


@dataclass
class LexiconConfig:
    top_k: int = DEFAULT_TOP_K
    p2_path: str = None

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")


def rank_threshold(table, top_k):
    """Count of the k-th most frequent word (ties broken lexicographically).

    When top_k exceeds the vocabulary the smallest count is used and a
    warning is logged rather than failing.
    """
    items = sorted(table.counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if top_k > len(items):
        log.warning("top_k=%d exceeds vocabulary size %d; using the smallest count",
                    top_k, len(items))
        return items[-1][1]
    return items[top_k - 1][1]


def build_p1(ft_s, ft_t, cfg):
    """Identity pairs over words frequent in both corpora.

    A word qualifies when its count reaches the rank-top_k threshold of
    each table.  Result is lexicographically sorted (w, w) pairs.
    """
    if not ft_s.counts or not ft_t.counts:
        raise CorpusError("empty corpus")
    phi_s = rank_threshold(ft_s, cfg.top_k)
    phi_t = rank_threshold(ft_t, cfg.top_k)
    words = [w for w, n in ft_s.counts.items()
             if n >= phi_s and ft_t.count(w) >= phi_t]
    return [(w, w) for w in sorted(words)]


def load_p2(path):
    """Read a variant lexicon: one "target_variant source_form" pair per line.

    Lines starting with '#' are comments.  Entries are lowercased to
    match corpus tokenization; duplicate pairs keep the first occurrence.
    Returns (source_word, target_word) pairs in file order.
    """
    pairs = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            cols = stripped.split()
            if len(cols) != 2:
                raise CorpusError(f"line {i}: expected 2 columns")
            w_t, w_s = cols[0].lower(), cols[1].lower()
            if (w_s, w_t) in seen:
                continue
            seen.add((w_s, w_t))
            pairs.append((w_s, w_t))
    return pairs


def confidence(w_s, w_t, ft_s, ft_t):
    """Sorensen-Dice coefficient of the two normalized frequencies.

    2 * fs * ft / (fs + ft) with fs, ft in (0, 1]; add-one smoothing on
    unseen words keeps the denominator positive.
    """
    fs = ft_s.normalized(w_s)
    ft = ft_t.normalized(w_t)
    return 2.0 * fs * ft / (fs + ft)


@dataclass(frozen=True)
class LexiconEntry:
    word_source: str
    word_target: str
    confidence: float
    origin: str  # "P1" | "P2"


@dataclass
class PivotLexicon:
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def save(self, path):
        """Three columns "w_s w_t c", confidence to 6 decimal places."""
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(f"{e.word_source} {e.word_target} {e.confidence:.6f}\n")

    @classmethod
    def load(cls, path):
        """Load a saved lexicon; provenance tags are not stored on disk."""
        entries = []
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh, 1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                cols = stripped.split()
                if len(cols) != 3:
                    raise CorpusError(f"{path}: line {i}: expected 3 columns")
                entries.append(LexiconEntry(cols[0], cols[1], float(cols[2]), "P1"))
        if not entries:
            raise CorpusError("empty pivot lexicon")
        return cls(entries)


def build_lexicon(ft_s, ft_t, cfg):
    """Union of the frequency-derived pairs and the optional variant file.

    Every entry, P2 included, gets a frequency-derived confidence (with
    add-one smoothing for words unseen on one side).  When the same pair
    occurs in both sources the P1 entry wins.
    """
    entries = []
    seen = {}
    for w_s, w_t in build_p1(ft_s, ft_t, cfg):
        seen[(w_s, w_t)] = len(entries)
        entries.append(LexiconEntry(w_s, w_t, confidence(w_s, w_t, ft_s, ft_t), "P1"))
    if cfg.p2_path is not None:
        for w_s, w_t in load_p2(cfg.p2_path):
            if (w_s, w_t) in seen:
                continue
            seen[(w_s, w_t)] = len(entries)
            entries.append(LexiconEntry(w_s, w_t, confidence(w_s, w_t, ft_s, ft_t), "P2"))
    if not entries:
        raise CorpusError("empty pivot lexicon")
    return PivotLexicon(entries)
