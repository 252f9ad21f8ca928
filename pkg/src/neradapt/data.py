"""Dataset ingestion, BIO handling, and entity-level evaluation.

Scoring is the usual exact-match micro F1: a predicted span counts only
when its type, start, and end all equal a gold span's.  Precision is 0
when nothing is predicted, recall is 0 when there is no gold entity, and
F is 0 when P + R is 0.
"""

import logging
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

OUTSIDE = "O"


class DataError(ValueError):
    pass


@dataclass
class SequenceExample:
    tokens: list
    labels: list

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise DataError(
                f"{len(self.tokens)} tokens but {len(self.labels)} labels")

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True, order=True)
class EntitySpan:
    """Typed token interval [start, end) inside one sentence."""

    type: str
    start: int
    end: int


def repair_bio(labels):
    """Fix illegal BIO transitions in place of rejecting noisy data.

    An I-X that follows the sentence start, O, or a different type
    becomes B-X.  Returns (repaired_labels, repair_count).
    """
    fixed = []
    repairs = 0
    prev_type = None
    for lab in labels:
        if lab.startswith("I-"):
            etype = lab[2:]
            if prev_type != etype:
                fixed.append("B-" + etype)
                repairs += 1
                prev_type = etype
                continue
        prev_type = lab[2:] if lab.startswith(("B-", "I-")) else None
        fixed.append(lab)
    return fixed, repairs


def read_conll(path):
    """Parse a two-column CoNLL file into examples, repairing BIO on load.

    Lines are "tokenLABEL" separated by a tab or spaces; a blank line
    ends a sentence.  A line without exactly two columns raises with its
    line number; total repairs are logged.
    """
    examples = []
    tokens, labels = [], []
    repairs_total = 0

    def flush():
        nonlocal repairs_total, tokens, labels
        if tokens:
            fixed, n = repair_bio(labels)
            repairs_total += n
            examples.append(SequenceExample(tokens, fixed))
            tokens, labels = [], []

    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped:
                flush()
                continue
            cols = stripped.split()
            if len(cols) != 2:
                raise DataError(f"{path}: line {i}: expected 2 columns, got {len(cols)}")
            tokens.append(cols[0])
            labels.append(cols[1])
    flush()
    if repairs_total:
        log.info("%s: repaired %d illegal BIO transitions", path, repairs_total)
    return examples


def write_conll(path, examples):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            for tok, lab in zip(ex.tokens, ex.labels):
                fh.write(f"{tok} {lab}\n")
            fh.write("\n")


def extract_entities(labels):
    """Maximal B-initiated same-type runs as a set of spans."""
    spans = set()
    start = None
    etype = None
    for i, lab in enumerate(labels):
        starting = lab.startswith("B-")
        continuing = lab.startswith("I-") and etype == lab[2:]
        if start is not None and not continuing:
            spans.add(EntitySpan(etype, start, i))
            start, etype = None, None
        if starting:
            start, etype = i, lab[2:]
    if start is not None:
        spans.add(EntitySpan(etype, start, len(labels)))
    return spans


def spans_to_bio(spans, length):
    """Inverse of extract_entities for valid, non-overlapping spans."""
    labels = [OUTSIDE] * length
    for span in sorted(spans):
        labels[span.start] = "B-" + span.type
        for i in range(span.start + 1, span.end):
            labels[i] = "I-" + span.type
    return labels


@dataclass
class EvalResult:
    precision: float
    recall: float
    f1: float
    tp: int
    n_pred: int
    n_gold: int
    per_type: dict = field(default_factory=dict)

    def summary(self):
        return (f"P={self.precision:.4f} R={self.recall:.4f} F1={self.f1:.4f} "
                f"(tp={self.tp} pred={self.n_pred} gold={self.n_gold})")


def _prf(tp, n_pred, n_gold):
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def evaluate(pred, gold):
    """Micro-averaged entity P/R/F1 over aligned label sequences.

    `pred` and `gold` are corpora: lists of per-sentence label lists.
    Raises on any alignment mismatch.
    """
    if len(pred) != len(gold):
        raise DataError(f"{len(pred)} predicted sentences vs {len(gold)} gold")
    pred_spans, gold_spans = set(), set()
    types = set()
    for si, (p_labels, g_labels) in enumerate(zip(pred, gold)):
        if len(p_labels) != len(g_labels):
            raise DataError(f"sentence {si}: {len(p_labels)} predicted labels "
                            f"vs {len(g_labels)} gold")
        for span in extract_entities(p_labels):
            pred_spans.add((si, span))
            types.add(span.type)
        for span in extract_entities(g_labels):
            gold_spans.add((si, span))
            types.add(span.type)
    tp = len(pred_spans & gold_spans)
    p, r, f = _prf(tp, len(pred_spans), len(gold_spans))
    per_type = {}
    for t in sorted(types):
        pt = {s for s in pred_spans if s[1].type == t}
        gt = {s for s in gold_spans if s[1].type == t}
        tp_t = len(pt & gt)
        per_type[t] = _prf(tp_t, len(pt), len(gt))
    return EvalResult(p, r, f, tp, len(pred_spans), len(gold_spans), per_type)


@dataclass
class Dataset:
    """Train/dev/test splits plus the label inventory they induce."""

    train: list
    dev: list
    test: list = field(default_factory=list)
    label_set: list = field(default_factory=list)

    def __post_init__(self):
        if not self.label_set:
            labels = {lab for ex in self.train + self.dev for lab in ex.labels}
            labels.add(OUTSIDE)
            self.label_set = sorted(labels)
        known = set(self.label_set)
        for ex in self.test:
            for i, lab in enumerate(ex.labels):
                if lab not in known:
                    log.warning("test label %r outside the label set, mapping to O", lab)
                    ex.labels[i] = OUTSIDE

    @classmethod
    def load(cls, train_path, dev_path, test_path=None):
        return cls(
            train=read_conll(train_path),
            dev=read_conll(dev_path),
            test=read_conll(test_path) if test_path else [],
        )
