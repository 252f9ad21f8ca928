"""Pre-trained embedding tables and the learned word-space projection.

The projection is a linear map from the target embedding space into the
source space, fit on lexicon pairs by confidence-weighted least squares:

    loss(Z) = sum_i c_i * || x_i Z - y_i ||^2

with x_i the target-side vector and y_i the source-side vector of pair
i.  Gradient descent (the production path) is checked against the
closed-form normal-equations solution (the oracle path); the two must
agree to near machine precision on any well-posed fixture.
"""

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from . import checkpoints

log = logging.getLogger(__name__)


class EmbeddingError(ValueError):
    pass


class EmbeddingMatrix:
    """An ordered word -> vector table; rows are float64, words unique."""

    def __init__(self, vocab, vectors):
        vectors = np.asarray(vectors, dtype=np.float64)
        if len(vocab) != vectors.shape[0]:
            raise EmbeddingError(
                f"{len(vocab)} words but {vectors.shape[0]} vector rows")
        if len(set(vocab)) != len(vocab):
            raise EmbeddingError("duplicate words in vocabulary")
        if not np.all(np.isfinite(vectors)):
            raise EmbeddingError("non-finite embedding entries")
        self.vocab = list(vocab)
        self.vectors = vectors
        self.index = {w: i for i, w in enumerate(self.vocab)}

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.vocab)

    def __contains__(self, word):
        return word.lower() in self.index

    def lookup(self, word):
        """Vector for a word (query lowercased); zeros for out-of-vocabulary."""
        i = self.index.get(word.lower())
        if i is None:
            return np.zeros(self.dim)
        return self.vectors[i]

    def vocab_id(self):
        """Digest of the vocabulary and dimension, for checkpoint references."""
        h = hashlib.sha256()
        h.update(str(self.dim).encode())
        for w in self.vocab:
            h.update(w.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()[:16]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for w, vec in zip(self.vocab, self.vectors):
                fh.write(w + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def load_embeddings(path):
    """Parse a text embedding table: one "word v1 ... vd" line per word.

    The dimension is inferred from the first line; later lines with a
    different width raise with their line number.  Duplicate words keep
    the first occurrence (warned).
    """
    vocab, rows = [], []
    index = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            parts = [p for p in parts if p]
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise EmbeddingError(f"{path}: line {i}: no vector components")
            elif len(values) != dim:
                raise EmbeddingError(f"{path}: line {i}: dim mismatch "
                                     f"(expected {dim}, got {len(values)})")
            if word in index:
                log.warning("%s: line %d: duplicate word %r, keeping first", path, i, word)
                continue
            try:
                vec = [float(v) for v in values]
            except ValueError as exc:
                raise EmbeddingError(f"{path}: line {i}: {exc}") from None
            index[word] = len(vocab)
            vocab.append(word)
            rows.append(vec)
    if not vocab:
        raise EmbeddingError(f"{path}: empty embedding file")
    return EmbeddingMatrix(vocab, np.array(rows))


@dataclass
class ProjectionMatrix:
    """d_t x d_s linear map; frozen once transfer training starts."""

    z: np.ndarray
    frozen: bool = False

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        if self.z.ndim != 2 or not np.all(np.isfinite(self.z)):
            raise EmbeddingError("projection must be a finite matrix")

    def save(self, path):
        checkpoints.save_projection(path, self.z)

    @classmethod
    def load(cls, path, frozen=False):
        return cls(checkpoints.load_projection(path), frozen=frozen)


@dataclass
class ProjectionTrainConfig:
    learning_rate: float = 0.01
    max_epochs: int = 1000
    batch_size: int = 0  # 0 = full batch
    rel_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be > 0")


@dataclass
class ProjectionFit:
    projection: ProjectionMatrix
    loss_history: list = field(default_factory=list)
    used_entries: int = 0
    skipped_entries: int = 0
    final_learning_rate: float = 0.0


def _design_matrices(emb_s, emb_t, lexicon):
    xs, ys, cs = [], [], []
    skipped = 0
    for e in lexicon:
        if e.word_target in emb_t and e.word_source in emb_s:
            xs.append(emb_t.lookup(e.word_target))
            ys.append(emb_s.lookup(e.word_source))
            cs.append(e.confidence)
        else:
            skipped += 1
    if not xs:
        raise EmbeddingError("no lexicon entry is covered by both embedding tables")
    return np.array(xs), np.array(ys), np.array(cs), skipped


def projection_loss(z, x, y, c):
    r = x @ z - y
    return float(np.sum(c * np.sum(r * r, axis=1)))


def learn_projection(emb_s, emb_t, lexicon, cfg=None):
    """Fit the projection by (stochastic) gradient descent.

    Zero-initialized; full-batch steps by default.  An epoch whose loss
    increases is rolled back and the learning rate halved, so the
    recorded loss history is non-increasing; each accepted epoch grows
    the rate slightly (bold-driver schedule), which keeps convergence
    healthy on badly conditioned pair sets without giving up the
    monotonicity guarantee.  Stops when the relative loss change drops
    below cfg.rel_tol.
    """
    cfg = cfg or ProjectionTrainConfig()
    x, y, c, skipped = _design_matrices(emb_s, emb_t, lexicon)
    if skipped:
        log.info("projection: skipped %d lexicon entries missing from an embedding table",
                 skipped)
    if x.shape[0] < emb_t.dim:
        log.warning("projection: only %d usable pairs for a %d-dim input space",
                    x.shape[0], emb_t.dim)
    rng = np.random.default_rng(cfg.seed)
    z = np.zeros((emb_t.dim, emb_s.dim))
    lr = cfg.learning_rate
    lr_cap = cfg.learning_rate * 1024.0
    loss = projection_loss(z, x, y, c)
    history = [loss]
    cw = c[:, None]
    for _ in range(cfg.max_epochs):
        if cfg.batch_size <= 0:
            grad = 2.0 * x.T @ (cw * (x @ z - y))
            z_new = z - lr * grad
        else:
            z_new = z.copy()
            order = rng.permutation(x.shape[0])
            for lo in range(0, len(order), cfg.batch_size):
                sel = order[lo:lo + cfg.batch_size]
                xb, yb, cb = x[sel], y[sel], cw[sel]
                z_new -= lr * 2.0 * xb.T @ (cb * (xb @ z_new - yb))
        new_loss = projection_loss(z_new, x, y, c)
        if not np.isfinite(new_loss) or new_loss > loss:
            lr *= 0.5  # descent overshoot: retry this epoch at half the rate
            continue
        z = z_new
        history.append(new_loss)
        lr = min(lr * 1.1, lr_cap)
        if abs(loss - new_loss) <= cfg.rel_tol * max(loss, 1e-30):
            loss = new_loss
            break
        loss = new_loss
    return ProjectionFit(ProjectionMatrix(z), history, x.shape[0], skipped, lr)


def solve_projection_closed_form(emb_s, emb_t, lexicon, ridge=1e-8):
    """Exact weighted least-squares minimizer via the normal equations.

    Z* = (X^T C X)^-1 X^T C Y.  A singular Gram matrix gets `ridge`
    added to its diagonal (logged) instead of failing.
    """
    x, y, c, skipped = _design_matrices(emb_s, emb_t, lexicon)
    if skipped:
        log.info("projection: skipped %d lexicon entries missing from an embedding table",
                 skipped)
    cw = c[:, None]
    gram = x.T @ (cw * x)
    rhs = x.T @ (cw * y)
    try:
        z = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        log.warning("projection: singular normal equations, adding ridge %.1e", ridge)
        z = np.linalg.solve(gram + ridge * np.eye(gram.shape[0]), rhs)
    return ProjectionMatrix(z)


def project_word(word, emb_t, projection):
    """Projected vector of a target-domain word; OOV projects the zero vector."""
    return emb_t.lookup(word) @ projection.z


def project_table(emb_t, projection):
    """All target vectors mapped into the source space at once."""
    return emb_t.vectors @ projection.z
