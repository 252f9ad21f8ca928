"""The base sequence tagger: char BLSTM + word BLSTM + linear-chain CRF.

Per-token inputs concatenate a pre-trained word embedding with a
character-level encoding (final forward and backward states of a BLSTM
over character embeddings).  A word-level BLSTM produces contextual
states, an affine map scores each label per token, and a CRF with
transition/start/stop potentials scores complete label sequences.

"Nominal hidden size h" throughout means each direction runs h/2 units
and the two directions are concatenated back to h.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import checkpoints
from .data import OUTSIDE, evaluate
from .optim import Adam, ParameterGroup

log = logging.getLogger(__name__)

UNK_CHAR = 0  # char id 0 is reserved for unknown characters


class ModelError(ValueError):
    pass


@dataclass
class TaggerConfig:
    char_emb_dim: int = 25
    char_hidden: int = 50
    word_emb_dim: int = 200
    word_hidden: int = 200
    label_set: list = field(default_factory=lambda: [OUTSIDE])
    dropout: float = 0.5

    def __post_init__(self):
        for name in ("char_emb_dim", "char_hidden", "word_emb_dim", "word_hidden"):
            if getattr(self, name) <= 0:
                raise ModelError(f"{name} must be positive")
        for name in ("char_hidden", "word_hidden"):
            if getattr(self, name) % 2:
                raise ModelError(f"{name} must be even (two concatenated directions)")
        if OUTSIDE not in self.label_set:
            raise ModelError(f"label set must contain {OUTSIDE!r}")

    def to_dict(self):
        return {
            "char_emb_dim": self.char_emb_dim,
            "char_hidden": self.char_hidden,
            "word_emb_dim": self.word_emb_dim,
            "word_hidden": self.word_hidden,
            "label_set": list(self.label_set),
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def glorot(rng, rows, cols):
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


class ParamStore:
    """Insertion-ordered name -> Tensor registry shared by a model's layers."""

    def __init__(self):
        self.params = {}

    def new(self, name, data):
        if name in self.params:
            raise ModelError(f"duplicate parameter name {name!r}")
        p = ad.parameter(data, name)
        self.params[name] = p
        return p

    def arrays(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_arrays(self, arrays):
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise checkpoints.CheckpointError(
                f"parameter mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, p in self.params.items():
            if arrays[k].shape != p.data.shape:
                raise checkpoints.CheckpointError(
                    f"{k}: shape {arrays[k].shape} does not match {p.data.shape}")
            p.data[...] = arrays[k]

    def subset(self, prefixes):
        return [p for k, p in self.params.items() if k.startswith(prefixes)]


class BiLstm:
    """Bidirectional LSTM layer; output dim equals the nominal hidden size."""

    def __init__(self, store, prefix, input_dim, hidden, rng):
        if hidden % 2:
            raise ModelError(f"{prefix}: nominal hidden size must be even, got {hidden}")
        half = hidden // 2
        self.hidden = hidden
        self.fwd = (store.new(f"{prefix}.fwd.wx", glorot(rng, input_dim, 4 * half)),
                    store.new(f"{prefix}.fwd.wh", glorot(rng, half, 4 * half)),
                    store.new(f"{prefix}.fwd.b", np.zeros(4 * half)))
        self.bwd = (store.new(f"{prefix}.bwd.wx", glorot(rng, input_dim, 4 * half)),
                    store.new(f"{prefix}.bwd.wh", glorot(rng, half, 4 * half)),
                    store.new(f"{prefix}.bwd.b", np.zeros(4 * half)))

    def __call__(self, x):
        f = ad.lstm(x, *self.fwd)
        b = ad.lstm(x, *self.bwd, reverse=True)
        return ad.concat([f, b], axis=1)

    def final_states(self, x):
        """Concatenated final forward state and final backward state."""
        f = ad.lstm(x, *self.fwd)
        b = ad.lstm(x, *self.bwd, reverse=True)
        last = x.data.shape[0] - 1 if isinstance(x, ad.Tensor) else len(x) - 1
        return ad.concat([ad.row(f, last), ad.row(b, 0)], axis=-1)


def build_char_vocab(examples):
    """Sorted unique characters of the training tokens; id 0 stays UNK."""
    chars = sorted({ch for ex in examples for tok in ex.tokens for ch in tok})
    return {ch: i + 1 for i, ch in enumerate(chars)}


class CharEncoder:
    """Character-level word encoder: BLSTM over char embeddings."""

    def __init__(self, store, char_vocab, emb_dim, hidden, rng, prefix="char"):
        self.char_vocab = char_vocab
        self.hidden = hidden
        self.emb = store.new(f"{prefix}.emb", glorot(rng, len(char_vocab) + 1, emb_dim))
        self.bilstm = BiLstm(store, prefix, emb_dim, hidden, rng)

    def encode(self, word):
        if not word:
            raise ModelError("cannot encode an empty word")
        idx = [self.char_vocab.get(ch, UNK_CHAR) for ch in word]
        x = ad.gather_rows(self.emb, idx)
        return self.bilstm.final_states(x)


class CrfLayer:
    """Affine emission map plus transition/start/stop potentials."""

    def __init__(self, store, input_dim, n_labels, rng, prefix="crf"):
        self.n_labels = n_labels
        self.emit_w = store.new(f"{prefix}.emit_w", glorot(rng, input_dim, n_labels))
        self.emit_b = store.new(f"{prefix}.emit_b", np.zeros(n_labels))
        self.trans = store.new(f"{prefix}.trans", np.zeros((n_labels, n_labels)))
        self.start = store.new(f"{prefix}.start", np.zeros(n_labels))
        self.stop = store.new(f"{prefix}.stop", np.zeros(n_labels))

    def emissions(self, h):
        return ad.add(ad.matmul(h, self.emit_w), self.emit_b)


def crf_log_partition(emissions, crf):
    """Log-sum-exp over all label paths (forward algorithm)."""
    from . import kernels as K
    em = emissions.data if isinstance(emissions, ad.Tensor) else np.asarray(emissions, float)
    if em.shape[0] < 1:
        raise ModelError("need at least one emission row")
    return float(K.crf_log_partition(np.ascontiguousarray(em), crf.trans.data,
                                     crf.start.data, crf.stop.data))


def crf_path_score(emissions, labels, crf):
    """Score of one label path: start + emissions + transitions + stop."""
    em = emissions.data if isinstance(emissions, ad.Tensor) else np.asarray(emissions, float)
    y = np.asarray(labels, dtype=np.int64)
    score = crf.start.data[y[0]] + crf.stop.data[y[-1]]
    score += em[np.arange(len(y)), y].sum()
    for t in range(1, len(y)):
        score += crf.trans.data[y[t - 1], y[t]]
    return float(score)


def crf_neg_log_likelihood(emissions, gold, crf):
    """log_partition - gold path score, as a differentiable scalar >= 0."""
    emissions = ad.as_tensor(emissions)
    if emissions.data.shape[0] != len(gold):
        raise ModelError(f"{emissions.data.shape[0]} emission rows but {len(gold)} labels")
    return ad.crf_nll(emissions, crf.trans, crf.start, crf.stop, gold)


def viterbi_decode(emissions, crf):
    """Best-scoring label index sequence; ties go to the lowest index."""
    from . import kernels as K
    em = emissions.data if isinstance(emissions, ad.Tensor) else np.asarray(emissions, float)
    if em.shape[0] < 1:
        raise ModelError("need at least one emission row")
    path = K.viterbi_path(np.ascontiguousarray(em), crf.trans.data,
                          crf.start.data, crf.stop.data)
    return [int(i) for i in path]


class Tagger:
    """The full tagger; doubles as the source model and the in-domain model."""

    kind = checkpoints.KIND_SOURCE

    def __init__(self, config, embeddings, char_vocab, seed=0):
        if embeddings.dim != config.word_emb_dim:
            raise ModelError(f"embedding dim {embeddings.dim} != configured "
                             f"word_emb_dim {config.word_emb_dim}")
        self.config = config
        self.embeddings = embeddings
        self.label_set = list(config.label_set)
        self.label_index = {lab: i for i, lab in enumerate(self.label_set)}
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.store = ParamStore()
        self.char_encoder = CharEncoder(self.store, char_vocab,
                                        config.char_emb_dim, config.char_hidden, rng)
        self.word_bilstm = BiLstm(self.store, "word",
                                  config.word_emb_dim + config.char_hidden,
                                  config.word_hidden, rng)
        self.crf = CrfLayer(self.store, config.word_hidden, len(self.label_set), rng)

    # -- forward -------------------------------------------------------
    def _word_rows(self, tokens):
        return np.stack([self.embeddings.lookup(tok) for tok in tokens])

    def emissions(self, tokens, training=False, rng=None):
        if not tokens:
            raise ModelError("cannot tag an empty sentence")
        word_vecs = ad.Tensor(self._word_rows(tokens))
        char_vecs = ad.stack_rows([self.char_encoder.encode(tok) for tok in tokens])
        comp = ad.concat([word_vecs, char_vecs], axis=1)
        comp = ad.dropout(comp, self.config.dropout, rng, training)
        h = self.word_bilstm(comp)
        return self.crf.emissions(h)

    def loss(self, example, training=False, rng=None):
        gold = [self.label_index[lab] for lab in example.labels]
        em = self.emissions(example.tokens, training=training, rng=rng)
        return crf_neg_log_likelihood(em, gold, self.crf)

    def decode(self, tokens):
        em = self.emissions(tokens, training=False)
        return [self.label_set[i] for i in viterbi_decode(em, self.crf)]

    # -- bookkeeping ----------------------------------------------------
    def parameter_groups(self, crf_rate, rest_rate):
        """Non-CRF layers as the "base" group, the CRF layer as "adapt"."""
        crf_params = self.store.subset(("crf.",))
        rest = [p for p in self.store.params.values() if p not in crf_params]
        return [ParameterGroup("base", rest, rest_rate),
                ParameterGroup("adapt", crf_params, crf_rate)]

    def meta(self):
        inv = {i: ch for ch, i in self.char_encoder.char_vocab.items()}
        return {
            "config": self.config.to_dict(),
            "char_vocab": "".join(inv[i] for i in sorted(inv)),
            "embedding": {"vocab_id": self.embeddings.vocab_id(),
                          "dim": self.embeddings.dim},
            "seed": self.seed,
        }

    def digest(self):
        return checkpoints.model_digest(self.kind, self.meta(), self.store.arrays())

    def save(self, path):
        checkpoints.save_model(path, self.kind, self.meta(), self.store.arrays())

    @classmethod
    def load(cls, path, embeddings):
        kind, meta, arrays = checkpoints.load_model(path)
        if kind not in (checkpoints.KIND_SOURCE, checkpoints.KIND_MULT_TARGET):
            raise checkpoints.CheckpointError(f"{path}: unexpected model kind {kind:#x}")
        model = cls.from_meta(meta, embeddings)
        model.store.load_arrays(arrays)
        return model

    @classmethod
    def from_meta(cls, meta, embeddings):
        ref = meta["embedding"]
        if embeddings.vocab_id() != ref["vocab_id"]:
            raise checkpoints.CheckpointError(
                "embedding table does not match the checkpoint "
                f"(vocab id {embeddings.vocab_id()} != {ref['vocab_id']})")
        config = TaggerConfig.from_dict(meta["config"])
        char_vocab = {ch: i + 1 for i, ch in enumerate(meta["char_vocab"])}
        return cls(config, embeddings, char_vocab, seed=meta.get("seed", 0))


# ---------------------------------------------------------------------------
# training engine (shared by source training, transfer, and INIT baselines)

@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 10
    max_epochs: int = 200
    patience: int = 10
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be >= 1 and max_epochs >= 0")


@dataclass
class FitResult:
    model: object
    best_dev_f1: float
    best_epoch: int
    epochs_run: int
    history: list = field(default_factory=list)


def dev_f1(model, examples):
    if not examples:
        return 0.0
    pred = [model.decode(ex.tokens) for ex in examples]
    gold = [ex.labels for ex in examples]
    return evaluate(pred, gold).f1


def fit(model, groups, train, dev, cfg):
    """Mini-batch Adam with early stopping on dev entity F1.

    Per-sentence losses are accumulated and averaged over each batch
    (mathematically the padded-and-masked batch loss).  The model is
    restored to its best-dev checkpoint before returning.
    """
    if not train:
        raise ModelError("empty training set")
    if cfg.max_epochs == 0:
        return FitResult(model, dev_f1(model, dev), 0, 0, [])
    opt = Adam(groups, clip_norm=cfg.clip_norm)
    rng = np.random.default_rng(cfg.seed)
    best = (-1.0, 0, None)  # f1, epoch, arrays
    history = []
    epochs_no_gain = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train))
        total_loss = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            batch = [train[i] for i in order[lo:lo + cfg.batch_size]]
            for ex in batch:
                loss = model.loss(ex, training=True, rng=rng)
                ad.backward(ad.scale(loss, 1.0 / len(batch)))
                total_loss += float(loss.data)
            opt.step()
        f1 = dev_f1(model, dev)
        history.append({"epoch": epoch, "loss": total_loss / len(train), "dev_f1": f1})
        if f1 > best[0]:
            best = (f1, epoch, model.store.arrays())
            epochs_no_gain = 0
        else:
            epochs_no_gain += 1
            if epochs_no_gain >= cfg.patience:
                break
    if best[2] is not None:
        model.store.load_arrays(best[2])
    return FitResult(model, best[0], best[1], len(history), history)


def train_source(dataset, embeddings, config=None, train_cfg=None, seed=0):
    """Train a tagger on the source dataset; returns the best-dev checkpoint."""
    if not dataset.train:
        raise ModelError("empty training set")
    train_cfg = train_cfg or TrainConfig(seed=seed)
    if config is None:
        config = TaggerConfig(word_emb_dim=embeddings.dim, label_set=dataset.label_set)
    elif config.label_set == [OUTSIDE]:
        config = replace(config, label_set=dataset.label_set)
    bad = set(l for ex in dataset.train for l in ex.labels) - set(config.label_set)
    if bad:
        raise ModelError(f"training labels outside the label set: {sorted(bad)}")
    char_vocab = build_char_vocab(dataset.train)
    model = Tagger(config, embeddings, char_vocab, seed=seed)
    groups = model.parameter_groups(train_cfg.learning_rate, train_cfg.learning_rate)
    dev = dataset.dev or dataset.train
    return fit(model, groups, dataset.train, dev, train_cfg)
