"""Target-model assembly and two-rate transfer training.

The adapted tagger runs, per token: frozen linear projection of the
target-domain embedding into the source space, a BLSTM pre-encoder over
the projected sequence, concatenation with character features, the
transferred base BLSTM, a BLSTM re-encoder, and a freshly built CRF over
the target label set.  Character features join after the pre-encoder so
the transferred base layer sees inputs shaped exactly as during source
training.

Training splits parameters into two groups: "base" (char encoder + base
BLSTM, initialized from the source model) stepped at psi * alpha, and
"adapt" (both adaptation BLSTMs + the new CRF) stepped at alpha.
psi = 0 freezes the transferred layers exactly; psi = 1 treats all
layers equally.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import checkpoints
from .embeddings import ProjectionMatrix
from .model import (BiLstm, CharEncoder, CrfLayer, ModelError,
                    ParamStore, Tagger, TaggerConfig, TrainConfig,
                    crf_neg_log_likelihood, fit, viterbi_decode)
from .optim import ParameterGroup

log = logging.getLogger(__name__)

DEFAULT_PSI = 0.6
PSI_GRID = [round(0.1 * i, 1) for i in range(1, 11)]


@dataclass
class AdaptConfig:
    """Dimensions, label set, and the two-rate scheme of the target model."""

    label_set: list
    psi: float = DEFAULT_PSI
    alpha_adapt: float = 0.001
    sent_adapt_hidden: int = None  # default: source word embedding dim
    out_adapt_hidden: int = None   # default: half the base hidden size

    def __post_init__(self):
        if not 0.0 <= self.psi <= 1.0:
            raise ModelError(f"psi must be in [0, 1], got {self.psi}")
        if self.alpha_adapt <= 0:
            raise ModelError("alpha_adapt must be > 0")

    @property
    def alpha_base(self):
        return self.psi * self.alpha_adapt

    def to_dict(self):
        return {"label_set": list(self.label_set), "psi": self.psi,
                "alpha_adapt": self.alpha_adapt,
                "sent_adapt_hidden": self.sent_adapt_hidden,
                "out_adapt_hidden": self.out_adapt_hidden}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class AdaptedTagger:
    """Base tagger wrapped in word/sentence/output adaptation layers."""

    kind = checkpoints.KIND_TARGET

    def __init__(self, base_config, adapt_config, embeddings_t, projection,
                 char_vocab, seed=0, source_digest=None):
        if projection.z.shape[0] != embeddings_t.dim:
            raise ModelError(f"projection input dim {projection.z.shape[0]} != "
                             f"target embedding dim {embeddings_t.dim}")
        if projection.z.shape[1] != base_config.word_emb_dim:
            raise ModelError(f"projection output dim {projection.z.shape[1]} != "
                             f"base word embedding dim {base_config.word_emb_dim}")
        if adapt_config.sent_adapt_hidden is None:
            adapt_config.sent_adapt_hidden = base_config.word_emb_dim
        if adapt_config.out_adapt_hidden is None:
            adapt_config.out_adapt_hidden = base_config.word_hidden // 2
        if adapt_config.sent_adapt_hidden != base_config.word_emb_dim:
            raise ModelError(
                "sentence adaptation output dim must equal the base word embedding "
                f"dim ({base_config.word_emb_dim}) to preserve the transferred input "
                f"shape, got {adapt_config.sent_adapt_hidden}")
        self.config = base_config
        self.adapt_config = adapt_config
        self.embeddings = embeddings_t
        self.projection = projection
        self.label_set = list(adapt_config.label_set)
        self.label_index = {lab: i for i, lab in enumerate(self.label_set)}
        self.seed = seed
        self.source_digest = source_digest
        # projected vectors are fixed once Z is frozen; precompute the table
        self._proj_table = embeddings_t.vectors @ projection.z

        rng = np.random.default_rng(seed)
        self.store = ParamStore()
        # base part mirrors Tagger's parameter names so source states copy over
        self.char_encoder = CharEncoder(self.store, char_vocab,
                                        base_config.char_emb_dim,
                                        base_config.char_hidden, rng)
        self.word_bilstm = BiLstm(self.store, "word",
                                  base_config.word_emb_dim + base_config.char_hidden,
                                  base_config.word_hidden, rng)
        self.sent_bilstm = BiLstm(self.store, "sent", base_config.word_emb_dim,
                                  adapt_config.sent_adapt_hidden, rng)
        self.out_bilstm = BiLstm(self.store, "out", base_config.word_hidden,
                                 adapt_config.out_adapt_hidden, rng)
        self.crf = CrfLayer(self.store, adapt_config.out_adapt_hidden,
                            len(self.label_set), rng)

    BASE_PREFIXES = ("char.", "word.")
    ADAPT_PREFIXES = ("sent.", "out.", "crf.")

    # -- forward -------------------------------------------------------
    def _proj_rows(self, tokens):
        rows = np.zeros((len(tokens), self._proj_table.shape[1]))
        for i, tok in enumerate(tokens):
            j = self.embeddings.index.get(tok.lower())
            if j is not None:
                rows[i] = self._proj_table[j]
        return rows

    def emissions(self, tokens, training=False, rng=None):
        if not tokens:
            raise ModelError("cannot tag an empty sentence")
        rate = self.config.dropout
        x = ad.dropout(ad.Tensor(self._proj_rows(tokens)), rate, rng, training)
        pre = self.sent_bilstm(x)
        char_vecs = ad.stack_rows([self.char_encoder.encode(tok) for tok in tokens])
        comp = ad.concat([pre, char_vecs], axis=1)
        comp = ad.dropout(comp, rate, rng, training)
        h = self.word_bilstm(comp)
        h = ad.dropout(h, rate, rng, training)
        out = self.out_bilstm(h)
        return self.crf.emissions(out)

    def loss(self, example, training=False, rng=None):
        gold = [self.label_index[lab] for lab in example.labels]
        em = self.emissions(example.tokens, training=training, rng=rng)
        return crf_neg_log_likelihood(em, gold, self.crf)

    def decode(self, tokens):
        em = self.emissions(tokens, training=False)
        return [self.label_set[i] for i in viterbi_decode(em, self.crf)]

    # -- bookkeeping ----------------------------------------------------
    def parameter_groups(self, psi=None, alpha_adapt=None):
        psi = self.adapt_config.psi if psi is None else psi
        alpha = self.adapt_config.alpha_adapt if alpha_adapt is None else alpha_adapt
        if not 0.0 <= psi <= 1.0:
            raise ModelError(f"psi must be in [0, 1], got {psi}")
        return [
            ParameterGroup("base", self.store.subset(self.BASE_PREFIXES), psi * alpha),
            ParameterGroup("adapt", self.store.subset(self.ADAPT_PREFIXES), alpha),
        ]

    def meta(self):
        inv = {i: ch for ch, i in self.char_encoder.char_vocab.items()}
        return {
            "config": self.config.to_dict(),
            "adapt": self.adapt_config.to_dict(),
            "char_vocab": "".join(inv[i] for i in sorted(inv)),
            "embedding": {"vocab_id": self.embeddings.vocab_id(),
                          "dim": self.embeddings.dim},
            "source_digest": self.source_digest,
            "seed": self.seed,
        }

    def save(self, path):
        arrays = self.store.arrays()
        arrays["projection.z"] = self.projection.z.copy()
        checkpoints.save_model(path, self.kind, self.meta(), arrays)

    @classmethod
    def load(cls, path, embeddings_t):
        kind, meta, arrays = checkpoints.load_model(path)
        if kind != checkpoints.KIND_TARGET:
            raise checkpoints.CheckpointError(f"{path}: unexpected model kind {kind:#x}")
        ref = meta["embedding"]
        if embeddings_t.vocab_id() != ref["vocab_id"]:
            raise checkpoints.CheckpointError(
                "embedding table does not match the checkpoint "
                f"(vocab id {embeddings_t.vocab_id()} != {ref['vocab_id']})")
        z = arrays.pop("projection.z")
        model = cls(TaggerConfig.from_dict(meta["config"]),
                    AdaptConfig.from_dict(meta["adapt"]),
                    embeddings_t, ProjectionMatrix(z, frozen=True),
                    {ch: i + 1 for i, ch in enumerate(meta["char_vocab"])},
                    seed=meta.get("seed", 0),
                    source_digest=meta.get("source_digest"))
        model.store.load_arrays(arrays)
        return model


def assemble_target(source, projection, adapt_config, embeddings_t, seed=0):
    """Build the target model around a trained source model.

    Base-group tensors are copied bitwise from the source model; both
    adaptation BLSTMs and the new CRF are freshly initialized from
    `seed`.  The source model's character vocabulary travels with its
    encoder.
    """
    if not isinstance(source, Tagger):
        raise ModelError("assemble_target expects a trained base tagger")
    model = AdaptedTagger(source.config, adapt_config, embeddings_t, projection,
                          dict(source.char_encoder.char_vocab), seed=seed,
                          source_digest=source.digest())
    src_arrays = source.store.arrays()
    for name, param in model.store.params.items():
        if name.startswith(model.BASE_PREFIXES):
            param.data[...] = src_arrays[name]
    return model


def transfer_train(model, train, dev, train_cfg=None):
    """Two-rate Adam training of an assembled target model.

    The projection is frozen on entry and never receives gradients; the
    best target-dev checkpoint is returned.
    """
    train_cfg = train_cfg or TrainConfig()
    bad = {lab for ex in train for lab in ex.labels} - set(model.label_set)
    if bad:
        raise ModelError(f"training labels outside the target label set: {sorted(bad)}")
    model.projection.frozen = True
    groups = model.parameter_groups()
    return fit(model, groups, train, dev, train_cfg)


def transfer_train_grid(source, projection, adapt_config, embeddings_t, train, dev,
                        train_cfg=None, psi_grid=None, seed=0):
    """Tune psi on dev F1 over a grid; returns (best_fit, table of (psi, f1))."""
    psi_grid = psi_grid or PSI_GRID
    table = []
    best = None
    for psi in psi_grid:
        cfg = AdaptConfig(label_set=adapt_config.label_set, psi=psi,
                          alpha_adapt=adapt_config.alpha_adapt,
                          sent_adapt_hidden=adapt_config.sent_adapt_hidden,
                          out_adapt_hidden=adapt_config.out_adapt_hidden)
        model = assemble_target(source, projection, cfg, embeddings_t, seed=seed)
        result = transfer_train(model, train, dev, train_cfg)
        table.append((psi, result.best_dev_f1))
        if best is None or result.best_dev_f1 > best.best_dev_f1:
            best = result
    return best, table


def recurrent_param_count(layers):
    """Accounting convention for recurrent stacks: sum of d_in*d_h + d_h*d_h.

    Counts one input-to-hidden and one hidden-to-hidden matrix per layer
    at the nominal (concatenated) hidden size, ignoring gate multiplicity
    and bias vectors.
    """
    total = 0
    for d_in, d_h in layers:
        if d_in <= 0 or d_h <= 0:
            raise ValueError(f"layer dims must be positive, got ({d_in}, {d_h})")
        total += d_in * d_h + d_h * d_h
    return total


def tagger_layer_dims(config):
    """The base tagger's recurrent stack as (d_in, d_h) pairs."""
    return [(config.char_emb_dim, config.char_hidden),
            (config.word_emb_dim + config.char_hidden, config.word_hidden)]


def adapted_layer_dims(config, adapt_config):
    """The adapted tagger's recurrent stack as (d_in, d_h) pairs."""
    sent = adapt_config.sent_adapt_hidden or config.word_emb_dim
    out = adapt_config.out_adapt_hidden or config.word_hidden // 2
    return [(config.char_emb_dim, config.char_hidden),
            (config.word_emb_dim, sent),
            (config.word_emb_dim + config.char_hidden, config.word_hidden),
            (config.word_hidden, out)]
