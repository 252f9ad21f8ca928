"""Parameter-initialization (INIT) and multitask (MULT) transfer baselines.

INIT copies every non-CRF parameter of a trained source model into a
fresh tagger over the target label set, then either fine-tunes all
layers at one rate or freezes everything but the new CRF layer.

MULT trains a source tagger and a target tagger simultaneously; the two
share every non-CRF tensor (literally the same storage).  Each step a
seeded Bernoulli(lambda) draw picks a source batch (stepping shared
layers + the source CRF) or a target batch (shared layers + the target
CRF).  One Adam instance owns all groups, so shared tensors have a
single set of moments.

These baselines assume one shared embedding table; passing distinct
tables is supported for comparisons but flagged as heterogeneous, which
is exactly the regime they handle poorly.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import checkpoints
from .data import OUTSIDE
from .model import (ModelError, Tagger, TaggerConfig, TrainConfig,
                    build_char_vocab, dev_f1, fit)
from .optim import Adam, ParameterGroup

log = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = [round(0.1 * i, 1) for i in range(1, 11)]

INIT_FROZEN = "init-frozen"
INIT_FINETUNE = "init-finetune"


@dataclass
class MultConfig:
    lam: float = 0.5          # probability of drawing a source batch per step
    steps: int = 1000
    eval_every: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ModelError(f"lambda must be in [0, 1], got {self.lam}")


def bernoulli_stream(seed, n, p):
    """The seeded draw sequence MULT consumes; True selects the source domain."""
    return np.random.default_rng(seed).random(n) < p


def _clone_base_into(source, model):
    """Copy every non-CRF parameter of `source` into `model` (bitwise)."""
    src = source.store.arrays()
    for name, param in model.store.params.items():
        if not name.startswith("crf."):
            if name not in src or src[name].shape != param.data.shape:
                raise ModelError(
                    f"source and target models differ outside the CRF layer at {name!r}")
            param.data[...] = src[name]


def init_transfer(source, dataset_t, mode, embeddings=None, train_cfg=None, seed=0):
    """INIT baseline: initialize from the source model, then adapt.

    mode "init-finetune" updates all layers at one rate;
    "init-frozen" updates only the newly constructed CRF layer.
    The target model may differ from the source only in its CRF layer.
    """
    if mode not in (INIT_FROZEN, INIT_FINETUNE):
        raise ModelError(f"unknown INIT mode {mode!r}")
    train_cfg = train_cfg or TrainConfig(seed=seed)
    if embeddings is None:
        embeddings = source.embeddings
    elif embeddings.vocab_id() != source.embeddings.vocab_id():
        log.warning("INIT with a different embedding table: heterogeneous input "
                    "spaces, no projection applied")
    config = TaggerConfig(**{**source.config.to_dict(),
                             "label_set": dataset_t.label_set})
    model = Tagger(config, embeddings, dict(source.char_encoder.char_vocab), seed=seed)
    _clone_base_into(source, model)
    base_rate = 0.0 if mode == INIT_FROZEN else train_cfg.learning_rate
    groups = model.parameter_groups(train_cfg.learning_rate, base_rate)
    dev = dataset_t.dev or dataset_t.train
    return fit(model, groups, dataset_t.train, dev, train_cfg)


class _BatchCycler:
    """Deterministic endless batches: reshuffle after each full pass."""

    def __init__(self, examples, batch_size, seed):
        self.examples = examples
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self.order = []
        self.pos = 0

    def next_batch(self):
        if self.pos >= len(self.order):
            self.order = self.rng.permutation(len(self.examples))
            self.pos = 0
        sel = self.order[self.pos:self.pos + self.batch_size]
        self.pos += self.batch_size
        return [self.examples[i] for i in sel]


@dataclass
class MultResult:
    source_model: Tagger
    target_model: Tagger
    draws: np.ndarray
    best_dev_f1: float
    history: list = field(default_factory=list)


def _shared_pair(dataset_s, dataset_t, embeddings, embeddings_t, seed,
                 source_init=None, config=None):
    if embeddings_t is None:
        embeddings_t = embeddings
    elif embeddings_t.vocab_id() != embeddings.vocab_id():
        log.warning("MULT with distinct embedding tables: heterogeneous input "
                    "spaces, no projection applied")
        if embeddings_t.dim != embeddings.dim:
            raise ModelError("shared layers need equal embedding dims, got "
                             f"{embeddings.dim} and {embeddings_t.dim}")
    if source_init is not None:
        # the shared layers are copied from the source model, so its geometry
        # and character inventory must travel along
        config = source_init.config
        char_vocab = dict(source_init.char_encoder.char_vocab)
    else:
        char_vocab = build_char_vocab(dataset_s.train + dataset_t.train)
    base = config.to_dict() if config is not None else \
        TaggerConfig(word_emb_dim=embeddings.dim, label_set=[OUTSIDE]).to_dict()
    base["word_emb_dim"] = embeddings.dim
    cfg_s = TaggerConfig(**{**base, "label_set": dataset_s.label_set})
    cfg_t = TaggerConfig(**{**base, "label_set": dataset_t.label_set})
    m_s = Tagger(cfg_s, embeddings, char_vocab, seed=seed)
    m_t = Tagger(cfg_t, embeddings_t, char_vocab, seed=seed + 1)
    # share every non-CRF tensor: same objects in both models
    m_t.char_encoder = m_s.char_encoder
    m_t.word_bilstm = m_s.word_bilstm
    for name in list(m_t.store.params):
        if not name.startswith("crf."):
            m_t.store.params[name] = m_s.store.params[name]
    m_t.kind = checkpoints.KIND_MULT_TARGET
    return m_s, m_t


def mult_train(dataset_s, dataset_t, embeddings, mult_cfg=None, train_cfg=None,
               embeddings_t=None, source_init=None, config=None):
    """MULT baseline; returns both models plus the realized draw sequence.

    `source_init` (a trained source tagger) turns this into MULT+INIT:
    shared layers start from its parameters instead of fresh noise.
    """
    mult_cfg = mult_cfg or MultConfig()
    train_cfg = train_cfg or TrainConfig(seed=mult_cfg.seed)
    m_s, m_t = _shared_pair(dataset_s, dataset_t, embeddings, embeddings_t,
                            train_cfg.seed, source_init=source_init, config=config)
    if source_init is not None:
        _clone_base_into(source_init, m_s)

    lr = train_cfg.learning_rate
    groups = [
        ParameterGroup("shared", m_s.store.subset(("char.", "word.")), lr),
        ParameterGroup("crf_s", m_s.store.subset(("crf.",)), lr),
        ParameterGroup("crf_t", m_t.store.subset(("crf.",)), lr),
    ]
    opt = Adam(groups, clip_norm=train_cfg.clip_norm)
    draws = bernoulli_stream(mult_cfg.seed, mult_cfg.steps, mult_cfg.lam)
    src_batches = _BatchCycler(dataset_s.train, train_cfg.batch_size, train_cfg.seed)
    tgt_batches = _BatchCycler(dataset_t.train, train_cfg.batch_size, train_cfg.seed + 1)
    drop_rng = np.random.default_rng(train_cfg.seed + 2)

    dev_t = dataset_t.dev or dataset_t.train
    best = (-1.0, None)
    history = []
    for step, take_source in enumerate(draws, 1):
        model = m_s if take_source else m_t
        batch = (src_batches if take_source else tgt_batches).next_batch()
        for ex in batch:
            loss = model.loss(ex, training=True, rng=drop_rng)
            ad.backward(ad.scale(loss, 1.0 / len(batch)))
        opt.step(active={"shared", "crf_s" if take_source else "crf_t"})
        if step % mult_cfg.eval_every == 0 or step == mult_cfg.steps:
            f1 = dev_f1(m_t, dev_t)
            history.append({"step": step, "target_dev_f1": f1})
            if f1 > best[0]:
                best = (f1, (m_s.store.arrays(), m_t.store.arrays()))
    if best[1] is not None:
        m_s.store.load_arrays(best[1][0])
        m_t.store.load_arrays(best[1][1])
    return MultResult(m_s, m_t, draws, best[0], history)


def mult_init_train(dataset_s, dataset_t, embeddings, source, mult_cfg=None,
                    train_cfg=None, embeddings_t=None):
    """MULT+INIT: seed the shared layers from a trained source model, then MULT."""
    if source is None:
        raise ModelError("mult-init needs a pre-trained source model")
    return mult_train(dataset_s, dataset_t, embeddings, mult_cfg, train_cfg,
                      embeddings_t=embeddings_t, source_init=source)
