"""Synthetic two-domain corpora for end-to-end checks and benchmarks.

Both domains share one sentence grammar (templates over filler words);
they differ in which entity dictionary fills the PER/ORG/LOC slots and
in their embedding table.  The source table assigns each entity word a
vector near its type's cluster center; the target table is the source
table right-multiplied by a random orthogonal matrix, i.e. the same
geometry expressed in a rotated basis.  A correct word-space projection
therefore recovers the transpose of the rotation, and a tagger trained
on the source domain transfers once inputs are projected back.

The target training split deliberately draws entities from a small
slice of the target dictionaries while the dev split uses all of them,
so in-domain training alone generalizes poorly.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, SequenceExample
from .embeddings import EmbeddingMatrix

TEMPLATES = [
    ["{PER}", "visited", "{LOC}", "yesterday"],
    ["{PER}", "met", "{PER}", "in", "{LOC}"],
    ["the", "mayor", "of", "{LOC}", "praised", "{ORG}"],
    ["{ORG}", "hired", "{PER}", "last", "week"],
    ["{PER}", "works", "for", "{ORG}", "now"],
    ["fans", "of", "{ORG}", "filled", "{LOC}", "today"],
    ["{LOC}", "hosted", "the", "{ORG}", "festival"],
    ["reporters", "from", "{ORG}", "interviewed", "{PER}"],
    ["{PER}", "left", "{LOC}", "for", "{LOC}"],
    ["the", "{ORG}", "office", "in", "{LOC}", "opened", "again"],
    ["{PER}", "spoke", "with", "{PER}", "about", "the", "deal"],
    ["many", "people", "visited", "{LOC}", "during", "the", "summit"],
    ["{ORG}", "signed", "a", "deal", "with", "{ORG}"],
    ["{PER}", "thanked", "the", "crowd", "at", "{LOC}"],
    ["the", "market", "rose", "again", "today"],
    ["talks", "continued", "without", "progress", "this", "week"],
    ["{PER}", "will", "join", "{ORG}", "next", "month"],
    ["{ORG}", "opened", "a", "store", "near", "{LOC}"],
    ["{PER}", "praised", "the", "people", "of", "{LOC}"],
    ["the", "coach", "of", "{ORG}", "blamed", "{PER}"],
    ["{LOC}", "welcomed", "{PER}", "with", "a", "parade"],
    ["a", "crowd", "near", "{LOC}", "cheered", "for", "{PER}"],
    ["{ORG}", "moved", "its", "office", "from", "{LOC}", "to", "{LOC}"],
    ["{PER}", "sold", "shares", "of", "{ORG}", "yesterday"],
    ["the", "summit", "between", "{ORG}", "and", "{ORG}", "failed"],
    ["{PER}", "wrote", "about", "the", "festival", "in", "{LOC}"],
    ["workers", "at", "{ORG}", "went", "on", "strike"],
    ["{PER}", "and", "{PER}", "toured", "{LOC}", "together"],
    ["the", "press", "asked", "{PER}", "about", "{ORG}"],
    ["prices", "fell", "across", "the", "market", "this", "month"],
    ["{LOC}", "lies", "far", "from", "{LOC}"],
    ["the", "new", "show", "from", "{ORG}", "starts", "this", "week"],
]

SOURCE_DICTS = {
    "PER": ["alvern", "bertram", "colwin", "darnela", "edmire", "fenwick",
            "gorman", "halbert", "ingram", "jorvik", "kelwin", "lorna",
            "mervyn", "norberta", "oswin", "petrel", "quenla", "rodian",
            "selwyn", "tamsin", "ulfred", "viorel", "wendla", "ximena",
            "yorath", "zelda", "ansgar", "boswell", "cedrine", "dalton",
            "elspeth", "farrin", "gwendal", "hestra", "isolde", "jasper",
            "kerwin", "leofric", "maudlin", "nerissa"],
    "ORG": ["acrovia", "bellfort", "cindral", "dorvex", "elmworth", "fabrikon",
            "gantrel", "hexagone", "ironvale", "juralco", "kestrand", "lumenor",
            "mandrex", "novatech", "orbistan", "pyrellia", "quorint", "rendalia",
            "solvexa", "tarmline", "unitrade", "velcorp", "westron", "xellify",
            "yardsmith", "zenodra", "ardentia", "bluemark", "crestway", "duneford",
            "everlink", "fairhold", "glenmore", "highspur", "inkwell", "jetline",
            "keystone", "landmark", "meridia", "northgate"],
    "LOC": ["ashmere", "brindol", "caldris", "dunmore", "eastvale", "fernley",
            "gravenn", "holmgard", "ilsford", "jandia", "kirwall", "lundvik",
            "mossburg", "narvale", "ostwick", "pellmoor", "quarfell", "ravensky",
            "stonewick", "thrandor", "umberley", "vasterholm", "wexford", "yarnton",
            "zephyria", "aldgate", "birchmoor", "copperhill", "driftwood", "elmsworth",
            "foxglove", "greenfell", "hartland", "ivybridge", "junipero", "kingsmere",
            "larchmont", "millbrook", "netherby", "oakridge"],
}

# type-ambiguous surface forms: the slot's type, i.e. the context, decides
# the gold label, so these reward a model that actually reads the sentence
SOURCE_AMBIG = {
    ("PER", "LOC"): ["sandrel", "tormas", "welbin", "yarrow", "quindel", "rostam",
                     "averil", "bramwell", "clifton", "darby", "emerson", "flintan"],
    ("PER", "ORG"): ["marek", "dovola", "cassim", "brandt", "ulverin", "fenn",
                     "garvey", "holden", "imbry", "jarvis", "kepler", "lowell"],
    ("ORG", "LOC"): ["corvassa", "drelmont", "avenor", "silverin", "thornby", "galdren",
                     "halbrook", "istria", "jorsale", "kentmere", "lindengard", "morvena"],
}

TARGET_DICTS = {
    "PER": ["zaybo", "yumiko", "xander", "wrenlo", "vexa", "ufuoma",
            "tariqq", "skrill", "rondel", "quibs", "pezmo", "ozzyx",
            "nyla", "moxie", "lubo", "kazz"],
    "ORG": ["zentry", "yowlcorp", "xcelsiar", "wubhub", "vantix", "umbrell",
            "trekko", "snapgrid", "rocketry", "quorvex", "pixelbay", "omnira",
            "nimbuzz", "mistwave", "loopify", "klatch"],
    "LOC": ["zanzor", "yelmto", "xiblis", "wharfen", "varnis", "ulmstad",
            "tivoli", "sorbet", "rivermoor", "quayside", "pondok", "oakhollow",
            "nettleby", "marrowgate", "lindow", "kelpdon"],
}

TARGET_AMBIG = {
    ("PER", "LOC"): ["jinko", "ravelo", "miston", "heldra", "tavrik", "solano"],
    ("PER", "ORG"): ["brixby", "calder", "fennix", "gruvo", "harlem", "indio"],
    ("ORG", "LOC"): ["krendal", "luxor", "madrona", "nivek", "ostralo", "pintor"],
}

ORG_SUFFIX = "group"  # sometimes appended as a second ORG token (I-ORG)


def _slot_word(etype, rng, dicts, ambig, ambig_p):
    if ambig and rng.random() < ambig_p:
        pools = [pool for types, pool in ambig.items() if etype in types]
        pool = pools[rng.integers(len(pools))]
    else:
        pool = dicts[etype]
    return pool[rng.integers(len(pool))]


def _fill(template, rng, dicts, ambig, ambig_p, per_two_token_p=0.3, org_suffix_p=0.25):
    tokens, labels = [], []
    for piece in template:
        if piece.startswith("{"):
            etype = piece[1:-1]
            tokens.append(_slot_word(etype, rng, dicts, ambig, ambig_p))
            labels.append("B-" + etype)
            if etype == "PER" and rng.random() < per_two_token_p:
                tokens.append(dicts["PER"][rng.integers(len(dicts["PER"]))])
                labels.append("I-PER")
            elif etype == "ORG" and rng.random() < org_suffix_p:
                tokens.append(ORG_SUFFIX)
                labels.append("I-ORG")
        else:
            tokens.append(piece)
            labels.append("O")
    return SequenceExample(tokens, labels)


def generate_sentences(rng, n, dicts, ambig=None, ambig_p=0.45):
    return [_fill(TEMPLATES[rng.integers(len(TEMPLATES))], rng, dicts, ambig, ambig_p)
            for _ in range(n)]


def full_vocab():
    words = {tok for tpl in TEMPLATES for tok in tpl if not tok.startswith("{")}
    words.add(ORG_SUFFIX)
    for dicts in (SOURCE_DICTS, TARGET_DICTS):
        for pool in dicts.values():
            words.update(pool)
    for ambig in (SOURCE_AMBIG, TARGET_AMBIG):
        for pool in ambig.values():
            words.update(pool)
    return sorted(words)


def make_embedding_pair(seed, dim=16, cluster_scale=0.3, noise=0.45):
    """Source table with per-type entity clusters, plus its rotated twin.

    Entity vectors sit near a per-type center but the noise is on the
    same order as the center norm, so type identity cannot be read off a
    single vector; context has to carry most of the signal.  Components
    stay mostly within [-1, 1], the range a tanh-bounded pre-encoder can
    reproduce.  Returns (emb_source, emb_target, rotation) with
    emb_target.vectors == emb_source.vectors @ rotation.
    """
    rng = np.random.default_rng(seed)
    vocab = full_vocab()
    centers = {}
    for t in ("PER", "ORG", "LOC"):
        direction = rng.normal(size=dim)
        centers[t] = cluster_scale * np.sqrt(dim) * direction / np.linalg.norm(direction)
    word_center = {}
    for dicts in (SOURCE_DICTS, TARGET_DICTS):
        for etype, pool in dicts.items():
            for w in pool:
                word_center[w] = centers[etype]
    for ambig in (SOURCE_AMBIG, TARGET_AMBIG):
        for types, pool in ambig.items():
            mixed = np.mean([centers[t] for t in types], axis=0)
            for w in pool:
                word_center[w] = mixed
    rows = np.zeros((len(vocab), dim))
    for i, w in enumerate(vocab):
        if w in word_center:
            rows[i] = word_center[w] + noise * rng.normal(size=dim)
        else:
            rows[i] = 0.45 * rng.normal(size=dim)
    rotation, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    emb_s = EmbeddingMatrix(vocab, rows)
    emb_t = EmbeddingMatrix(vocab, rows @ rotation)
    return emb_s, emb_t, rotation


def _subset_dicts(dicts, fraction, rng):
    out = {}
    for etype, pool in dicts.items():
        k = max(2, int(round(len(pool) * fraction)))
        idx = rng.permutation(len(pool))[:k]
        out[etype] = [pool[i] for i in sorted(idx)]
    return out


@dataclass
class TransferBenchmark:
    """Everything one replication of the synthetic transfer study needs."""

    source: Dataset
    target: Dataset
    emb_source: EmbeddingMatrix
    emb_target: EmbeddingMatrix
    rotation: np.ndarray
    source_corpus: list = field(default_factory=list)  # raw token lists
    target_corpus: list = field(default_factory=list)


def transfer_benchmark(seed, n_source=500, n_target_train=40, n_target_dev=100,
                       dim=16, train_entity_fraction=1.0, n_raw=400):
    """Generate one replication of the cross-domain benchmark.

    Target training entities come from `train_entity_fraction` of each
    target dictionary; dev uses the full dictionaries.  Raw unlabeled
    corpora (for frequency statistics) cover the full dictionaries on
    both sides.
    """
    rng = np.random.default_rng(seed)
    emb_s, emb_t, rotation = make_embedding_pair(seed + 1, dim=dim)

    src_train = generate_sentences(rng, n_source, SOURCE_DICTS, SOURCE_AMBIG)
    src_dev = generate_sentences(rng, max(50, n_source // 10), SOURCE_DICTS, SOURCE_AMBIG)
    if train_entity_fraction < 1.0:
        train_dicts = _subset_dicts(TARGET_DICTS, train_entity_fraction, rng)
        train_ambig = _subset_dicts(TARGET_AMBIG, train_entity_fraction, rng)
    else:
        train_dicts, train_ambig = TARGET_DICTS, TARGET_AMBIG
    tgt_train = generate_sentences(rng, n_target_train, train_dicts, train_ambig)
    tgt_dev = generate_sentences(rng, n_target_dev, TARGET_DICTS, TARGET_AMBIG)

    source_corpus = [ex.tokens for ex in src_train]
    source_corpus += [ex.tokens
                      for ex in generate_sentences(rng, n_raw, SOURCE_DICTS, SOURCE_AMBIG)]
    target_corpus = [ex.tokens
                     for ex in generate_sentences(rng, n_raw, TARGET_DICTS, TARGET_AMBIG)]

    return TransferBenchmark(
        source=Dataset(train=src_train, dev=src_dev),
        target=Dataset(train=tgt_train, dev=tgt_dev),
        emb_source=emb_s,
        emb_target=emb_t,
        rotation=rotation,
        source_corpus=source_corpus,
        target_corpus=target_corpus,
    )


def capacity_corpus(seed=7, n=20, dicts=None):
    """A small fixed corpus a healthy tagger must fit exactly."""
    rng = np.random.default_rng(seed)
    sents = generate_sentences(rng, n, dicts or SOURCE_DICTS)
    return Dataset(train=sents, dev=sents)
