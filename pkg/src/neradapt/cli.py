"""Command-line surface tying the pipeline together.

Subcommands mirror the workflow: corpus statistics -> lexicon ->
projection -> source training -> transfer (or a baseline) -> evaluation
and tagging.  Every command validates its input files and configuration
before any compute; exit code 1 means a validation problem, 2 a runtime
failure.

A plain-text config file (key=value lines, '#' comments) can supply any
long-option default; explicit flags win.
"""

import argparse
import hashlib
import sys

from . import __version__, checkpoints, kernels
from .baselines import (INIT_FINETUNE, INIT_FROZEN, MultConfig, init_transfer,
                        mult_init_train, mult_train)
from .corpus import (FrequencyTable, LexiconConfig, PivotLexicon, build_lexicon,
                     count_corpus_file)
from .data import Dataset, evaluate, read_conll, write_conll, SequenceExample
from .embeddings import (ProjectionMatrix, ProjectionTrainConfig, load_embeddings,
                         learn_projection, projection_loss, _design_matrices,
                         solve_projection_closed_form)
from .model import Tagger, TaggerConfig, TrainConfig, train_source
from .transfer import (AdaptConfig, AdaptedTagger, assemble_target,
                       transfer_train, transfer_train_grid)


class ValidationError(Exception):
    pass


def _require_files(*paths):
    import os
    for p in paths:
        if p is not None and not os.path.exists(p):
            raise ValidationError(f"no such file: {p}")


def _config_hash(args):
    blob = repr(sorted((k, v) for k, v in vars(args).items() if k != "func"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _report_header(args):
    return (f"# neradapt {__version__} (backend={kernels.get_backend()})\n"
            f"# seed={getattr(args, 'seed', 0)} config_hash={_config_hash(args)}\n")


def _metrics_block(pairs):
    lines = ["---METRICS---"]
    lines += [f"{k}={v}" for k, v in pairs]
    lines.append("---END---")
    return "\n".join(lines) + "\n"


def _eval_table(result):
    rows = [("ALL", result.precision, result.recall, result.f1)]
    rows += [(t, p, r, f) for t, (p, r, f) in sorted(result.per_type.items())]
    width = max(len(r[0]) for r in rows)
    out = [f"{'type':<{width}}  {'P':>8}  {'R':>8}  {'F1':>8}"]
    for name, p, r, f in rows:
        out.append(f"{name:<{width}}  {p:8.4f}  {r:8.4f}  {f:8.4f}")
    return "\n".join(out) + "\n"


def _emit(args, text):
    if getattr(args, "report", None):
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"report written to {args.report}")
    else:
        sys.stdout.write(text)


def _evaluate_model(model, examples):
    pred = [model.decode(ex.tokens) for ex in examples]
    return evaluate(pred, [ex.labels for ex in examples])


def _load_any_model(path, emb):
    if checkpoints.peek_kind(path) == checkpoints.KIND_TARGET:
        return AdaptedTagger.load(path, emb)
    return Tagger.load(path, emb)


# ---------------------------------------------------------------------------
# subcommands

def cmd_stats(args):
    _require_files(args.corpus)
    table = count_corpus_file(args.corpus)
    table.save(args.out)
    print(f"{len(table.counts)} distinct words, {table.total_tokens} tokens -> {args.out}")
    return 0


def cmd_lexicon(args):
    _require_files(args.source_stats, args.target_stats, args.p2)
    ft_s = FrequencyTable.load(args.source_stats)
    ft_t = FrequencyTable.load(args.target_stats)
    lex = build_lexicon(ft_s, ft_t, LexiconConfig(top_k=args.top_k, p2_path=args.p2))
    lex.save(args.out)
    n_p2 = sum(1 for e in lex if e.origin == "P2")
    print(f"{len(lex)} pairs ({len(lex) - n_p2} frequency-derived, {n_p2} from the "
          f"variant file) -> {args.out}")
    return 0


def cmd_project(args):
    _require_files(args.source_emb, args.target_emb, args.lexicon)
    emb_s = load_embeddings(args.source_emb)
    emb_t = load_embeddings(args.target_emb)
    lex = PivotLexicon.load(args.lexicon)
    if args.closed_form:
        proj = solve_projection_closed_form(emb_s, emb_t, lex)
        x, y, c, skipped = _design_matrices(emb_s, emb_t, lex)
        loss = projection_loss(proj.z, x, y, c)
        print(f"closed form: loss {loss:.6e}, {x.shape[0]} pairs used, {skipped} skipped")
    else:
        cfg = ProjectionTrainConfig(learning_rate=args.lr, max_epochs=args.max_epochs,
                                    batch_size=args.batch_size, rel_tol=args.rel_tol,
                                    seed=args.seed)
        result = learn_projection(emb_s, emb_t, lex, cfg)
        proj = result.projection
        print(f"gradient descent: loss {result.loss_history[-1]:.6e} after "
              f"{len(result.loss_history) - 1} epochs, {result.used_entries} pairs used, "
              f"{result.skipped_entries} skipped")
    proj.save(args.out)
    print(f"projection {proj.z.shape[0]}x{proj.z.shape[1]} -> {args.out}")
    return 0


def _tagger_config(args, label_set):
    return TaggerConfig(char_emb_dim=args.char_emb_dim, char_hidden=args.char_hidden,
                        word_emb_dim=args.word_emb_dim, word_hidden=args.word_hidden,
                        label_set=label_set, dropout=args.dropout)


def _train_config(args):
    return TrainConfig(learning_rate=getattr(args, "lr", 0.001),
                       batch_size=args.batch_size,
                       max_epochs=args.max_epochs, patience=args.patience,
                       seed=args.seed)


def cmd_train_source(args):
    _require_files(args.train, args.dev, args.test, args.emb)
    emb = load_embeddings(args.emb)
    dataset = Dataset.load(args.train, args.dev, args.test)
    if args.word_emb_dim != emb.dim:
        args.word_emb_dim = emb.dim
    config = _tagger_config(args, dataset.label_set)
    result = train_source(dataset, emb, config, _train_config(args), seed=args.seed)
    result.model.save(args.out)
    lines = [_report_header(args),
             f"best dev F1 {result.best_dev_f1:.4f} at epoch {result.best_epoch} "
             f"({result.epochs_run} epochs run)\n"]
    pairs = [("dev_f1", f"{result.best_dev_f1:.6f}"), ("best_epoch", result.best_epoch)]
    if dataset.test:
        test = _evaluate_model(result.model, dataset.test)
        lines.append("test metrics:\n" + _eval_table(test))
        pairs += [("test_precision", f"{test.precision:.6f}"),
                  ("test_recall", f"{test.recall:.6f}"),
                  ("test_f1", f"{test.f1:.6f}")]
    lines.append(_metrics_block(pairs))
    _emit(args, "".join(lines))
    print(f"model -> {args.out}")
    return 0


def cmd_transfer(args):
    _require_files(args.source_model, args.source_emb, args.projection,
                   args.target_emb, args.train, args.dev, args.test)
    emb_s = load_embeddings(args.source_emb)
    emb_t = load_embeddings(args.target_emb)
    source = Tagger.load(args.source_model, emb_s)
    projection = ProjectionMatrix.load(args.projection, frozen=True)
    dataset = Dataset.load(args.train, args.dev, args.test)
    adapt = AdaptConfig(label_set=dataset.label_set, psi=args.psi,
                        alpha_adapt=args.alpha,
                        sent_adapt_hidden=args.sent_adapt_hidden,
                        out_adapt_hidden=args.out_adapt_hidden)
    grid_lines = ""
    if args.psi_grid:
        result, table = transfer_train_grid(source, projection, adapt, emb_t,
                                            dataset.train, dataset.dev,
                                            _train_config(args), seed=args.seed)
        grid_lines = "psi grid (dev F1):\n" + "".join(
            f"  psi={p:<4} F1={f:.4f}\n" for p, f in table)
        best_psi = max(table, key=lambda t: t[1])[0]
        grid_lines += f"selected psi={best_psi}\n"
    else:
        model = assemble_target(source, projection, adapt, emb_t, seed=args.seed)
        result = transfer_train(model, dataset.train, dataset.dev, _train_config(args))
    result.model.save(args.out)
    lines = [_report_header(args), grid_lines,
             f"best target dev F1 {result.best_dev_f1:.4f} at epoch {result.best_epoch}\n"]
    pairs = [("dev_f1", f"{result.best_dev_f1:.6f}"),
             ("psi", result.model.adapt_config.psi)]
    if dataset.test:
        test = _evaluate_model(result.model, dataset.test)
        lines.append("test metrics:\n" + _eval_table(test))
        pairs.append(("test_f1", f"{test.f1:.6f}"))
    lines.append(_metrics_block(pairs))
    _emit(args, "".join(lines))
    print(f"model -> {args.out}")
    return 0


def cmd_baseline(args):
    _require_files(args.train, args.dev, args.test, args.emb, args.target_emb,
                   args.source_model, args.source_train, args.source_dev)
    emb = load_embeddings(args.emb)
    emb_t = load_embeddings(args.target_emb) if args.target_emb else None
    dataset_t = Dataset.load(args.train, args.dev, args.test)
    if args.word_emb_dim != emb.dim:
        args.word_emb_dim = emb.dim
    train_cfg = _train_config(args)
    eval_emb = emb_t if emb_t is not None else emb

    if args.method in (INIT_FROZEN, INIT_FINETUNE):
        if not args.source_model:
            raise ValidationError(f"--method {args.method} needs --source-model")
        source = Tagger.load(args.source_model, emb)
        result = init_transfer(source, dataset_t, args.method,
                               embeddings=eval_emb, train_cfg=train_cfg, seed=args.seed)
        model, dev_score = result.model, result.best_dev_f1
    elif args.method in ("mult", "mult-init"):
        if not (args.source_train and args.source_dev):
            raise ValidationError(f"--method {args.method} needs --source-train/--source-dev")
        dataset_s = Dataset.load(args.source_train, args.source_dev)
        mult_cfg = MultConfig(lam=args.lam, steps=args.steps,
                              eval_every=args.eval_every, seed=args.seed)
        if args.method == "mult-init":
            if not args.source_model:
                raise ValidationError("--method mult-init needs --source-model")
            source = Tagger.load(args.source_model, emb)
            result = mult_init_train(dataset_s, dataset_t, emb, source, mult_cfg,
                                     train_cfg, embeddings_t=emb_t)
        else:
            config = _tagger_config(args, dataset_t.label_set)
            result = mult_train(dataset_s, dataset_t, emb, mult_cfg, train_cfg,
                                embeddings_t=emb_t, config=config)
        result.source_model.save(args.out + ".source")
        model, dev_score = result.target_model, result.best_dev_f1
    else:
        raise ValidationError(f"unknown baseline method {args.method!r}")

    model.save(args.out)
    lines = [_report_header(args)]
    if emb_t is not None:
        lines.append("NOTE: heterogeneous embedding tables, no projection applied\n")
    lines.append(f"method {args.method}: best target dev F1 {dev_score:.4f}\n")
    pairs = [("method", args.method), ("dev_f1", f"{dev_score:.6f}")]
    if dataset_t.test:
        test = _evaluate_model(model, dataset_t.test)
        lines.append("test metrics:\n" + _eval_table(test))
        pairs.append(("test_f1", f"{test.f1:.6f}"))
    lines.append(_metrics_block(pairs))
    _emit(args, "".join(lines))
    print(f"model -> {args.out}")
    return 0


def cmd_evaluate(args):
    _require_files(args.model, args.data, args.emb)
    model = _load_any_model(args.model, load_embeddings(args.emb))
    examples = read_conll(args.data)
    if not examples:
        raise ValidationError(f"{args.data}: no sentences")
    result = _evaluate_model(model, examples)
    text = (_report_header(args) + _eval_table(result)
            + _metrics_block([("precision", f"{result.precision:.6f}"),
                              ("recall", f"{result.recall:.6f}"),
                              ("f1", f"{result.f1:.6f}"),
                              ("tp", result.tp), ("pred", result.n_pred),
                              ("gold", result.n_gold)]))
    _emit(args, text)
    return 0


def cmd_tag(args):
    _require_files(args.model, args.input, args.emb)
    model = _load_any_model(args.model, load_embeddings(args.emb))
    tagged = []
    with open(args.input, encoding="utf-8") as fh:
        for line in fh:
            tokens = line.split()
            if tokens:
                tagged.append(SequenceExample(tokens, model.decode(tokens)))
    if args.out:
        write_conll(args.out, tagged)
        print(f"{len(tagged)} sentences -> {args.out}")
    else:
        for ex in tagged:
            for tok, lab in zip(ex.tokens, ex.labels):
                print(f"{tok} {lab}")
            print()
    return 0


def cmd_synth(args):
    import os
    from . import synth
    os.makedirs(args.out_dir, exist_ok=True)
    bundle = synth.transfer_benchmark(args.seed, dim=args.dim)
    paths = {}
    for name, examples in (("source_train", bundle.source.train),
                           ("source_dev", bundle.source.dev),
                           ("target_train", bundle.target.train),
                           ("target_dev", bundle.target.dev)):
        paths[name] = os.path.join(args.out_dir, name + ".conll")
        write_conll(paths[name], examples)
    for name, corpus in (("source_corpus", bundle.source_corpus),
                         ("target_corpus", bundle.target_corpus)):
        path = os.path.join(args.out_dir, name + ".txt")
        with open(path, "w", encoding="utf-8") as fh:
            for tokens in corpus:
                fh.write(" ".join(tokens) + "\n")
    bundle.emb_source.save(os.path.join(args.out_dir, "source_emb.txt"))
    bundle.emb_target.save(os.path.join(args.out_dir, "target_emb.txt"))
    print(f"synthetic benchmark (seed {args.seed}, dim {args.dim}) -> {args.out_dir}")
    return 0


# ---------------------------------------------------------------------------
# parser plumbing

def _add_train_flags(p, lr=0.001):
    if lr is not None:
        p.add_argument("--lr", type=float, default=lr, help="Adam learning rate")
    p.add_argument("--batch-size", type=int, default=10)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=10,
                   help="early-stopping patience on dev F1")
    p.add_argument("--seed", type=int, default=0)


def _add_dims_flags(p):
    p.add_argument("--char-emb-dim", type=int, default=25)
    p.add_argument("--char-hidden", type=int, default=50)
    p.add_argument("--word-emb-dim", type=int, default=200,
                   help="overridden by the embedding file's dimension")
    p.add_argument("--word-hidden", type=int, default=200)
    p.add_argument("--dropout", type=float, default=0.5)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="neradapt",
        description="cross-domain adaptation for neural named-entity taggers")
    parser.add_argument("--version", action="version", version=f"neradapt {__version__}")
    parser.add_argument("--config", help="key=value file supplying flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="count word frequencies of a raw corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("lexicon", help="build the confidence-weighted pivot lexicon")
    p.add_argument("--source-stats", required=True)
    p.add_argument("--target-stats", required=True)
    p.add_argument("--p2", help="optional variant lexicon (target_variant source_form)")
    p.add_argument("--top-k", type=int, default=5000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lexicon)

    p = sub.add_parser("project", help="learn the word-space projection")
    p.add_argument("--source-emb", required=True)
    p.add_argument("--target-emb", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--closed-form", action="store_true",
                   help="solve the normal equations instead of gradient descent")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--max-epochs", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=0, help="0 = full batch")
    p.add_argument("--rel-tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("train-source", help="train the base tagger on source data")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test")
    p.add_argument("--emb", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    _add_dims_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_source)

    p = sub.add_parser("transfer", help="adapt a source model to target data")
    p.add_argument("--source-model", required=True)
    p.add_argument("--source-emb", required=True)
    p.add_argument("--projection", required=True)
    p.add_argument("--target-emb", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--psi", type=float, default=0.6,
                   help="base-layer rate as a fraction of the adaptation rate")
    p.add_argument("--psi-grid", action="store_true",
                   help="tune psi over {0.1,...,1.0} on dev F1")
    p.add_argument("--alpha", type=float, default=0.001,
                   help="adaptation-layer learning rate")
    p.add_argument("--sent-adapt-hidden", type=int)
    p.add_argument("--out-adapt-hidden", type=int)
    _add_train_flags(p, lr=None)  # rates come from --alpha and --psi
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("baseline", help="INIT/MULT comparison methods")
    p.add_argument("--method", required=True,
                   choices=[INIT_FROZEN, INIT_FINETUNE, "mult", "mult-init"])
    p.add_argument("--train", required=True, help="target training data")
    p.add_argument("--dev", required=True, help="target dev data")
    p.add_argument("--test")
    p.add_argument("--emb", required=True, help="shared embedding table")
    p.add_argument("--target-emb",
                   help="separate target table (heterogeneous, flagged)")
    p.add_argument("--source-model", help="for init-* and mult-init")
    p.add_argument("--source-train", help="for mult / mult-init")
    p.add_argument("--source-dev", help="for mult / mult-init")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5,
                   help="probability of drawing a source batch per step")
    p.add_argument("--steps", type=int, default=1000, help="MULT training steps")
    p.add_argument("--eval-every", type=int, default=50)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    _add_dims_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", help="entity-level P/R/F1 of a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--emb", required=True,
                   help="the embedding table this model consumes")
    p.add_argument("--report")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tag", help="tag raw text (one sentence per line)")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("synth", help="emit the bundled synthetic benchmark")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=16)
    p.set_defaults(func=cmd_synth)

    return parser


def _read_config_file(path):
    _require_files(path)
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValidationError(f"{path}: line {i}: expected key=value")
            key, value = stripped.split("=", 1)
            pairs.append((key.strip().replace("_", "-"), value.strip()))
    return pairs


def _inject_config(argv):
    """Turn a --config file into leading flags so explicit flags override."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise ValidationError("--config needs a path")
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2:]
    if not rest:
        raise ValidationError("--config given without a subcommand")
    extra = []
    for key, value in _read_config_file(path):
        if value.lower() in ("true", "1") and key in ("closed-form", "psi-grid"):
            extra.append(f"--{key}")
        else:
            extra.extend([f"--{key}", value])
    return [rest[0]] + extra + rest[1:]


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _inject_config(argv)
        try:
            args = build_parser().parse_args(argv)
        except SystemExit as exc:  # argparse exits itself; remap bad usage to 1
            return 0 if exc.code == 0 else 1
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, checkpoints.CheckpointError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
