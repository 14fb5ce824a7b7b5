"""Command-line entry point: train, evaluate, predict, gradcheck, synth.

Configuration resolves as defaults < config file < command-line flags; every
training or generation run writes its fully resolved configuration next to
its outputs. Config files are flat ``key = value`` text; unknown keys are
rejected.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict, dataclass, fields

from . import autodiff as ad
from . import data as dat
from . import training as tr
from .autodiff import Rng
from .model import AblationFlags, ModelDims, build_model
from .training import TrainConfig


@dataclass
class RunConfig(TrainConfig):
    emb_dim: int = 512
    hidden: int = 256
    data: str = ""
    out: str = ""

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in asdict(self).items() if k in names})


# config-file key for each RunConfig field ("lambda" is not a valid identifier)
_KEY_TO_FIELD = {f.name: f.name for f in fields(RunConfig)}
_KEY_TO_FIELD["lambda"] = "loss_lambda"
del _KEY_TO_FIELD["loss_lambda"]
_FIELD_TO_KEY = {v: k for k, v in _KEY_TO_FIELD.items()}


def _parse_value(field_type: type, raw: str):
    if field_type is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    return field_type(raw)


def read_config_file(path: str) -> dict:
    """Parse a flat key = value file into RunConfig field values."""
    types = {f.name: f.type for f in fields(RunConfig)}
    py_types = {"float": float, "int": int, "bool": bool, "str": str}
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in _KEY_TO_FIELD:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            name = _KEY_TO_FIELD[key]
            ftype = types[name]
            if isinstance(ftype, str):
                ftype = py_types.get(ftype, str)
            out[name] = _parse_value(ftype, raw.strip())
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for f in fields(RunConfig):
        cli_val = getattr(args, f.name, None)
        if cli_val is not None and (not isinstance(cli_val, bool) or cli_val):
            values[f.name] = cli_val
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def write_resolved_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for f_def in fields(RunConfig):
            key = _FIELD_TO_KEY[f_def.name]
            f.write(f"{key} = {getattr(cfg, f_def.name)!r}\n")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--l2-decay", dest="l2_decay", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--teacher-forcing-rate", dest="teacher_forcing_rate", type=float)
    p.add_argument("--dropout-rate", dest="dropout_rate", type=float)
    p.add_argument("--lambda", dest="loss_lambda", type=float)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", dest="patience", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--emb-dim", dest="emb_dim", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--no-slot2intent", dest="no_slot2intent", action="store_true", default=None)
    p.add_argument("--no-intent2slot", dest="no_intent2slot", action="store_true", default=None)
    p.add_argument("--no-gaussian-attention", dest="no_gaussian_attention",
                   action="store_true", default=None)
    p.add_argument("--no-cooperation", dest="no_cooperation", action="store_true", default=None)


def cmd_train(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    if not cfg.data or not cfg.out:
        raise ValueError("train needs a corpus directory (--data) and an output "
                         "directory (--out), on the command line or in the config file")
    corpus = dat.load_corpus(cfg.data)
    vocab = dat.build_vocabs(corpus)
    os.makedirs(cfg.out, exist_ok=True)
    out_file = lambda name: os.path.join(cfg.out, name)
    write_resolved_config(cfg, out_file("resolved_config.txt"))

    dims = ModelDims(vocab_size=vocab.n_words, emb_dim=cfg.emb_dim, hidden=cfg.hidden,
                     n_slots=vocab.n_slots, n_intents=vocab.n_intents)
    init_rng, shuffle_rng, tf_rng, dropout_rng = tr.derive_streams(cfg.seed)
    model = build_model(dims, cfg.flags(), init_rng)
    result = tr.train(model, corpus, vocab, cfg.train_config(), shuffle_rng, tf_rng, dropout_rng)

    tr.save_checkpoint(out_file("checkpoint.bin"), model, asdict(cfg), vocab)
    with open(out_file("history.txt"), "w", encoding="utf-8") as f:
        for rec in result.history:
            f.write(f"epoch = {rec.epoch}\ntrain_loss = {rec.train_loss!r}\n"
                    + rec.dev_report.to_text() + "\n")
    dev_report = tr.evaluate_model(model, corpus.dev, vocab, cfg.batch_size)
    test_report = tr.evaluate_model(model, corpus.test, vocab, cfg.batch_size)
    with open(out_file("dev_metrics.txt"), "w", encoding="utf-8") as f:
        f.write(dev_report.to_text())
    with open(out_file("test_metrics.txt"), "w", encoding="utf-8") as f:
        f.write(test_report.to_text())
    print(f"best epoch {result.best_epoch} (dev sentence accuracy "
          f"{result.best_dev_accuracy!r})")
    print("[dev]")
    print(dev_report.to_text(), end="")
    print("[test]")
    print(test_report.to_text(), end="")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    ckpt = tr.load_checkpoint(args.checkpoint)
    corpus = dat.load_corpus(args.data)
    samples = corpus.split(args.split)
    for s in samples:
        for tag in set(s.slot_tags):
            if tag not in ckpt.vocab.tag_to_id:
                raise ValueError(f"vocabulary mismatch: slot tag {tag!r} in {args.split} "
                                 f"split is unknown to the checkpoint "
                                 f"({ckpt.dims.n_slots} slot tags)")
        if s.intent not in ckpt.vocab.intent_to_id:
            raise ValueError(f"vocabulary mismatch: intent {s.intent!r} in {args.split} "
                             f"split is unknown to the checkpoint "
                             f"({ckpt.dims.n_intents} intents)")
    model = ckpt.build_model()
    report = tr.evaluate_model(model, samples, ckpt.vocab, args.batch_size)
    text = report.to_text()
    print(text, end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    tokens = args.text.split()
    if not tokens:
        raise ValueError("empty input utterance")
    ckpt = tr.load_checkpoint(args.checkpoint)
    model = ckpt.build_model()
    sample = dat.Sample(tokens=tokens, slot_tags=["O"] * len(tokens),
                        intent=ckpt.vocab.intents[0])
    batch = dat.pad_batch([sample], ckpt.vocab)
    result = model.forward(batch, training=False)
    tags = [ckpt.vocab.slot_tags[j] for j in result.slot_predictions()[0]]
    intent = ckpt.vocab.intents[result.intent_predictions()[0]]
    print("tags = " + " ".join(tags))
    print("intent = " + intent)
    return 0


_GRADCHECK_UTTERANCES = [
    (["show", "red", "alpha", "items", "now"],
     ["O", "B-color", "B-name", "I-name", "O"], "find"),
    (["play", "blue", "song"], ["O", "B-color", "O"], "play"),
]


def _gradcheck_fixture() -> tuple[dat.UtteranceBatch, dat.Vocab]:
    samples = [dat.Sample(tokens, tags, intent)
               for tokens, tags, intent in _GRADCHECK_UTTERANCES]
    corpus = dat.Corpus(train=samples, dev=samples, test=samples)
    vocab = dat.build_vocabs(corpus)
    return dat.pad_batch(samples, vocab), vocab


def run_gradcheck(flags: AblationFlags, epsilon: float = 1e-3,
                  seed: int = 7) -> dict[str, float | None]:
    """Max relative gradient error per parameter group on a tiny model;
    None marks groups outside the active computation path."""
    batch, vocab = _gradcheck_fixture()
    dims = ModelDims(vocab_size=vocab.n_words, emb_dim=8, hidden=8,
                     n_slots=vocab.n_slots, n_intents=vocab.n_intents)
    model = build_model(dims, flags, Rng(seed))

    def loss_fn():
        result = model.forward(batch, training=False)
        return tr.batch_loss(result, batch, 0.5)

    active = set(model.active_param_names())
    report: dict[str, float | None] = {}
    for name, tensor in model.parameters(active_only=False):
        if name not in active:
            report[name] = None
            continue
        report[name] = ad.grad_check(loss_fn, [tensor], epsilon)
    return report


def cmd_gradcheck(args: argparse.Namespace) -> int:
    flags = AblationFlags(
        slot2intent=not args.no_slot2intent,
        intent2slot=not args.no_intent2slot,
        gaussian_attention=not args.no_gaussian_attention,
        cooperation=not args.no_cooperation,
    )
    report = run_gradcheck(flags, epsilon=args.epsilon)
    worst = 0.0
    for name, err in report.items():
        if err is None:
            print(f"{name}: unused (zero grad)")
        else:
            print(f"{name}: max relative error {err:.3e}")
            worst = max(worst, err)
    if worst > args.threshold:
        print(f"FAIL: worst error {worst:.3e} exceeds threshold {args.threshold:.1e}")
        return 1
    print(f"OK: worst error {worst:.3e} within threshold {args.threshold:.1e}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    spec = dat.SynthSpec(
        n_intents=args.n_intents, slot_types_per_intent=args.slot_types,
        lexicon_size=args.lexicon_size, filler_vocab_size=args.filler_vocab,
        min_len=args.min_len, max_len=args.max_len,
        train_samples=args.train_samples, dev_samples=args.dev_samples,
        test_samples=args.test_samples, purity=args.purity, seed=args.seed)
    corpus = dat.generate_synthetic(spec)
    os.makedirs(args.out, exist_ok=True)
    dat.write_corpus(corpus, args.out)
    with open(os.path.join(args.out, "synth_spec.txt"), "w", encoding="utf-8") as f:
        for key, value in asdict(spec).items():
            f.write(f"{key} = {value!r}\n")
    print(f"wrote {len(corpus.train)}/{len(corpus.dev)}/{len(corpus.test)} "
          f"samples to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointslu")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a three-file corpus")
    p.add_argument("--data", help="corpus root (train/valid/test)")
    p.add_argument("--out", help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "dev", "valid", "test"])
    p.add_argument("--batch-size", dest="batch_size", type=int, default=16)
    p.add_argument("--out", help="also write the report to this file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="tag one utterance with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", required=True, help="whitespace-tokenized utterance")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check on a tiny model")
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--no-slot2intent", action="store_true")
    p.add_argument("--no-intent2slot", action="store_true")
    p.add_argument("--no-gaussian-attention", action="store_true")
    p.add_argument("--no-cooperation", action="store_true")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-intents", type=int, default=5)
    p.add_argument("--slot-types", type=int, default=3)
    p.add_argument("--lexicon-size", type=int, default=6)
    p.add_argument("--filler-vocab", type=int, default=30)
    p.add_argument("--min-len", type=int, default=4)
    p.add_argument("--max-len", type=int, default=9)
    p.add_argument("--train-samples", type=int, default=2000)
    p.add_argument("--dev-samples", type=int, default=200)
    p.add_argument("--test-samples", type=int, default=200)
    p.add_argument("--purity", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, IndexError, OSError, tr.TrainingDiverged) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
