"""Command-line interface.

Subcommands: synth-corpus, featurize, train, align, decode, evaluate,
compare. Exit codes: 0 success, 2 config or data fault, 3 numerical
fault. LID_THREADS caps evaluation worker threads.
"""

import argparse
import json
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import numpy as np

from . import corpus, ctc, evaluation, frontend, models, pipeline
from .checkpoint import load_checkpoint
from .errors import DialectIdError, NumericalFault
from .models import AmModel, ModelConfig
from .pipeline import FeatureProvider, TrainConfig


def _load_toml(path):
    with open(path, "rb") as f:
        return tomllib.load(f)


def cmd_synth_corpus(args):
    kw = {}
    if args.spec:
        kw = _load_toml(args.spec)
        if "duration_range" in kw:
            kw["duration_range"] = tuple(kw["duration_range"])
    spec = corpus.SynthSpec(**kw)
    train, test = corpus.synth_corpus(spec, args.out)
    print(f"wrote {len(train)} train / {len(test)} test utterances to {args.out}")
    return 0


def cmd_featurize(args):
    manifest = corpus.load_manifest(args.manifest)
    root = os.path.dirname(os.path.abspath(args.manifest))
    provider = FeatureProvider(root, cache_dir=args.cache)
    provider.write_cache(manifest)
    print(f"cached {len(manifest)} feature matrices in {args.cache}")
    return 0


def _model_config(conf, seed=None):
    return ModelConfig(**conf.get("model", {}))


def _stage_config(conf, stage, seed):
    kw = dict(conf.get("stages", {}).get(stage.replace("_", "-"), {}))
    kw.update(conf.get("stages", {}).get(stage, {}))
    if seed is not None:
        kw["seed"] = seed
    return TrainConfig.for_stage(stage, **kw)


def cmd_train(args):
    conf = _load_toml(args.config) if args.config else {}
    mc = _model_config(conf)
    root = args.corpus
    train_man = corpus.load_manifest(os.path.join(root, "train.tsv"), root=root)
    if train_man.missing:
        raise DialectIdError(f"missing audio for: {', '.join(train_man.missing[:5])}")
    features = FeatureProvider(root, cache_dir=args.cache)
    system = args.system.replace("-", "_")
    if system == "baseline":
        res = pipeline.run_baseline(root, train_man, mc,
                                    _stage_config(conf, "baseline", args.seed),
                                    args.out, features=features)
    elif system == "two_stage":
        res = pipeline.run_two_stage(
            root, train_man, mc,
            {"am": _stage_config(conf, "am", args.seed),
             "lid": _stage_config(conf, "lid", args.seed)},
            args.out, features=features)
    elif system == "three_stage":
        res = pipeline.run_three_stage(
            root, train_man, mc,
            {"am": _stage_config(conf, "am", args.seed),
             "frame_ce": _stage_config(conf, "frame_ce", args.seed),
             "lid": _stage_config(conf, "lid", args.seed)},
            args.out, features=features)
    else:
        raise DialectIdError(f"unknown system {args.system!r}")
    stages = ", ".join(f"{s}={e}" for s, e in res.convergence.stages)
    print(f"trained {res.kind} into {res.out_dir} (epochs to converge: {stages})")
    return 0


def cmd_align(args):
    ckpt = load_checkpoint(args.am)
    manifest = corpus.load_manifest(args.manifest)
    root = os.path.dirname(os.path.abspath(args.manifest))
    features = FeatureProvider(root)
    rows, skipped = pipeline.align_corpus(manifest, ckpt, features)
    ctc.write_alignments(args.out, rows)
    print(f"aligned {len(rows)} utterances ({skipped} skipped) -> {args.out}")
    return 0


def cmd_decode(args):
    ckpt = load_checkpoint(args.am)
    cfg = ModelConfig.from_dict(ckpt.meta["model_config"])
    am = AmModel(cfg, store=ckpt.store)
    wav = frontend.read_wav(args.utt)
    feats = frontend.log_mel_features(wav)
    lattice, _ = am.forward(feats, train_mode=False)
    ids = ctc.ctc_greedy_decode(lattice.data)
    print(" ".join(str(c) for c in ids))
    return 0


def cmd_evaluate(args):
    system = evaluation.load_system(args.system)
    test_man = corpus.load_manifest(args.test)
    root = os.path.dirname(os.path.abspath(args.test))
    metrics = evaluation.evaluate(system, test_man, root=root)
    os.makedirs(args.report, exist_ok=True)
    evaluation.render_confusion(metrics, args.report)
    payload = {
        "system": system.kind,
        "acc_all": metrics.acc_all,
        "acc_short": metrics.acc_short,
        "acc_long": metrics.acc_long,
        "n_short": metrics.n_short,
        "n_long": metrics.n_long,
        "confusion": metrics.confusion.tolist(),
        "per_class": [None if np.isnan(v) else v for v in metrics.per_class],
    }
    with open(os.path.join(args.report, "metrics.json"), "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    print(f"{system.kind}: all={metrics.acc_all:.2f} "
          f"<=3s={metrics.acc_short:.2f} >3s={metrics.acc_long:.2f}")
    return 0


def cmd_compare(args):
    named = []
    for report in args.reports:
        with open(os.path.join(report, "metrics.json"), encoding="utf-8") as f:
            payload = json.load(f)
        confusion = np.asarray(payload["confusion"], dtype=np.int64)
        m = evaluation.Metrics(
            confusion=confusion,
            acc_all=payload["acc_all"],
            acc_short=payload["acc_short"],
            acc_long=payload["acc_long"],
            per_class=np.array([np.nan if v is None else v
                                for v in payload["per_class"]]),
            n_short=payload["n_short"],
            n_long=payload["n_long"],
        )
        named.append((payload["system"], m))
    text, csv_text = evaluation.compare_systems(named)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(csv_text + "\n")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="dialectid",
                                description="dialect identification stack")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-corpus", help="generate the synthetic corpus")
    s.add_argument("--spec", help="TOML corpus spec")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth_corpus)

    s = sub.add_parser("featurize", help="write the log-mel feature cache")
    s.add_argument("--manifest", required=True)
    s.add_argument("--cache", required=True)
    s.set_defaults(fn=cmd_featurize)

    s = sub.add_parser("train", help="train one system")
    s.add_argument("--system", required=True,
                   choices=["baseline", "two-stage", "three-stage"])
    s.add_argument("--corpus", required=True, help="dir with train.tsv and wavs/")
    s.add_argument("--config", help="TOML with [model] and [stages.*] tables")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--cache", help="optional feature cache dir")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("align", help="forced-align a manifest with a trained AM")
    s.add_argument("--am", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_align)

    s = sub.add_parser("decode", help="greedy phoneme decode of one WAV")
    s.add_argument("--am", required=True)
    s.add_argument("--utt", required=True)
    s.set_defaults(fn=cmd_decode)

    s = sub.add_parser("evaluate", help="score a trained system on a test manifest")
    s.add_argument("--system", required=True, help="training output dir")
    s.add_argument("--test", required=True)
    s.add_argument("--report", required=True)
    s.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("compare", help="tabulate evaluation reports")
    s.add_argument("--reports", nargs="+", required=True)
    s.add_argument("--out", help="write the CSV table here")
    s.set_defaults(fn=cmd_compare)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except NumericalFault as e:
        print(f"numerical fault: {e}", file=sys.stderr)
        return 3
    except DialectIdError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
