"""Command-line entry point.

Subcommands: generate, parse, train, eval, gradcheck, report.  Exit
codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
Set ADVEMB_LOG to control verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, backend
from .autodiff import Tape
from .checkpoint import checkpoint_load, checkpoint_save
from .config import GradcheckConfig, describe, resolve
from .dataset import build_samples, load_annotations, save_annotations
from .errors import ConfigError, DataError, NumericError
from .features import FeatureStore
from .model import (ATTENTION_KINDS, MODIFIER_KINDS, ModelHyper, init_model,
                    sample_loss_nodes)
from .optim import fd_gradient_check
from .retrieval import (antonym_p_at_1, evaluate, mean_average_precision,
                        rank_adverb_to_video, rank_video_to_action,
                        rank_video_to_adverb)
from .synth import (SynthConfig, action_names, adverb_pair_names, synth_generate,
                    synth_word_vectors)
from .training import TrainConfig, train
from .vocab import (build_action_vocabulary, build_adverb_vocabulary,
                    load_word_vectors, save_word_vectors)

log = logging.getLogger("advemb")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _header(cfg_obj) -> list[str]:
    return [f"advemb {__version__}", f"config: {describe(cfg_obj)}"]


# ---------------------------------------------------------------------------
# data directory conventions


def _load_data_dir(data_dir, actions=None, adverbs=None):
    """(store, records, actions, adverbs) from the on-disk layout."""
    data_dir = Path(data_dir)
    store = FeatureStore.load(data_dir / "features")
    records = load_annotations(data_dir / "annotations.tsv", actions, adverbs)
    if actions is None or adverbs is None:
        vectors = load_word_vectors(data_dir / "vectors.txt")
        pairs = _load_antonyms(data_dir / "antonyms.tsv")
        actions = build_action_vocabulary(sorted({r.action for r in records}), vectors)
        adverbs = build_adverb_vocabulary(pairs, vectors)
    return store, records, actions, adverbs


def _load_antonyms(path) -> list[tuple[str, str]]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            a, b = line.split("\t")
            pairs.append((a, b))
    return pairs


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    cfg: SynthConfig = resolve(args.config, args.set)["synth"]
    store, records, truth = synth_generate(cfg)
    out = Path(args.out)
    os.makedirs(out, exist_ok=True)
    store.save(out / "features")
    save_annotations(out / "annotations.tsv", records, _header(cfg))
    save_word_vectors(out / "vectors.txt", synth_word_vectors(cfg))
    with open(out / "antonyms.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for a, b in adverb_pair_names(cfg.num_adverb_pairs):
            fh.write(f"{a}\t{b}\n")
    with open(out / "truth.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(truth.to_json())
    log.info("wrote %d videos, %d annotations to %s", len(store), len(records), out)
    print(f"generated {len(store)} videos / {len(records)} annotations "
          f"({len(action_names(cfg.num_actions))} actions, "
          f"{2 * cfg.num_adverb_pairs} adverbs) in {out}")
    return 0


def cmd_parse(args) -> int:
    from .narration import extract_directory, load_rules
    rules = load_rules(args.rules) if args.rules else None
    if rules is None:
        from .narration import ExtractionRules
        rules = ExtractionRules()
    extractions = extract_directory(args.in_dir, rules)
    from .narration import emit_annotations
    written, dups = emit_annotations(
        extractions, args.out,
        [f"advemb {__version__}",
         f"rules: excluded={','.join(sorted(rules.excluded_verb_tags))} "
         f"allow={','.join(sorted(rules.adverb_allowlist))} "
         f"block={','.join(sorted(rules.action_blocklist))}"])
    print(f"wrote {written} annotations to {args.out} ({dups} duplicates dropped)")
    return 0


def cmd_train(args) -> int:
    cfg: TrainConfig = resolve(args.config, args.set)["train"]
    store, records, actions, adverbs = _load_data_dir(args.data)
    train_records = [r for r in records if r.split != "test"]
    if not train_records:
        train_records = records
    samples = build_samples(store, train_records, actions, adverbs, cfg.window)
    resume = checkpoint_load(args.resume) if args.resume else None
    log.info("training on %d samples (backend: %s)", len(samples), backend.active_backend())
    mp, tlog = train(cfg, samples, actions, adverbs, checkpoint_path=args.out,
                     resume=resume)
    log_path = str(args.out) + ".log.tsv"
    with open(log_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(tlog.to_tsv(_header(cfg)))
    last = tlog.epochs[-1] if tlog.epochs else None
    if last:
        print(f"trained {cfg.epochs} epochs on {len(samples)} samples; final "
              f"loss_act={last.loss_act:.4f} loss_adv={last.loss_adv:.4f}")
    print(f"checkpoint: {args.out}\nlog: {log_path}")
    return 0


def cmd_eval(args) -> int:
    ck = checkpoint_load(args.ckpt)
    mp, cfg = ck.model, ck.config
    store, records, _, _ = _load_data_dir(args.data, mp.actions, mp.adverbs)
    if args.split != "all":
        records = [r for r in records if r.split == args.split]
    if not records:
        raise DataError(f"no records with split {args.split!r}")
    samples = build_samples(store, records, mp.actions, mp.adverbs, cfg.window)

    if args.direction == "v2a":
        rankings = [rank_video_to_adverb(mp, s, args.setting) for s in samples]
        metrics = {"map": mean_average_precision(rankings)}
        if args.setting == "antonym":
            metrics["p_at_1"] = antonym_p_at_1(rankings)
    elif args.direction == "a2v":
        present = sorted({s.adverb for s in samples})
        rankings = [rank_adverb_to_video(mp, m, samples, args.setting)
                    for m in present]
        metrics = {"map": mean_average_precision(rankings)}
    else:  # v2act
        rankings = [rank_video_to_action(mp, s) for s in samples]
        metrics = {"map": mean_average_precision(rankings)}

    lines = [f"# advemb {__version__}",
             f"# direction: {args.direction} setting: {args.setting} "
             f"split: {args.split} n: {len(samples)}"]
    lines += [f"{k}\t{v:.6f}" for k, v in sorted(metrics.items())]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_gradcheck(args) -> int:
    gc: GradcheckConfig = resolve(args.config, args.set)["gradcheck"]
    rng = np.random.default_rng(gc.seed)
    from .dataset import VideoSample
    from .vocab import ActionVocabulary, AdverbVocabulary
    e = gc.embed_dim
    acts = ActionVocabulary([f"a{i}" for i in range(gc.n_actions)],
                            rng.standard_normal((gc.n_actions, e)))
    names, antonym = [], []
    for p in range(gc.n_adverb_pairs):
        names += [f"m{p}a", f"m{p}b"]
        antonym += [2 * p + 1, 2 * p]
    advs = AdverbVocabulary(names, antonym, rng.standard_normal((len(names), e)))

    feats = rng.standard_normal((gc.window, gc.feat_dim))
    pad = np.zeros(gc.window, dtype=bool)
    pad[-1] = True
    sample = VideoSample(feats, pad, 0, 0, "toy")
    neg = 1 % gc.n_actions

    worst = 0.0
    failed = []
    for attention in ATTENTION_KINDS:
        for modifier in MODIFIER_KINDS:
            hyper = ModelHyper(feat_dim=gc.feat_dim, window=gc.window, embed_dim=e,
                               head_dim=gc.head_dim, n_heads=gc.n_heads,
                               modifier=modifier, attention=attention,
                               attn_hidden=gc.attn_hidden)

            def forward():
                tape = Tape()
                l_act, l_adv = sample_loss_nodes(tape, mp, sample, neg, "joint")
                return tape, tape.add(l_act, l_adv)

            # re-seed until both hinges are active, else the check is vacuous
            for attempt in range(50):
                mp = init_model(hyper, acts, advs,
                                np.random.default_rng(gc.seed + 1 + attempt),
                                modifier_init="random"
                                if modifier != "fixed_translation" else "identity")
                tape = Tape()
                l_act, l_adv = sample_loss_nodes(tape, mp, sample, neg, "joint")
                if float(l_act.value) > 1e-3 and float(l_adv.value) > 1e-3:
                    break
            else:
                raise NumericError(
                    f"no instance with active losses for {attention}/{modifier}")

            report = fd_gradient_check(forward, mp.parameter_list(),
                                       eps=gc.eps, tolerance=gc.tolerance)
            top = report[0]
            worst = max(worst, top["max_rel_err"])
            status = "ok" if all(r["ok"] for r in report) else "FAIL"
            if status == "FAIL":
                failed.append((attention, modifier))
            print(f"{attention:16s} {modifier:20s} max_rel_err={top['max_rel_err']:.3e} "
                  f"worst_param={top['name']} {status}")
    print(f"overall max relative error: {worst:.3e} (tolerance {gc.tolerance:g})")
    if failed:
        raise NumericError(f"gradient check failed for: {failed}")
    return 0


def cmd_report(args) -> int:
    ck = checkpoint_load(args.ckpt)
    mp, cfg = ck.model, ck.config
    store, records, _, _ = _load_data_dir(args.data, mp.actions, mp.adverbs)
    if args.split != "all":
        records = [r for r in records if r.split == args.split]
    if not records:
        raise DataError(f"no records with split {args.split!r}")
    samples = build_samples(store, records, mp.actions, mp.adverbs, cfg.window)
    rep = evaluate(mp, samples, modality=args.modality, per_adverb=args.per_adverb)
    header = _header(cfg) + [f"modality: {args.modality} split: {args.split}"]
    sys.stdout.write(rep.to_table())
    if args.out:
        with open(str(args.out) + ".tsv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(rep.to_tsv(header))
        with open(str(args.out) + ".txt", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(rep.to_table())
        print(f"report written to {args.out}.tsv / {args.out}.txt")
    return 0


# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="advemb", description=__doc__)
    parser.add_argument("--version", action="version", version=f"advemb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_set(p):
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value (flags win over the file)")

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    add_set(p)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("parse", help="extract annotations from tagged narrations")
    p.add_argument("--rules", default=None)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None)
    add_set(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate one retrieval direction")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--setting", choices=["all", "antonym"], default="all")
    p.add_argument("--direction", choices=["v2a", "a2v", "v2act"], default="v2a")
    p.add_argument("--split", choices=["train", "test", "all"], default="test")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of all variants")
    p.add_argument("--config", default=None)
    add_set(p)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("report", help="full evaluation report")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--modality", choices=["both", "appearance", "motion"],
                   default="both")
    p.add_argument("--per-adverb", action="store_true")
    p.add_argument("--split", choices=["train", "test", "all"], default="test")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("ADVEMB_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"advemb: config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, KeyError, FileNotFoundError, OSError) as exc:
        print(f"advemb: data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"advemb: numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
