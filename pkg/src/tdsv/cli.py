"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric or
degenerate-input error.

``--config FILE`` supplies defaults as ``key = value`` lines (``#`` starts a
comment).  A key is an option name with dashes or underscores (``top_n``,
``top-n``) and may be prefixed with a subcommand (``asnorm.top_n``) to
scope it.  Command-line flags override the file, which overrides built-in
defaults.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .backend import (
    ASNormConfig,
    ModelEmbedding,
    asnorm,
    build_cohort,
    default_workers,
    enroll,
    fuse,
    score_trials,
)
from .data import (
    EmbeddingStore,
    atomic_write,
    format_for_path,
    read_embeddings,
    read_models,
    read_posteriors,
    read_scores,
    read_speaker_map,
    read_trials,
    write_embeddings,
    write_scores,
)
from .errors import DataError, NumericError
from .gate import DEFAULT_FLOOR, GateConfig, format_decisions, gate
from .losses import gradient_check
from .metrics import SUBSETS, MetricConfig, evaluate, map_labels
from .synth import SynthConfig, generate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# parameters left out of manifests because they cannot change any output
_NOT_ECHOED = {"func"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config(path) -> dict[str, str]:
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}, line {lineno}: expected 'key = value'")
        key, value = (x.strip() for x in line.split("=", 1))
        if not key:
            raise UsageError(f"{path}, line {lineno}: empty key")
        cfg[key.replace("-", "_")] = value
    return cfg


def _workers(args) -> int:
    return args.workers if args.workers else default_workers()


def _write_manifest(out_path, args) -> None:
    path = Path(str(out_path) + ".manifest.tsv")
    rows = [("command", args.command), ("version", __version__)]
    for key in sorted(vars(args)):
        if key in _NOT_ECHOED or key == "command":
            continue
        rows.append((key, str(getattr(args, key))))
    if hasattr(args, "workers"):
        rows.append(("effective_workers", str(_workers(args))))
    atomic_write(path, "".join(f"{k}\t{v}\n" for k, v in rows))


# --- subcommands --------------------------------------------------------------

def cmd_gen(args):
    cfg = SynthConfig(
        n_speakers=args.speakers, n_phrases=args.phrases, utts_per_speaker_phrase=args.utts_per_phrase,
        dim=args.dim, within_noise=args.noise, posterior_confusion=args.confusion, seed=args.seed,
        models_per_speaker=args.models_per_speaker, free_text_per_speaker=args.free_text,
        tc_per_model=args.tc, tw_per_model=args.tw, ic_per_model=args.ic,
        n_cohort_speakers=args.cohort_speakers, cohort_utts_per_speaker=args.cohort_utts)
    paths = generate(cfg).write(args.out)
    _write_manifest(Path(args.out) / "gen", args)
    for name, p in paths.items():
        print(f"{name}\t{p}")


def _model_vectors(path) -> list[ModelEmbedding]:
    store = read_embeddings(path)
    return [ModelEmbedding(k, v.astype(np.float64)) for k, v in store.items()]


def cmd_enroll(args):
    models = read_models(args.models)
    store = read_embeddings(args.embeddings)
    vecs = enroll(models, store, strict=not args.relaxed)
    out = EmbeddingStore([m.model_id for m in vecs], np.stack([m.vector for m in vecs]) if vecs else np.zeros((0, 0)))
    write_embeddings(args.out, out, format_for_path(args.out))
    _write_manifest(args.out, args)


def cmd_score(args):
    trials = read_trials(args.trials)
    scores = score_trials(trials, _model_vectors(args.models), read_embeddings(args.embeddings), _workers(args))
    write_scores(args.out, scores)
    _write_manifest(args.out, args)


def cmd_asnorm(args):
    raw = read_scores(args.input)
    cohort = build_cohort(read_embeddings(args.cohort_embeddings), read_speaker_map(args.speaker_map))
    config = ASNormConfig(top_n=args.top_n, epsilon_sigma=args.epsilon_sigma)
    out = asnorm(raw, _model_vectors(args.models), read_embeddings(args.embeddings), cohort, config,
                 workers=_workers(args))
    write_scores(args.out, out)
    _write_manifest(args.out, args)


def cmd_gate(args):
    trials = read_trials(args.trials)
    config = GateConfig(floor_score=args.floor, min_confidence=args.min_confidence)
    gated, decisions = gate(trials, read_models(args.models), read_posteriors(args.posteriors),
                            read_scores(args.scores), config)
    write_scores(args.out, gated)
    if args.decisions:
        atomic_write(args.decisions, format_decisions(decisions))
    _write_manifest(args.out, args)


def cmd_fuse(args):
    sets = [read_scores(p) for p in args.input.split(",") if p]
    if not sets:
        raise UsageError("fuse: --in needs at least one score file")
    write_scores(args.out, fuse(sets))
    _write_manifest(args.out, args)


def cmd_eval(args):
    trials = read_trials(args.trials)
    scores = read_scores(args.scores)
    config = MetricConfig(p_target=args.p_target, c_miss=args.c_miss, c_fa=args.c_fa)
    tar, non = map_labels(trials, scores, args.subset)
    report = evaluate(tar, non, config, args.eer_method)
    print(f"targets\t{report.n_target}")
    print(f"nontargets\t{report.n_nontarget}")
    print(f"EER(%)\t{100 * report.eer:.4f}")
    print(f"MinDCF\t{report.min_dcf:.4f}")
    print(report.table_row())
    if args.det_out:
        atomic_write(args.det_out, report.det.to_tsv())
        _write_manifest(args.det_out, args)


def cmd_losscheck(args):
    errors = gradient_check(args.instances, args.seed, args.step, weights_too=args.weights)
    worst = max(errors)
    print(f"instances\t{len(errors)}")
    print(f"max_relative_error\t{worst:.3e}")
    if worst >= args.tolerance:
        print(f"FAIL: exceeds tolerance {args.tolerance:g}", file=sys.stderr)
        return EXIT_NUMERIC
    print("OK")
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tdsv", description=__doc__.split("\n")[0])
    p.add_argument("--config", help="key = value defaults file")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def workers(sp):
        sp.add_argument("--workers", type=_positive_int, default=None,
                        help="parallel workers (default: number of cores); never changes results")

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--speakers", type=_positive_int, default=50)
    g.add_argument("--phrases", type=_positive_int, default=10)
    g.add_argument("--utts-per-phrase", type=_positive_int, default=6)
    g.add_argument("--dim", type=_positive_int, default=256)
    g.add_argument("--noise", type=float, default=0.6)
    g.add_argument("--confusion", type=float, default=0.01)
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--models-per-speaker", type=_positive_int, default=2)
    g.add_argument("--free-text", type=int, default=2)
    g.add_argument("--tc", type=int, default=3)
    g.add_argument("--tw", type=int, default=3)
    g.add_argument("--ic", type=int, default=6)
    g.add_argument("--cohort-speakers", type=_positive_int, default=200)
    g.add_argument("--cohort-utts", type=_positive_int, default=5)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("enroll", help="average enrollment embeddings into model vectors")
    e.add_argument("--models", required=True, help="model definition TSV")
    e.add_argument("--embeddings", required=True)
    e.add_argument("--out", required=True, help="model vectors (.txt = text format, else binary)")
    e.add_argument("--relaxed", action="store_true", help="allow any number (>= 1) of enrollment utterances")
    e.set_defaults(func=cmd_enroll)

    s = sub.add_parser("score", help="cosine-score a trial list")
    s.add_argument("--trials", required=True)
    s.add_argument("--models", required=True, help="model vectors from 'enroll'")
    s.add_argument("--embeddings", required=True)
    s.add_argument("--out", required=True)
    workers(s)
    s.set_defaults(func=cmd_score)

    a = sub.add_parser("asnorm", help="adaptive score normalization")
    a.add_argument("--in", dest="input", required=True, help="raw score file")
    a.add_argument("--models", required=True, help="model vectors from 'enroll'")
    a.add_argument("--embeddings", required=True, help="test embeddings")
    a.add_argument("--cohort-embeddings", required=True)
    a.add_argument("--speaker-map", required=True, help="TSV utt_id<TAB>speaker_id for the cohort")
    a.add_argument("--top-n", type=_positive_int, default=300)
    a.add_argument("--epsilon-sigma", type=float, default=1e-6)
    a.add_argument("--out", required=True)
    workers(a)
    a.set_defaults(func=cmd_asnorm)

    gt = sub.add_parser("gate", help="reject trials failing the phrase decision")
    gt.add_argument("--trials", required=True)
    gt.add_argument("--models", required=True, help="model definition TSV")
    gt.add_argument("--posteriors", required=True)
    gt.add_argument("--scores", required=True)
    gt.add_argument("--floor", type=float, default=DEFAULT_FLOOR)
    gt.add_argument("--min-confidence", type=float, default=None)
    gt.add_argument("--out", required=True)
    gt.add_argument("--decisions", help="write per-trial decisions TSV here")
    gt.set_defaults(func=cmd_gate)

    f = sub.add_parser("fuse", help="average aligned score files")
    f.add_argument("--in", dest="input", required=True, help="comma-separated score files")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fuse)

    v = sub.add_parser("eval", help="EER and MinDCF of a score file")
    v.add_argument("--scores", required=True)
    v.add_argument("--trials", required=True, help="labelled trial list")
    v.add_argument("--subset", choices=sorted(SUBSETS), default="all")
    v.add_argument("--p-target", type=float, default=0.01)
    v.add_argument("--c-miss", type=float, default=10.0)
    v.add_argument("--c-fa", type=float, default=1.0)
    v.add_argument("--eer-method", choices=("interp", "minmax"), default="interp")
    v.add_argument("--det-out", help="write DET operating points TSV here")
    v.set_defaults(func=cmd_eval)

    lc = sub.add_parser("losscheck", help="finite-difference check of the margin-softmax gradient")
    lc.add_argument("--instances", type=_positive_int, default=50)
    lc.add_argument("--seed", type=int, default=0)
    lc.add_argument("--step", type=float, default=1e-4)
    lc.add_argument("--tolerance", type=float, default=1e-4)
    lc.add_argument("--weights", action="store_true", help="also check prototype gradients")
    lc.set_defaults(func=cmd_losscheck)
    return p


def _apply_config(parser: argparse.ArgumentParser, cfg: dict[str, str]) -> None:
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    used = set()
    for name, sp in subparsers.choices.items():
        for action in sp._actions:
            if not action.option_strings or action.dest in ("help",):
                continue
            for key in (action.dest, f"{name}.{action.dest}"):
                if key not in cfg:
                    continue
                used.add(key)
                value = cfg[key]
                if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                    value = _bool(value)
                action.default = value
                action.required = False
    unknown = sorted(set(cfg) - used)
    if unknown:
        raise UsageError(f"unknown configuration key(s): {', '.join(unknown)}")


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = _Parser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config:
            try:
                cfg = read_config(known.config)
            except OSError as exc:
                raise UsageError(f"cannot read config: {exc}") from None
            _apply_config(parser, cfg)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    try:
        rc = args.func(args)
    except UsageError as exc:
        print(f"tdsv {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"tdsv {args.command}: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"tdsv {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:  # parameter rejected by a config dataclass
        print(f"tdsv {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if rc is None else rc


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
