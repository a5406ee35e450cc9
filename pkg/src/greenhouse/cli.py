"""``greenhouse`` command line: train, detect, eval, synth.

Exit status is 0 on success, 1 when the data or a model is unusable and 2 for
usage errors. Any command accepts ``--config FILE`` holding ``key = value``
lines whose keys are long flag names (``learning-rate = 0.01``); flags given
on the command line override the file.
"""

import argparse
import sys
from dataclasses import dataclass

from .detector import detect, read_result_csv, write_result_csv
from .errors import BadParams, GreenhouseError
from .evalbench import (
    SYNTHETIC_KINDS,
    generate_synthetic,
    inject_anomalies,
    load_labels_csv,
    score,
    write_labels_csv,
)
from .pipeline import DEFAULT_PERCENTILE, load_bundle, save_bundle, train_pipeline
from .predictor import KINDS, PredictorConfig
from .series import SplitSpec, load_csv, write_csv

_DEFAULTS = PredictorConfig()


class _UsageError(Exception):
    pass


def _percentile(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {text}")
    return value


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _nonneg_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return value


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _seed(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"must be an unsigned 64-bit integer, got {text}")
    return value


def _split(text):
    try:
        return SplitSpec(tuple(float(x) for x in text.split(",")))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for ``train``."""

    predictor: PredictorConfig
    split: SplitSpec
    percentile: float
    kind: str
    input: str
    model: str

    @classmethod
    def from_args(cls, args):
        predictor = PredictorConfig(
            lookback=args.lookback,
            horizon=args.horizon,
            hidden_size=args.hidden_size,
            epochs=args.epochs,
            learning_rate=args.learning_rate,
            batch_size=args.batch_size,
            grad_clip=args.grad_clip,
            seed=args.seed,
        )
        return cls(predictor, args.split, args.percentile, args.kind, args.input, args.model)


def _add_model_flags(p):
    p.add_argument("--kind", choices=KINDS, default="lstm")
    p.add_argument("--lookback", type=_positive_int, default=_DEFAULTS.lookback)
    p.add_argument("--horizon", type=_positive_int, default=_DEFAULTS.horizon)
    p.add_argument("--hidden-size", type=_positive_int, default=_DEFAULTS.hidden_size)
    p.add_argument("--epochs", type=_positive_int, default=_DEFAULTS.epochs)
    p.add_argument("--learning-rate", type=_positive_float, default=_DEFAULTS.learning_rate)
    p.add_argument("--batch-size", type=_positive_int, default=_DEFAULTS.batch_size)
    p.add_argument("--grad-clip", type=_positive_float, default=_DEFAULTS.grad_clip)
    p.add_argument("--seed", type=_seed, default=_DEFAULTS.seed)
    p.add_argument("--split", type=_split, default=SplitSpec(),
                   help="three comma-separated fractions (default 0.5,0.25,0.25)")
    p.add_argument("--percentile", type=_percentile, default=DEFAULT_PERCENTILE)


def build_parser():
    parser = argparse.ArgumentParser(prog="greenhouse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model bundle on anomaly-free data")
    p.add_argument("--config")
    p.add_argument("--input", help="training series CSV (required)")
    p.add_argument("--model", help="output bundle path (required)")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train, required_flags=("input", "model"))

    p = sub.add_parser("detect", help="label a series with a trained bundle")
    p.add_argument("--config")
    p.add_argument("--model")
    p.add_argument("--input")
    p.add_argument("--output")
    p.set_defaults(func=cmd_detect, required_flags=("model", "input", "output"))

    p = sub.add_parser("eval", help="score a detection result against labels")
    p.add_argument("--config")
    p.add_argument("--result")
    p.add_argument("--labels")
    p.add_argument("--tolerance", type=_nonneg_int, default=0)
    p.set_defaults(func=cmd_eval, required_flags=("result", "labels"))

    p = sub.add_parser("synth", help="write a synthetic series (optionally with spikes)")
    p.add_argument("--config")
    p.add_argument("--kind", choices=SYNTHETIC_KINDS, default="sine")
    p.add_argument("--n", type=_positive_int, default=2000)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--output")
    p.add_argument("--start-time", type=int, default=0)
    p.add_argument("--step", type=_positive_int, default=1)
    for name in ("amplitude", "period", "phase", "offset", "noise-std", "drift", "step-std"):
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--inject", type=_nonneg_int, default=0, help="number of spikes")
    p.add_argument("--labels", help="labels CSV path (required with --inject)")
    p.add_argument("--magnitude", type=float, default=10.0, help="spike size in series std units")
    p.add_argument("--min-gap", type=_positive_int, default=None,
                   help="minimum spike spacing (default lookback + horizon)")
    p.add_argument("--lookback", type=_positive_int, default=_DEFAULTS.lookback)
    p.add_argument("--horizon", type=_positive_int, default=_DEFAULTS.horizon)
    p.set_defaults(func=cmd_synth, required_flags=("output",))
    return parser


def read_config_file(path):
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            entries[key] = value
    return entries


def _apply_config(parser, subparser, argv):
    """Re-parse ``argv`` with defaults taken from the ``--config`` file."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        entries = read_config_file(args.config)
    except (OSError, ValueError) as exc:
        parser.error(f"cannot read config file: {exc}")
    by_flag = {}
    for action in subparser._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                by_flag[opt[2:]] = action
    defaults = {}
    for key, value in entries.items():
        action = by_flag.get(key.replace("_", "-"))
        if action is None or key in ("config", "help"):
            subparser.error(f"unknown key in config file: {key!r}")
        if action.choices is not None and value not in action.choices:
            subparser.error(f"config key {key!r}: invalid choice {value!r}")
        defaults[action.dest] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def cmd_train(args):
    try:
        cfg = RunConfig.from_args(args)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    series = load_csv(cfg.input)
    bundle = train_pipeline(series, cfg.predictor, cfg.split, cfg.percentile, cfg.kind)
    save_bundle(bundle, cfg.model)
    seg = ",".join(str(n) for n in bundle.segment_lengths)
    print(f"tau={bundle.threshold!r} percentile={bundle.percentile!r} "
          f"segments={seg} train_mse={bundle.predictor.train_mse!r}")
    return 0


def cmd_detect(args):
    bundle = load_bundle(args.model)
    result = detect(bundle, load_csv(args.input))
    write_result_csv(result, args.output)
    print(f"scored={int(result.scored.sum())} anomalies={int(result.anomalous.sum())}")
    return 0


def cmd_eval(args):
    result = read_result_csv(args.result)
    m = score(result, load_labels_csv(args.labels, args.tolerance))
    print(f"{m.precision!r} {m.recall!r} {m.f1!r} {m.tp} {m.fp} {m.fn}")
    return 0


def cmd_synth(args):
    params = {}
    for name in ("amplitude", "period", "phase", "offset", "noise_std", "drift", "step_std"):
        value = getattr(args, name)
        if value is not None:
            params[name] = value
    series = generate_synthetic(args.kind, args.n, args.seed, params, args.start_time, args.step)
    n_labels = 0
    if args.inject:
        if not args.labels:
            raise _UsageError("--labels is required with --inject")
        min_gap = args.min_gap or args.lookback + args.horizon
        series, labels = inject_anomalies(series, args.seed, args.inject, args.magnitude, min_gap,
                                          args.lookback, args.horizon)
        write_labels_csv(labels, args.labels)
        n_labels = len(labels)
    write_csv(series, args.output)
    print(f"rows={len(series)} labels={n_labels}")
    return 0


def main(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        pre = parser.parse_args(argv)
        subparser = parser._subparsers._group_actions[0].choices[pre.command]
        args = _apply_config(parser, subparser, argv)
        missing = [f"--{f.replace('_', '-')}" for f in args.required_flags if not getattr(args, f)]
        if missing:
            subparser.error(f"the following arguments are required: {', '.join(missing)}")
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (_UsageError, BadParams) as exc:
        print(f"greenhouse {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except GreenhouseError as exc:
        print(f"greenhouse: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"greenhouse: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
