"""Command-line entry point: simulate, aggregate, analyze, train, evaluate, sweep, predict, report."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

from rich.console import Console

from noisyneighbor import __version__
from noisyneighbor.core.analysis import TARGETS, feature_noise_report
from noisyneighbor.core.config import AppConfig, Config
from noisyneighbor.core.detector import MODEL_KINDS
from noisyneighbor.core.errors import NoisyNeighborError
from noisyneighbor.core.evaluation import (
    DEFAULT_C_GRID,
    DEFAULT_TREE_GRID,
    EvalReport,
    cross_validate,
    emit_curve_csv,
    sweep_forest_trees,
    sweep_svm_C,
)
from noisyneighbor.core.features import EXPANSIONS
from noisyneighbor.core.log import setup_logging
from noisyneighbor.core.simulator import (
    dump_scenario,
    emit_truth_csv,
    generate,
    load_scenario,
    standard_benchmark_scenario,
)
from noisyneighbor.core.telemetry import aggregate_windows, dataset_summary, label_windows
from noisyneighbor.services.file_service import FileService, emit_predictions_csv
from noisyneighbor.services.model_service import ModelService

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    common.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    common.add_argument("--jobs", type=int, default=None, help="parallel workers for trees, folds and MIC")
    common.add_argument("--env-file", type=Path, default=None, help="file of NN_* overrides (default .env)")
    return common


def _model_flags(parser: argparse.ArgumentParser, cfg: AppConfig) -> None:
    parser.add_argument("--model", choices=MODEL_KINDS, default="forest", help="classifier kind")
    parser.add_argument("--c", type=float, default=None, help=f"SVM penalty C (default {cfg.svm_c:g})")
    parser.add_argument("--gamma", type=float, default=None, help="Gaussian kernel width (default 1/d)")
    parser.add_argument("--trees", type=int, default=None, help=f"forest size (default {cfg.n_trees})")
    parser.add_argument("--min-leaf", type=int, default=None, help=f"minimum leaf count (default {cfg.min_leaf})")
    parser.add_argument(
        "--expand", choices=EXPANSIONS, default=None,
        help=f"feature expansion (default {cfg.svm_expansion} for svm, none otherwise)",
    )
    parser.add_argument("--expand-first", action="store_true", default=None,
                        help="expand before standardizing")
    parser.add_argument("--seed", type=int, default=None, help=f"master seed (default {cfg.seed})")


def build_parser(cfg: AppConfig) -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="noisyneighbor",
        description="Detect noisy neighbors from coarse VM telemetry.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate synthetic raw telemetry")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", type=Path, help="scenario config file")
    source.add_argument("--standard-benchmark", action="store_true", help="use the frozen benchmark scenario")
    p.add_argument("--out", type=Path, default=None, help="raw telemetry CSV (default <output_dir>/raw.csv)")
    p.add_argument("--truth", type=Path, default=None, help="noise schedule CSV (default <out>.truth.csv)")
    p.add_argument("--dump-config", type=Path, default=None, help="also write the scenario config used")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    p = sub.add_parser("aggregate", parents=[common], help="raw telemetry CSV -> labeled dataset CSV")
    p.add_argument("input", type=Path, help="raw telemetry CSV")
    p.add_argument("--window", type=float, default=cfg.window_len, help="window length in seconds")
    p.add_argument("--noise-threshold", type=float, default=cfg.noise_threshold,
                   help="noise-VM CPU %% at or above which a window is noisy")
    p.add_argument("--out", type=Path, default=None, help="dataset CSV (default <output_dir>/dataset.csv)")

    p = sub.add_parser("analyze", parents=[common], help="correlation and MIC of each feature with the noise")
    p.add_argument("input", type=Path, help="raw telemetry CSV (carries the noise-VM CPU column)")
    p.add_argument("--window", type=float, default=cfg.window_len, help="window length in seconds")
    p.add_argument("--target", choices=TARGETS, default="noise-cpu", help="dependence target")
    p.add_argument("--noise-threshold", type=float, default=cfg.noise_threshold,
                   help="threshold used by the binary-label target")
    p.add_argument("--out", type=Path, default=None, help="also write the report as CSV")

    p = sub.add_parser("train", parents=[common], help="fit a detector on a dataset")
    p.add_argument("input", type=Path, help="dataset CSV")
    _model_flags(p, cfg)
    p.add_argument("--out", type=Path, default=None, help="model file (default <output_dir>/model.json)")

    p = sub.add_parser("evaluate", parents=[common], help="k-fold cross-validation report")
    p.add_argument("input", type=Path, help="dataset CSV")
    _model_flags(p, cfg)
    p.add_argument("--k", type=int, default=cfg.k_folds, help="number of folds")
    p.add_argument("--stratified", action="store_true", default=cfg.stratified, help="class-stratified folds")
    p.add_argument("--out", type=Path, default=None, help="also write the report as JSON")

    p = sub.add_parser("sweep", parents=[common], help="cross-validate over a hyperparameter grid")
    p.add_argument("input", type=Path, help="dataset CSV")
    p.add_argument("--param", choices=("c", "trees"), required=True, help="swept hyperparameter")
    p.add_argument("--grid", type=_float_list, default=None,
                   help="comma-separated increasing values (default: squares of 0.5..4.5 for c, 1..300 trees)")
    p.add_argument("--gamma", type=float, default=None, help="Gaussian kernel width for c sweeps")
    p.add_argument("--expand", choices=EXPANSIONS, default=None, help="feature expansion")
    p.add_argument("--min-leaf", type=int, default=None, help="minimum leaf count for tree sweeps")
    p.add_argument("--k", type=int, default=cfg.k_folds, help="number of folds")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--stratified", action="store_true", default=cfg.stratified, help="class-stratified folds")
    p.add_argument("--out", type=Path, default=None, help="curve CSV (default <output_dir>/sweep_<param>.csv)")

    p = sub.add_parser("predict", parents=[common], help="label every window of a dataset")
    p.add_argument("input", type=Path, help="dataset CSV")
    p.add_argument("--model-file", type=Path, required=True, help="model file written by train")
    p.add_argument("--out", type=Path, default=None, help="predictions CSV (default <output_dir>/predictions.csv)")

    p = sub.add_parser("report", parents=[common], help="print a saved evaluation report")
    p.add_argument("input", type=Path, help="report JSON written by evaluate --out")
    return parser


class _Commands:
    """Subcommand implementations sharing config, services and the stdout console."""

    def __init__(self, cfg: AppConfig, console: Console):
        self.cfg = cfg
        self.console = console
        self.files = FileService(cfg.output_dir)
        self.models = ModelService(cfg)

    def _seed(self, args) -> int:
        return self.cfg.seed if args.seed is None else args.seed

    def _spec(self, args):
        return self.models.build_spec(
            args.model, c=args.c, gamma=args.gamma, trees=args.trees, min_leaf=args.min_leaf,
            expansion=args.expand, expand_first=args.expand_first,
        )

    def simulate(self, args) -> int:
        scenario = standard_benchmark_scenario() if args.standard_benchmark else load_scenario(args.config)
        if args.seed is not None:
            scenario = replace(scenario, seed=args.seed)
            scenario.validate()
        samples, truth = generate(scenario)
        out = self.files.resolve_output(args.out, "raw.csv")
        truth_path = args.truth or out.with_name(out.stem + ".truth.csv")
        self.files.write_samples(out, samples)
        self.files.write_text(truth_path, emit_truth_csv(truth))
        if args.dump_config:
            self.files.write_text(args.dump_config, dump_scenario(scenario))
        self.console.print(
            f"✓ {len(samples)} samples, {len(truth.noise_schedule)} noise intervals -> {out}"
        )
        return EXIT_OK

    def aggregate(self, args) -> int:
        samples = self.files.read_samples(args.input)
        windows = aggregate_windows(samples, args.window)
        dataset = label_windows(windows, args.noise_threshold, provenance=str(args.input))
        out = self.files.write_dataset(self.files.resolve_output(args.out, "dataset.csv"), dataset)
        total, positives = dataset_summary(dataset)
        share = positives / total if total else 0.0
        self.console.print(f"✓ {total} windows, {positives} noisy ({share:.1%}) -> {out}")
        return EXIT_OK

    def analyze(self, args) -> int:
        windows = aggregate_windows(self.files.read_samples(args.input), args.window)
        report = feature_noise_report(windows, args.target, args.noise_threshold, n_jobs=self.cfg.n_jobs)
        self.console.print(report.to_table())
        if args.out:
            self.files.write_text(self.files.resolve_output(args.out, "dependence.csv"), report.to_csv())
        return EXIT_OK

    def train(self, args) -> int:
        dataset = self.files.read_dataset(args.input)
        spec = self._spec(args)
        seed = self._seed(args)
        detector = self.models.train(spec, dataset, seed)
        out = self.models.save(detector, self.files.resolve_output(args.out, "model.json"), spec.describe(), seed)
        self.console.print(f"✓ trained {spec.describe()} on {len(dataset)} windows -> {out}")
        return EXIT_OK

    def evaluate(self, args) -> int:
        dataset = self.files.read_dataset(args.input)
        spec = self._spec(args)
        report = cross_validate(spec, dataset, args.k, self._seed(args), args.stratified, self.cfg.n_jobs)
        self.console.print(report.to_table())
        self.console.print(
            f"precision {report.precision:.4f}  recall {report.recall:.4f}  F1 {report.f1:.4f}"
        )
        if args.out:
            self.files.write_text(self.files.resolve_output(args.out, "report.json"), report.to_json())
        return EXIT_OK

    def sweep(self, args) -> int:
        dataset = self.files.read_dataset(args.input)
        seed = self._seed(args)
        if args.param == "c":
            base = self.models.build_spec("svm", gamma=args.gamma, expansion=args.expand)
            curve = sweep_svm_C(dataset, args.grid or DEFAULT_C_GRID, base.svm.gamma, args.k, seed,
                                base=base, stratified=args.stratified, n_jobs=self.cfg.n_jobs)
        else:
            base = self.models.build_spec("forest", min_leaf=args.min_leaf, expansion=args.expand)
            grid = [int(v) for v in args.grid] if args.grid else DEFAULT_TREE_GRID
            if args.grid and any(int(v) != v for v in args.grid):
                raise ValueError("tree counts must be whole numbers")
            curve = sweep_forest_trees(dataset, grid, args.k, seed, base=base,
                                       stratified=args.stratified, n_jobs=self.cfg.n_jobs)
        self.console.print(curve.to_table())
        self.files.write_text(self.files.resolve_output(args.out, f"sweep_{args.param}.csv"), emit_curve_csv(curve))
        return EXIT_OK

    def predict(self, args) -> int:
        detector = self.models.load(args.model_file)
        dataset = self.files.read_dataset(args.input)
        labels = self.models.predict(detector, dataset)
        starts = [inst.window_start for inst in dataset]
        out = self.files.write_text(
            self.files.resolve_output(args.out, "predictions.csv"), emit_predictions_csv(starts, labels)
        )
        flagged = int((labels == 1).sum())
        self.console.print(f"✓ {len(labels)} windows, {flagged} flagged noisy -> {out}")
        return EXIT_OK

    def report(self, args) -> int:
        report = EvalReport.from_json(self.files.read_text(args.input))
        self.console.print(report.to_table())
        self.console.print(
            f"precision {report.precision:.4f}  recall {report.recall:.4f}  F1 {report.f1:.4f}"
        )
        return EXIT_OK


def dispatch(argv: Sequence[str] | None = None, console: Console | None = None) -> int:
    """Run one subcommand and return its exit code (0 ok, 1 runtime error, 2 usage)."""
    argv = list(sys.argv[1:] if argv is None else argv)
    env_file = None
    if "--env-file" in argv[:-1]:
        env_file = Path(argv[argv.index("--env-file") + 1])
    try:
        config = Config(env_file=env_file)
    except (NoisyNeighborError, OSError) as e:
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_ERROR

    parser = build_parser(config.config)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    setup_logging(-1 if args.quiet else args.verbose)
    cfg = config.config
    if args.jobs is not None:
        cfg.n_jobs = args.jobs

    commands = _Commands(cfg, console or Console())
    handler: Callable[[argparse.Namespace], int] = getattr(commands, args.command)
    try:
        return handler(args)
    except (NoisyNeighborError, OSError, ValueError) as e:
        logger.debug("command failed", exc_info=True)
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(dispatch())
