import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from moserlab.backend import (
    SUITES,
    CommandResult,
    run_bound,
    run_params,
    run_solve,
    run_verify,
    run_weight,
)
from moserlab.config import ProblemConfig, load_problem_config, settings
from moserlab.exceptions import ConfigError, MoserLabError, ParameterError, UnknownLabelError
from moserlab.monitoring.reports import ReportStore, log_run

COMMANDS = ("verify", "params", "weight", "bound", "solve", "report")
EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

logger = logging.getLogger("moserlab")


# ==================== LOGGING SETUP ====================
def setup_logging(level: Optional[str] = None) -> None:
    log_dir = Path(settings.LOG_DIR)
    log_dir.mkdir(exist_ok=True, parents=True)
    logging.basicConfig(
        level=getattr(logging, (level or settings.LOG_LEVEL).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(settings.log_path),
            logging.StreamHandler(sys.stderr),
        ],
    )


# ==================== ARGUMENTS ====================
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moserlab", description="Moser-iteration verification laboratory")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="TOML problem config")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    parser.add_argument("--suite", default="all",
                        help=f"{', '.join(SUITES)} or a comma-separated list of claim labels")
    parser.add_argument("--N", type=int, default=None)
    parser.add_argument("--tbar", type=float, default=None)
    parser.add_argument("--rbar-fraction", type=float, default=None)
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--beta", type=float, default=None)
    parser.add_argument("--k-max", type=int, default=None)
    parser.add_argument("--m-max", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--battery", choices=("all", "elliptic", "degenerate"), default="all")
    parser.add_argument("--deterministic", action="store_true", help="drop runtimes from reports")
    parser.add_argument("--log-level", default=None)
    return parser


def load_config(args: argparse.Namespace) -> ProblemConfig:
    """Config file (or defaults) with --N/--tbar/--rbar-fraction overrides"""
    cfg = load_problem_config(args.config) if args.config else ProblemConfig()
    overrides = {"N": args.N, "tbar": args.tbar, "rbar_fraction": args.rbar_fraction}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        params = cfg.params.model_copy(update=overrides)
        cfg = cfg.model_copy(update={"params": params})
    return cfg


def summary_line(result: CommandResult) -> str:
    p = result.payload
    if result.command == "params":
        c = p["chain"]
        return (f"r={c['r']:.6g} tbar*={c['tbar_star']:.6g} rbar={c['rbar']:.6g} "
                f"kappa={c['kappa']:.6g}")
    if result.command == "verify":
        return f"claims={p['claims']} failing={len(result.failing_labels)}"
    if result.command == "bound":
        b = p["bound"]
        return f"case={b['case']} log10_bound={b['log10_final_bound']:.6g} sup={p['consistency']['sup_norm']:.6g}"
    if result.command == "weight":
        return f"rows={len(p['annular']['rows'])} lebesgue_ratio={p['lebesgue_ratio']:g}"
    if result.command == "solve":
        return f"battery={len(p['battery'])} order={p['convergence']['order']:.4g}"
    return f"passed={result.passed}"


# ==================== DISPATCH ====================
def dispatch(args: argparse.Namespace, seed: int, store: ReportStore) -> CommandResult:
    if args.command == "verify":
        return run_verify(args.suite, workers=args.workers, include_timings=not args.deterministic)
    if args.command == "report":
        summary = store.aggregate()
        failing = summary["failing_labels"] if summary["reports"] else ["no-reports"]
        return CommandResult("report", {"reports": len(summary["reports"])}, failing_labels=failing)

    cfg = load_config(args)
    if args.command == "params":
        p = cfg.params
        return run_params(p.N, p.tbar, p.rbar_fraction, seed=seed)
    if args.command == "weight":
        return run_weight(cfg, k_max=args.k_max, beta=args.beta)
    if args.command == "bound":
        return run_bound(cfg, alpha=args.alpha, m_max=args.m_max)
    snapshot = store.out_dir / "solve_snapshot.csv" if args.format == "csv" else None
    return run_solve(cfg, seed=seed, workers=args.workers or 4, battery=args.battery, snapshot_path=snapshot)


def run(argv: Optional[List[str]] = None) -> int:
    """
    Exit codes: 0 when every check passed, 1 when a check failed (labels on
    stderr), 2 on an unusable config or invalid parameters
    """
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    seed = settings.SEED if args.seed is None else args.seed
    settings.SEED = seed

    try:
        store = ReportStore(args.out, deterministic=args.deterministic)
        result = dispatch(args, seed, store)
    except (ConfigError, ParameterError, UnknownLabelError) as e:
        logger.error(f"❌ {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MoserLabError as e:
        logger.error(f"❌ {args.command} aborted: {e}")
        print(f"error: {e}", file=sys.stderr)
        log_run(args.command, seed, False, [type(e).__name__])
        return EXIT_FAILED

    # report writes its own summary files
    if result.command != "report":
        store.write_json(result.command, result.report(seed))
        if args.format == "csv":
            for name, table in result.tables.items():
                store.write_csv(f"{result.command}_{name}", table)

    log_run(result.command, seed, result.passed, result.failing_labels)
    print(summary_line(result))
    if not result.passed:
        for label in sorted(result.failing_labels):
            print(label, file=sys.stderr)
        logger.warning(f"⚠️ {result.command}: {len(result.failing_labels)} failing labels")
        return EXIT_FAILED
    logger.info(f"✅ {result.command} passed")
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
