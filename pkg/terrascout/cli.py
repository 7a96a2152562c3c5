#!/usr/bin/env python3
"""
TerraScout — Constrained active-learning exploration simulator

Runs GP and MC-dropout BNN explorers (active learning or snake / spiral
sweeps) over analytic and raster surfaces and writes CSV results.

Usage:
    terrascout run campaign.yaml                 # Run a campaign
    terrascout run campaign.yaml --out results/  # Override the output directory
    terrascout trial --surface parabola --oracle gp --strategy al --horizon nn
    terrascout plots results/                    # Rebuild plot CSVs from summary.csv
    terrascout validate campaign.yaml            # Parse and list the trial matrix
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from typing import List, Optional, Sequence

from . import PROJECT_NAME, SUMMARY_FILENAME
from . import __version__ as VERSION
from .campaign import Campaign, CampaignError, load_campaign, single_trial
from .experiment import TrialResult, validate_trace
from .parallel import run_campaign
from .surface import SurfaceError
from .writer import ResultsIOError, ResultsRow, SummaryFormatError, emit_plot_data, read_summary, write_results

logger = logging.getLogger(PROJECT_NAME.lower())


def setup_logging(level: str = "INFO", log_file: str = None):
    """Configure logging with console and optional file output."""
    log_level = getattr(logging, level.upper(), logging.INFO)

    handlers = [logging.StreamHandler(sys.stdout)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))

    logging.basicConfig(
        level=log_level,
        format="%(asctime)s [%(levelname)-7s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=handlers,
        force=True,
    )


def print_banner():
    """Print startup banner."""
    title = f"{PROJECT_NAME} v{VERSION}"
    inner_width = max(len(title) + 4, 41)
    print()
    print(f"  ┌{'─' * inner_width}┐")
    print(f"  │  {title:<{inner_width - 2}}│")
    print(f"  │  {'Active-learning exploration simulator':<{inner_width - 2}}│")
    print(f"  └{'─' * inner_width}┘")
    print()


def print_campaign_summary(campaign: Campaign):
    """Print the expanded trial matrix."""
    print("  CAMPAIGN")
    print("  ────────")
    print(f"  Configurations:     {len(campaign):>6d}")
    print(f"  Trials each:        {campaign.trials_each:>6d}")
    print(f"  Total trials:       {campaign.trial_count:>6d}")
    print(f"  Base seed:          {campaign.base_seed:>6d}")
    print(f"  Parallelism:        {campaign.parallelism:>6d}")
    print(f"  Output directory:   {campaign.output_dir}")
    print()
    print(f"  {'Surface':<14s} {'Noise':<10s} {'Oracle':<6s} {'Strategy':<10s} {'Budget':>6s}")
    print(f"  {'─' * 14} {'─' * 10} {'─' * 6} {'─' * 10} {'─' * 6}")
    for cfg in campaign:
        print(
            f"  {cfg.surface.name:<14s} {cfg.noise_label:<10s} {cfg.oracle.value:<6s} "
            f"{cfg.strategy_label:<10s} {cfg.sample_budget:>6d}"
        )
    print()


def print_results_summary(rows: Sequence[ResultsRow]):
    """Print one line per trial."""
    print("  RESULTS")
    print("  ───────")
    print(f"  {'Trial':<44s} {'n':>4s} {'ef':>10s} {'i_c':>4s} {'e_min':>7s} {'fit/s':>8s}")
    print(f"  {'─' * 44} {'─' * 4} {'─' * 10} {'─' * 4} {'─' * 7} {'─' * 8}")
    for r in rows:
        label = f"{r.surface}-{r.noise}-{r.oracle}-{r.strategy}{'-' + r.horizon if r.horizon else ''}-t{r.trial}"
        if not r.ok:
            print(f"  {label:<44s} {r.samples_taken:>4d}  FAILED: {r.error}")
            continue
        print(
            f"  {label:<44s} {r.samples_taken:>4d} {r.ef:>10.4g} {r.i_c:>4d} {r.e_min:>7.3f} {r.mean_fit_seconds:>8.3f}"
        )
    print()


def _check_constraints(results: Sequence[TrialResult]) -> int:
    violations = 0
    for result in results:
        for problem in validate_trace(result):
            logger.error(f"Trial {result.trial_id}: {problem}")
            violations += 1
    return violations


def _finish(results: List[TrialResult], out_dir: str, settings: dict) -> int:
    rows = write_results(results, out_dir, settings)
    emit_plot_data(rows, out_dir)
    print_results_summary(rows)

    violations = _check_constraints(results)
    failed = sum(1 for r in rows if not r.ok)
    print(f"  Results saved to: {out_dir}")
    print()
    if violations:
        print(f"  ⚠  {violations} movement constraint violations. Check log for details.")
        return 1
    if failed:
        print(f"  ⚠  {failed} of {len(rows)} trials failed. Check log for details.")
        return 1
    print(f"  ✓  All {len(rows)} trials completed.")
    return 0


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    campaign = load_campaign(args.campaign)
    campaign = campaign.with_overrides(
        output_dir=args.out, parallelism=args.parallelism, trials_each=args.trials
    )
    if campaign.parallelism < 1 or campaign.trials_each < 1:
        raise CampaignError("--parallelism and --trials must be >= 1")

    print_banner()
    print_campaign_summary(campaign)

    t0 = time.time()
    results = run_campaign(campaign.configs, campaign.trials_each, campaign.parallelism)
    print(f"  Ran {len(results)} trials in {time.time() - t0:.1f}s")
    print()

    settings = dict(campaign.settings, trials_each=campaign.trials_each, parallelism=campaign.parallelism)
    settings["output_dir"] = campaign.output_dir
    return _finish(results, campaign.output_dir, settings)


def cmd_trial(args) -> int:
    extra = {}
    if args.seed_points is not None:
        extra["seed_points"] = args.seed_points
    if args.no_timing:
        extra["measure_time"] = False
    cfg = single_trial(
        args.surface,
        args.oracle,
        args.strategy,
        horizon=args.horizon,
        noise=args.noise,
        budget=args.budget,
        seed=args.seed,
        extra=extra,
    )
    print_banner()
    results = run_campaign([cfg], trials_each=1, parallelism=1)
    return _finish(results, args.out, {"seed": args.seed, "output_dir": args.out})


def cmd_plots(args) -> int:
    summary = os.path.join(args.results_dir, SUMMARY_FILENAME)
    if not os.path.exists(summary):
        raise ResultsIOError(summary, FileNotFoundError("summary not found"))
    rows = read_summary(summary)
    if not rows:
        print(f"  No trials in {summary}; plot files will be header-only.")
    paths = emit_plot_data(rows, args.out or args.results_dir)
    print(f"  Wrote {len(paths)} plot files to {args.out or args.results_dir}")
    return 0


def cmd_validate(args) -> int:
    campaign = load_campaign(args.campaign)
    print_campaign_summary(campaign)
    print(f"  ✓  {args.campaign} is valid ({campaign.trial_count} trials).")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROJECT_NAME.lower(),
        description=f"{PROJECT_NAME} — GP vs MC-dropout BNN active-learning exploration simulator",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  terrascout run campaign.yaml                       Run a campaign
  terrascout run campaign.yaml --parallelism 8       Use 8 worker threads
  terrascout trial --surface townsend --oracle bnn --strategy snake --noise
  terrascout plots results/                          Re-aggregate plot CSVs
  terrascout validate campaign.yaml                  Check a campaign file
        """,
    )
    parser.add_argument("--version", action="version", version=f"{PROJECT_NAME} {VERSION}")
    parser.add_argument("--log-level", default="INFO", help="Logging level (default: INFO)")
    parser.add_argument("--log-file", default=None, help="Also write the log to this file")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose (DEBUG) logging")

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("run", help="Run every trial of a campaign file")
    p.add_argument("campaign", help="Path to a campaign YAML file")
    p.add_argument("--out", "-o", default=None, help="Output directory (overrides output_dir)")
    p.add_argument("--parallelism", "-j", type=int, default=None, help="Concurrent trials (overrides parallelism)")
    p.add_argument("--trials", type=int, default=None, help="Trials per configuration (overrides trials_each)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("trial", help="Run a single trial")
    p.add_argument("--surface", required=True, help="Built-in surface name")
    p.add_argument("--oracle", choices=["gp", "bnn"], required=True)
    p.add_argument("--strategy", choices=["snake", "spiral", "al"], required=True)
    p.add_argument("--horizon", choices=["nn", "local", "global"], default=None, help="AL horizon (default: nn)")
    p.add_argument("--noise", action="store_true", help="Add observation noise")
    p.add_argument("--budget", type=int, default=None, help="Sample budget (default: per surface)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seed-points", type=int, default=None, help="Initial samples before the first fit")
    p.add_argument("--no-timing", action="store_true", help="Record fit times as 0 (byte-stable traces)")
    p.add_argument("--out", "-o", default="results", help="Output directory (default: results)")
    p.set_defaults(func=cmd_trial)

    p = sub.add_parser("plots", help="Rebuild plot CSVs from a results directory")
    p.add_argument("results_dir", help="Directory holding summary.csv")
    p.add_argument("--out", "-o", default=None, help="Write plot files here instead")
    p.set_defaults(func=cmd_plots)

    p = sub.add_parser("validate", help="Parse a campaign file and list its trial matrix")
    p.add_argument("campaign", help="Path to a campaign YAML file")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    setup_logging("DEBUG" if args.verbose else args.log_level, args.log_file)

    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"Error: File not found: {e.filename or e}", file=sys.stderr)
    except (CampaignError, SurfaceError, SummaryFormatError, ResultsIOError) as e:
        print(f"Error: {e}", file=sys.stderr)
    except KeyboardInterrupt:
        print("Error: interrupted", file=sys.stderr)
        return 130
    return 1


if __name__ == "__main__":
    sys.exit(main())
