import csv
import itertools
import logging
from collections import defaultdict
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.management.base import CommandError
from django.utils.text import slugify

from ...config import VARIANTS, load_train_config, train_from_mapping
from ..base import LabCommand, add_override_arguments, collect_overrides, recording_enabled
from .train import run_training

logger = logging.getLogger(__name__)

SWEEP_HEADER = ["variant", "seed", "noise_rate", "zeta", "lam", "wf1", "memorization_rate", "branch_agreement"]
SUMMARY_HEADER = ["variant", "noise_rate", "zeta", "lam", "runs", "mean_wf1", "mean_memorization_rate",
                  "mean_branch_agreement"]
DEFAULT_NOISE_RATES = "0.1,0.2,0.3,0.4"


def _split(raw: str, kind, option: str) -> list:
    try:
        return [kind(item.strip()) for item in raw.split(",") if item.strip()]
    except ValueError:
        raise CommandError(f"{option}: cannot parse {raw!r}") from None


def sweep_config(base, variant: str, seed: int, noise_rate: float, zeta: float | None = None,
                 lam: float | None = None):
    """``base`` with a variant preset, a seed for data and initialisation, a noise rate and,
    optionally, a coupling threshold and a regulariser weight."""
    overrides = {"variant": variant, "seed": str(seed), "noise_rate": repr(noise_rate),
                 "synth.seed": str(seed)}
    if zeta is not None:
        overrides["zeta"] = repr(zeta)
    if lam is not None:
        overrides["lam"] = repr(lam)
    text = {k: v for k, v in (line.split("=", 1) for line in base.to_text().splitlines())}
    # preset keys of both variants fall back to defaults so the new preset applies
    for key in {**VARIANTS[base.variant], **VARIANTS[variant]}:
        text.pop(key, None)
    text.update(overrides)
    return train_from_mapping(text)


def run_name(variant: str, seed: int, rate: float, zeta: float | None, lam: float | None) -> str:
    name = f"{variant}-seed{seed}-noise{rate}"
    if zeta is not None:
        name += f"-zeta{zeta}"
    if lam is not None:
        name += f"-lam{lam}"
    return name


class Command(LabCommand):
    help = ("Run variants x noise rates x thresholds x regulariser weights x seeds and write one CSV row "
            "per run plus per-cell means.")

    def add_arguments(self, parser):
        parser.add_argument("--config", help="base key=value config file")
        parser.add_argument("--seeds", default="0", help="comma-separated seeds (default: 0)")
        parser.add_argument("--noise-rates", default=DEFAULT_NOISE_RATES,
                            help=f"comma-separated noise rates (default: {DEFAULT_NOISE_RATES})")
        parser.add_argument("--variants", default="full",
                            help="comma-separated presets: " + ", ".join(VARIANTS))
        parser.add_argument("--zetas", help="comma-separated coupling thresholds (default: the config's zeta)")
        parser.add_argument("--lams", help="comma-separated regulariser weights (default: the config's lam)")
        parser.add_argument("--out", help="CSV path (default: DGDA_RUNS_DIR/sweep.csv)")
        parser.add_argument("--save-snapshots", action="store_true")
        parser.add_argument("--no-record", action="store_true", help="do not store the runs in the registry")
        add_override_arguments(parser)

    def handle(self, *args, **options):
        base = load_train_config(options["config"], collect_overrides(options))
        seeds = _split(options["seeds"], int, "--seeds")
        rates = _split(options["noise_rates"], float, "--noise-rates")
        variants = _split(options["variants"], str, "--variants")
        zetas = _split(options["zetas"], float, "--zetas") if options["zetas"] else [None]
        lams = _split(options["lams"], float, "--lams") if options["lams"] else [None]
        unknown = [v for v in variants if v not in VARIANTS]
        if unknown:
            raise CommandError(f"unknown variants: {', '.join(unknown)}")
        out = Path(options["out"]) if options["out"] else Path(settings.DGDA_RUNS_DIR) / "sweep.csv"
        runs_dir = out.parent / f"{out.stem}_runs"

        rows = []
        for variant, rate, zeta, lam, seed in itertools.product(variants, rates, zetas, lams, seeds):
            config = sweep_config(base, variant, seed, rate, zeta, lam)
            name = run_name(variant, seed, rate, zeta, lam)
            _, result = run_training(config, runs_dir / slugify(name), name,
                                     recording_enabled(options), options["save_snapshots"])
            last = result.history[-1] if result.history else None
            rows.append([
                variant, seed, rate, config.zeta, config.lam,
                last.wf1 if last else float("nan"),
                last.memorization_rate if last else float("nan"),
                last.branch_agreement if last else float("nan"),
            ])
            self.stdout.write(f"{name}: wf1={rows[-1][5]:.4f}")

        out.parent.mkdir(parents=True, exist_ok=True)
        with out.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(SWEEP_HEADER)
            for row in rows:
                writer.writerow(row[:5] + [repr(float(v)) for v in row[5:]])
            writer.writerow([])
            writer.writerow(["# summary"])
            writer.writerow(SUMMARY_HEADER)
            for key, cell in summarize(rows).items():
                writer.writerow(list(key) + [len(cell)] + [repr(float(v)) for v in np.mean(cell, axis=0)])
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(rows)} runs to {out}"))


def summarize(rows) -> dict:
    cells = defaultdict(list)
    for variant, _, rate, zeta, lam, *values in rows:
        cells[(variant, rate, zeta, lam)].append(values)
    return dict(cells)
