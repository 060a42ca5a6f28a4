import logging
from pathlib import Path

from django.conf import settings
from django.utils.text import slugify

from ...config import load_train_config
from ...exceptions import DgdaError
from ...metrics import write_confusion_csv, write_metrics_csv
from ...registry import record_epoch, record_run_failure, record_run_finish, record_run_start
from ...snapshots import save_snapshot
from ...trainer import Trainer, load_domains
from ..base import LabCommand, add_override_arguments, collect_overrides, recording_enabled

logger = logging.getLogger(__name__)


def run_training(config, out_dir: Path, name: str, record: bool, save: bool = True, stdout=None):
    """Train one config, write its artifacts under ``out_dir`` and return (run, result)."""
    run = record_run_start(name, config) if record else None
    try:
        source, target = load_domains(config)
        callbacks = [lambda report: record_epoch(run, report)] if run is not None else []
        if stdout is not None:
            callbacks.append(lambda report: stdout.write(
                f"epoch {report.epoch}: wf1={report.wf1:.4f} memorization={report.memorization_rate:.4f}"
            ))
        result = Trainer(config, source, target, callbacks).run()
    except DgdaError as exc:
        if run is not None:
            record_run_failure(run, exc)
        raise

    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = write_metrics_csv(result.history, out_dir / "metrics.csv", source.num_classes)
    if result.history:
        write_confusion_csv(result.history[-1], out_dir / "confusion.csv")
    (out_dir / "config.cfg").write_text(config.to_text(), encoding="utf-8")
    snapshot_path = save_snapshot(result.model, config, out_dir / "model.dgds") if save else ""
    if run is not None:
        record_run_finish(run, result.history, snapshot_path, metrics_path)
    return run, result


class Command(LabCommand):
    help = "Train the dual-branch model on a DGDF pair or a generated synthetic pair."

    def add_arguments(self, parser):
        parser.add_argument("--config", help="key=value config file")
        parser.add_argument("--name", help="run name (default: variant and seed)")
        parser.add_argument("--out", help="output directory (default: DGDA_RUNS_DIR/<name>)")
        parser.add_argument("--no-record", action="store_true", help="do not store the run in the registry")
        add_override_arguments(parser)

    def handle(self, *args, **options):
        config = load_train_config(options["config"], collect_overrides(options))
        name = options["name"] or f"{config.variant}-seed{config.seed}-noise{config.noise_rate}"
        out_dir = Path(options["out"]) if options["out"] else Path(settings.DGDA_RUNS_DIR) / slugify(name)

        run, result = run_training(config, out_dir, name, recording_enabled(options), stdout=self.stdout)

        final = f"{result.history[-1].wf1:.4f}" if result.history else "n/a"
        suffix = f" (run #{run.pk})" if run is not None else ""
        self.stdout.write(self.style.SUCCESS(
            f"Trained {name} for {config.epochs} epochs: target wf1={final}; artifacts in {out_dir}{suffix}"
        ))
