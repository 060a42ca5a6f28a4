"""Helpers the management commands use to persist runs in the registry."""
import logging

from django.utils import timezone

from .models import BoundEvaluation, DatasetRecord, EpochMetric, ExperimentRun, LabEvent

logger = logging.getLogger(__name__)


def _event(action: str, instance, detail: str = "") -> LabEvent:
    return LabEvent.objects.create(
        action=action,
        model=type(instance).__name__,
        object_id=instance.pk,
        detail=detail[:255],
    )


def record_dataset(name: str, dataset, path, noise_rate: float, seed: int) -> DatasetRecord:
    record = DatasetRecord.objects.create(
        name=name,
        domain=dataset.domain_tag,
        path=str(path),
        dialogue_count=len(dataset),
        utterance_count=dataset.num_utterances,
        noise_rate=noise_rate,
        seed=seed,
    )
    _event("dataset_generated", record, f"{record.utterance_count} utterances")
    return record


def record_run_start(name: str, config) -> ExperimentRun:
    run = ExperimentRun.objects.create(
        name=name,
        seed=config.seed,
        noise_rate=config.noise_rate,
        variant=config.variant,
        config_text=config.to_text(),
    )
    _event("run_started", run, f"variant={config.variant} seed={config.seed}")
    return run


def record_epoch(run: ExperimentRun, report) -> EpochMetric:
    return EpochMetric.objects.create(
        run=run,
        epoch=report.epoch,
        wf1=float(report.wf1),
        per_class_f1=[float(f) for f in report.per_class_f1],
        memorization_rate=float(report.memorization_rate),
        branch_agreement=float(report.branch_agreement),
        loss_d=float(report.losses["L_D"]),
        loss_adv=float(report.losses["L_adv"]),
        loss_couple=float(report.losses["L_couple"]),
        loss_cls=float(report.losses["L_cls"]),
    )


def record_run_finish(run: ExperimentRun, history, snapshot_path="", metrics_path="") -> ExperimentRun:
    run.status = "completed"
    run.final_wf1 = float(history[-1].wf1) if history else None
    run.snapshot_path = str(snapshot_path)
    run.metrics_path = str(metrics_path)
    run.finished_at = timezone.now()
    run.save()
    _event("run_finished", run, f"final_wf1={run.final_wf1}")
    return run


def record_run_failure(run: ExperimentRun, error: Exception) -> ExperimentRun:
    run.status = "failed"
    run.error = str(error)
    run.finished_at = timezone.now()
    run.save()
    _event("run_failed", run, str(error))
    logger.error("run %s failed: %s", run.pk, error)
    return run


def record_bound(report) -> BoundEvaluation:
    record = report.as_record()
    terms = record.pop("terms")
    evaluation = BoundEvaluation.objects.create(
        inputs={key: value for key, value in record.items()
                if key not in ("total", "loose_terms", "loose_total", "target_count_exceeds_source")},
        terms={**terms, "loose": record["loose_terms"]},
        total=report.total,
        loose_total=report.loose_total,
    )
    _event("bound_evaluated", evaluation, f"total={report.total:.6f}")
    return evaluation
