from django.contrib import admin
from .models import (
    BoundEvaluation,
    DatasetRecord,
    EpochMetric,
    ExperimentRun,
    LabEvent,
)


@admin.register(DatasetRecord)
class DatasetRecordAdmin(admin.ModelAdmin):
    list_display = ("name", "domain", "dialogue_count", "utterance_count", "noise_rate", "seed", "created_at")
    list_filter = ("domain",)
    search_fields = ("name", "path")


class EpochMetricInline(admin.TabularInline):
    # Per-epoch curve shown under its run
    model = EpochMetric
    extra = 0
    readonly_fields = ("epoch", "wf1", "memorization_rate", "branch_agreement",
                       "loss_d", "loss_adv", "loss_couple", "loss_cls")
    exclude = ("per_class_f1",)


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ("id", "name", "variant", "seed", "noise_rate", "status", "final_wf1", "created_at")
    list_filter = ("status", "variant", "noise_rate")
    search_fields = ("name", "config_text")
    inlines = [EpochMetricInline]


@admin.register(BoundEvaluation)
class BoundEvaluationAdmin(admin.ModelAdmin):
    list_display = ("id", "total", "loose_total", "created_at")


@admin.register(LabEvent)
class LabEventAdmin(admin.ModelAdmin):
    list_display = ("created_at", "action", "model", "object_id", "detail")
    list_filter = ("action", "model")
    search_fields = ("model", "detail")
