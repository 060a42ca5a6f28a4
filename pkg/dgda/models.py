from django.db import models


class DatasetRecord(models.Model):
    DOMAIN_CHOICES = [
        ("source", "Source"),
        ("target", "Target"),
    ]
    # Short label, e.g. "standard-s2.0-seed0/source"
    name = models.CharField(max_length=200)
    domain = models.CharField(max_length=10, choices=DOMAIN_CHOICES)
    # Location of the DGDF file on disk (manifest sits next to it)
    path = models.CharField(max_length=500)
    dialogue_count = models.PositiveIntegerField(default=0)
    utterance_count = models.PositiveIntegerField(default=0)
    noise_rate = models.FloatField(default=0.0)
    seed = models.IntegerField(default=0)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at"]

    def __str__(self) -> str:
        return f"{self.name} ({self.domain})"


class ExperimentRun(models.Model):
    STATUS_CHOICES = [
        ("running", "Running"),
        ("completed", "Completed"),
        ("failed", "Failed"),
    ]
    name = models.CharField(max_length=200)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default="running")
    seed = models.IntegerField(default=0)
    noise_rate = models.FloatField(default=0.0)
    # Ablation preset the config was built from (full, no_coupling, ...)
    variant = models.CharField(max_length=50, default="full")
    # Full key=value config text, enough to repeat the run
    config_text = models.TextField(blank=True)
    snapshot_path = models.CharField(max_length=500, blank=True)
    metrics_path = models.CharField(max_length=500, blank=True)
    # Target WF1 of the last epoch
    final_wf1 = models.FloatField(null=True, blank=True)
    error = models.TextField(blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ["-created_at"]

    def __str__(self) -> str:
        return f"{self.name} [{self.status}]"


class EpochMetric(models.Model):
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name="epochs")
    epoch = models.PositiveIntegerField()
    wf1 = models.FloatField()
    # List of K per-class F1 values
    per_class_f1 = models.JSONField(default=list)
    memorization_rate = models.FloatField(default=0.0)
    branch_agreement = models.FloatField(default=1.0)
    loss_d = models.FloatField(default=0.0)
    loss_adv = models.FloatField(default=0.0)
    loss_couple = models.FloatField(default=0.0)
    loss_cls = models.FloatField(default=0.0)

    class Meta:
        ordering = ["run", "epoch"]
        constraints = [
            models.UniqueConstraint(fields=["run", "epoch"], name="unique_epoch_per_run"),
        ]

    def __str__(self) -> str:
        return f"{self.run_id}#{self.epoch} wf1={self.wf1:.4f}"


class BoundEvaluation(models.Model):
    # Every input of the target-risk bound, including the unobservable omega terms
    inputs = models.JSONField(default=dict)
    terms = models.JSONField(default=dict)
    total = models.FloatField()
    loose_total = models.FloatField()
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at"]


class LabEvent(models.Model):
    ACTION_CHOICES = [
        ("dataset_generated", "Dataset Generated"),
        ("run_started", "Run Started"),
        ("run_finished", "Run Finished"),
        ("run_failed", "Run Failed"),
        ("bound_evaluated", "Bound Evaluated"),
    ]
    action = models.CharField(max_length=50, choices=ACTION_CHOICES)
    model = models.CharField(max_length=100)
    object_id = models.PositiveIntegerField()
    detail = models.CharField(max_length=255, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at"]
