from django.db import models


class TrainingRun(models.Model):
    STATUS_CHOICES = [
        ("completed", "Completed"),
        ("failed", "Failed"),
        ("refused", "Refused (over budget)"),
    ]

    run_id = models.CharField(max_length=200, unique=True)
    role = models.CharField(max_length=10, choices=[("student", "Student"), ("teacher", "Teacher")])
    architecture = models.CharField(max_length=10, choices=[("cpm", "CP-Mobile"), ("cpr", "CP-ResNet")])
    preset = models.CharField(max_length=10)
    base_channels = models.PositiveIntegerField()
    seed = models.PositiveIntegerField(default=0)
    params = models.PositiveIntegerField(default=0)
    macs = models.PositiveBigIntegerField(default=0)
    run_dir = models.CharField(max_length=500)
    status = models.CharField(max_length=10, choices=STATUS_CHOICES, default="completed")
    initial_loss = models.FloatField(null=True, blank=True)
    final_loss = models.FloatField(null=True, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at", "run_id"]

    def __str__(self):
        return self.run_id

    def last_epochs(self, k=4):
        """The last k epochs, oldest first."""
        return list(self.epochs.order_by("-epoch")[:k])[::-1]

    def window_accuracy(self, k=4):
        epochs = self.last_epochs(k)
        if not epochs:
            return None
        unseen = [e.unseen_acc for e in epochs]
        return {
            "overall_acc": sum(e.overall_acc for e in epochs) / len(epochs),
            "unseen_acc": sum(unseen) / len(unseen) if None not in unseen else None,
            "epochs": [e.epoch for e in epochs],
        }


class EpochMetric(models.Model):
    run = models.ForeignKey(TrainingRun, on_delete=models.CASCADE, related_name="epochs")
    epoch = models.PositiveIntegerField()
    train_loss = models.FloatField()
    lr = models.FloatField()
    overall_acc = models.FloatField()
    unseen_acc = models.FloatField(null=True, blank=True)
    per_device_acc = models.JSONField(default=dict)

    class Meta:
        ordering = ["run", "epoch"]
        unique_together = ("run", "epoch")

    def __str__(self):
        return f"{self.run.run_id} epoch {self.epoch}: {self.overall_acc:.4f}"


class LogitStoreRecord(models.Model):
    KIND_CHOICES = [
        ("export", "Exported from a model"),
        ("ensemble", "Ensemble average"),
        ("import", "Imported"),
    ]

    path = models.CharField(max_length=500, unique=True)
    kind = models.CharField(max_length=10, choices=KIND_CHOICES)
    class_count = models.PositiveIntegerField()
    entry_count = models.PositiveIntegerField()
    sources = models.JSONField(default=list, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at"]

    def __str__(self):
        return f"{self.path} ({self.kind}, {self.entry_count} clips)"
