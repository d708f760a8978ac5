from django.contrib import admin

from .models import EpochMetric, LogitStoreRecord, TrainingRun


class EpochMetricInline(admin.TabularInline):
    model = EpochMetric
    extra = 0
    readonly_fields = ['epoch', 'train_loss', 'lr', 'overall_acc', 'unseen_acc', 'per_device_acc']


@admin.register(TrainingRun)
class TrainingRunAdmin(admin.ModelAdmin):
    list_display = ['run_id', 'role', 'architecture', 'preset', 'seed', 'params', 'status', 'created_at']
    list_filter = ['role', 'architecture', 'preset', 'status']
    search_fields = ['run_id']
    inlines = [EpochMetricInline]


admin.site.register(EpochMetric)
admin.site.register(LogitStoreRecord)
