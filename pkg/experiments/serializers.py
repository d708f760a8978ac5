from rest_framework import serializers

from .models import EpochMetric, LogitStoreRecord, TrainingRun


class EpochMetricSerializer(serializers.ModelSerializer):
    class Meta:
        model = EpochMetric
        fields = ['id', 'run', 'epoch', 'train_loss', 'lr', 'overall_acc', 'unseen_acc', 'per_device_acc']


class TrainingRunSerializer(serializers.ModelSerializer):
    window = serializers.SerializerMethodField()

    class Meta:
        model = TrainingRun
        fields = [
            'id',
            'run_id',
            'role',
            'architecture',
            'preset',
            'base_channels',
            'seed',
            'params',
            'macs',
            'status',
            'initial_loss',
            'final_loss',
            'run_dir',
            'created_at',
            'window',
        ]

    def get_window(self, obj):
        return obj.window_accuracy(self.context.get('window', 4))


class LogitStoreRecordSerializer(serializers.ModelSerializer):
    class Meta:
        model = LogitStoreRecord
        fields = ['id', 'path', 'kind', 'class_count', 'entry_count', 'sources', 'created_at']
