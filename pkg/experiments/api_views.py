from rest_framework import viewsets
from rest_framework.permissions import IsAuthenticated

from .models import EpochMetric, LogitStoreRecord, TrainingRun
from .serializers import EpochMetricSerializer, LogitStoreRecordSerializer, TrainingRunSerializer


class TrainingRunViewSet(viewsets.ReadOnlyModelViewSet):
    queryset = TrainingRun.objects.all()
    serializer_class = TrainingRunSerializer
    permission_classes = [IsAuthenticated]

    def get_queryset(self):
        queryset = super().get_queryset()
        for key in ("role", "architecture", "preset", "status"):
            value = self.request.query_params.get(key)
            if value:
                queryset = queryset.filter(**{key: value})
        return queryset

    def get_serializer_context(self):
        context = super().get_serializer_context()
        try:
            context['window'] = max(int(self.request.query_params.get('window', 4)), 1)
        except ValueError:
            context['window'] = 4
        return context


class EpochMetricViewSet(viewsets.ReadOnlyModelViewSet):
    queryset = EpochMetric.objects.select_related('run')
    serializer_class = EpochMetricSerializer
    permission_classes = [IsAuthenticated]

    def get_queryset(self):
        queryset = super().get_queryset()
        run = self.request.query_params.get('run')
        return queryset.filter(run__run_id=run) if run else queryset


class LogitStoreRecordViewSet(viewsets.ReadOnlyModelViewSet):
    queryset = LogitStoreRecord.objects.all()
    serializer_class = LogitStoreRecordSerializer
    permission_classes = [IsAuthenticated]
