"""
URL configuration for kdlab.

Only a read-only REST view of the run index and the admin are served;
experiments themselves are driven through management commands.
"""
from django.contrib import admin
from django.urls import include, path
from rest_framework import routers

from experiments.api_views import EpochMetricViewSet, LogitStoreRecordViewSet, TrainingRunViewSet

router = routers.DefaultRouter()
router.register(r'runs', TrainingRunViewSet)
router.register(r'epochs', EpochMetricViewSet)
router.register(r'logit-stores', LogitStoreRecordViewSet)

urlpatterns = [
    path('api/', include(router.urls)),
    path('admin/', admin.site.urls),
]
