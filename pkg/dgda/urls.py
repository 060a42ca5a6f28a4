from django.urls import path
from . import views

urlpatterns = [
    # Experiment registry (staff only)
    path('runs/', views.run_list, name='run_list'),
    path('runs/<int:run_id>/', views.run_detail, name='run_detail'),
    path('runs/<int:run_id>/metrics.csv', views.run_metrics_csv, name='run_metrics_csv'),

    # Bound calculator
    path('bounds/theorem1/', views.theorem1, name='theorem1'),
]
