from django.urls import path

from api import views


app_name = 'api'

urlpatterns = [
    path('token/', views.CreateTokenView.as_view(), name='token'),
    path(
        'scene/sample/', views.SampleSceneView.as_view(), name='scene_sample'
    ),
    path(
        'scene/report/', views.ReportSceneView.as_view(), name='scene_report'
    ),
    path('run/list/', views.ListTrainingRunView.as_view(), name='run_list'),
    path(
        'run/<int:pk>/manage/',
        views.ManageTrainingRunView.as_view(),
        name='run_manage',
    ),
    path(
        'run/<int:pk>/report/list/',
        views.ListSceneReportView.as_view(),
        name='run_report_list',
    ),
]
