from django.contrib import admin

from core import models


class EpochLossInline(admin.TabularInline):
    model = models.EpochLoss
    extra = 0
    readonly_fields = ['epoch', 'mean_loss', 'lr']


class TrainingRunAdmin(admin.ModelAdmin):
    ordering = ['-created_on']
    list_display = [
        'name',
        'representation',
        'parameter_count',
        'seed',
        'final_loss',
        'created_on',
    ]
    list_filter = ['representation']
    readonly_fields = ['created_on']
    inlines = [EpochLossInline]


class SceneReportAdmin(admin.ModelAdmin):
    ordering = ['scene_id']
    list_display = [
        'scene_id',
        'run',
        'realism_meta',
        'kinematic',
        'interactive',
        'map_adherence',
        'minade',
        'coverage',
    ]
    list_filter = ['run']
    search_fields = ['scene_id']


admin.site.register(models.TrainingRun, TrainingRunAdmin)
admin.site.register(models.EpochLoss)
admin.site.register(models.SceneReport, SceneReportAdmin)
