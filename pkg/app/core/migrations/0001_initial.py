import django.core.validators
import django.db.models.deletion
import django.utils.timezone
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.AutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=255)),
                ('representation', models.CharField(choices=[('polynomial', 'polynomial'), ('sequence', 'sequence')], default='polynomial', max_length=32)),
                ('config', models.JSONField(default=dict)),
                ('checkpoint_path', models.CharField(blank=True, max_length=1024)),
                ('parameter_count', models.PositiveIntegerField(default=0)),
                ('seed', models.PositiveBigIntegerField(default=0)),
                ('created_on', models.DateTimeField(default=django.utils.timezone.now, editable=False)),
                ('finished_on', models.DateTimeField(blank=True, null=True)),
                ('final_loss', models.FloatField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-created_on', '-id'],
            },
        ),
        migrations.CreateModel(
            name='SceneReport',
            fields=[
                ('id', models.AutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('scene_id', models.CharField(max_length=255)),
                ('realism_meta', models.FloatField(validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)])),
                ('kinematic', models.FloatField(validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)])),
                ('interactive', models.FloatField(validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)])),
                ('map_adherence', models.FloatField(blank=True, null=True, validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)])),
                ('minade', models.FloatField(validators=[django.core.validators.MinValueValidator(0.0)])),
                ('coverage', models.FloatField(validators=[django.core.validators.MinValueValidator(0.0)])),
                ('created_on', models.DateTimeField(default=django.utils.timezone.now, editable=False)),
                ('run', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.CASCADE, related_name='reports', to='core.trainingrun')),
            ],
            options={
                'ordering': ['scene_id', 'id'],
            },
        ),
        migrations.CreateModel(
            name='EpochLoss',
            fields=[
                ('id', models.AutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('epoch', models.PositiveIntegerField(validators=[django.core.validators.MinValueValidator(1)])),
                ('mean_loss', models.FloatField()),
                ('lr', models.FloatField(validators=[django.core.validators.MinValueValidator(0.0)])),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='epochs', to='core.trainingrun')),
            ],
            options={
                'ordering': ['epoch'],
            },
        ),
        migrations.AddConstraint(
            model_name='epochloss',
            constraint=models.UniqueConstraint(fields=('run', 'epoch'), name='uq_run_epoch'),
        ),
    ]
