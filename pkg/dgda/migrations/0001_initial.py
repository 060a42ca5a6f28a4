# Generated by Django 5.2.6 on 2026-10-18 09:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='BoundEvaluation',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('inputs', models.JSONField(default=dict)),
                ('terms', models.JSONField(default=dict)),
                ('total', models.FloatField()),
                ('loose_total', models.FloatField()),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='DatasetRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=200)),
                ('domain', models.CharField(choices=[('source', 'Source'), ('target', 'Target')], max_length=10)),
                ('path', models.CharField(max_length=500)),
                ('dialogue_count', models.PositiveIntegerField(default=0)),
                ('utterance_count', models.PositiveIntegerField(default=0)),
                ('noise_rate', models.FloatField(default=0.0)),
                ('seed', models.IntegerField(default=0)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=200)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='running', max_length=20)),
                ('seed', models.IntegerField(default=0)),
                ('noise_rate', models.FloatField(default=0.0)),
                ('variant', models.CharField(default='full', max_length=50)),
                ('config_text', models.TextField(blank=True)),
                ('snapshot_path', models.CharField(blank=True, max_length=500)),
                ('metrics_path', models.CharField(blank=True, max_length=500)),
                ('final_wf1', models.FloatField(blank=True, null=True)),
                ('error', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='LabEvent',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('action', models.CharField(choices=[('dataset_generated', 'Dataset Generated'), ('run_started', 'Run Started'), ('run_finished', 'Run Finished'), ('run_failed', 'Run Failed'), ('bound_evaluated', 'Bound Evaluated')], max_length=50)),
                ('model', models.CharField(max_length=100)),
                ('object_id', models.PositiveIntegerField()),
                ('detail', models.CharField(blank=True, max_length=255)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='EpochMetric',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('epoch', models.PositiveIntegerField()),
                ('wf1', models.FloatField()),
                ('per_class_f1', models.JSONField(default=list)),
                ('memorization_rate', models.FloatField(default=0.0)),
                ('branch_agreement', models.FloatField(default=1.0)),
                ('loss_d', models.FloatField(default=0.0)),
                ('loss_adv', models.FloatField(default=0.0)),
                ('loss_couple', models.FloatField(default=0.0)),
                ('loss_cls', models.FloatField(default=0.0)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='epochs', to='dgda.experimentrun')),
            ],
            options={
                'ordering': ['run', 'epoch'],
                'constraints': [models.UniqueConstraint(fields=('run', 'epoch'), name='unique_epoch_per_run')],
            },
        ),
    ]
