# Generated by Django 5.2.8 on 2026-10-18 10:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='LogitStoreRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('path', models.CharField(max_length=500, unique=True)),
                ('kind', models.CharField(choices=[('export', 'Exported from a model'), ('ensemble', 'Ensemble average'), ('import', 'Imported')], max_length=10)),
                ('class_count', models.PositiveIntegerField()),
                ('entry_count', models.PositiveIntegerField()),
                ('sources', models.JSONField(blank=True, default=list)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('run_id', models.CharField(max_length=200, unique=True)),
                ('role', models.CharField(choices=[('student', 'Student'), ('teacher', 'Teacher')], max_length=10)),
                ('architecture', models.CharField(choices=[('cpm', 'CP-Mobile'), ('cpr', 'CP-ResNet')], max_length=10)),
                ('preset', models.CharField(max_length=10)),
                ('base_channels', models.PositiveIntegerField()),
                ('seed', models.PositiveIntegerField(default=0)),
                ('params', models.PositiveIntegerField(default=0)),
                ('macs', models.PositiveBigIntegerField(default=0)),
                ('run_dir', models.CharField(max_length=500)),
                ('status', models.CharField(choices=[('completed', 'Completed'), ('failed', 'Failed'), ('refused', 'Refused (over budget)')], default='completed', max_length=10)),
                ('initial_loss', models.FloatField(blank=True, null=True)),
                ('final_loss', models.FloatField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at', 'run_id'],
            },
        ),
        migrations.CreateModel(
            name='EpochMetric',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('epoch', models.PositiveIntegerField()),
                ('train_loss', models.FloatField()),
                ('lr', models.FloatField()),
                ('overall_acc', models.FloatField()),
                ('unseen_acc', models.FloatField(blank=True, null=True)),
                ('per_device_acc', models.JSONField(default=dict)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='epochs', to='experiments.trainingrun')),
            ],
            options={
                'ordering': ['run', 'epoch'],
                'unique_together': {('run', 'epoch')},
            },
        ),
    ]
