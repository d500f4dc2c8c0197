"""
Configuración de Celery para correr folds en paralelo.
Sin broker configurado las tareas se ejecutan en el mismo proceso (eager).
"""

from celery import Celery

from emovar.config import get_settings

settings = get_settings()

celery_app = Celery(
    "emovar",
    broker=settings.CELERY_BROKER_URL or "memory://",
    backend=settings.CELERY_RESULT_BACKEND or "cache+memory://",
)

celery_app.conf.update(
    task_serializer="json",
    accept_content=["json"],
    result_serializer="json",
    enable_utc=True,
    task_track_started=True,
    task_acks_late=True,
    worker_prefetch_multiplier=1,
    task_always_eager=settings.celery_eager,
    task_eager_propagates=True,
)

celery_app.autodiscover_tasks(["emovar.tasks"], related_name="experiment_tasks")
