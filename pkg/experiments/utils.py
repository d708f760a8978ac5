import contextlib
from pathlib import Path

from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import CommandError

from core.networks import SIZE_LADDER


@contextlib.contextmanager
def library_errors():
    """Re-raise library failures as CommandError with the original message."""
    try:
        yield
    except ValidationError as exc:
        if hasattr(exc, "error_dict"):
            details = "; ".join(f"{key}: {' '.join(msgs)}" for key, msgs in exc.message_dict.items())
        else:
            details = " ".join(exc.messages)
        raise CommandError(f"invalid configuration: {details}") from exc
    except (ValueError, RuntimeError, FloatingPointError, OSError) as exc:
        raise CommandError(str(exc)) from exc


def runs_root(value=None):
    return Path(value) if value else Path(settings.KDLAB_RUNS_ROOT)


def data_root(value=None):
    return Path(value) if value else Path(settings.KDLAB_DATA_ROOT)


def parse_base_channels(value, architecture):
    """An integer or a ladder label such as 450K."""
    label = str(value).strip().upper()
    if label in SIZE_LADDER.get(architecture, {}):
        return SIZE_LADDER[architecture][label]
    try:
        return int(value)
    except ValueError:
        raise CommandError(
            f"base channels must be an integer or one of {', '.join(SIZE_LADDER[architecture])}"
        ) from None
