"""Shared plumbing for the lab's management commands."""
import logging
from dataclasses import fields

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from ..config import SYNTH_PREFIX, SyntheticConfig, TrainConfig
from ..exceptions import DgdaError

logger = logging.getLogger(__name__)

OVERRIDE_DEST = "override__"


def add_override_arguments(parser, include_train: bool = True, synth_prefix: str = SYNTH_PREFIX):
    """One ``--key=value`` flag per config field, e.g. ``--lr=0.001`` or ``--synth.shift=1.5``."""
    group = parser.add_argument_group("config overrides")
    if include_train:
        for f in fields(TrainConfig):
            if f.name == "synth":
                continue
            flags = {f"--{f.name}", f"--{f.name.replace('_', '-')}"}
            group.add_argument(*sorted(flags), dest=OVERRIDE_DEST + f.name, metavar="VALUE")
    for f in fields(SyntheticConfig):
        flags = {f"--{synth_prefix}{f.name}", f"--{synth_prefix}{f.name.replace('_', '-')}"}
        group.add_argument(*sorted(flags), dest=OVERRIDE_DEST + SYNTH_PREFIX + f.name, metavar="VALUE")


def collect_overrides(options: dict) -> dict:
    return {
        key[len(OVERRIDE_DEST):]: value
        for key, value in options.items()
        if key.startswith(OVERRIDE_DEST) and value is not None
    }


def recording_enabled(options: dict) -> bool:
    return settings.DGDA_RECORD_RUNS and not options.get("no_record")


class LabCommand(BaseCommand):
    """Turns lab errors into CommandError so manage.py reports them cleanly."""

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except DgdaError as exc:
            logger.debug("command failed", exc_info=True)
            raise CommandError(f"{type(exc).__name__}: {exc}") from exc
