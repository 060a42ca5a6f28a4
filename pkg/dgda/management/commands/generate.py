from pathlib import Path

from django.conf import settings

from ...config import load_synthetic_config
from ...registry import record_dataset
from ...synth import generate_pair, inject_label_noise, write_features
from ..base import LabCommand, add_override_arguments, collect_overrides, recording_enabled


class Command(LabCommand):
    help = "Generate a synthetic source/target pair and write it as DGDF files."

    def add_arguments(self, parser):
        parser.add_argument("--config", help="key=value file with synthetic-data keys (bare or synth.-prefixed)")
        parser.add_argument("--name", default="pair", help="file stem: <name>_source.dgdf / <name>_target.dgdf")
        parser.add_argument("--out", help="output directory (default: DGDA_DATA_DIR)")
        parser.add_argument("--noise-rate", type=float, default=0.0,
                            help="flip this share of source labels before writing (default 0)")
        parser.add_argument("--no-record", action="store_true", help="do not store the datasets in the registry")
        add_override_arguments(parser, include_train=False, synth_prefix="")

    def handle(self, *args, **options):
        config = load_synthetic_config(options["config"], collect_overrides(options))
        out_dir = Path(options["out"]) if options["out"] else Path(settings.DGDA_DATA_DIR)
        source, target = generate_pair(config)
        noise_rate = options["noise_rate"]
        if noise_rate > 0:
            source = inject_label_noise(source, noise_rate, config.seed)

        for dataset, rate in ((source, noise_rate), (target, 0.0)):
            path = write_features(dataset, out_dir / f"{options['name']}_{dataset.domain_tag}.dgdf")
            if recording_enabled(options):
                record_dataset(f"{options['name']}/{dataset.domain_tag}", dataset, path, rate, config.seed)
            self.stdout.write(self.style.SUCCESS(
                f"Wrote {path}: {len(dataset)} dialogues, {dataset.num_utterances} utterances"
            ))
