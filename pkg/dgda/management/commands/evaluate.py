import json
from pathlib import Path

import numpy as np

from ...metrics import write_confusion_csv
from ...snapshots import load_snapshot
from ...synth import embedding_dataset, read_features, write_features
from ...trainer import SOURCE, TARGET, evaluate, predict, prepare_domain, target_eval_split
from ..base import LabCommand


class Command(LabCommand):
    help = "Evaluate a model snapshot on a DGDF dataset."

    def add_arguments(self, parser):
        parser.add_argument("snapshot", help="model.dgds written by the train command")
        parser.add_argument("dataset", help="DGDF file with evaluation labels")
        parser.add_argument("--split", choices=["all", "eval"], default="all",
                            help="'eval' restricts a target file to the run's held-out dialogues")
        parser.add_argument("--dump-embeddings", help="write fused per-utterance embeddings as a DGDF file")
        parser.add_argument("--confusion", help="write the confusion matrix as CSV")
        parser.add_argument("--json", action="store_true", help="print the report as JSON")

    def handle(self, *args, **options):
        model, config = load_snapshot(options["snapshot"])
        dataset = read_features(options["dataset"])
        indices = None
        if options["split"] == "eval" and dataset.domain_tag == "target":
            indices = target_eval_split(config, dataset)

        prepared = prepare_domain(dataset, config, SOURCE if dataset.domain_tag == "source" else TARGET)
        report = evaluate(model, dataset, config, indices, prepared)

        if options["dump_embeddings"]:
            selected = np.arange(len(dataset)) if indices is None else indices
            embeddings = predict(model, prepared, selected, config.batch_size).embeddings
            path = write_features(embedding_dataset(embeddings, dataset.subset(selected)),
                                  Path(options["dump_embeddings"]))
            self.stdout.write(f"Embeddings written to {path}")
        if options["confusion"]:
            write_confusion_csv(report, options["confusion"])

        if options["json"]:
            self.stdout.write(json.dumps(report.as_record(), indent=2))
            return
        self.stdout.write(f"wf1={report.wf1!r}")
        for k, f1 in enumerate(report.per_class_f1):
            self.stdout.write(f"f1_class{k}={float(f1)!r}")
        self.stdout.write(f"memorization_rate={report.memorization_rate!r}")
        self.stdout.write(f"branch_agreement={report.branch_agreement!r}")
        for row in report.confusion:
            self.stdout.write("confusion=" + ",".join(str(int(v)) for v in row))
        self.stdout.write(self.style.SUCCESS(f"Evaluated {len(dataset) if indices is None else len(indices)} dialogues"))
