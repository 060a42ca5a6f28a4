from django.core.management.base import CommandError

from ...bounds import subsample_equal, theorem1_bound, theorem3_bound, theorem3_terms, wasserstein1_exact
from ...registry import record_bound
from ...synth import read_features
from ..base import LabCommand, recording_enabled

THEOREM1_REQUIRED = ("source_risk", "target_risk", "source_count", "target_count", "pdim", "delta",
                     "lipschitz", "omega")
THEOREM3_REQUIRED = ("rademacher", "lam", "n", "delta", "noise", "eps", "margin")


class Command(LabCommand):
    help = (
        "Evaluate the target-risk bound (--theorem=1) or the noisy-label generalisation bound "
        "(--theorem=3) and print the terms as key=value lines. omega and omega' depend on the true "
        "labelling functions, which are unobservable: supply them as assumptions."
    )

    def add_arguments(self, parser):
        parser.add_argument("--theorem", type=int, choices=[1, 3], default=1)
        parser.add_argument("--source-risk", type=float, help="empirical source risk")
        parser.add_argument("--target-risk", type=float, help="empirical risk on pseudo-labelled target data")
        parser.add_argument("--source-count", type=int, help="N_S")
        parser.add_argument("--target-count", type=int, help="N_T'")
        parser.add_argument("--pdim", type=int, help="pseudo-dimension d")
        parser.add_argument("--delta", type=float, help="confidence level, in (0, 1)")
        parser.add_argument("--lipschitz", type=float, help="Lipschitz product C_f * C_g")
        parser.add_argument("--w1", type=float, help="Wasserstein-1 estimate")
        parser.add_argument("--omega", type=float, help="joint optimal risk term (unobservable)")
        parser.add_argument("--omega-prime", type=float, help="omega' of the loose line (default: omega)")
        parser.add_argument("--source-embeddings", help="DGDF embedding dump of the source domain")
        parser.add_argument("--target-embeddings", help="DGDF embedding dump of the target domain")
        parser.add_argument("--seed", type=int, default=0, help="subsampling seed for the W1 estimate")
        parser.add_argument("--rademacher", type=float, help="Rademacher complexity R_n")
        parser.add_argument("--lam", type=float, help="regulariser weight lambda")
        parser.add_argument("--n", type=int, help="sample count")
        parser.add_argument("--noise", type=float, help="noise rate eta")
        parser.add_argument("--eps", type=float, help="approximation error epsilon")
        parser.add_argument("--margin", type=float, help="margin mu")
        parser.add_argument("--no-record", action="store_true", help="do not store the evaluation in the registry")

    def _require(self, options, names):
        missing = [name for name in names if options.get(name) is None]
        if missing:
            raise CommandError("missing " + ", ".join("--" + m.replace("_", "-") for m in missing))

    def _w1(self, options) -> float:
        if options["w1"] is not None:
            return options["w1"]
        if not (options["source_embeddings"] and options["target_embeddings"]):
            raise CommandError("give --w1 or both --source-embeddings and --target-embeddings")
        source = read_features(options["source_embeddings"]).all_features("text")
        target = read_features(options["target_embeddings"]).all_features("text")
        x, y = subsample_equal(source, target, options["seed"])
        w1 = wasserstein1_exact(x, y)
        self.stdout.write(f"w1_samples={x.shape[0]}")
        return w1

    def handle(self, *args, **options):
        if options["theorem"] == 3:
            self._require(options, THEOREM3_REQUIRED)
            values = {name: options[name] for name in THEOREM3_REQUIRED}
            for key, value in theorem3_terms(**values).items():
                self.stdout.write(f"terms.{key}={value!r}")
            self.stdout.write(f"total={theorem3_bound(**values)!r}")
            return

        self._require(options, THEOREM1_REQUIRED)
        report = theorem1_bound(
            empirical_source_risk=options["source_risk"],
            empirical_target_risk=options["target_risk"],
            source_count=options["source_count"],
            target_count=options["target_count"],
            pdim=options["pdim"],
            delta=options["delta"],
            lipschitz_product=options["lipschitz"],
            w1=self._w1(options),
            omega=options["omega"],
            omega_prime=options["omega_prime"],
        )
        self.stdout.write(report.as_key_value(), ending="")
        if recording_enabled(options):
            evaluation = record_bound(report)
            self.stdout.write(self.style.SUCCESS(f"Stored as bound evaluation #{evaluation.pk}"))
