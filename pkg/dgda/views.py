import csv

from django.contrib.auth.decorators import login_required, user_passes_test
from django.http import HttpResponse, JsonResponse
from django.shortcuts import get_object_or_404

from .bounds import theorem1_bound
from .exceptions import ContractViolation
from .metrics import metrics_header
from .models import ExperimentRun


def is_lab_staff(user):
    return user.is_authenticated and user.is_staff


def _run_summary(run):
    return {
        "id": run.id,
        "name": run.name,
        "variant": run.variant,
        "seed": run.seed,
        "noise_rate": run.noise_rate,
        "status": run.status,
        "final_wf1": run.final_wf1,
        "created_at": run.created_at.isoformat(),
        "finished_at": run.finished_at.isoformat() if run.finished_at else None,
    }


@login_required
@user_passes_test(is_lab_staff)
def run_list(request):
    runs = ExperimentRun.objects.all()
    status = (request.GET.get("status") or "").strip()
    if status:
        if status not in dict(ExperimentRun.STATUS_CHOICES):
            return JsonResponse({"error": f"unknown status {status!r}"}, status=400)
        runs = runs.filter(status=status)
    variant = (request.GET.get("variant") or "").strip()
    if variant:
        runs = runs.filter(variant=variant)
    return JsonResponse({"results": [_run_summary(run) for run in runs]})


@login_required
@user_passes_test(is_lab_staff)
def run_detail(request, run_id):
    run = get_object_or_404(ExperimentRun, pk=run_id)
    data = _run_summary(run)
    data["config_text"] = run.config_text
    data["error"] = run.error
    data["epochs"] = [
        {
            "epoch": e.epoch,
            "wf1": e.wf1,
            "per_class_f1": e.per_class_f1,
            "memorization_rate": e.memorization_rate,
            "branch_agreement": e.branch_agreement,
            "L_D": e.loss_d,
            "L_adv": e.loss_adv,
            "L_couple": e.loss_couple,
            "L_cls": e.loss_cls,
        }
        for e in run.epochs.all()
    ]
    return JsonResponse(data)


@login_required
@user_passes_test(is_lab_staff)
def run_metrics_csv(request, run_id):
    run = get_object_or_404(ExperimentRun, pk=run_id)
    epochs = list(run.epochs.all())
    num_classes = len(epochs[0].per_class_f1) if epochs else 0

    response = HttpResponse(content_type="text/csv")
    response["Content-Disposition"] = f'attachment; filename="run_{run.id}_metrics.csv"'
    writer = csv.writer(response)
    writer.writerow(metrics_header(num_classes))
    for e in epochs:
        writer.writerow(
            [e.epoch, e.wf1, *e.per_class_f1, e.memorization_rate, e.branch_agreement,
             e.loss_d, e.loss_adv, e.loss_couple, e.loss_cls]
        )
    return response


THEOREM1_PARAMS = {
    "source_risk": float,
    "target_risk": float,
    "source_count": int,
    "target_count": int,
    "pdim": int,
    "delta": float,
    "lipschitz": float,
    "w1": float,
    "omega": float,
}


@login_required
@user_passes_test(is_lab_staff)
def theorem1(request):
    values = {}
    for name, kind in THEOREM1_PARAMS.items():
        raw = (request.GET.get(name) or "").strip()
        if not raw:
            return JsonResponse({"error": f"missing parameter {name!r}"}, status=400)
        try:
            values[name] = kind(raw)
        except ValueError:
            return JsonResponse({"error": f"parameter {name!r} is not a valid {kind.__name__}"}, status=400)
    omega_prime = (request.GET.get("omega_prime") or "").strip()
    try:
        report = theorem1_bound(
            empirical_source_risk=values["source_risk"],
            empirical_target_risk=values["target_risk"],
            source_count=values["source_count"],
            target_count=values["target_count"],
            pdim=values["pdim"],
            delta=values["delta"],
            lipschitz_product=values["lipschitz"],
            w1=values["w1"],
            omega=values["omega"],
            omega_prime=float(omega_prime) if omega_prime else None,
        )
    except (ContractViolation, ValueError) as exc:
        return JsonResponse({"error": str(exc)}, status=400)
    return JsonResponse(report.as_record())
