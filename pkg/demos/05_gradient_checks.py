"""Validate every differentiable op against central finite differences."""
from slim.autodiff import check_registered_ops
from slim.cli import _end_to_end_report

reports = check_registered_ops(step=1e-5, tolerance=1e-4)
reports.append(_end_to_end_report(step=1e-5, tolerance=1e-4))

print(f"{'op':<26} {'max rel err':>12}  status")
for r in reports:
    print(f"{r.op_name:<26} {r.max_relative_error:12.2e}  {'ok' if r.passed else 'FAIL'}")
print(f"\n{sum(r.passed for r in reports)}/{len(reports)} checks passed "
      f"(step {reports[0].step:g}, tolerance {reports[0].tolerance:g})")
