"""A small Monte Carlo sweep: measured MSE next to the bound, written as CSV."""
import sys

from passloc.geometry import paper_default
from passloc.harness import ExperimentSpec, run_trials, sweep

sc = paper_default()

spec = ExperimentSpec(sc, "parametric", n_trials=100, seed=1, axis="prior_var", grid=(1, 9, 25))
table = sweep(spec)
print("target 0, parametric BP, 100 trials per point")
print(" prior var      MSE   +-2se    bound")
for v in spec.grid:
    mse, se = table.value("mse", "target", 0, v), table.value("mse_se", "target", 0, v)
    print(f"  {v:8g} {mse:8.3f} {2 * se:7.3f} {table.value('bcrb', 'target', 0, v):8.3f}")
print("excluded trials:", table.metadata["excluded_trials"])

# error CDF and RMSE trace from one run
t = run_trials(ExperimentSpec(sc, n_trials=100, seed=2, metrics=("cdf", "rmse_trace"), cdf_grid=(1, 2, 3)))
print("\nP(target error <= 1, 2, 3 m):", [round(r.value, 3) for r in t.select(node_kind="target")
                                          if r.metric.startswith("cdf")])
print("RMSE at iterations 0, 5, 40:", [round(t.value(f"rmse_iter@{k}", "target", "all"), 3) for k in (0, 5, 40)])

print("\nCSV head:")
sys.stdout.write("\n".join(table.to_csv().splitlines()[1:6]) + "\n")
