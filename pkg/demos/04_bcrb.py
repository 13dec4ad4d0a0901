"""Position bounds for every node, and how they react to noise and prior width."""
from passloc.bcrb import bcrb_table
from passloc.geometry import paper_default

sc = paper_default()
print("bound on 2-D position MSE (m^2), default layout")
for kind, node, b in bcrb_table(sc):
    print(f"  {kind:8s} {node}: {b:7.3f}")

print("\ntarget 0 and receiver 0 as range noise grows (receiver prior MSE is 18 m^2)")
for mv in (0.25, 1, 4, 16, 100):
    rows = bcrb_table(sc.replace(meas_var=mv))
    print(f"  var {mv:6g}: target {rows[0][2]:8.3f}   receiver {rows[3][2]:7.3f}")

print("\ntarget 0 as the receiver prior widens")
for pv in (0.0, 0.01, 1, 9, 25):
    print(f"  prior var {pv:5g}: {bcrb_table(sc.replace(receiver_prior_var=pv))[0][2]:.3f}")

one = sc.replace(targets=sc.targets[:1], meas_var=sc.meas_var[:1])
print(f"\ntarget (30,40) alone: {bcrb_table(one)[0][2]:.3f}, with the other two targets: "
      f"{bcrb_table(sc)[0][2]:.3f}")
