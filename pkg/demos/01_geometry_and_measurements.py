"""Bistatic ranges on the default layout and what a noisy measurement looks like."""
import numpy as np

from passloc.geometry import paper_default, perturb_receivers, simulate_measurements, true_range

sc = paper_default()
print("transmitter at the origin")
print("targets   (m):", sc.targets.tolist())
print("receivers (m):", sc.receivers.tolist())

# a range is transmitter -> target -> receiver
R = true_range(sc.targets[:, None, :], sc.receivers[None, :, :])
print("\nnoise-free ranges (m), one row per target:")
print(np.round(R, 2))

meas = simulate_measurements(sc, seed=7)
print("\nnoisy ranges with 1 m^2 variance, seed 7:")
print(np.round(meas.ranges, 2))
print("residuals:", np.round(meas.ranges - R, 2).ravel())

# the estimator only sees receiver positions through a Gaussian prior
means = perturb_receivers(sc, seed=7)
print("\nreceiver prior means (true position + N(0, 9 m^2) per coordinate):")
for m, (t, p) in enumerate(zip(sc.receivers, means)):
    print(f"  receiver {m}: true {t}, prior mean {np.round(p, 2)}, off by {np.linalg.norm(t - p):.2f} m")
