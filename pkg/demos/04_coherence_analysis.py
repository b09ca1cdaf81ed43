"""Landmark redundancy as a function of dictionary size.

As the landmark count K grows, clustering-derived landmarks crowd together:
their mutual coherence rises and the sparse-recovery capacity (1 + 1/mu)/2
falls. The analytic lower bound shows the same monotone trend; the empirical
sweep measures it on a 2-D Gaussian mixture with k-means landmarks.
"""
import numpy as np

from slim.coherence import (
    BoundParams,
    GaussianMixture,
    empirical_coherence_sweep,
    recovery_support_bound,
    spearman,
    sweep_summary,
    theorem_lower_bound,
    unit_ball_volume,
)

print("unit-ball volumes: V_2 = %.6f, V_3 = %.6f" % (unit_ball_volume(2), unit_ball_volume(3)))

print("\nanalytic lower bound on squared coherence (d=2, u_max=1, C_p=0.05):")
for k in (4, 16, 64, 256, 1024):
    bound = theorem_lower_bound(BoundParams(d=2, k=k, u_max=1.0, c_p=0.05))
    print(f"  K={k:5d}: bound {bound:8.4f}")

generator = GaussianMixture.default_2d(points=1024)
k_values = [2, 4, 8, 16, 32, 64, 128, 256]
cells = empirical_coherence_sweep(generator, k_values, seeds=list(range(5)))
summary = sweep_summary(cells)

print("\nempirical sweep (5 seeds per K):")
print(f"{'K':>5} {'coherence':>10} {'distortion':>11} {'recoverable l0':>15}")
for row in summary:
    mu = row["mean_coherence"]
    cap = recovery_support_bound(mu)
    print(f"{row['k']:5d} {mu:10.4f} {row['mean_distortion']:11.4f} {cap:15.2f}")

rho = spearman([r["k"] for r in summary], [r["mean_coherence"] for r in summary])
print(f"\nspearman(K, coherence) = {rho:.3f}")
