# Measure how sliced-distance latency scales with the slice count and write
# the per-trial CSV plus a JSON summary for plotting.

import numpy as np

from driftgauge import bench_swd

result = bench_swd(
    sizes=[(3000, 3000, 32)],
    slice_counts=[8, 16, 32, 64],
    mode="all_random",
    trials=5,
    seed=0,
)

print(f"{'L':>4} {'median ms':>10} {'distance':>9} {'peak bytes':>11}")
for row in result.summary():
    print(f"{row['L']:>4} {row['median_wall_ms']:>10.2f} {row['swd']:>9.4f} {row['peak_bytes']:>11,}")

L = np.array([r["L"] for r in result.summary()], dtype=float)
t = np.array([r["median_wall_ms"] for r in result.summary()])
slope, intercept = np.polyfit(L, t, 1)
r2 = 1 - np.sum((t - (intercept + slope * L)) ** 2) / np.sum((t - t.mean()) ** 2)
print(f"\nlinear fit: {slope:.3f} ms/slice + {intercept:.3f} ms, R^2 = {r2:.4f}")

result.write_csv("swd_bench.csv")
result.write_json("swd_bench.json")
print("wrote swd_bench.csv and swd_bench.json")
print(f"environment: {result.environment}")
