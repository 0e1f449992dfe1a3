"""Tracks, confirmation length K and what K buys in false alarms.

A detection becomes an alarm only after its track collects K distinct time
steps. With independent false hits of probability p per sensor-second the
expected number of false tracks is S * T * (1 - p) * p**K.
"""
# %%
from dasdetect.tracker import AlarmPolicy, Detection, Tracker, far_estimate, simulate_false_alarms

# %% A steady source at 50 m confirms after K steps, despite one missed second.
tracker = Tracker(AlarmPolicy(K=10, gap_tolerance_s=3.0, radius_m=5.0))
for t in range(1, 30):
    hits = [] if t == 6 else [Detection(float(t), 50.0 + (t % 3), 0.9)]
    for ev in tracker.step(float(t), hits):
        print("alarm:", ev)

# %% Monte-Carlo false tracks vs the closed form, 100 sensors, 1e5 s.
for p in (0.05, 0.1):
    for K in (2, 3):
        mc = simulate_false_alarms(p, K, 100, 100_000, seed=0)
        print(f"p={p} K={K}: simulated {mc:6d}  expected {far_estimate(p, K, 100, 100_000):9.1f}")

# %% How long must tracks be for under one false alarm a month on a 17 km fiber?
sensors, month = 17_000 // 4, 30 * 86400
for p in (1e-3, 1e-2, 5e-2):
    K = 1
    while far_estimate(p, K, sensors, month) >= 1.0:
        K += 1
    print(f"p={p:g}: K >= {K}")
