"""Both pipelines end to end on the default benchmark suite.

Trains the bench models, runs the delay/reach scenes, a noise-only scene
for false alarms and a timing trace, then prints the comparison table.
Takes about a minute.
"""
# %%
import os
import tempfile

from dasdetect.harness import BenchConfig, benchmark, format_table, write_report

cfg = BenchConfig(seed=0)
report, events = benchmark(cfg)
print(format_table(report))

# %% The per-offset detection rates behind "max detection distance".
for name, p in report["pipelines"].items():
    print(name, "K =", p["K"], p["detection_rate_by_offset"])

# %%
paths = write_report(report, events, os.path.join(tempfile.mkdtemp(), "bench"))
print(paths)
