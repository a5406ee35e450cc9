"""
A small benchmark sweep
=======================

Score the detector on labelled synthetic datasets at several percentiles,
then write the report as CSV.
"""

import sys

from greenhouse.evalbench import read_report, run_benchmark, synthetic_dataset, write_report
from greenhouse.predictor import PredictorConfig

config = PredictorConfig(lookback=16, horizon=4, hidden_size=8, epochs=15, seed=0)

###############################################################################
# Each dataset has a clean training series and a test series with five
# labelled spikes. The spikes are spaced at least B + F apart.
datasets = [
    synthetic_dataset("sine+noise", "sine+noise", 1500, 1500, seed=0, count=5, config=config),
    synthetic_dataset("random-walk", "random-walk-with-drift", 1500, 1500, seed=1, count=5,
                      config=config),
]

###############################################################################
# Training happens once per dataset. Only tau changes across the rho sweep.
rows = run_benchmark(datasets, config, percentiles=(0.9, 0.99, 0.999))
for r in rows:
    print("%-12s rho=%-6g tp=%d fp=%-4d fn=%d  P=%.3f R=%.3f F1=%.3f"
          % (r.dataset, r.percentile, r.tp, r.fp, r.fn, r.precision, r.recall, r.f1))

###############################################################################
# The report round-trips through its CSV form.
path = sys.argv[1] if len(sys.argv) > 1 else "benchmark_report.csv"
write_report(rows, path)
assert read_report(path) == rows
print("wrote", path)
