"""
Training a detector and flagging a spike
========================================

Fit the whole pipeline on an anomaly-free sine, then run it over a fresh
series that has one injected spike.
"""

import numpy as np

from greenhouse.detector import detect
from greenhouse.evalbench import generate_synthetic, inject_anomalies, score
from greenhouse.pipeline import train_pipeline
from greenhouse.predictor import PredictorConfig

###############################################################################
# Normal behaviour: a noisy sine with period 50. A smaller network than the
# default keeps this script to a few seconds.
train = generate_synthetic("sine+noise", 2000, seed=0)
config = PredictorConfig(lookback=32, horizon=4, hidden_size=16, epochs=30, seed=0)
bundle = train_pipeline(train, config, percentile=0.99)

print("segments (train / fit / calibrate):", bundle.segment_lengths)
print("predictor train MSE (normalized units): %.5f" % bundle.predictor.train_mse)
print("threshold tau at rho=0.99: %.4f" % bundle.threshold)

###############################################################################
# A fresh draw from the same process. Roughly 1% of the points should land
# above tau.
fresh = generate_synthetic("sine+noise", 2000, seed=1)
result = detect(bundle, fresh)
print("scored %d points, %.2f%% flagged" % (result.scored.sum(), 100 * result.anomaly_fraction))

###############################################################################
# Add one spike ten standard deviations high and look at the distances
# around it.
spiked, labels = inject_anomalies(fresh, seed=3, count=1, magnitude=10.0,
                                  lookback=config.lookback, horizon=config.horizon)
(spike_time,) = labels.timestamps
result = detect(bundle, spiked)
window = slice(spike_time - 3, spike_time + 8)
for t, d, s in zip(result.timestamps[window], result.m_distance[window], result.status[window]):
    print("t=%5d  distance=%8.3f  %s" % (t, d, s))

###############################################################################
# The later look-back windows all contain the spike, so the points after it
# also get large distances. With one-to-one matching those extra flags count
# as false positives.
m = score(result, labels)
print("tp=%d fp=%d fn=%d  precision=%.3f recall=%.3f" % (m.tp, m.fp, m.fn, m.precision, m.recall))
span = config.lookback + config.horizon - 1
offsets = result.anomalous_timestamps - spike_time
near = np.count_nonzero((offsets >= 0) & (offsets < span))
print("%d flags in the %d steps from the spike, %d elsewhere (the ~1%% baseline)"
      % (near, span, len(offsets) - near))
