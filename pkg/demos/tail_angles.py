#!/usr/bin/env python
"""tail_angles.py

The high-degree nodes of a simulated network sit at out-degree shares that
depend on their class. Pick the tail threshold by minimum KS distance,
then cluster the angles in one dimension.
"""

import numpy as np

from hetrecip import GlobalParams, MixtureParams, angular_set, generate, kmeans_1d, \
    min_distance_threshold, replay

theta = GlobalParams(0.75, 0.0, 0.8, 0.8)
mix = MixtureParams(np.array([0.6, 0.4]), np.array([[0.1, 0.5], [0.4, 0.8]]))
log, labels = generate(theta, mix, n=20000, rng=5)

state = replay(log)
total = state.in_degree + state.out_degree
fit = min_distance_threshold(total[total > 0])
print("threshold:", fit.threshold, " exponent: %.3f" % fit.exponent, " tail size:", fit.n_tail)

ang = angular_set(state, fit.threshold)
tail_classes = labels[ang.nodes - 1]
for c in (0, 1):
    print("class %d  mean angle %.3f  (n=%d)" % (c, ang.values[tail_classes == c].mean(),
                                                (tail_classes == c).sum()))

km, centers = kmeans_1d(ang.values, 2, rng=0)
print("k-means centres:", np.round(centers, 3))
agree = np.mean(km == tail_classes)
print("agreement with true classes: %.2f" % max(agree, 1 - agree))
