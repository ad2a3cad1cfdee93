#!/usr/bin/env python
"""simulate_and_fit.py

Grow a small directed network with two reciprocity classes, recover the
global growth parameters, then fit the class structure three ways
(Gibbs, CAVI and variational EM) and compare the partitions to the truth.

Run:  python demos/simulate_and_fit.py
"""

import numpy as np

from hetrecip import (GlobalParams, MixtureParams, PriorConfig, cavi_run, fit_theta,
                      generate, gibbs_run, posterior_summary, rand_index, vem_run)

rng = np.random.default_rng(11)

theta = GlobalParams(alpha=0.15, beta=0.8, delta_in=1.0, delta_out=1.0)
mix = MixtureParams(pi=np.array([0.8, 0.2]),
                    rho=np.array([[0.5, 0.9], [0.05, 0.2]]))  # rho[target, source]

log, labels = generate(theta, mix, n=5000, rng=rng)
print("events:", log.n_events, " nodes:", len(labels))

# global parameters first, they do not depend on the classes
fit = fit_theta(log)
print("alpha=%.3f beta=%.3f delta_in=%.3f delta_out=%.3f" %
      (fit.alpha, fit.beta, fit.delta_in, fit.delta_out))

# Gibbs with the true K; class labels are only defined up to a swap
chain = gibbs_run(log, K=2, M=2000, rng=1)
summ = posterior_summary(chain)
print("gibbs pi", np.round(summ.pi_mean, 3))
print("gibbs rho\n", np.round(summ.rho_mean, 3))

# CAVI; the ELBO should never go down
vb = cavi_run(log, K=2, rng=2)
print("cavi sweeps:", vb.n_sweeps, " elbo: %.2f" % vb.elbo)
print("cavi rho\n", np.round(vb.rho_mean, 3))
print("cavi rand index: %.3f" % rand_index(vb.hard_labels(), labels))

# variational EM, started from the tail angles
em = vem_run(log, K=2, rng=3)
print("vem rho\n", np.round(em.mix.rho, 3))
print("vem rand index: %.3f" % rand_index(em.labels, labels))
