"""Directed preferential attachment networks with class-dependent reciprocity."""

from .model import Event, EventLog, GraphState, InvalidEventError, apply_event, rand_index, replay
from .simulate import GlobalParams, MixtureParams, generate
from .likelihood import (NoRootError, ThetaFit, estimate_alpha_beta, estimate_delta,
                         fit_theta, loglik_pi_rho, loglik_theta)
from .mcmc import (Chain, PriorConfig, bnb_log_pmf, conditional_label_weights, gibbs_run,
                   posterior_summary, telescoping_run)
from .variational import cavi_run, elbo_vb, elbo_vem, icl, vem_init_extremes, vem_run
from .extremes import angular_set, kmeans_1d, min_distance_threshold

__version__ = "0.1.0"
