"""Model-based online imitation learning with verifiable convergence rates.

Library layout:
  schedules    round weights, polynomial-sum brackets, adaptive step schedule
  geometry     feasible sets, Bregman divergences, proximal steps
  online_core  FTL/FTRL on quadratics, regret ledger, lemma audits
  linear_env   linear-Gaussian imitation benchmark and its oracles
  algorithms   MoBIL-VI, MoBIL-Prox, predictive models, run driver
  vi_prox      monotone VIs, ERR gap, stochastic mirror-prox, equivalence
  experiment   CSV traces, rate fitting, sweeps
  verify       executable acceptance checks
  cli          `mobil-bench` entry point
"""

__version__ = "0.1.0"
