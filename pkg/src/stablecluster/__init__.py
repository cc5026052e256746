"""Center-based clustering under local perturbation resilience."""

from .asym import radius_search, robust_asym_solve, vishwanathan_solve
from .generate import GenSpec, embed_approx_stable, gen_mixed, gen_planted
from .kcenter import KCenterResult, condition1_preprocess, condition2_merge, greedy_2approx, solve_robust_kcenter
from .local_search import LocalSearchConfig, local_search
from .metric import Clustering, Instance, closeness, load_instance, metric_completion, threshold_digraph
from .objectives import exact_solve, voronoi
from .stability import build_capped_perturbation, probe_lpr, probe_lpr_eps, stability_report

__version__ = "0.1.0"
