from .convergence import autocovariance, effective_sample_size, split_chains, split_rhat
from .exports import export_run, write_csv
from .ppc import GroupCheck, PpcResult, linear_predictors, posterior_predictive
from .summary import (FitSummary, ParameterSummary, RHAT_THRESHOLD, VarianceComponent, natural_scale, summarize,
                      summarize_values)
