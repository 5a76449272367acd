from errors import ConfigError
from models.base import FitterBase
from models.glm import GlmFit, IrlsFitter, DivergenceVerdict, detect_mle_divergence, fit_glm_irls
from models.glmm import LaplaceFit, LaplaceFitter, fit_glmm_laplace
from models.posterior import BayesianLogitModel, ParameterLayout, ParameterVector, log_posterior_and_grad
from models.priors import PriorConfig


class Engines:
    """Maximum-likelihood engines by CLI name; ``nuts`` is driven by the sampler package instead."""
    Irls = IrlsFitter
    Laplace = LaplaceFitter

    @classmethod
    def get_mapping(cls) -> dict[str, type[FitterBase]]:
        return {
            'irls': cls.Irls,
            'laplace': cls.Laplace,
        }

    @classmethod
    def get_by_name(cls, name: str) -> type[FitterBase]:
        try:
            return cls.get_mapping()[name]
        except KeyError:
            raise ConfigError(f"unknown likelihood engine '{name}' (expected one of "
                              f"{', '.join(cls.get_mapping())})") from None
