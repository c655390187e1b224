from .models import (ALL_KINDS, DISPLAY_NAMES, FORMAT_VERSION, N_CLASSES, AdaBoostConfig, KnnConfig,
                     LogisticConfig, MlpConfig, NaiveBayesConfig, SuiteConfig, SvmConfig, TrainedModel,
                     TreeConfig, load_model, save_model)
from .mlp import AdamState, MLPNetwork, adam_update, gradient_check, mlp_gradient_check
from .suite import estimator_from_model, fit_classical, fit_model, mlp_fit, predict

__all__ = [
    "ALL_KINDS", "DISPLAY_NAMES", "FORMAT_VERSION", "N_CLASSES",
    "AdaBoostConfig", "KnnConfig", "LogisticConfig", "MlpConfig", "NaiveBayesConfig",
    "SuiteConfig", "SvmConfig", "TrainedModel", "TreeConfig", "load_model", "save_model",
    "AdamState", "MLPNetwork", "adam_update", "gradient_check", "mlp_gradient_check",
    "estimator_from_model", "fit_classical", "fit_model", "mlp_fit", "predict",
]
