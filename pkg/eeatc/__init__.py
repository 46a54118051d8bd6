"""
EEATC: calibração de sensores de baixo custo de qualidade do ar em duas fases.

Uma regressão linear múltipla faz a primeira calibração, um modelo auxiliar
(nanny) estima o erro dela sem usar a referência, e uma floresta aleatória
produz o valor final usando esse erro estimado como feature extra.
"""

from .dataset import CalDataset, FeatureSpec, NormParams, SampleRecord, assemble_features
from .errors import CalibrationError, DataError
from .metrics import MetricPair, mae, r2, rmse
from .pipeline import (
    EeatcConfig,
    EeatcModel,
    EvalReport,
    SinglePhaseModel,
    eeatc_predict,
    eeatc_train,
    feature_sweep,
    load_model,
    prepare_training_set,
    save_model,
    single_phase_train,
)
from .regress import ForestModel, ForestParams, LinearModel

__version__ = "0.1.0"
