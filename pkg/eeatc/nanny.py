"""
Estimativa direta do erro (nanny).

Um regressor treinado sobre o erro absoluto da primeira fase, usando como
entrada as features mais a previsão da primeira fase. Depois de treinado,
estima o erro de cada amostra sem precisar da referência.
"""

import logging
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyInput, NegativeTargets, NotFitted, ShapeMismatch
from .regress import ForestParams, make_regressor, regressor_from_dict

logger = logging.getLogger(__name__)

NANNY_BACKBONES = ("rf", "mlr")


def augment(X, y_hat_f) -> np.ndarray:
    """Anexa a previsão da primeira fase como última coluna: [X | ŷ_f]."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y_hat_f = np.asarray(y_hat_f, dtype=np.float64).reshape(-1)
    if y_hat_f.shape[0] != X.shape[0]:
        raise ShapeMismatch(f"ŷ_f tem {y_hat_f.shape[0]} valores, X tem {X.shape[0]} linhas")
    return np.column_stack([X, y_hat_f])


class NannyModel:
    """Estimador do erro absoluto por amostra.

    Attributes:
        backbone: Regressor (ForestModel por padrão, ou LinearModel)
        n_features: F (sem contar a coluna ŷ_f)
    """

    def __init__(self, backbone, n_features: int):
        self.backbone = backbone
        self.n_features = int(n_features)

    @property
    def fitted(self) -> bool:
        return self.backbone.fitted

    @property
    def backbone_kind(self) -> str:
        return self.backbone.kind

    def estimate(self, X, y_hat_f) -> np.ndarray:
        return nanny_estimate(self, X, y_hat_f)

    def to_dict(self) -> dict:
        return {"n_features": self.n_features, "backbone": self.backbone.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "NannyModel":
        return cls(regressor_from_dict(data["backbone"]), data["n_features"])


def nanny_fit(X, y_hat_f, e_a, params: Optional[ForestParams] = None, seed: int = 0,
              backbone: str = "rf", n_jobs: int = 1,
              feature_names: Sequence[str] = ()) -> NannyModel:
    """Treina o nanny em [X | ŷ_f] contra o erro absoluto e_a.

    Args:
        X: Features de treino (N x F)
        y_hat_f: Previsões da primeira fase
        e_a: |y - ŷ_f|, todos >= 0
        params: Parâmetros da floresta (backbone 'rf')
        seed: Semente da floresta
        backbone: 'rf' ou 'mlr'

    Returns:
        NannyModel treinado
    """
    Z = augment(X, y_hat_f)
    e_a = np.asarray(e_a, dtype=np.float64).reshape(-1)
    if e_a.shape[0] != Z.shape[0]:
        raise ShapeMismatch(f"e_a tem {e_a.shape[0]} valores, X tem {Z.shape[0]} linhas")
    if np.any(e_a < 0):
        raise NegativeTargets(f"Erro absoluto negativo (mínimo {float(e_a.min()):.3g})")
    names = tuple(feature_names) + ("y_hat_f",) if feature_names else ()
    model = make_regressor(backbone, params=params, seed=seed, n_jobs=n_jobs, feature_names=names)
    model.fit(Z, e_a)
    logger.debug(f"Nanny ({backbone}) treinado com erro médio {float(e_a.mean()):.4f}")
    return NannyModel(model, Z.shape[1] - 1)


def nanny_estimate(model: NannyModel, X, y_hat_f) -> np.ndarray:
    """Erro estimado por amostra (saídas negativas do backbone viram 0)."""
    if not model.fitted:
        raise NotFitted("NannyModel não foi treinado")
    Z = augment(X, y_hat_f)
    if Z.shape[1] != model.n_features + 1:
        raise ShapeMismatch(f"Esperadas {model.n_features} features, recebidas {Z.shape[1] - 1}")
    return np.maximum(model.backbone.predict(Z), 0.0)


def estimated_mae(e_hat) -> float:
    """MAE estimado: média de ℰ̂."""
    e_hat = np.asarray(e_hat, dtype=np.float64).reshape(-1)
    if e_hat.size == 0:
        raise EmptyInput("Vetor de erros estimados vazio")
    return float(np.mean(e_hat))
