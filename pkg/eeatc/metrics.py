"""
Métricas de avaliação (RMSE, R², MAE).
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import USEPA_R2_THRESHOLD
from .dataset import NormParams, TARGET, denormalize
from .errors import ConstantTarget, EmptyInput, ShapeMismatch


@dataclass(frozen=True)
class MetricPair:
    """R² e RMSE calculados sobre n amostras."""

    r2: float
    rmse: float
    n: int

    @property
    def meets_usepa(self) -> bool:
        return self.r2 >= USEPA_R2_THRESHOLD

    def to_dict(self) -> dict:
        return {"r2": self.r2, "rmse": self.rmse, "n": self.n}


def _pair(y_hat, y):
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y_hat.shape != y.shape:
        raise ShapeMismatch(f"Tamanhos diferentes: {y_hat.shape[0]} previsões, {y.shape[0]} referências")
    if y.size == 0:
        raise EmptyInput("Vetores vazios")
    return y_hat, y


def rmse(y_hat, y) -> float:
    """Raiz do erro quadrático médio."""
    y_hat, y = _pair(y_hat, y)
    diff = y_hat - y
    return math.sqrt(float(np.mean(diff * diff)))


def mae(y_hat, y) -> float:
    """Erro absoluto médio."""
    y_hat, y = _pair(y_hat, y)
    return float(np.mean(np.abs(y_hat - y)))


def r2(y_hat, y) -> float:
    """Coeficiente de determinação 1 - SS_res / SS_tot.

    Pode ser negativo. Alvo constante levanta ConstantTarget.
    """
    y_hat, y = _pair(y_hat, y)
    if y.size < 2:
        raise EmptyInput("R² exige ao menos 2 amostras")
    residual = y - y_hat
    centered = y - y.mean()
    ss_res = float(residual @ residual)
    ss_tot = float(centered @ centered)
    if ss_tot == 0.0:
        raise ConstantTarget("R² indefinido para alvo constante")
    return 1.0 - ss_res / ss_tot


def evaluate(y_hat, y, norm: Optional[NormParams] = None) -> MetricPair:
    """Calcula o par (R², RMSE).

    Com norm, previsões e referências normalizadas são levadas de volta às
    unidades brutas antes do cálculo.
    """
    if norm is not None:
        y_hat = denormalize(y_hat, norm, TARGET)
        y = denormalize(y, norm, TARGET)
    y_hat, y = _pair(y_hat, y)
    return MetricPair(r2=r2(y_hat, y), rmse=rmse(y_hat, y), n=int(y.size))
