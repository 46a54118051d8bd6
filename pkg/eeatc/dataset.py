"""
Modelo de dados tabular da calibração.

Um conjunto de registros é um pandas.DataFrame com as colunas canônicas
timestamp, s, t, rh, y, lat, lon, speed (float64, NaN = ausente). A partir
dele este módulo monta as matrizes de features (φ = s,t,rh e φ' = φ + s(t-1)),
normaliza por média/desvio padrão e divide em treino/teste.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .config import CANONICAL_COLUMNS, FEATURE_NAMES
from .errors import (
    BadConfig,
    DataError,
    EmptyAfterDrop,
    EmptyInput,
    MissingColumn,
    NonMonotonicTimestamps,
    TooFewRows,
    ZeroVariance,
)

logger = logging.getLogger(__name__)

TARGET = "y"
LAG_FEATURE = "s_lag1"


@dataclass(frozen=True)
class SampleRecord:
    """Uma observação bruta com carimbo de tempo (UTC, segundos desde a epoch).

    Unidades: s e y em µg/m³, t em °C, rh em %, lat/lon em graus, speed em km/h.
    """

    timestamp: float
    s: float
    t: Optional[float] = None
    rh: Optional[float] = None
    y: Optional[float] = None
    lat: Optional[float] = None
    lon: Optional[float] = None
    speed: Optional[float] = None

    def __post_init__(self):
        if not self.timestamp > 0:
            raise DataError(f"timestamp deve ser positivo: {self.timestamp}")
        if self.rh is not None and not 0.0 <= self.rh <= 100.0:
            raise DataError(f"rh fora de [0, 100]: {self.rh}")
        if self.s is not None and self.s < 0:
            raise DataError(f"s negativo: {self.s}")
        if self.y is not None and self.y < 0:
            raise DataError(f"y negativo: {self.y}")

    def to_row(self) -> Dict[str, float]:
        return {name: (np.nan if getattr(self, name) is None else float(getattr(self, name)))
                for name in CANONICAL_COLUMNS}

    @classmethod
    def from_row(cls, row: Mapping[str, float]) -> "SampleRecord":
        values = {}
        for name in CANONICAL_COLUMNS:
            value = row.get(name)
            values[name] = None if value is None or pd.isna(value) else float(value)
        return cls(**values)


def empty_frame() -> pd.DataFrame:
    return pd.DataFrame({name: pd.Series(dtype="float64") for name in CANONICAL_COLUMNS})


def as_frame(records: Union[pd.DataFrame, Iterable[SampleRecord]]) -> pd.DataFrame:
    """Converte registros para o DataFrame canônico (cópia, colunas ordenadas)."""
    if isinstance(records, pd.DataFrame):
        frame = records.copy()
    else:
        rows = [r.to_row() for r in records]
        frame = pd.DataFrame(rows) if rows else empty_frame()
    for name in CANONICAL_COLUMNS:
        if name not in frame.columns:
            frame[name] = np.nan
    frame = frame[list(CANONICAL_COLUMNS)].astype("float64")
    return frame.reset_index(drop=True)


def to_records(frame: pd.DataFrame) -> List[SampleRecord]:
    return [SampleRecord.from_row(row) for row in frame.to_dict(orient="records")]


def describe_records(records: pd.DataFrame,
                     columns: Sequence[str] = ("s", "y", "rh", "t", "speed")) -> pd.DataFrame:
    """Tabela Min/Max/Mean/Std por parâmetro, em unidades brutas."""
    present = [c for c in columns if c in records.columns and records[c].notna().any()]
    if not present:
        raise EmptyInput("Nenhuma coluna com dados para descrever")
    stats = records[present].agg(["min", "max", "mean", "std"])
    stats.index = ["Min", "Max", "Mean", "Std"]
    return stats


@dataclass(frozen=True)
class FeatureSpec:
    """Ordem das features e alvo.

    Attributes:
        features: Nomes em ordem, tirados de {s, t, rh, s_lag1}
        target: Sempre 'y'
        lag: Atraso (em buckets) usado na coluna s_lag1
    """

    features: Tuple[str, ...]
    target: str = TARGET
    lag: int = 1

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise BadConfig("FeatureSpec vazio")
        if len(set(self.features)) != len(self.features):
            raise BadConfig(f"Features duplicadas: {self.features}")
        unknown = [f for f in self.features if f not in FEATURE_NAMES]
        if unknown:
            raise BadConfig(f"Features desconhecidas: {unknown}")
        if "s" not in self.features:
            raise BadConfig("A feature 's' é obrigatória")
        if self.target != TARGET:
            raise BadConfig(f"Alvo fixo em '{TARGET}'")
        if self.lag < 1:
            raise BadConfig("lag deve ser >= 1")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def uses_lag(self) -> bool:
        return LAG_FEATURE in self.features

    @property
    def label(self) -> str:
        return ",".join(self.features)

    def to_dict(self) -> dict:
        return {"features": list(self.features), "target": self.target, "lag": self.lag}

    @classmethod
    def from_dict(cls, data: Mapping) -> "FeatureSpec":
        return cls(tuple(data["features"]), data.get("target", TARGET), int(data.get("lag", 1)))


@dataclass(frozen=True)
class NormParams:
    """Média e desvio padrão (divisor N-1) por coluna."""

    stats: Mapping[str, Tuple[float, float]] = field(default_factory=dict)

    def __contains__(self, column: str) -> bool:
        return column in self.stats

    @property
    def columns(self) -> Tuple[str, ...]:
        return tuple(self.stats)

    def mean(self, column: str) -> float:
        if column not in self.stats:
            raise MissingColumn(column)
        return self.stats[column][0]

    def std(self, column: str) -> float:
        if column not in self.stats:
            raise MissingColumn(column)
        return self.stats[column][1]

    def to_dict(self) -> dict:
        return {name: {"mean": m, "std": s} for name, (m, s) in self.stats.items()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "NormParams":
        return cls({name: (float(v["mean"]), float(v["std"])) for name, v in data.items()})


@dataclass(frozen=True)
class CalDataset:
    """Matriz de features alinhada ao vetor alvo.

    Attributes:
        X: N x F, na ordem de spec.features
        y: N valores do alvo, ou None para dados sem referência
        spec: Especificação das features
        norm: Parâmetros usados na normalização (None = unidades brutas)
        timestamps: Carimbo de tempo de cada linha
    """

    X: np.ndarray
    y: Optional[np.ndarray]
    spec: FeatureSpec
    norm: Optional[NormParams] = None
    timestamps: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        if X.ndim != 2:
            raise DataError(f"X deve ser 2-D, recebido shape {X.shape}")
        if X.shape[1] != len(self.spec):
            raise DataError(f"X tem {X.shape[1]} colunas, spec tem {len(self.spec)}")
        if not np.all(np.isfinite(X)):
            raise DataError("X contém valores ausentes ou não finitos")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        if self.y is not None:
            y = np.array(self.y, dtype=np.float64, copy=True).reshape(-1)
            if y.shape[0] != X.shape[0]:
                raise DataError(f"y tem {y.shape[0]} linhas, X tem {X.shape[0]}")
            if not np.all(np.isfinite(y)):
                raise DataError("y contém valores ausentes ou não finitos")
            y.setflags(write=False)
            object.__setattr__(self, "y", y)
        if self.timestamps is not None:
            ts = np.array(self.timestamps, dtype=np.float64, copy=True).reshape(-1)
            ts.setflags(write=False)
            object.__setattr__(self, "timestamps", ts)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def has_target(self) -> bool:
        return self.y is not None

    @property
    def is_normalized(self) -> bool:
        return self.norm is not None

    def column(self, name: str) -> np.ndarray:
        if name not in self.spec.features:
            raise MissingColumn(name)
        return self.X[:, self.spec.features.index(name)]

    def subset(self, rows: np.ndarray) -> "CalDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return CalDataset(
            X=self.X[rows],
            y=None if self.y is None else self.y[rows],
            spec=self.spec,
            norm=self.norm,
            timestamps=None if self.timestamps is None else self.timestamps[rows],
        )

    def without_target(self) -> "CalDataset":
        return CalDataset(self.X, None, self.spec, self.norm, self.timestamps)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.X, columns=list(self.spec.features))
        if self.y is not None:
            frame[TARGET] = self.y
        return frame


def _columns_for(spec: FeatureSpec, with_target: bool) -> List[str]:
    return list(spec.features) + ([TARGET] if with_target else [])


def _check_sorted(timestamps: pd.Series) -> None:
    if not timestamps.is_monotonic_increasing:
        raise NonMonotonicTimestamps("Registros não estão ordenados no tempo")


def _grid_width(timestamps: np.ndarray) -> float:
    """Largura do bucket de uma série uniformemente agrupada.

    Todos os intervalos precisam ser múltiplos inteiros do menor intervalo.
    """
    diffs = np.diff(timestamps)
    positive = diffs[diffs > 0]
    if positive.size == 0:
        raise DataError("Não há intervalos de tempo para definir o atraso")
    if positive.size != diffs.size:
        raise NonMonotonicTimestamps("Timestamps repetidos em série agrupada")
    width = float(positive.min())
    ratio = diffs / width
    if not np.allclose(ratio, np.round(ratio), rtol=0.0, atol=1e-6):
        raise DataError("s_lag1 exige registros em grade uniforme (use bucket_average)")
    return width


def _feature_frame(records: pd.DataFrame, spec: FeatureSpec) -> pd.DataFrame:
    """Monta as colunas do spec (incluindo o atraso) antes de descartar linhas."""
    frame = as_frame(records)
    _check_sorted(frame["timestamp"])
    out = pd.DataFrame({"timestamp": frame["timestamp"]})
    for name in spec.features:
        if name == LAG_FEATURE:
            continue
        out[name] = frame[name]
    if spec.uses_lag:
        lagged = frame["s"].shift(spec.lag)
        if len(frame) > spec.lag:
            width = _grid_width(frame["timestamp"].to_numpy())
            gap = frame["timestamp"] - frame["timestamp"].shift(spec.lag)
            # o atraso só vale quando a linha anterior está exatamente lag buckets antes
            contiguous = np.isclose(gap.to_numpy(), spec.lag * width, rtol=0.0, atol=1e-6)
            lagged = lagged.where(contiguous)
        out[LAG_FEATURE] = lagged
    out[TARGET] = frame[TARGET]
    return out


def _table_columns(table: Union[pd.DataFrame, CalDataset], spec: Optional[FeatureSpec]) -> pd.DataFrame:
    if isinstance(table, CalDataset):
        return table.to_frame()
    if spec is None:
        raise BadConfig("spec é obrigatório quando a entrada é um DataFrame de registros")
    frame = _feature_frame(table, spec)
    return frame.drop(columns=["timestamp"])


def normalize_fit(table: Union[pd.DataFrame, CalDataset], spec: Optional[FeatureSpec] = None) -> NormParams:
    """Calcula média e desvio padrão amostral (N-1) de cada coluna do spec e do alvo.

    Args:
        table: Registros brutos ou CalDataset em unidades brutas
        spec: Especificação das features (obrigatória para registros)

    Returns:
        NormParams com uma entrada por coluna
    """
    if isinstance(table, CalDataset):
        if table.is_normalized:
            raise DataError("normalize_fit espera dados em unidades brutas")
        spec = table.spec
    frame = _table_columns(table, spec)
    if len(frame) < 2:
        raise EmptyInput(f"São necessários ao menos 2 registros (recebidos {len(frame)})")
    stats = {}
    for name in _columns_for(spec, with_target=True):
        if name not in frame.columns:
            raise MissingColumn(name)
        values = frame[name].dropna().to_numpy(dtype=np.float64)
        if name == TARGET and values.size == 0:
            # dados sem referência: alvo não entra na normalização
            continue
        if values.size < 2:
            raise EmptyInput(f"Coluna {name} com menos de 2 valores")
        mean = float(np.mean(values))
        std = float(np.std(values, ddof=1))
        if not std > 0.0:
            raise ZeroVariance(name)
        stats[name] = (mean, std)
    logger.debug(f"Parâmetros de normalização: {stats}")
    return NormParams(stats)


def normalize_apply(table: Union[pd.DataFrame, CalDataset], norm: NormParams,
                    spec: Optional[FeatureSpec] = None) -> CalDataset:
    """Aplica (valor - média) / desvio em cada célula.

    Args:
        table: CalDataset bruto (ou registros, com spec)
        norm: Parâmetros de normalização
        spec: Especificação (apenas para registros)

    Returns:
        CalDataset normalizado
    """
    if not isinstance(table, CalDataset):
        if spec is None:
            raise BadConfig("spec é obrigatório quando a entrada é um DataFrame de registros")
        table = assemble_features(table, spec, require_target=TARGET in norm)
    if table.is_normalized:
        raise DataError("Conjunto já está normalizado")
    for name in table.spec.features:
        if name not in norm:
            raise MissingColumn(name)
    if table.has_target and TARGET not in norm:
        raise MissingColumn(TARGET)
    means = np.array([norm.mean(n) for n in table.spec.features])
    stds = np.array([norm.std(n) for n in table.spec.features])
    X = (table.X - means) / stds
    y = None
    if table.has_target:
        y = (table.y - norm.mean(TARGET)) / norm.std(TARGET)
    return CalDataset(X, y, table.spec, norm, table.timestamps)


def denormalize(values, norm: NormParams, column: str = TARGET):
    """Inverso de normalize_apply para uma coluna: valor * desvio + média."""
    mean, std = norm.mean(column), norm.std(column)
    if np.isscalar(values):
        return float(values) * std + mean
    return np.asarray(values, dtype=np.float64) * std + mean


def train_test_split(ds: CalDataset, train_fraction: float = 0.75,
                     seed: int = 0) -> Tuple[CalDataset, CalDataset]:
    """Partição aleatória (semente fixa) das linhas em treino e teste.

    O tamanho do treino é round(N * fração), limitado a [1, N-1]; as linhas
    de cada parte mantêm a ordem temporal original.
    """
    if not 0.0 < train_fraction < 1.0:
        raise BadConfig(f"train_fraction deve estar em (0, 1): {train_fraction}")
    n = ds.n_rows
    if n < 4:
        raise TooFewRows(f"São necessárias ao menos 4 linhas para dividir (recebidas {n})")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = int(math.floor(n * train_fraction + 0.5))
    n_train = min(max(n_train, 1), n - 1)
    train_rows = np.sort(order[:n_train])
    test_rows = np.sort(order[n_train:])
    return ds.subset(train_rows), ds.subset(test_rows)


def assemble_features(records: Union[pd.DataFrame, Iterable[SampleRecord]], spec: FeatureSpec,
                      norm: Optional[NormParams] = None,
                      require_target: bool = True) -> CalDataset:
    """Monta a matriz de features na ordem do spec.

    Com s_lag1, a linha i recebe o s da linha i-lag e as primeiras linhas
    (sem antecessor) são descartadas. Linhas com qualquer campo necessário
    ausente também são descartadas.

    Args:
        records: Registros ordenados no tempo
        spec: Especificação das features
        norm: Se informado, o resultado já sai normalizado
        require_target: Exige e mantém a coluna y; False monta dados só de features

    Returns:
        CalDataset
    """
    frame = as_frame(records)
    if frame.empty:
        raise EmptyAfterDrop("Nenhum registro de entrada")
    table = _feature_frame(frame, spec)
    required = list(spec.features) + ([TARGET] if require_target else [])
    complete = table.dropna(subset=required)
    dropped = len(table) - len(complete)
    if dropped:
        logger.info(f"Descartadas {dropped} linhas com campos ausentes ({len(complete)} restantes)")
    if complete.empty:
        raise EmptyAfterDrop("Nenhuma linha completa após descartar campos ausentes")
    ds = CalDataset(
        X=complete[list(spec.features)].to_numpy(dtype=np.float64),
        y=complete[TARGET].to_numpy(dtype=np.float64) if require_target else None,
        spec=spec,
        timestamps=complete["timestamp"].to_numpy(dtype=np.float64),
    )
    if norm is not None:
        ds = normalize_apply(ds, norm)
    return ds
