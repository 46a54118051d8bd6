"""
Calibração EEATC (duas fases), modelos de fase única e varredura de features.

Fluxo de treino do EEATC:
    1. MLR em (X, y)
    2. ŷ_f = MLR(X); e_a = |ŷ_f - y|
    3. Nanny em [X | ŷ_f] contra e_a
    4. ê = Nanny(X, ŷ_f)
    5. Floresta em [X | ê] contra y

A previsão repete 2, 4 e 5 sem nunca ler a referência.
"""

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from .artifacts import load_json, save_json
from .config import CANONICAL_COLUMNS, DEFAULT_SEED, MODEL_KINDS, USEPA_R2_THRESHOLD, RunConfig
from .dataset import (
    TARGET,
    CalDataset,
    FeatureSpec,
    NormParams,
    as_frame,
    assemble_features,
    denormalize,
    normalize_apply,
    normalize_fit,
    train_test_split,
)
from .errors import BadConfig, CalibrationError, ConstantTarget, DataError, EmptyInput, NotFitted, ShapeMismatch
from .metrics import MetricPair, evaluate
from .nanny import NannyModel, nanny_estimate, nanny_fit
from .regress import (
    ForestModel,
    ForestParams,
    LinearModel,
    forest_fit,
    forest_predict,
    mlr_fit,
    mlr_predict,
    regressor_from_dict,
)

logger = logging.getLogger(__name__)

MODEL_FORMAT = "eeatc-model"
MODEL_VERSION = 1
# Deslocamento da semente do nanny em relação à da segunda fase
NANNY_SEED_OFFSET = 7919


@dataclass(frozen=True)
class EeatcConfig:
    """Parâmetros do treino (EEATC e fase única).

    Attributes:
        forest: Parâmetros da floresta da segunda fase (e do RF de fase única)
        nanny_forest: Parâmetros da floresta do nanny (None = os mesmos de forest)
        nanny_backbone: 'rf' ou 'mlr'
        nanny_holdout: Fração do treino reservada ao nanny (0 = mesmo conjunto)
        residual_tol: Erros absolutos abaixo disto viram zero exato
        seed: Semente da segunda fase; o nanny usa seed + NANNY_SEED_OFFSET
        n_jobs: Threads das florestas
        strict: MLR mal condicionada levanta RankDeficient
    """

    forest: ForestParams = field(default_factory=ForestParams)
    nanny_forest: Optional[ForestParams] = None
    nanny_backbone: str = "rf"
    nanny_holdout: float = 0.0
    residual_tol: float = 1e-9
    seed: int = DEFAULT_SEED
    n_jobs: int = 1
    strict: bool = False

    def __post_init__(self):
        if self.nanny_backbone not in ("rf", "mlr"):
            raise BadConfig(f"nanny_backbone inválido: {self.nanny_backbone}")
        if not 0.0 <= self.nanny_holdout < 1.0:
            raise BadConfig("nanny_holdout deve estar em [0, 1)")
        if self.residual_tol < 0:
            raise BadConfig("residual_tol deve ser >= 0")

    @property
    def nanny_params(self) -> ForestParams:
        return self.nanny_forest or self.forest

    @property
    def nanny_seed(self) -> int:
        return self.seed + NANNY_SEED_OFFSET

    @classmethod
    def from_run_config(cls, cfg: RunConfig, seed: Optional[int] = None) -> "EeatcConfig":
        forest = ForestParams(
            n_trees=cfg.n_trees,
            max_depth=cfg.max_depth,
            min_samples_leaf=cfg.min_samples_leaf,
            min_samples_split=cfg.min_samples_split,
            mtry=cfg.mtry,
            bootstrap=cfg.bootstrap,
        )
        return cls(
            forest=forest,
            nanny_backbone=cfg.nanny_backbone,
            nanny_holdout=cfg.nanny_holdout,
            seed=cfg.seed if seed is None else seed,
            n_jobs=cfg.n_jobs,
        )


def _features_of(X) -> np.ndarray:
    """Matriz de features; de um CalDataset só X é lido."""
    if isinstance(X, CalDataset):
        return X.X
    X = np.asarray(X, dtype=np.float64)
    return X.reshape(-1, 1) if X.ndim == 1 else X


def _require_target(ds: CalDataset) -> None:
    if not ds.has_target:
        raise DataError("Treino exige a coluna de referência y")


# ---------------------------------------------------------------------------
# Modelos
# ---------------------------------------------------------------------------

class EeatcModel:
    """Composição MLR -> nanny -> floresta.

    Attributes:
        phase1: MLR da primeira fase
        nanny: Estimador do erro absoluto da primeira fase
        phase2: Floresta em [X | ê]
        spec: Features usadas
        norm: Normalização aplicada no treino (None = unidades brutas)
    """

    kind = "eeatc"

    def __init__(self, phase1: LinearModel, nanny: NannyModel, phase2: ForestModel,
                 spec: FeatureSpec, norm: Optional[NormParams] = None):
        if not (phase1.fitted and nanny.fitted and phase2.fitted):
            raise NotFitted("EeatcModel exige as três partes treinadas")
        if phase2.n_features != len(spec) + 1:
            raise ShapeMismatch(f"Segunda fase com {phase2.n_features} features, esperado {len(spec) + 1}")
        self.phase1 = phase1
        self.nanny = nanny
        self.phase2 = phase2
        self.spec = spec
        self.norm = norm

    @property
    def fitted(self) -> bool:
        return True

    def estimate_error(self, X) -> np.ndarray:
        """ê por amostra, sem referência."""
        X = _features_of(X)
        return nanny_estimate(self.nanny, X, mlr_predict(self.phase1, X))

    def predict(self, X) -> np.ndarray:
        return eeatc_predict(self, X)

    def to_dict(self) -> dict:
        return {
            "phase1": self.phase1.to_dict(),
            "nanny": self.nanny.to_dict(),
            "phase2": self.phase2.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict, spec: FeatureSpec, norm: Optional[NormParams]) -> "EeatcModel":
        return cls(
            LinearModel.from_dict(data["phase1"]),
            NannyModel.from_dict(data["nanny"]),
            ForestModel.from_dict(data["phase2"]),
            spec,
            norm,
        )


class SinglePhaseModel:
    """Um único regressor (slr, mlr ou rf) sobre as features do spec.

    O SLR usa apenas a coluna s.
    """

    def __init__(self, kind: str, regressor, spec: FeatureSpec, norm: Optional[NormParams] = None):
        if kind not in ("slr", "mlr", "rf"):
            raise BadConfig(f"Modelo de fase única desconhecido: {kind}")
        self.kind = kind
        self.regressor = regressor
        self.spec = spec
        self.norm = norm

    @property
    def columns(self) -> List[int]:
        if self.kind == "slr":
            return [self.spec.features.index("s")]
        return list(range(len(self.spec)))

    @property
    def fitted(self) -> bool:
        return self.regressor.fitted

    def predict(self, X) -> np.ndarray:
        X = _features_of(X)
        if X.shape[1] != len(self.spec):
            raise ShapeMismatch(f"Esperadas {len(self.spec)} features, recebidas {X.shape[1]}")
        return self.regressor.predict(X[:, self.columns])

    def to_dict(self) -> dict:
        return {"regressor": self.regressor.to_dict()}

    @classmethod
    def from_dict(cls, kind: str, data: dict, spec: FeatureSpec,
                  norm: Optional[NormParams]) -> "SinglePhaseModel":
        return cls(kind, regressor_from_dict(data["regressor"]), spec, norm)


CalibrationModel = Union[EeatcModel, SinglePhaseModel]


def _holdout_rows(n: int, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Divide o treino entre a MLR e o nanny."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_holdout = int(math.floor(n * fraction + 0.5))
    n_holdout = min(max(n_holdout, 1), n - 1)
    return np.sort(order[n_holdout:]), np.sort(order[:n_holdout])


def eeatc_train(train: CalDataset, cfg: Optional[EeatcConfig] = None) -> EeatcModel:
    """Treina o EEATC.

    Args:
        train: Conjunto de treino com referência
        cfg: Parâmetros (padrão: EeatcConfig())

    Returns:
        EeatcModel treinado
    """
    cfg = cfg or EeatcConfig()
    _require_target(train)
    X, y = train.X, train.y
    names = train.spec.features

    phase1_rows = nanny_rows = np.arange(train.n_rows)
    if cfg.nanny_holdout > 0:
        phase1_rows, nanny_rows = _holdout_rows(train.n_rows, cfg.nanny_holdout, cfg.seed)
        logger.debug(f"Holdout do nanny: {len(phase1_rows)} linhas na MLR, {len(nanny_rows)} no nanny")

    phase1 = mlr_fit(X[phase1_rows], y[phase1_rows], feature_names=names, strict=cfg.strict)
    y_hat_f = mlr_predict(phase1, X[nanny_rows])
    e_a = np.abs(y_hat_f - y[nanny_rows])
    e_a[e_a < cfg.residual_tol] = 0.0

    nanny = nanny_fit(X[nanny_rows], y_hat_f, e_a, params=cfg.nanny_params, seed=cfg.nanny_seed,
                      backbone=cfg.nanny_backbone, n_jobs=cfg.n_jobs, feature_names=names)
    e_hat = nanny_estimate(nanny, X, mlr_predict(phase1, X))

    phase2 = forest_fit(np.column_stack([X, e_hat]), y, cfg.forest, seed=cfg.seed, n_jobs=cfg.n_jobs)
    logger.debug(f"EEATC treinado: MAE da MLR={float(e_a.mean()):.4f}, ê médio={float(e_hat.mean()):.4f}")
    return EeatcModel(phase1, nanny, phase2, train.spec, train.norm)


def eeatc_predict(model: EeatcModel, X) -> np.ndarray:
    """Previsão calibrada 𝒴̂ = RF([X | ê]), com ê = nanny(X, MLR(X))."""
    X = _features_of(X)
    if X.shape[1] != len(model.spec):
        raise ShapeMismatch(f"Esperadas {len(model.spec)} features, recebidas {X.shape[1]}")
    e_hat = model.estimate_error(X)
    return forest_predict(model.phase2, np.column_stack([X, e_hat]))


def single_phase_train(train: CalDataset, kind: str, cfg: Optional[EeatcConfig] = None) -> SinglePhaseModel:
    """Ajuste direto de um único modelo em (X, y)."""
    cfg = cfg or EeatcConfig()
    _require_target(train)
    if kind == "slr":
        column = train.column("s").reshape(-1, 1)
        regressor = mlr_fit(column, train.y, feature_names=("s",), strict=cfg.strict)
    elif kind == "mlr":
        regressor = mlr_fit(train.X, train.y, feature_names=train.spec.features, strict=cfg.strict)
    elif kind == "rf":
        regressor = forest_fit(train.X, train.y, cfg.forest, seed=cfg.seed, n_jobs=cfg.n_jobs)
    else:
        raise BadConfig(f"Modelo de fase única desconhecido: {kind}")
    return SinglePhaseModel(kind, regressor, train.spec, train.norm)


def train_model(train: CalDataset, kind: str, cfg: Optional[EeatcConfig] = None) -> CalibrationModel:
    """Treina qualquer tipo de modelo por nome."""
    if kind == "eeatc":
        return eeatc_train(train, cfg)
    return single_phase_train(train, kind, cfg)


# ---------------------------------------------------------------------------
# Persistência
# ---------------------------------------------------------------------------

def model_to_dict(model: CalibrationModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "spec": model.spec.to_dict(),
        "norm": None if model.norm is None else model.norm.to_dict(),
        "model": model.to_dict(),
    }


def model_from_dict(data: dict) -> CalibrationModel:
    if data.get("format") != MODEL_FORMAT:
        raise DataError("Arquivo não é um modelo EEATC")
    if data.get("version") != MODEL_VERSION:
        raise DataError(f"Versão de modelo não suportada: {data.get('version')}")
    spec = FeatureSpec.from_dict(data["spec"])
    norm = None if data.get("norm") is None else NormParams.from_dict(data["norm"])
    if data["kind"] == "eeatc":
        return EeatcModel.from_dict(data["model"], spec, norm)
    return SinglePhaseModel.from_dict(data["kind"], data["model"], spec, norm)


def save_model(model: CalibrationModel, path: Union[str, Path]) -> Path:
    path = save_json(path, model_to_dict(model))
    logger.info(f"Modelo {model.kind} salvo em: {path}")
    return path


def load_model(path: Union[str, Path]) -> CalibrationModel:
    try:
        data = load_json(path)
    except FileNotFoundError:
        raise DataError(f"Modelo não encontrado: {path}") from None
    except ValueError as e:
        raise DataError(f"Modelo corrompido ({path}): {e}") from None
    return model_from_dict(data)


# ---------------------------------------------------------------------------
# Uso sobre registros (CLI)
# ---------------------------------------------------------------------------

def prepare_training_set(records: pd.DataFrame, spec: FeatureSpec, normalize: bool = True) -> CalDataset:
    """Monta o conjunto de treino a partir de registros limpos (normalizado por padrão)."""
    ds = assemble_features(records, spec)
    if not normalize:
        return ds
    return normalize_apply(ds, normalize_fit(ds))


def predict_records(model: CalibrationModel, records: pd.DataFrame) -> pd.DataFrame:
    """Previsões em unidades brutas para registros sem referência.

    Returns:
        DataFrame com timestamp, y_hat e (EEATC) e_hat
    """
    ds = assemble_features(records, model.spec, require_target=False)
    if model.norm is not None:
        ds = normalize_apply(ds, model.norm)
    y_hat = model.predict(ds.X)
    out = pd.DataFrame({"timestamp": ds.timestamps})
    if model.norm is not None and TARGET in model.norm:
        out["y_hat"] = denormalize(y_hat, model.norm, TARGET)
    else:
        out["y_hat"] = y_hat
    if isinstance(model, EeatcModel):
        e_hat = model.estimate_error(ds.X)
        if model.norm is not None and TARGET in model.norm:
            e_hat = e_hat * model.norm.std(TARGET)
        out["e_hat"] = e_hat
    return out


def evaluate_records(model: CalibrationModel, records: pd.DataFrame,
                     metric_space: str = "normalized") -> MetricPair:
    """R²/RMSE do modelo em registros com referência."""
    ds = assemble_features(records, model.spec)
    if model.norm is not None:
        ds = normalize_apply(ds, model.norm)
    y_hat = model.predict(ds.X)
    if metric_space == "raw" and model.norm is not None:
        return evaluate(y_hat, ds.y, norm=model.norm)
    return evaluate(y_hat, ds.y)


# ---------------------------------------------------------------------------
# Varredura de subconjuntos de features
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    """Parâmetros da varredura.

    Attributes:
        model: Parâmetros de treino (a semente é trocada a cada repetição)
        train_fraction: Fração de treino de cada divisão
        normalize_scope: 'train_only' (estatísticas só do treino) ou 'full'
        metric_space: 'normalized' ou 'raw'
        lag: Atraso usado em s_lag1
        n_jobs: Células avaliadas em paralelo
    """

    model: EeatcConfig = field(default_factory=EeatcConfig)
    train_fraction: float = 0.75
    normalize_scope: str = "train_only"
    metric_space: str = "normalized"
    lag: int = 1
    n_jobs: int = 1

    def __post_init__(self):
        if self.normalize_scope not in ("train_only", "full"):
            raise BadConfig(f"normalize_scope inválido: {self.normalize_scope}")
        if self.metric_space not in ("normalized", "raw"):
            raise BadConfig(f"metric_space inválido: {self.metric_space}")

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "SweepConfig":
        return cls(
            model=EeatcConfig.from_run_config(cfg),
            train_fraction=cfg.train_fraction,
            normalize_scope=cfg.normalize_scope,
            metric_space=cfg.metric_space,
            lag=cfg.lag,
            n_jobs=cfg.n_jobs,
        )


@dataclass(frozen=True)
class EvalRun:
    """Previsões de uma combinação (sensor, modelo, subconjunto, semente)."""

    sensor: str
    kind: str
    features: Tuple[str, ...]
    seed: int
    train_true: Tuple[float, ...]
    train_pred: Tuple[float, ...]
    test_true: Tuple[float, ...]
    test_pred: Tuple[float, ...]

    @property
    def train(self) -> MetricPair:
        return evaluate(self.train_pred, self.train_true)

    @property
    def test(self) -> MetricPair:
        return evaluate(self.test_pred, self.test_true)

    def to_dict(self) -> dict:
        return {
            "sensor": self.sensor,
            "kind": self.kind,
            "features": list(self.features),
            "seed": self.seed,
            "train_true": list(self.train_true),
            "train_pred": list(self.train_pred),
            "test_true": list(self.test_true),
            "test_pred": list(self.test_pred),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalRun":
        return cls(
            sensor=data["sensor"],
            kind=data["kind"],
            features=tuple(data["features"]),
            seed=int(data["seed"]),
            train_true=tuple(float(v) for v in data["train_true"]),
            train_pred=tuple(float(v) for v in data["train_pred"]),
            test_true=tuple(float(v) for v in data["test_true"]),
            test_pred=tuple(float(v) for v in data["test_pred"]),
        )


@dataclass(frozen=True)
class ReportRow:
    """Linha do relatório: médias (e desvios) sobre as sementes."""

    sensor: str
    kind: str
    features: Tuple[str, ...]
    r2_train: float
    r2_test: float
    rmse_train: float
    rmse_test: float
    r2_train_std: float
    r2_test_std: float
    rmse_train_std: float
    rmse_test_std: float
    n_seeds: int
    best: bool = False
    meets_usepa: bool = False

    @property
    def label(self) -> str:
        return ",".join(self.features)

    def to_dict(self) -> dict:
        data = {name: getattr(self, name) for name in self.__dataclass_fields__}
        data["features"] = list(self.features)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ReportRow":
        values = dict(data)
        values["features"] = tuple(values["features"])
        return cls(**values)


@dataclass(frozen=True)
class EvalReport:
    """Relatório da varredura.

    Attributes:
        rows: Uma linha por (sensor, modelo, subconjunto)
        runs: Previsões que originam cada métrica
        seeds: Sementes usadas
        data_identity: Identificação dos dados por sensor (linhas e sha256)
        config: Snapshot da configuração
        metric_space: Espaço das métricas
        skipped: Células que falharam (registradas e ignoradas)
    """

    rows: Tuple[ReportRow, ...]
    runs: Tuple[EvalRun, ...] = ()
    seeds: Tuple[int, ...] = ()
    data_identity: Mapping[str, dict] = field(default_factory=dict)
    config: Mapping[str, object] = field(default_factory=dict)
    metric_space: str = "normalized"
    skipped: Tuple[dict, ...] = ()

    def best_rows(self) -> List[ReportRow]:
        return [row for row in self.rows if row.best]

    def recompute(self) -> "EvalReport":
        """Recalcula as linhas a partir das previsões guardadas."""
        return replace(self, rows=aggregate_runs(self.runs))

    def to_dict(self) -> dict:
        return {
            "rows": [row.to_dict() for row in self.rows],
            "runs": [run.to_dict() for run in self.runs],
            "seeds": list(self.seeds),
            "data_identity": {k: dict(v) for k, v in self.data_identity.items()},
            "config": dict(self.config),
            "metric_space": self.metric_space,
            "skipped": [dict(s) for s in self.skipped],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(
            rows=tuple(ReportRow.from_dict(r) for r in data["rows"]),
            runs=tuple(EvalRun.from_dict(r) for r in data.get("runs", [])),
            seeds=tuple(int(s) for s in data.get("seeds", [])),
            data_identity=data.get("data_identity", {}),
            config=data.get("config", {}),
            metric_space=data.get("metric_space", "normalized"),
            skipped=tuple(data.get("skipped", [])),
        )


def _std(values: Sequence[float]) -> float:
    return float(np.std(values)) if len(values) > 1 else 0.0


def aggregate_runs(runs: Sequence[EvalRun]) -> Tuple[ReportRow, ...]:
    """Agrupa as execuções por (sensor, modelo, subconjunto) e marca a melhor.

    A melhor linha de cada (sensor, modelo) tem o maior R² de teste médio;
    empates vão para o menor RMSE de teste.
    """
    groups: Dict[Tuple[str, str, Tuple[str, ...]], List[EvalRun]] = {}
    for run in runs:
        groups.setdefault((run.sensor, run.kind, run.features), []).append(run)

    rows = []
    for (sensor, kind, features), members in groups.items():
        train = [m.train for m in members]
        test = [m.test for m in members]
        r2_test = float(np.mean([p.r2 for p in test]))
        rows.append(ReportRow(
            sensor=sensor,
            kind=kind,
            features=features,
            r2_train=float(np.mean([p.r2 for p in train])),
            r2_test=r2_test,
            rmse_train=float(np.mean([p.rmse for p in train])),
            rmse_test=float(np.mean([p.rmse for p in test])),
            r2_train_std=_std([p.r2 for p in train]),
            r2_test_std=_std([p.r2 for p in test]),
            rmse_train_std=_std([p.rmse for p in train]),
            rmse_test_std=_std([p.rmse for p in test]),
            n_seeds=len(members),
            meets_usepa=r2_test >= USEPA_R2_THRESHOLD,
        ))

    best: Dict[Tuple[str, str], int] = {}
    for i, row in enumerate(rows):
        key = (row.sensor, row.kind)
        j = best.get(key)
        if j is None or (row.r2_test, -row.rmse_test) > (rows[j].r2_test, -rows[j].rmse_test):
            best[key] = i
    winners = set(best.values())
    return tuple(replace(row, best=i in winners) for i, row in enumerate(rows))


def data_identity(records: pd.DataFrame) -> dict:
    """Número de linhas e sha256 dos valores canônicos."""
    frame = as_frame(records)
    values = np.ascontiguousarray(frame[list(CANONICAL_COLUMNS)].to_numpy(dtype=np.float64))
    return {"rows": int(len(frame)), "sha256": hashlib.sha256(values.tobytes()).hexdigest()}


def _split_normalized(ds: CalDataset, cfg: SweepConfig, seed: int) -> Tuple[CalDataset, CalDataset]:
    train, test = train_test_split(ds, cfg.train_fraction, seed)
    norm = normalize_fit(train if cfg.normalize_scope == "train_only" else ds)
    return normalize_apply(train, norm), normalize_apply(test, norm)


def _evaluate_cell(sensor: str, records: pd.DataFrame, features: Tuple[str, ...],
                   kinds: Sequence[str], seed: int, cfg: SweepConfig) -> List[EvalRun]:
    """Uma divisão (compartilhada por todos os modelos) de um subconjunto."""
    spec = FeatureSpec(features, lag=cfg.lag)
    ds = assemble_features(records, spec)
    train, test = _split_normalized(ds, cfg, seed)
    for part, target in (("treino", train.y), ("teste", test.y)):
        if target.shape[0] < 2:
            raise EmptyInput(f"Parte de {part} com menos de 2 amostras")
        if np.ptp(target) == 0.0:
            raise ConstantTarget(f"Alvo constante na parte de {part}")
    model_cfg = replace(cfg.model, seed=seed, n_jobs=1 if cfg.n_jobs > 1 else cfg.model.n_jobs)

    runs = []
    for kind in kinds:
        model = train_model(train, kind, model_cfg)
        train_pred, test_pred = model.predict(train.X), model.predict(test.X)
        train_true, test_true = train.y, test.y
        if cfg.metric_space == "raw":
            norm = train.norm
            train_pred, test_pred = denormalize(train_pred, norm), denormalize(test_pred, norm)
            train_true, test_true = denormalize(train_true, norm), denormalize(test_true, norm)
        run = EvalRun(
            sensor=sensor,
            kind=kind,
            features=features,
            seed=seed,
            train_true=tuple(train_true.tolist()),
            train_pred=tuple(np.asarray(train_pred).tolist()),
            test_true=tuple(test_true.tolist()),
            test_pred=tuple(np.asarray(test_pred).tolist()),
        )
        runs.append(run)
    return runs


def feature_sweep(
    source: Union[pd.DataFrame, Mapping[str, pd.DataFrame]],
    kinds: Sequence[str],
    subsets: Sequence[Sequence[str]],
    seeds: Sequence[int],
    cfg: Optional[SweepConfig] = None,
    config_snapshot: Optional[Mapping[str, object]] = None,
    progress: bool = False,
) -> EvalReport:
    """Avalia cada (modelo, subconjunto) em divisões repetidas.

    Args:
        source: Registros limpos, ou {sensor: registros} para vários sensores
        kinds: Tipos de modelo ('slr', 'mlr', 'rf', 'eeatc')
        subsets: Subconjuntos de features
        seeds: Uma divisão 75/25 por semente
        cfg: Parâmetros da varredura
        config_snapshot: Configuração gravada no relatório
        progress: Exibe barra de progresso

    Returns:
        EvalReport com a melhor linha de cada modelo marcada
    """
    cfg = cfg or SweepConfig()
    sources = {"s": source} if isinstance(source, pd.DataFrame) else dict(source)
    if not sources:
        raise DataError("Nenhuma fonte de dados para a varredura")
    unknown = [k for k in kinds if k not in MODEL_KINDS]
    if unknown:
        raise BadConfig(f"Modelos desconhecidos: {unknown}")
    subsets = [tuple(s) for s in subsets]
    seeds = [int(s) for s in seeds]
    if not subsets or not kinds or not seeds:
        raise BadConfig("Varredura exige ao menos um modelo, um subconjunto e uma semente")
    if "slr" in kinds and ("s",) not in subsets:
        logger.warning("SLR só é avaliado no subconjunto {s}, que não está na varredura")

    cells = []
    for sensor in sources:
        for features in subsets:
            cell_kinds = [k for k in kinds if k != "slr" or features == ("s",)]
            if not cell_kinds:
                continue
            for seed in seeds:
                cells.append((sensor, features, cell_kinds, seed))
    logger.info(f"Varredura: {len(cells)} células ({len(sources)} sensor(es), "
                f"{len(subsets)} subconjunto(s), {len(seeds)} semente(s))")

    def run_cell(cell):
        sensor, features, cell_kinds, seed = cell
        try:
            return _evaluate_cell(sensor, sources[sensor], features, cell_kinds, seed, cfg), None
        except CalibrationError as e:
            logger.warning(f"Célula ignorada ({sensor}, {','.join(features)}, semente {seed}): {e}")
            return [], {"sensor": sensor, "features": list(features), "seed": seed, "error": str(e)}

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            results = list(tqdm(pool.map(run_cell, cells), total=len(cells),
                                desc="Varredura", disable=not progress))
    else:
        results = [run_cell(c) for c in tqdm(cells, desc="Varredura", disable=not progress)]

    runs = [run for cell_runs, _ in results for run in cell_runs]
    skipped = tuple(err for _, err in results if err is not None)
    if not runs:
        raise DataError("Nenhuma célula da varredura pôde ser avaliada")

    # ordem das linhas: sensor, modelo (na ordem pedida), subconjunto
    kind_order = {k: i for i, k in enumerate(kinds)}
    subset_order = {s: i for i, s in enumerate(subsets)}
    sensor_order = {s: i for i, s in enumerate(sources)}
    runs.sort(key=lambda r: (sensor_order[r.sensor], kind_order[r.kind], subset_order[r.features], r.seed))

    return EvalReport(
        rows=aggregate_runs(runs),
        runs=tuple(runs),
        seeds=tuple(seeds),
        data_identity={sensor: data_identity(frame) for sensor, frame in sources.items()},
        config=dict(config_snapshot or {}),
        metric_space=cfg.metric_space,
        skipped=skipped,
    )
