"""
Configuração do toolkit.

Os valores padrão vêm de variáveis de ambiente (arquivo .env carregado com
python-dotenv). Uma execução do CLI monta um RunConfig a partir de:
padrões < ambiente < arquivo de configuração (key=value) < flags.
"""

import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, FrozenSet, Mapping, Optional, Tuple

from dotenv import dotenv_values, load_dotenv

from .errors import BadConfig

load_dotenv()

# Padrões globais
DEFAULT_SEED = int(os.getenv("EEATC_SEED", "42"))
DEFAULT_N_TREES = int(os.getenv("EEATC_N_TREES", "200"))
DEFAULT_N_JOBS = int(os.getenv("EEATC_N_JOBS", "1"))
DEFAULT_OUTPUT_DIR = os.getenv("EEATC_OUTPUT_DIR", "runs")
LOG_LEVEL = os.getenv("EEATC_LOG_LEVEL", "INFO")

# Guia da USEPA para uso indicativo de sensores de baixo custo
USEPA_R2_THRESHOLD = 0.8

CANONICAL_COLUMNS = ("timestamp", "s", "t", "rh", "y", "lat", "lon", "speed")
FEATURE_NAMES = ("s", "t", "rh", "s_lag1")
MODEL_KINDS = ("slr", "mlr", "rf", "eeatc")

# Subconjuntos avaliados no sweep quando nada é informado
DEFAULT_FEATURE_SETS = (
    ("s",),
    ("s", "t"),
    ("s", "rh"),
    ("s", "t", "rh"),
)


def parse_feature_sets(text: str) -> Tuple[Tuple[str, ...], ...]:
    """Converte 's,t,rh;s,t,rh,s_lag1' em tupla de subconjuntos."""
    subsets = []
    for chunk in text.split(";"):
        names = tuple(n.strip() for n in chunk.split(",") if n.strip())
        if names:
            subsets.append(names)
    if not subsets:
        raise BadConfig(f"Lista de features vazia: {text!r}")
    return tuple(subsets)


def parse_pairs(text: str) -> Dict[str, str]:
    """Converte 'a:b,c:d' em {'a': 'b', 'c': 'd'}."""
    result = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise BadConfig(f"Par inválido (esperado chave:valor): {item!r}")
        key, value = item.split(":", 1)
        result[key.strip()] = value.strip()
    return result


def parse_bounds(text: str) -> Dict[str, Tuple[float, float]]:
    """Converte 's:0:1000,rh:0:100' em limites físicos por campo."""
    bounds = {}
    for name, rest in parse_pairs(text).items():
        try:
            low, high = (float(v) for v in rest.split(":"))
        except ValueError:
            raise BadConfig(f"Limite inválido para {name}: {rest!r}") from None
        bounds[name] = (low, high)
    return bounds


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on", "sim"):
        return True
    if value in ("0", "false", "no", "off", "nao", "não"):
        return False
    raise BadConfig(f"Valor booleano inválido: {text!r}")


def _parse_optional_int(text: str) -> Optional[int]:
    text = text.strip().lower()
    if text in ("", "none", "auto"):
        return None
    return int(text)


@dataclass(frozen=True)
class RunConfig:
    """Configuração completa de uma execução.

    Attributes:
        inputs: Arquivos CSV de entrada
        column_map: Coluna de origem -> campo canônico
        timestamp_format: Formato strptime do timestamp (None = epoch/ISO-8601)
        units: Campo canônico -> dica de unidade
        bounds: Limites físicos por campo
        zscore_k: Limiar do z-score robusto
        bucket_seconds: Largura do bucket de média
        speed_threshold: Velocidade abaixo da qual o veículo está parado (km/h)
        stationary_run: Buckets consecutivos para caracterizar parada
        mobile: Implantação móvel (aplica remoção de partidas/paradas)
        feature_sets: Subconjuntos de features
        models: Tipos de modelo
        sensors: Colunas de sensores para varredura multi-sensor
        lag: Ordem do atraso usado em s_lag1
        n_trees, max_depth, min_samples_leaf, min_samples_split, mtry, bootstrap:
            Parâmetros da floresta
        nanny_backbone: 'rf' ou 'mlr'
        nanny_holdout: Fração do treino reservada para o nanny
        train_fraction: Fração de treino
        seed: Semente base
        repetitions: Número de divisões aleatórias no sweep
        normalize_scope: 'train_only' ou 'full'
        metric_space: 'normalized' ou 'raw'
        n_jobs: Threads
        output_dir: Diretório de saída
        supplied: Chaves informadas por arquivo ou flag (fora do snapshot)
    """

    inputs: Tuple[str, ...] = ()
    column_map: Mapping[str, str] = field(default_factory=dict)
    timestamp_format: Optional[str] = None
    units: Mapping[str, str] = field(default_factory=dict)
    bounds: Mapping[str, Tuple[float, float]] = field(default_factory=dict)
    zscore_k: float = 4.0
    bucket_seconds: float = 60.0
    speed_threshold: float = 1.0
    stationary_run: int = 1
    mobile: bool = False
    feature_sets: Tuple[Tuple[str, ...], ...] = DEFAULT_FEATURE_SETS
    models: Tuple[str, ...] = ("mlr", "rf", "eeatc")
    sensors: Tuple[str, ...] = ()
    lag: int = 1
    n_trees: int = DEFAULT_N_TREES
    max_depth: Optional[int] = None
    min_samples_leaf: int = 2
    min_samples_split: int = 4
    mtry: Optional[int] = None
    bootstrap: bool = True
    nanny_backbone: str = "rf"
    nanny_holdout: float = 0.0
    train_fraction: float = 0.75
    seed: int = DEFAULT_SEED
    repetitions: int = 5
    normalize_scope: str = "train_only"
    metric_space: str = "normalized"
    n_jobs: int = DEFAULT_N_JOBS
    output_dir: str = DEFAULT_OUTPUT_DIR
    supplied: FrozenSet[str] = field(default=frozenset(), compare=False, repr=False)

    def __post_init__(self):
        for subset in self.feature_sets:
            unknown = [n for n in subset if n not in FEATURE_NAMES]
            if unknown:
                raise BadConfig(f"Features desconhecidas: {unknown}")
        unknown = [m for m in self.models if m not in MODEL_KINDS]
        if unknown:
            raise BadConfig(f"Modelos desconhecidos: {unknown}")
        if self.normalize_scope not in ("train_only", "full"):
            raise BadConfig(f"normalize_scope inválido: {self.normalize_scope}")
        if self.metric_space not in ("normalized", "raw"):
            raise BadConfig(f"metric_space inválido: {self.metric_space}")
        if self.nanny_backbone not in ("rf", "mlr"):
            raise BadConfig(f"nanny_backbone inválido: {self.nanny_backbone}")
        if not 0.0 < self.train_fraction < 1.0:
            raise BadConfig("train_fraction deve estar em (0, 1)")
        if not 0.0 <= self.nanny_holdout < 1.0:
            raise BadConfig("nanny_holdout deve estar em [0, 1)")
        if self.repetitions < 1:
            raise BadConfig("repetitions deve ser >= 1")
        if self.n_jobs < 1:
            raise BadConfig("n_jobs deve ser >= 1")

    @property
    def seeds(self) -> Tuple[int, ...]:
        """Sementes das repetições: seed, seed+1, ..."""
        return tuple(self.seed + i for i in range(self.repetitions))

    def snapshot(self) -> dict:
        """Dicionário serializável em JSON (usado no manifesto da execução)."""
        data = asdict(self)
        data.pop("supplied")
        for name, value in data.items():
            if isinstance(value, tuple):
                data[name] = list(value)
        data["column_map"] = dict(sorted(self.column_map.items()))
        data["units"] = dict(sorted(self.units.items()))
        data["bounds"] = {k: list(v) for k, v in sorted(self.bounds.items())}
        data["feature_sets"] = [list(s) for s in self.feature_sets]
        data["seeds"] = list(self.seeds)
        return data

    def with_overrides(self, overrides: Mapping[str, object]) -> "RunConfig":
        """Aplica valores já tipados (None é ignorado)."""
        clean = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, supplied=self.supplied | frozenset(clean), **clean)


# Conversores dos valores textuais do arquivo de configuração
_CONVERTERS = {
    "inputs": lambda v: tuple(p.strip() for p in v.split(",") if p.strip()),
    "column_map": parse_pairs,
    "timestamp_format": lambda v: v or None,
    "units": parse_pairs,
    "bounds": parse_bounds,
    "zscore_k": float,
    "bucket_seconds": float,
    "speed_threshold": float,
    "stationary_run": int,
    "mobile": _parse_bool,
    "feature_sets": parse_feature_sets,
    "features": parse_feature_sets,
    "models": lambda v: tuple(m.strip() for m in v.split(",") if m.strip()),
    "sensors": lambda v: tuple(m.strip() for m in v.split(",") if m.strip()),
    "lag": int,
    "n_trees": int,
    "max_depth": _parse_optional_int,
    "min_samples_leaf": int,
    "min_samples_split": int,
    "mtry": _parse_optional_int,
    "bootstrap": _parse_bool,
    "nanny_backbone": str,
    "nanny_holdout": float,
    "train_fraction": float,
    "seed": int,
    "repetitions": int,
    "normalize_scope": str,
    "metric_space": str,
    "n_jobs": int,
    "output_dir": str,
}


def parse_config_values(raw: Mapping[str, Optional[str]]) -> dict:
    """Converte pares key=value textuais nos tipos do RunConfig."""
    values = {}
    for key, text in raw.items():
        key = key.strip().lower()
        if key not in _CONVERTERS:
            raise BadConfig(f"Chave de configuração desconhecida: {key}")
        if text is None:
            continue
        try:
            value = _CONVERTERS[key](text)
        except BadConfig:
            raise
        except ValueError as e:
            raise BadConfig(f"Valor inválido para {key}: {text!r} ({e})") from None
        if key == "features":
            key = "feature_sets"
        values[key] = value
    return values


def load_run_config(
    config_path: Optional[str] = None,
    overrides: Optional[Mapping[str, object]] = None,
) -> RunConfig:
    """Monta o RunConfig respeitando a precedência documentada.

    Args:
        config_path: Arquivo key=value opcional
        overrides: Valores vindos das flags (None = não informado)

    Returns:
        RunConfig validado
    """
    values = {}
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise BadConfig(f"Arquivo de configuração não encontrado: {path}")
        values.update(parse_config_values(dotenv_values(path, interpolate=False)))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(supplied=frozenset(values), **values)
