"""
Ingestão de arquivos CSV de sensores de baixo custo.

Converte fluxos CSV (estilo CAIRSENSE ou do piloto móvel) em registros
canônicos limpos: média por bucket de um minuto, remoção das amostras de
partida/parada do veículo e filtragem de outliers por limites físicos e
z-score robusto (mediana/MAD).
"""

import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, TextIO, Tuple, Union

import numpy as np
import pandas as pd

from .config import CANONICAL_COLUMNS
from .dataset import as_frame, describe_records, empty_frame
from .errors import (
    BadConfig,
    EmptyFile,
    MissingHeader,
    MissingMandatoryColumn,
    NoMotionData,
    NonMonotonicTimestamps,
)

logger = logging.getLogger(__name__)

MANDATORY_FIELDS = ("timestamp", "s")
MISSING_TOKENS = {"", "na", "nan", "null", "none", "n/a"}
EARTH_RADIUS_KM = 6371.0
MAD_SCALE = 1.4826
EPOCH = pd.Timestamp(0, tz="UTC")

# Dicas de unidade -> conversão para a unidade canônica do campo
UNIT_CONVERSIONS = {
    "ug/m3": lambda v: v,
    "µg/m3": lambda v: v,
    "mg/m3": lambda v: v * 1000.0,
    "degc": lambda v: v,
    "degf": lambda v: (v - 32.0) * 5.0 / 9.0,
    "k": lambda v: v - 273.15,
    "%": lambda v: v,
    "fraction": lambda v: v * 100.0,
    "km/h": lambda v: v,
    "m/s": lambda v: v * 3.6,
    "mph": lambda v: v * 1.609344,
    "deg": lambda v: v,
}


@dataclass(frozen=True)
class ColumnMapping:
    """Mapeamento coluna de origem -> campo canônico.

    Attributes:
        columns: Nome da coluna no arquivo -> campo canônico
        timestamp_format: Formato strptime; None aceita epoch em segundos e ISO-8601
        units: Campo canônico -> dica de unidade (ex.: 'mg/m3', 'degF')
    """

    columns: Mapping[str, str]
    timestamp_format: Optional[str] = None
    units: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        targets = list(self.columns.values())
        unknown = [t for t in targets if t not in CANONICAL_COLUMNS]
        if unknown:
            raise BadConfig(f"Campos canônicos desconhecidos no mapeamento: {unknown}")
        if len(set(targets)) != len(targets):
            raise BadConfig("Dois campos de origem mapeados para o mesmo campo canônico")
        for name in MANDATORY_FIELDS:
            if name not in targets:
                raise BadConfig(f"Mapeamento sem o campo obrigatório '{name}'")
        for name, hint in self.units.items():
            if name not in CANONICAL_COLUMNS:
                raise BadConfig(f"Dica de unidade para campo desconhecido: {name}")
            if hint.lower() not in UNIT_CONVERSIONS:
                raise BadConfig(f"Unidade desconhecida para {name}: {hint}")

    @classmethod
    def canonical(cls) -> "ColumnMapping":
        """Mapeamento identidade do dialeto CSV canônico."""
        return cls({name: name for name in CANONICAL_COLUMNS})

    @classmethod
    def from_config(cls, column_map: Mapping[str, str], timestamp_format: Optional[str] = None,
                    units: Optional[Mapping[str, str]] = None) -> "ColumnMapping":
        if not column_map:
            return cls(cls.canonical().columns, timestamp_format, units or {})
        return cls(dict(column_map), timestamp_format, units or {})

    def with_sensor(self, source_column: str) -> "ColumnMapping":
        """Cópia em que a coluna informada passa a ser o sensor 's'."""
        columns = {src: dst for src, dst in self.columns.items() if dst != "s" and src != source_column}
        columns[source_column] = "s"
        return ColumnMapping(columns, self.timestamp_format, self.units)


@dataclass(frozen=True)
class CleaningConfig:
    """Parâmetros da limpeza.

    Attributes:
        bounds: Limites físicos (mín, máx) por campo, em unidades nativas
        zscore_k: Limiar do z-score robusto |v - mediana| / (1.4826 * MAD)
        robust_fields: Campos avaliados pelo filtro robusto
        bucket_seconds: Largura do bucket de média
        speed_threshold: Velocidade (km/h) abaixo da qual o veículo está parado
        stationary_run: Registros consecutivos abaixo do limiar que caracterizam parada
        stationary_deployment: Implantação fixa; a remoção de paradas não se aplica
    """

    bounds: Mapping[str, Tuple[float, float]] = field(default_factory=lambda: {
        "s": (0.0, 1000.0),
        "y": (0.0, 1000.0),
        "t": (-40.0, 60.0),
        "rh": (0.0, 100.0),
        "speed": (0.0, 200.0),
    })
    zscore_k: float = 4.0
    robust_fields: Tuple[str, ...] = ("s", "t", "rh", "y")
    bucket_seconds: float = 60.0
    speed_threshold: float = 1.0
    stationary_run: int = 1
    stationary_deployment: bool = False

    def __post_init__(self):
        for name, (low, high) in self.bounds.items():
            if name not in CANONICAL_COLUMNS:
                raise BadConfig(f"Limite para campo desconhecido: {name}")
            if not low < high:
                raise BadConfig(f"Limite inválido para {name}: min {low} >= max {high}")
        if not self.zscore_k > 0:
            raise BadConfig("zscore_k deve ser > 0")
        if not self.bucket_seconds > 0:
            raise BadConfig("bucket_seconds deve ser > 0")
        if self.speed_threshold < 0:
            raise BadConfig("speed_threshold deve ser >= 0")
        if self.stationary_run < 1:
            raise BadConfig("stationary_run deve ser >= 1")


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def _parse_timestamps(raw: pd.Series, fmt: Optional[str]) -> pd.Series:
    """Converte textos em segundos desde a epoch (UTC); inválidos viram NaN."""
    text = raw.str.strip()
    if fmt:
        parsed = pd.to_datetime(text, format=fmt, errors="coerce", utc=True)
        return (parsed - EPOCH).dt.total_seconds()
    seconds = pd.to_numeric(text, errors="coerce")
    pending = seconds.isna() & (text != "")
    if pending.any():
        parsed = pd.to_datetime(text[pending], format="ISO8601", errors="coerce", utc=True)
        seconds.loc[pending] = (parsed - EPOCH).dt.total_seconds()
    return seconds.astype("float64")


def parse_csv(stream: Union[str, Path, TextIO], mapping: ColumnMapping) -> Tuple[pd.DataFrame, Dict]:
    """Lê um CSV (UTF-8, vírgula, uma linha de cabeçalho) em registros canônicos.

    Args:
        stream: Caminho ou objeto de texto
        mapping: Mapeamento das colunas

    Returns:
        Tupla (registros, estatísticas) onde as estatísticas contam linhas lidas,
        timestamps rejeitados e avisos de células inválidas por campo
    """
    if isinstance(stream, (str, Path)):
        with open(stream, "r", encoding="utf-8") as f:
            text = f.read()
    else:
        text = stream.read()
    if not text.strip():
        raise EmptyFile("Arquivo vazio")

    try:
        raw = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise EmptyFile("Arquivo vazio") from None

    header = [str(c).strip() for c in raw.columns]
    raw.columns = header
    if all(_is_number(c) for c in header):
        raise MissingHeader("A primeira linha não parece um cabeçalho")
    for source, canonical in mapping.columns.items():
        if canonical in MANDATORY_FIELDS and source not in header:
            raise MissingMandatoryColumn(source)
    if raw.empty:
        raise EmptyFile("Arquivo contém apenas o cabeçalho")

    stats = {"rows": len(raw), "rejected_timestamps": 0, "parse_warnings": 0, "warnings_by_field": {}}
    frame = pd.DataFrame(index=raw.index)
    for source, canonical in mapping.columns.items():
        if source not in header:
            continue
        if canonical == "timestamp":
            frame["timestamp"] = _parse_timestamps(raw[source], mapping.timestamp_format)
            continue
        cells = raw[source].str.strip()
        values = pd.to_numeric(cells, errors="coerce")
        invalid = values.isna() & ~cells.str.lower().isin(MISSING_TOKENS)
        n_invalid = int(invalid.sum())
        if n_invalid:
            stats["warnings_by_field"][canonical] = n_invalid
            stats["parse_warnings"] += n_invalid
            logger.warning(f"{n_invalid} células inválidas na coluna '{source}' ({canonical})")
        hint = mapping.units.get(canonical)
        if hint:
            values = UNIT_CONVERSIONS[hint.lower()](values)
        frame[canonical] = values

    bad_ts = frame["timestamp"].isna() | ~(frame["timestamp"] > 0)
    stats["rejected_timestamps"] = int(bad_ts.sum())
    if stats["rejected_timestamps"]:
        logger.warning(f"{stats['rejected_timestamps']} linhas rejeitadas por timestamp inválido")
    frame = frame.loc[~bad_ts]

    records = as_frame(frame)
    stats["records"] = len(records)
    logger.info(f"Lidos {len(records)} registros de {stats['rows']} linhas")
    return records, stats


def sort_records(records: pd.DataFrame) -> pd.DataFrame:
    """Ordena por timestamp (estável)."""
    if records["timestamp"].is_monotonic_increasing:
        return records
    logger.info("Registros fora de ordem; ordenando por timestamp")
    return records.sort_values("timestamp", kind="stable").reset_index(drop=True)


def bucket_average(records: pd.DataFrame, width_seconds: float = 60.0) -> pd.DataFrame:
    """Média por bucket de tempo floor(timestamp / largura).

    Cada saída recebe o início do bucket e a média de cada campo sobre os
    valores presentes; buckets sem registros não geram saída.
    """
    if not width_seconds > 0:
        raise BadConfig("width_seconds deve ser > 0")
    frame = as_frame(records)
    if frame.empty:
        return empty_frame()
    if not frame["timestamp"].is_monotonic_increasing:
        raise NonMonotonicTimestamps("bucket_average exige registros ordenados no tempo")
    keys = np.floor(frame["timestamp"].to_numpy() / width_seconds)
    fields = [c for c in CANONICAL_COLUMNS if c != "timestamp"]
    grouped = frame[fields].groupby(keys, sort=True).mean()
    grouped.insert(0, "timestamp", grouped.index.to_numpy() * width_seconds)
    logger.info(f"Média por bucket de {width_seconds:g}s: {len(frame)} -> {len(grouped)} registros")
    return as_frame(grouped)


def filter_outliers(records: pd.DataFrame, cfg: CleaningConfig) -> Tuple[pd.DataFrame, Dict]:
    """Remove outliers em duas passagens.

    1. Limites físicos: descarta registros com qualquer campo limitado fora da faixa.
    2. Z-score robusto: por campo, descarta |v - mediana| / (1.4826 * MAD) > k.
       Campos com MAD zero não passam pela segunda etapa.

    Returns:
        Tupla (sobreviventes na ordem original, contagem de descartes)
    """
    frame = as_frame(records)
    report = {"input": len(frame), "range": {}, "robust": {}, "skipped_zero_mad": [], "output": 0}

    out_of_range = pd.Series(False, index=frame.index)
    for name, (low, high) in cfg.bounds.items():
        values = frame[name]
        bad = values.notna() & ((values < low) | (values > high))
        report["range"][name] = int(bad.sum())
        out_of_range |= bad
    survivors = frame.loc[~out_of_range]

    robust_bad = pd.Series(False, index=survivors.index)
    for name in cfg.robust_fields:
        values = survivors[name].dropna()
        if values.empty:
            continue
        median = float(values.median())
        mad = float((values - median).abs().median())
        if mad == 0.0:
            report["skipped_zero_mad"].append(name)
            logger.warning(f"MAD zero em '{name}'; filtro robusto ignorado para este campo")
            continue
        z = (survivors[name] - median).abs() / (MAD_SCALE * mad)
        bad = z.notna() & (z > cfg.zscore_k)
        report["robust"][name] = int(bad.sum())
        robust_bad |= bad
    result = survivors.loc[~robust_bad].reset_index(drop=True)
    report["output"] = len(result)
    logger.info(f"Filtro de outliers: {report['input']} -> {report['output']} registros")
    return result, report


def haversine_km(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Distância de grande círculo em km (vetorizada)."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(v, dtype=np.float64)) for v in (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    a = np.sin(dlat / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def derive_speed(records: pd.DataFrame) -> pd.Series:
    """Velocidade (km/h) a partir de fixes GPS consecutivos.

    O primeiro registro recebe a velocidade do trecho seguinte.
    """
    lat, lon, ts = records["lat"], records["lon"], records["timestamp"]
    dist = haversine_km(lat.shift(1), lon.shift(1), lat, lon)
    hours = (ts - ts.shift(1)).to_numpy() / 3600.0
    with np.errstate(divide="ignore", invalid="ignore"):
        speed = np.where(hours > 0, dist / hours, np.nan)
    speed = pd.Series(speed, index=records.index)
    if len(speed) > 1:
        speed.iloc[0] = speed.iloc[1]
    return speed


def _motion_speed(frame: pd.DataFrame) -> pd.Series:
    has_speed = frame["speed"].notna().any()
    has_gps = (frame["lat"].notna() & frame["lon"].notna()).any()
    if not has_speed and not has_gps:
        raise NoMotionData("Modo móvel exige coluna de velocidade ou posições GPS")
    speed = frame["speed"].copy()
    if has_gps and speed.isna().any():
        derived = derive_speed(frame)
        speed = speed.fillna(derived)
    return speed


def remove_stationary_segments(records: pd.DataFrame, cfg: CleaningConfig) -> Tuple[pd.DataFrame, Dict]:
    """Remove as amostras de parada e de partida do veículo.

    Um trecho parado é uma sequência de pelo menos cfg.stationary_run registros
    com velocidade abaixo do limiar. São descartados o trecho e o registro
    imediatamente seguinte (transiente de partida).

    Returns:
        Tupla (registros restantes, contagem de descartes)
    """
    frame = as_frame(records)
    report = {"input": len(frame), "stationary": 0, "transient": 0, "output": len(frame)}
    if cfg.stationary_deployment or frame.empty:
        return frame, report

    speed = _motion_speed(frame).to_numpy()
    slow = np.nan_to_num(speed, nan=np.inf) < cfg.speed_threshold
    drop = np.zeros(len(frame), dtype=bool)
    i = 0
    n = len(frame)
    while i < n:
        if not slow[i]:
            i += 1
            continue
        start = i
        while i < n and slow[i]:
            i += 1
        if i - start >= cfg.stationary_run:
            drop[start:i] = True
            report["stationary"] += i - start
            if i < n:
                drop[i] = True
                report["transient"] += 1
    result = frame.loc[~drop].reset_index(drop=True)
    report["output"] = len(result)
    logger.info(f"Remoção de partidas/paradas: {report['input']} -> {report['output']} registros")
    return result, report


def clean_records(records: pd.DataFrame, cfg: CleaningConfig) -> Tuple[pd.DataFrame, Dict]:
    """Preparação completa: média por bucket, partidas/paradas e outliers.

    Returns:
        Tupla (registros limpos, relatório combinado com estatísticas finais)
    """
    frame = sort_records(as_frame(records))
    report = {"input": len(frame)}
    frame = bucket_average(frame, cfg.bucket_seconds)
    report["bucketed"] = len(frame)
    frame, report["stationary"] = remove_stationary_segments(frame, cfg)
    frame, report["outliers"] = filter_outliers(frame, cfg)
    report["output"] = len(frame)
    if not frame.empty:
        stats = describe_records(frame)
        report["statistics"] = {
            col: {row: (None if math.isnan(v) else float(v)) for row, v in stats[col].items()}
            for col in stats.columns
        }
    return frame, report


def to_canonical_csv(records: pd.DataFrame) -> str:
    """Serializa no dialeto canônico (campos ausentes vazios)."""
    frame = as_frame(records)
    return frame.to_csv(index=False, na_rep="", lineterminator="\n")
