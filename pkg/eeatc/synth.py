"""
Gerador determinístico de dados sintéticos de sensores de baixo custo.

Reproduz os efeitos que a calibração precisa corrigir:
- acoplamento com a meteorologia (ganho higroscópico em função da umidade,
  deriva com a temperatura)
- ruído heterocedástico (desvio cresce com a umidade)
- inércia do sensor (filtro exponencial de um passo)
- transientes de mobilidade (picos na retomada após paradas)

A saída segue o dialeto CSV canônico do ingest, então os arquivos gerados
servem de fixture para o pipeline inteiro.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from .dataset import as_frame
from .errors import BadConfig

logger = logging.getLogger(__name__)

START_TIMESTAMP = 1_600_000_000
DAY_SECONDS = 86_400.0
KM_PER_DEGREE = 111.32


def hygroscopic_gain(rh) -> np.ndarray:
    """g(rh) = (1 - rh/103)^-1, normalizado para g(50) = 1."""
    rh = np.asarray(rh, dtype=np.float64)
    return (1.0 - 50.0 / 103.0) / (1.0 - rh / 103.0)


@dataclass(frozen=True)
class SynthConfig:
    """Cenário sintético.

    Attributes:
        n: Número de amostras
        seed: Semente
        dt: Resolução em segundos (1 ou 60)
        y_mean, y_diurnal, y_ar_coef, y_ar_sigma, y_floor: Sinal verdadeiro
            (µg/m³) = média + senoide diária + AR(1), nunca abaixo de y_floor
        rh_mean, rh_diurnal, rh_noise, rh_range: Umidade relativa (%)
        t_mean, t_diurnal, t_noise: Temperatura (°C), anticorrelacionada com rh
        a, b, c, t0: Resposta s = a·y + b·y·g(rh) + c·(t - t0) + ε
        sigma0, sigma1: Desvio do ruído ε = sigma0 + sigma1·rh
        lag_alpha: Filtro exponencial de um passo (None = sem inércia)
        mobile: Gera velocidade, posição e transientes de parada
        cruise_speed: Velocidade média em movimento (km/h)
        stop_probability: Chance de iniciar uma parada a cada amostra
        stop_length: Duração média das paradas (amostras)
        spike_amplitude, spike_decay: Pico aditivo em s após cada parada
        origin: (lat, lon) inicial
    """

    n: int = 2000
    seed: int = 0
    dt: int = 60
    y_mean: float = 20.0
    y_diurnal: float = 5.0
    y_ar_coef: float = 0.95
    y_ar_sigma: float = 1.5
    y_floor: float = 1.0
    rh_mean: float = 71.0
    rh_diurnal: float = 14.0
    rh_noise: float = 2.0
    rh_range: Tuple[float, float] = (51.0, 91.0)
    t_mean: float = 30.0
    t_diurnal: float = 4.0
    t_noise: float = 0.5
    a: float = 0.7
    b: float = 0.25
    c: float = -0.2
    t0: float = 30.0
    sigma0: float = 0.5
    sigma1: float = 0.05
    lag_alpha: Optional[float] = None
    mobile: bool = False
    cruise_speed: float = 30.0
    stop_probability: float = 0.02
    stop_length: float = 5.0
    spike_amplitude: float = 8.0
    spike_decay: float = 2.0
    origin: Tuple[float, float] = (45.0, 10.0)

    def __post_init__(self):
        object.__setattr__(self, "rh_range", tuple(float(v) for v in self.rh_range))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        if self.n < 1:
            raise BadConfig("n deve ser >= 1")
        if self.seed < 0:
            raise BadConfig("seed deve ser >= 0")
        if self.dt not in (1, 60):
            raise BadConfig(f"dt deve ser 1 ou 60 segundos (recebido {self.dt})")
        low, high = self.rh_range
        if not 0.0 <= low < high <= 100.0:
            raise BadConfig(f"rh_range inválido: {self.rh_range}")
        if self.sigma0 < 0 or self.sigma1 < 0:
            raise BadConfig("sigma0 e sigma1 devem ser >= 0")
        if not -1.0 < self.y_ar_coef < 1.0:
            raise BadConfig("y_ar_coef deve estar em (-1, 1)")
        if self.y_floor <= 0:
            raise BadConfig("y_floor deve ser > 0")
        if self.lag_alpha is not None and not 0.0 < self.lag_alpha <= 1.0:
            raise BadConfig("lag_alpha deve estar em (0, 1]")
        if not 0.0 <= self.stop_probability <= 1.0:
            raise BadConfig("stop_probability deve estar em [0, 1]")
        if self.cruise_speed < 0 or self.stop_length < 1 or self.spike_decay <= 0:
            raise BadConfig("Parâmetros de mobilidade inválidos")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["rh_range"] = list(self.rh_range)
        data["origin"] = list(self.origin)
        return data


# Umidade alta com ganho higroscópico forte e ruído crescente com rh; a
# temperatura não entra na resposta e só ocupa sorteios de mtry.
HETEROSCEDASTIC_SCENARIO = SynthConfig(
    n=5000,
    b=0.8,
    rh_diurnal=25.0,
    rh_range=(40.0, 98.0),
    t_diurnal=0.0,
    t_noise=3.0,
    c=0.0,
    sigma0=0.1,
    sigma1=0.01,
)


def _ar1(rng: np.random.Generator, n: int, coef: float, sigma: float) -> np.ndarray:
    shocks = rng.normal(0.0, 1.0, n) * sigma
    out = np.empty(n)
    # início na distribuição estacionária
    out[0] = shocks[0] / math.sqrt(1.0 - coef * coef)
    for i in range(1, n):
        out[i] = coef * out[i - 1] + shocks[i]
    return out


def _speed_trace(rng: np.random.Generator, cfg: SynthConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Velocidade (km/h) com paradas e o número de amostras desde a última parada."""
    speed = np.empty(cfg.n)
    since_stop = np.full(cfg.n, -1, dtype=np.int64)
    remaining_stop = 0
    last_stop_end = None
    for i in range(cfg.n):
        if remaining_stop == 0 and rng.random() < cfg.stop_probability:
            remaining_stop = 1 + int(rng.poisson(cfg.stop_length - 1))
        if remaining_stop > 0:
            speed[i] = abs(rng.normal(0.0, 0.2))
            remaining_stop -= 1
            if remaining_stop == 0:
                last_stop_end = i
            continue
        speed[i] = max(0.0, rng.normal(cfg.cruise_speed, cfg.cruise_speed / 4))
        if last_stop_end is not None:
            since_stop[i] = i - last_stop_end
    return speed, since_stop


def _positions(rng: np.random.Generator, speed: np.ndarray, cfg: SynthConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Integra velocidade e rumo (passeio aleatório) em latitude/longitude."""
    heading = np.cumsum(rng.normal(0.0, 0.1, speed.shape[0]))
    step_km = speed * cfg.dt / 3600.0
    lat = np.empty_like(speed)
    lon = np.empty_like(speed)
    lat[0], lon[0] = cfg.origin
    for i in range(1, speed.shape[0]):
        lat[i] = lat[i - 1] + step_km[i] * math.cos(heading[i]) / KM_PER_DEGREE
        lon[i] = lon[i - 1] + step_km[i] * math.sin(heading[i]) / (KM_PER_DEGREE * math.cos(math.radians(lat[i - 1])))
    return lat, lon


def generate(cfg: SynthConfig) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Gera os registros e o sidecar com o desvio verdadeiro do ruído.

    Args:
        cfg: Cenário

    Returns:
        Tupla (registros canônicos, sidecar com timestamp, noise_std, spike)
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    timestamps = START_TIMESTAMP + np.arange(n, dtype=np.float64) * cfg.dt
    phase = 2.0 * np.pi * (timestamps % DAY_SECONDS) / DAY_SECONDS

    y = cfg.y_mean + cfg.y_diurnal * np.sin(phase) + _ar1(rng, n, cfg.y_ar_coef, cfg.y_ar_sigma)
    y = np.maximum(y, cfg.y_floor)

    # umidade alta de madrugada; temperatura segue o oposto
    rh_cycle = np.cos(phase)
    rh = cfg.rh_mean + cfg.rh_diurnal * rh_cycle + rng.normal(0.0, 1.0, n) * cfg.rh_noise
    rh = np.clip(rh, *cfg.rh_range)
    t = cfg.t_mean - cfg.t_diurnal * rh_cycle + rng.normal(0.0, 1.0, n) * cfg.t_noise

    noise_std = cfg.sigma0 + cfg.sigma1 * rh
    eps = rng.standard_normal(n) * noise_std
    s = cfg.a * y + cfg.b * y * hygroscopic_gain(rh) + cfg.c * (t - cfg.t0) + eps

    if cfg.lag_alpha is not None and cfg.lag_alpha < 1.0:
        filtered = np.empty(n)
        filtered[0] = s[0]
        for i in range(1, n):
            filtered[i] = cfg.lag_alpha * s[i] + (1.0 - cfg.lag_alpha) * filtered[i - 1]
        s = filtered

    spike = np.zeros(n)
    lat = lon = speed = np.full(n, np.nan)
    if cfg.mobile:
        speed, since_stop = _speed_trace(rng, cfg)
        moving = since_stop >= 0
        spike[moving] = cfg.spike_amplitude * np.exp(-(since_stop[moving] - 1) / cfg.spike_decay)
        s = s + spike
        lat, lon = _positions(rng, speed, cfg)

    records = as_frame(pd.DataFrame({
        "timestamp": timestamps,
        "s": s,
        "t": t,
        "rh": rh,
        "y": y,
        "lat": lat,
        "lon": lon,
        "speed": speed,
    }))
    sidecar = pd.DataFrame({"timestamp": timestamps, "noise_std": noise_std, "spike": spike})
    logger.debug(f"Gerados {n} registros sintéticos (semente {cfg.seed}, dt={cfg.dt}s)")
    return records, sidecar
