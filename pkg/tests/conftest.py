import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from eeatc.regress import ForestParams
from eeatc.synth import SynthConfig, generate

FIXTURES = Path(__file__).parent / "fixtures"

# leitura do sensor muito dependente da umidade: a relação s -> y deixa de ser linear
HUMID_SCENARIO = SynthConfig(n=800, seed=7, b=0.6, rh_diurnal=25.0, rh_range=(40.0, 97.0),
                             sigma0=0.2, sigma1=0.01)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def small_forest() -> ForestParams:
    """Floresta pequena para manter os testes rápidos."""
    return ForestParams(n_trees=25)


@pytest.fixture
def linear_records() -> pd.DataFrame:
    """Registros sem ruído com y = 2s + 0.5rh, em grade de 60 s."""
    rng = np.random.default_rng(11)
    n = 120
    s = rng.uniform(5.0, 50.0, n)
    rh = rng.uniform(40.0, 90.0, n)
    t = rng.uniform(15.0, 35.0, n)
    return pd.DataFrame({
        "timestamp": 60.0 * np.arange(1, n + 1),
        "s": s,
        "t": t,
        "rh": rh,
        "y": 2.0 * s + 0.5 * rh,
    })


@pytest.fixture
def synthetic_records() -> pd.DataFrame:
    """Cenário com forte ganho higroscópico e pouco ruído."""
    records, _ = generate(HUMID_SCENARIO)
    return records
