"""
Modelos de regressão implementados do zero com um contrato fit/predict comum.

- LinearModel: regressão linear múltipla (MLR) pelas equações normais, com
  intercepto e um jitter de ridge (1e-10) na diagonal.
- RegressionTree: árvore CART de regressão (redução de variância), guardada
  em vetores achatados.
- ForestModel: floresta aleatória; cada árvore usa um gerador Philox derivado
  de (semente mestre, índice da árvore), então o resultado não depende da
  ordem de execução nem do número de threads.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import List, NamedTuple, Optional, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np
from tqdm import tqdm

from .config import DEFAULT_N_TREES
from .errors import BadConfig, DataError, EmptyInput, NotFitted, RankDeficient, ShapeMismatch, TooFewRows

logger = logging.getLogger(__name__)

RIDGE_JITTER = 1e-10
MAX_CONDITION = 1e12


@runtime_checkable
class RegressorContract(Protocol):
    """Contrato comum: fit(X, y) -> self, predict(X) -> vetor."""

    @property
    def fitted(self) -> bool: ...

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RegressorContract": ...

    def predict(self, X: np.ndarray) -> np.ndarray: ...


def _as_matrix(X, n_features: Optional[int] = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if n_features in (None, 1) else X.reshape(1, -1)
    if X.ndim != 2:
        raise ShapeMismatch(f"Esperada matriz 2-D, recebido shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise ShapeMismatch(f"Esperadas {n_features} colunas, recebidas {X.shape[1]}")
    return X


def _as_targets(y, n_rows: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != n_rows:
        raise ShapeMismatch(f"y tem {y.shape[0]} valores, X tem {n_rows} linhas")
    return y


# ---------------------------------------------------------------------------
# Regressão linear múltipla
# ---------------------------------------------------------------------------

class LinearModel:
    """Regressão linear múltipla ŷ = intercepto + Σ β_j x_j.

    Attributes:
        coefficients: Pesos β (um por feature)
        intercept: Intercepto
        feature_names: Ordem das features no treino
        condition: Número de condição do sistema normal resolvido
        rank_deficient: True quando a condição passou de 1e12
    """

    kind = "mlr"

    def __init__(self, feature_names: Sequence[str] = ()):
        self.feature_names = tuple(feature_names)
        self.coefficients: Optional[np.ndarray] = None
        self.intercept = 0.0
        self.condition = float("nan")
        self.rank_deficient = False

    @property
    def fitted(self) -> bool:
        return self.coefficients is not None

    @property
    def n_features(self) -> int:
        if not self.fitted:
            raise NotFitted("LinearModel não foi treinado")
        return self.coefficients.shape[0]

    def fit(self, X, y, strict: bool = False) -> "LinearModel":
        fitted = mlr_fit(X, y, feature_names=self.feature_names, strict=strict)
        self.__dict__.update(fitted.__dict__)
        return self

    def predict(self, X) -> np.ndarray:
        return mlr_predict(self, X)

    def to_dict(self) -> dict:
        if not self.fitted:
            raise NotFitted("LinearModel não foi treinado")
        return {
            "kind": self.kind,
            "coefficients": self.coefficients.tolist(),
            "intercept": float(self.intercept),
            "feature_names": list(self.feature_names),
            "condition": float(self.condition) if math.isfinite(self.condition) else None,
            "rank_deficient": bool(self.rank_deficient),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LinearModel":
        model = cls(data.get("feature_names", ()))
        coefficients = np.asarray(data["coefficients"], dtype=np.float64)
        coefficients.setflags(write=False)
        model.coefficients = coefficients
        model.intercept = float(data["intercept"])
        model.condition = float("nan") if data.get("condition") is None else float(data["condition"])
        model.rank_deficient = bool(data.get("rank_deficient", False))
        return model


def mlr_fit(X, y, feature_names: Sequence[str] = (), strict: bool = False) -> LinearModel:
    """Ajusta a MLR minimizando o erro quadrático médio.

    Resolve as equações normais sobre os dados centrados (o intercepto sai
    das médias), com jitter de ridge 1e-10 na diagonal.

    Args:
        X: Matriz N x F
        y: Vetor de N alvos
        feature_names: Nomes das colunas (opcional)
        strict: Levanta RankDeficient em vez de apenas sinalizar

    Returns:
        LinearModel treinado
    """
    X = _as_matrix(X)
    n, n_features = X.shape
    y = _as_targets(y, n)
    if n <= n_features:
        raise TooFewRows(f"MLR exige N > F (N={n}, F={n_features})")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("MLR recebeu valores não finitos")

    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean
    gram = Xc.T @ Xc + RIDGE_JITTER * np.eye(n_features)
    rhs = Xc.T @ yc
    condition = float(np.linalg.cond(gram))
    rank_deficient = not math.isfinite(condition) or condition > MAX_CONDITION
    if rank_deficient:
        if strict:
            raise RankDeficient(condition)
        logger.warning(f"MLR mal condicionada (cond={condition:.3e}); usando jitter de ridge")
    beta = np.linalg.solve(gram, rhs)
    beta.setflags(write=False)

    model = LinearModel(feature_names)
    model.coefficients = beta
    model.intercept = float(y_mean - x_mean @ beta)
    model.condition = condition
    model.rank_deficient = rank_deficient
    return model


def mlr_predict(model: LinearModel, X) -> np.ndarray:
    """ŷ_i = intercepto + Σ β_j x_ij."""
    if not model.fitted:
        raise NotFitted("LinearModel não foi treinado")
    X = _as_matrix(X, model.n_features)
    return model.intercept + X @ model.coefficients


# ---------------------------------------------------------------------------
# Árvores e floresta
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ForestParams:
    """Hiperparâmetros da floresta (e de cada árvore).

    mtry=None significa ceil(F/3) no momento do ajuste; max_depth=None
    significa profundidade ilimitada.
    """

    n_trees: int = DEFAULT_N_TREES
    max_depth: Optional[int] = None
    min_samples_leaf: int = 2
    min_samples_split: int = 4
    mtry: Optional[int] = None
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise BadConfig("n_trees deve ser >= 1")
        if self.min_samples_leaf < 1:
            raise BadConfig("min_samples_leaf deve ser >= 1")
        if self.min_samples_split < 2:
            raise BadConfig("min_samples_split deve ser >= 2")
        if self.max_depth is not None and self.max_depth < 0:
            raise BadConfig("max_depth deve ser >= 0")
        if self.mtry is not None and self.mtry < 1:
            raise BadConfig("mtry deve ser >= 1")

    def resolve_mtry(self, n_features: int) -> int:
        mtry = self.mtry if self.mtry is not None else math.ceil(n_features / 3)
        if not 1 <= mtry <= n_features:
            raise BadConfig(f"mtry={mtry} fora de [1, {n_features}]")
        return mtry

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ForestParams":
        return cls(**data)


class TreeNode(NamedTuple):
    """Visão de um nó: interno (feature >= 0) ou folha (feature == -1)."""

    feature: int
    threshold: float
    left: int
    right: int
    value: float
    n_samples: int

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


_TREE_FIELDS = ("feature", "threshold", "left", "right", "value", "n_samples")
_INT_FIELDS = ("feature", "left", "right", "n_samples")


class RegressionTree:
    """Árvore de regressão em vetores achatados; o nó 0 é a raiz."""

    def __init__(self, feature, threshold, left, right, value, n_samples, n_features: int):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.n_samples = np.asarray(n_samples, dtype=np.int64)
        self.n_features = int(n_features)
        for name in _TREE_FIELDS:
            getattr(self, name).setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def node(self, i: int) -> TreeNode:
        return TreeNode(int(self.feature[i]), float(self.threshold[i]), int(self.left[i]),
                        int(self.right[i]), float(self.value[i]), int(self.n_samples[i]))

    @property
    def root(self) -> TreeNode:
        return self.node(0)

    def predict(self, X) -> np.ndarray:
        """Roteia todas as linhas nível a nível (x <= limiar vai à esquerda)."""
        X = _as_matrix(X, self.n_features)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            current = node[rows]
            go_left = X[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active[rows] = self.feature[node[rows]] >= 0
        return self.value[node]

    def to_dict(self) -> dict:
        data = {name: getattr(self, name).tolist() for name in _TREE_FIELDS}
        data["n_features"] = self.n_features
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RegressionTree":
        return cls(*(data[name] for name in _TREE_FIELDS), n_features=data["n_features"])


# Ganhos dentro desta fração da SSE do nó contam como empate
TIE_TOLERANCE = 1e-12


def _segment_starts(counts: np.ndarray) -> np.ndarray:
    starts = np.zeros(counts.shape[0], dtype=np.int64)
    np.cumsum(counts[:-1], out=starts[1:])
    return starts


def _best_splits_for_feature(xs: np.ndarray, ys: np.ndarray, slots: np.ndarray, starts: np.ndarray,
                             counts: np.ndarray, allowed: np.ndarray, min_samples_leaf: int,
                             tol: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Melhor corte de uma feature em todos os nós abertos de um nível.

    xs, ys e slots vêm ordenados por (nó, valor da feature), com ys já
    centrado pela média do nó. Candidatos são pontos médios entre valores
    distintos consecutivos.

    Returns:
        (maior ganho por nó, -inf sem corte válido;
         posição do primeiro corte, o de menor limiar, que empata com ele)
    """
    m = ys.shape[0]
    csum = np.cumsum(ys)
    base = np.where(starts > 0, csum[starts - 1], 0.0)
    total = csum[starts + counts - 1] - base
    left_sum = csum - base[slots]
    left_n = np.arange(1, m + 1) - starts[slots]
    right_n = counts[slots] - left_n

    valid = np.zeros(m, dtype=bool)
    valid[:-1] = (slots[:-1] == slots[1:]) & (xs[:-1] < xs[1:])
    valid &= (left_n >= min_samples_leaf) & (right_n >= min_samples_leaf) & allowed[slots]

    right_sum = total[slots] - left_sum
    gain = (left_sum ** 2 / left_n + right_sum ** 2 / np.maximum(right_n, 1)
            - (total ** 2 / counts)[slots])
    gain = np.where(valid, gain, -np.inf)
    best = np.maximum.reduceat(gain, starts)

    hits = np.flatnonzero(valid & (gain >= best[slots] - tol[slots]))
    position = np.full(counts.shape[0], -1, dtype=np.int64)
    hit_slots, first = np.unique(slots[hits], return_index=True)
    position[hit_slots] = hits[first]
    return best, position


def _regroup(sequence: np.ndarray, slot_of: np.ndarray) -> np.ndarray:
    """Mantém as amostras ainda ativas, agrupadas pelo novo nó sem perder a ordem."""
    sequence = sequence[slot_of[sequence] >= 0]
    return sequence[np.argsort(slot_of[sequence], kind="stable")]


def tree_fit(X, y, params: ForestParams, rng: np.random.Generator) -> RegressionTree:
    """Cresce uma árvore CART gulosa, um nível por vez.

    Cada feature é ordenada uma única vez; a cada nível as sequências
    ordenadas são particionadas pelos nós filhos e todos os nós abertos são
    avaliados juntos. Em cada nó sorteia mtry features e escolhe o corte de
    maior redução da soma dos quadrados (empates: menor índice de feature,
    depois menor limiar). Para por profundidade, min_samples_split,
    min_samples_leaf ou ganho nulo; a folha prevê a média dos alvos.
    """
    X = _as_matrix(X)
    n, n_features = X.shape
    y = _as_targets(y, n)
    if n == 0:
        raise EmptyInput("tree_fit recebeu zero linhas")
    mtry = params.resolve_mtry(n_features)
    leaf = params.min_samples_leaf

    feature = np.array([-1], dtype=np.int64)
    threshold = np.zeros(1)
    left = np.array([-1], dtype=np.int64)
    right = np.array([-1], dtype=np.int64)
    value = np.array([float(y.mean())])
    n_samples = np.array([n], dtype=np.int64)

    open_nodes = np.zeros(1, dtype=np.int64)
    slot_of = np.zeros(n, dtype=np.int64)
    sequences = [np.argsort(X[:, f], kind="stable") for f in range(n_features)]
    centered = np.zeros(n)
    depth = 0

    while open_nodes.size and (params.max_depth is None or depth < params.max_depth):
        k = open_nodes.size
        members = sequences[0]
        member_slots = slot_of[members]
        counts = np.bincount(member_slots, minlength=k)
        starts = _segment_starts(counts)
        y_sorted = y[members]
        means = np.add.reduceat(y_sorted, starts) / counts
        centered[members] = y_sorted - means[member_slots]
        sse = np.add.reduceat(centered[members] ** 2, starts)
        spread = np.maximum.reduceat(y_sorted, starts) - np.minimum.reduceat(y_sorted, starts)
        splittable = (counts >= params.min_samples_split) & (counts >= 2 * leaf) & (spread > 0.0)
        if not splittable.any():
            break

        allowed = np.ones((k, n_features), dtype=bool)
        if mtry < n_features:
            drawn = np.argsort(rng.random((k, n_features)), axis=1)[:, :mtry]
            allowed[:] = False
            np.put_along_axis(allowed, drawn, True, axis=1)

        tol = TIE_TOLERANCE * sse
        best_gain = tol.copy()
        best_feature = np.full(k, -1, dtype=np.int64)
        best_threshold = np.zeros(k)
        for f in range(n_features):
            seq = sequences[f]
            xs = X[seq, f]
            gain, position = _best_splits_for_feature(
                xs, centered[seq], slot_of[seq], starts, counts, splittable & allowed[:, f], leaf, tol)
            better = np.flatnonzero(gain > np.where(best_feature >= 0, best_gain + tol, best_gain))
            if better.size == 0:
                continue
            p = position[better]
            lo, hi = xs[p], xs[p + 1]
            mid = 0.5 * (lo + hi)
            best_gain[better] = gain[better]
            best_feature[better] = f
            best_threshold[better] = np.where(mid < hi, mid, lo)

        split_slots = np.flatnonzero(best_feature >= 0)
        if split_slots.size == 0:
            break

        n_children = 2 * split_slots.size
        first_child = feature.shape[0]
        child_of = np.full(k, -1, dtype=np.int64)
        child_of[split_slots] = 2 * np.arange(split_slots.size)

        moving = members[best_feature[member_slots] >= 0]
        moving_slots = slot_of[moving]
        go_right = X[moving, best_feature[moving_slots]] > best_threshold[moving_slots]
        slot_of = np.full(n, -1, dtype=np.int64)
        slot_of[moving] = child_of[moving_slots] + go_right

        child_counts = np.bincount(slot_of[moving], minlength=n_children)
        child_sums = np.bincount(slot_of[moving], weights=y[moving], minlength=n_children)

        parents = open_nodes[split_slots]
        feature = np.concatenate([feature, np.full(n_children, -1, dtype=np.int64)])
        threshold = np.concatenate([threshold, np.zeros(n_children)])
        left = np.concatenate([left, np.full(n_children, -1, dtype=np.int64)])
        right = np.concatenate([right, np.full(n_children, -1, dtype=np.int64)])
        value = np.concatenate([value, child_sums / child_counts])
        n_samples = np.concatenate([n_samples, child_counts])
        feature[parents] = best_feature[split_slots]
        threshold[parents] = best_threshold[split_slots]
        left[parents] = first_child + 2 * np.arange(split_slots.size)
        right[parents] = left[parents] + 1

        open_nodes = first_child + np.arange(n_children)
        sequences = [_regroup(seq, slot_of) for seq in sequences]
        depth += 1

    return RegressionTree(feature, threshold, left, right, value, n_samples, n_features)


def tree_predict(tree: RegressionTree, row) -> float:
    """Previsão de uma única linha."""
    row = np.asarray(row, dtype=np.float64).reshape(-1)
    if row.shape[0] != tree.n_features:
        raise ShapeMismatch(f"Linha com {row.shape[0]} valores, árvore espera {tree.n_features}")
    i = 0
    while tree.feature[i] >= 0:
        i = tree.left[i] if row[tree.feature[i]] <= tree.threshold[i] else tree.right[i]
    return float(tree.value[i])


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Gerador contador (Philox) derivado de (semente mestre, índice)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(tree_index)])))


class ForestModel:
    """Floresta aleatória de regressão.

    Attributes:
        params: Hiperparâmetros
        seed: Semente mestre
        trees: Árvores treinadas
        target_range: (mín, máx) dos alvos de treino
    """

    kind = "rf"

    def __init__(self, params: Optional[ForestParams] = None, seed: int = 0, n_jobs: int = 1):
        self.params = params or ForestParams()
        self.seed = int(seed)
        self.n_jobs = int(n_jobs)
        self.trees: List[RegressionTree] = []
        self.n_features = 0
        self.mtry = 0
        self.target_range = (float("nan"), float("nan"))

    @property
    def fitted(self) -> bool:
        return bool(self.trees)

    def fit(self, X, y, progress: bool = False) -> "ForestModel":
        fitted = forest_fit(X, y, self.params, self.seed, n_jobs=self.n_jobs, progress=progress)
        self.__dict__.update(fitted.__dict__)
        return self

    def predict(self, X) -> np.ndarray:
        return forest_predict(self, X)

    def to_dict(self) -> dict:
        if not self.fitted:
            raise NotFitted("ForestModel não foi treinado")
        return {
            "kind": self.kind,
            "params": self.params.to_dict(),
            "seed": self.seed,
            "n_features": self.n_features,
            "mtry": self.mtry,
            "target_range": list(self.target_range),
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ForestModel":
        model = cls(ForestParams.from_dict(data["params"]), seed=data["seed"])
        model.trees = [RegressionTree.from_dict(t) for t in data["trees"]]
        model.n_features = int(data["n_features"])
        model.mtry = int(data["mtry"])
        model.target_range = tuple(float(v) for v in data["target_range"])
        return model


def forest_fit(X, y, params: ForestParams, seed: int = 0, n_jobs: int = 1,
               progress: bool = False) -> ForestModel:
    """Treina n_trees árvores, cada uma numa reamostragem bootstrap (se ativa).

    Args:
        X: Matriz N x F
        y: Alvos
        params: Hiperparâmetros
        seed: Semente mestre
        n_jobs: Threads usadas para crescer as árvores
        progress: Exibe barra de progresso

    Returns:
        ForestModel treinado
    """
    X = _as_matrix(X)
    n, n_features = X.shape
    y = _as_targets(y, n)
    if n < 2:
        raise EmptyInput(f"forest_fit exige ao menos 2 linhas (recebidas {n})")
    if seed < 0:
        raise BadConfig("seed deve ser >= 0")
    mtry = params.resolve_mtry(n_features)

    def build(index: int) -> RegressionTree:
        rng = tree_rng(seed, index)
        rows = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        return tree_fit(X[rows], y[rows], params, rng)

    indices = range(params.n_trees)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(tqdm(pool.map(build, indices), total=params.n_trees,
                              desc="Treinando árvores", disable=not progress))
    else:
        trees = [build(i) for i in tqdm(indices, desc="Treinando árvores", disable=not progress)]

    model = ForestModel(params, seed=seed, n_jobs=n_jobs)
    model.trees = trees
    model.n_features = n_features
    model.mtry = mtry
    model.target_range = (float(y.min()), float(y.max()))
    logger.debug(f"Floresta treinada: {params.n_trees} árvores, mtry={mtry}, N={n}")
    return model


def forest_predict(model: ForestModel, X) -> np.ndarray:
    """Média das previsões das árvores."""
    if not model.fitted:
        raise NotFitted("ForestModel não foi treinado")
    X = _as_matrix(X, model.n_features)
    total = np.zeros(X.shape[0], dtype=np.float64)
    for tree in model.trees:
        total += tree.predict(X)
    return total / len(model.trees)


def make_regressor(kind: str, params: Optional[ForestParams] = None, seed: int = 0,
                   n_jobs: int = 1, feature_names: Sequence[str] = ()) -> RegressorContract:
    """Fábrica dos regressores por nome ('mlr' ou 'rf')."""
    if kind == "mlr":
        return LinearModel(feature_names)
    if kind == "rf":
        return ForestModel(params, seed=seed, n_jobs=n_jobs)
    raise BadConfig(f"Tipo de regressor desconhecido: {kind}")


def regressor_from_dict(data: dict) -> RegressorContract:
    kind = data.get("kind")
    if kind == "mlr":
        return LinearModel.from_dict(data)
    if kind == "rf":
        return ForestModel.from_dict(data)
    raise BadConfig(f"Tipo de regressor desconhecido: {kind}")
