"""
Interface de linha de comando do toolkit de calibração.

Subcomandos:
    ingest    CSV bruto -> CSV canônico limpo + relatório de descartes
    train     CSV limpo -> modelo serializado (eeatc, mlr, slr ou rf)
    predict   modelo + CSV sem referência -> previsões
    evaluate  modelo + CSV com referência -> R²/RMSE
    sweep     relatório completo por modelo e subconjunto de features
    synth     cenário sintético -> CSV de fixture

Códigos de saída: 0 sucesso, 1 erro de uso/configuração, 2 erro de dados.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from .artifacts import atomic_write_text, dumps_json, save_json, write_run_manifest
from .config import (
    LOG_LEVEL,
    MODEL_KINDS,
    RunConfig,
    load_run_config,
    parse_bounds,
    parse_feature_sets,
    parse_pairs,
)
from .dataset import FeatureSpec, describe_records
from .errors import BadConfig, CalibrationError, DataError, EmptyReport
from .ingest import CleaningConfig, ColumnMapping, clean_records, parse_csv, sort_records, to_canonical_csv
from .metrics import MetricPair
from .nanny import estimated_mae
from .pipeline import (
    EeatcConfig,
    EeatcModel,
    EvalReport,
    SweepConfig,
    evaluate_records,
    feature_sweep,
    load_model,
    predict_records,
    prepare_training_set,
    save_model,
    train_model,
)
from .synth import SynthConfig, generate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

DEFAULT_TRAIN_FEATURES = ("s", "t", "rh")
DEFAULT_TRAIN_MODEL = "eeatc"


class UsageError(Exception):
    """Argumentos inválidos na linha de comando."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# Relatórios
# ---------------------------------------------------------------------------

def emit_report(report: EvalReport, fmt: str = "table") -> str:
    """Formata o relatório da varredura.

    Args:
        report: Relatório
        fmt: 'table' (colunas alinhadas, melhor subconjunto marcado com *)
            ou 'machine' (JSON de chaves ordenadas)

    Returns:
        Texto do relatório
    """
    if not report.rows:
        raise EmptyReport("Relatório sem linhas")
    if fmt == "machine":
        return dumps_json(report.to_dict())
    if fmt != "table":
        raise BadConfig(f"Formato de relatório desconhecido: {fmt}")

    multi_sensor = len({row.sensor for row in report.rows}) > 1
    table = []
    for row in report.rows:
        line = {}
        if multi_sensor:
            line["Sensor"] = row.sensor
        line["Modelo"] = row.kind.upper()
        line["Features"] = row.label + ("*" if row.best else "")
        line["R2 treino"] = f"{row.r2_train:.3f}"
        line["R2 teste"] = f"{row.r2_test:.3f} ± {row.r2_test_std:.3f}"
        line["RMSE treino"] = f"{row.rmse_train:.3f}"
        line["RMSE teste"] = f"{row.rmse_test:.3f} ± {row.rmse_test_std:.3f}"
        line["USEPA"] = "sim" if row.meets_usepa else "não"
        table.append(line)
    text = pd.DataFrame(table).to_string(index=False)
    seeds = ", ".join(str(s) for s in report.seeds)
    footer = f"Métricas em espaço {report.metric_space}; sementes: {seeds}; * = melhor subconjunto por modelo"
    return text + "\n\n" + footer + "\n"


def parse_report(text: str) -> EvalReport:
    """Lê de volta o formato 'machine'."""
    try:
        return EvalReport.from_dict(json.loads(text))
    except (ValueError, KeyError, TypeError) as e:
        raise DataError(f"Relatório inválido: {e}") from None


# ---------------------------------------------------------------------------
# Argumentos
# ---------------------------------------------------------------------------

def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Arquivo de configuração key=value')
    common.add_argument('--output-dir', dest='output_dir', help='Diretório de saída')
    common.add_argument('--seed', type=int, help='Semente base (padrão: EEATC_SEED)')
    common.add_argument('--n-jobs', dest='n_jobs', type=int, help='Threads')
    common.add_argument('--column-map', dest='column_map', type=parse_pairs,
                        help='Mapeamento origem:canônico, ex.: "time:timestamp,pm25:s"')
    common.add_argument('--timestamp-format', dest='timestamp_format', help='Formato strptime do timestamp')
    common.add_argument('--units', type=parse_pairs, help='Dicas de unidade, ex.: "s:mg/m3,t:degF"')
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', '-v', action='store_true', help='Log em nível DEBUG')
    verbosity.add_argument('--quiet', '-q', action='store_true', help='Apenas avisos e erros')
    return common


def _cleaning_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--mobile', action='store_true', default=None,
                        help='Implantação móvel (remove partidas/paradas)')
    parser.add_argument('--bucket-seconds', dest='bucket_seconds', type=float, help='Largura do bucket de média')
    parser.add_argument('--zscore-k', dest='zscore_k', type=float, help='Limiar do z-score robusto')
    parser.add_argument('--speed-threshold', dest='speed_threshold', type=float,
                        help='Velocidade de parada (km/h)')
    parser.add_argument('--stationary-run', dest='stationary_run', type=int,
                        help='Buckets lentos consecutivos que caracterizam parada')
    parser.add_argument('--bounds', type=parse_bounds, help='Limites físicos, ex.: "s:0:500,rh:0:100"')


def _model_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--features', dest='feature_sets', type=parse_feature_sets,
                        help='Subconjuntos separados por ";", ex.: "s;s,t,rh;s,t,rh,s_lag1"')
    parser.add_argument('--lag', type=int, help='Atraso (buckets) de s_lag1')
    parser.add_argument('--n-trees', dest='n_trees', type=int, help='Árvores por floresta')
    parser.add_argument('--max-depth', dest='max_depth', type=int, help='Profundidade máxima')
    parser.add_argument('--min-samples-leaf', dest='min_samples_leaf', type=int)
    parser.add_argument('--min-samples-split', dest='min_samples_split', type=int)
    parser.add_argument('--mtry', type=int, help='Features sorteadas por nó (padrão: ceil(F/3))')
    parser.add_argument('--no-bootstrap', dest='bootstrap', action='store_false', default=None)
    parser.add_argument('--nanny-backbone', dest='nanny_backbone', choices=['rf', 'mlr'])
    parser.add_argument('--nanny-holdout', dest='nanny_holdout', type=float,
                        help='Fração do treino reservada ao nanny')
    parser.add_argument('--clean', action='store_true', help='Aplica a limpeza antes de treinar')


def _models_arg(text: str) -> tuple:
    return tuple(m.strip() for m in text.split(",") if m.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eeatc", description="Calibração de sensores de baixo custo de qualidade do ar")
    common = _common_options()
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser('ingest', parents=[common], help='Limpa CSVs brutos')
    p.add_argument('inputs', nargs='+', help='CSVs de entrada')
    _cleaning_options(p)

    p = sub.add_parser('train', parents=[common], help='Treina um modelo')
    p.add_argument('inputs', nargs='+', help='CSVs limpos com referência')
    p.add_argument('--model', dest='models', type=_models_arg,
                   help=f'Tipo de modelo: {"|".join(MODEL_KINDS)} (padrão: eeatc)')
    _model_options(p)
    _cleaning_options(p)

    p = sub.add_parser('predict', parents=[common], help='Gera previsões sem referência')
    p.add_argument('model_file', help='Modelo salvo (model.json)')
    p.add_argument('inputs', nargs='+', help='CSVs de features')

    p = sub.add_parser('evaluate', parents=[common], help='Avalia um modelo com referência')
    p.add_argument('model_file', help='Modelo salvo (model.json)')
    p.add_argument('inputs', nargs='+', help='CSVs com referência')
    p.add_argument('--metric-space', dest='metric_space', choices=['normalized', 'raw'])

    p = sub.add_parser('sweep', parents=[common], help='Compara modelos e subconjuntos de features')
    p.add_argument('inputs', nargs='+', help='CSVs limpos com referência')
    p.add_argument('--models', type=_models_arg, help='Ex.: "slr,mlr,rf,eeatc"')
    p.add_argument('--sensors', type=_models_arg, help='Colunas de sensores (varredura multi-sensor)')
    p.add_argument('--repetitions', type=int, help='Divisões aleatórias por célula')
    p.add_argument('--train-fraction', dest='train_fraction', type=float)
    p.add_argument('--normalize-scope', dest='normalize_scope', choices=['train_only', 'full'])
    p.add_argument('--metric-space', dest='metric_space', choices=['normalized', 'raw'])
    _model_options(p)
    _cleaning_options(p)

    p = sub.add_parser('synth', parents=[common], help='Gera dados sintéticos')
    p.add_argument('--n', type=int, default=2000, help='Número de amostras')
    p.add_argument('--dt', type=int, default=60, choices=[1, 60], help='Resolução (s)')
    p.add_argument('--mobile', action='store_true', default=None, help='Inclui velocidade e posição')
    p.add_argument('--lag-alpha', dest='lag_alpha', type=float, help='Filtro de inércia do sensor')
    p.add_argument('--sigma0', type=float, default=0.5)
    p.add_argument('--sigma1', type=float, default=0.05)
    p.add_argument('--rh-range', dest='rh_range', default='51:91', help='Faixa de umidade "min:max"')
    return parser


_CONFIG_FLAGS = (
    "output_dir", "seed", "n_jobs", "column_map", "timestamp_format", "units",
    "mobile", "bucket_seconds", "zscore_k", "speed_threshold", "stationary_run", "bounds",
    "feature_sets", "lag", "n_trees", "max_depth", "min_samples_leaf", "min_samples_split",
    "mtry", "bootstrap", "nanny_backbone", "nanny_holdout", "models", "sensors",
    "repetitions", "train_fraction", "normalize_scope", "metric_space",
)


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """RunConfig com precedência padrões < ambiente < arquivo < flags."""
    overrides = {name: getattr(args, name, None) for name in _CONFIG_FLAGS}
    overrides["inputs"] = tuple(getattr(args, "inputs", ()) or ()) or None
    return load_run_config(args.config, overrides)


def _setup_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else getattr(logging, LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format='%(asctime)s [%(levelname)s] %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        force=True,
    )


def _banner(title: str) -> None:
    print("=" * 60)
    print(title)
    print("=" * 60)


# ---------------------------------------------------------------------------
# Subcomandos
# ---------------------------------------------------------------------------

def _mapping(cfg: RunConfig) -> ColumnMapping:
    return ColumnMapping.from_config(cfg.column_map, cfg.timestamp_format, cfg.units)


def _cleaning(cfg: RunConfig) -> CleaningConfig:
    bounds = dict(CleaningConfig().bounds)
    bounds.update(cfg.bounds)
    return CleaningConfig(
        bounds=bounds,
        zscore_k=cfg.zscore_k,
        bucket_seconds=cfg.bucket_seconds,
        speed_threshold=cfg.speed_threshold,
        stationary_run=cfg.stationary_run,
        stationary_deployment=not cfg.mobile,
    )


def _check_inputs(paths: Sequence[str]) -> None:
    missing = [p for p in paths if not Path(p).is_file()]
    if missing:
        raise DataError(f"Arquivos de entrada não encontrados: {missing}")


def _load_records(paths: Sequence[str], mapping: ColumnMapping) -> Tuple[pd.DataFrame, Dict]:
    """Lê e concatena vários CSVs; arquivos com erro são registrados e pulados."""
    stats = {"files": len(paths), "success": 0, "failed": 0, "per_file": {}}
    frames = []
    for path in paths:
        try:
            frame, file_stats = parse_csv(path, mapping)
        except DataError as e:
            logger.error(f"Erro ao ler {path}: {e}")
            stats["failed"] += 1
            stats["per_file"][str(path)] = {"error": str(e)}
            continue
        frames.append(frame)
        stats["success"] += 1
        stats["per_file"][str(path)] = file_stats
    if not frames:
        raise DataError("Nenhum arquivo de entrada pôde ser lido")
    records = frames[0] if len(frames) == 1 else pd.concat(frames, ignore_index=True)
    return sort_records(records), stats


def _single_choice(cfg: RunConfig, key: str, fallback, name: str):
    """Valor único de uma lista da configuração; fallback se ninguém a informou."""
    if key not in cfg.supplied:
        return fallback
    values = getattr(cfg, key)
    if len(values) != 1:
        raise BadConfig(f"{name}: informe apenas um valor (recebido {values})")
    return values[0]


def cmd_ingest(cfg: RunConfig) -> List[str]:
    _banner("INGESTÃO E LIMPEZA")
    records, load_stats = _load_records(cfg.inputs, _mapping(cfg))
    cleaned, report = clean_records(records, _cleaning(cfg))
    report["parse"] = load_stats

    out = Path(cfg.output_dir)
    atomic_write_text(out / "cleaned.csv", to_canonical_csv(cleaned))
    save_json(out / "drop_report.json", report)

    print(f"\nArquivos: {load_stats['success']} lidos, {load_stats['failed']} com falha")
    print(f"Registros: {report['input']} lidos -> {report['bucketed']} após média -> {report['output']} finais")
    stationary, outliers = report["stationary"], report["outliers"]
    print(f"  - Paradas removidas: {stationary['stationary']} (+{stationary['transient']} transientes)")
    print(f"  - Fora dos limites: {sum(outliers['range'].values())}")
    print(f"  - Outliers robustos: {sum(outliers['robust'].values())}")
    if not cleaned.empty:
        print("\nEstatísticas dos dados limpos:")
        print(describe_records(cleaned).to_string(float_format=lambda v: f"{v:.2f}"))
    print(f"\n✓ CSV limpo salvo em: {out / 'cleaned.csv'}")
    return ["cleaned.csv", "drop_report.json"]


def _training_records(cfg: RunConfig, clean: bool) -> pd.DataFrame:
    records, _ = _load_records(cfg.inputs, _mapping(cfg))
    if clean:
        records, _ = clean_records(records, _cleaning(cfg))
    return records


def cmd_train(cfg: RunConfig, clean: bool = False) -> List[str]:
    kind = _single_choice(cfg, "models", DEFAULT_TRAIN_MODEL, "--model")
    if kind not in MODEL_KINDS:
        raise BadConfig(f"Modelo desconhecido: {kind}")
    features = _single_choice(cfg, "feature_sets", DEFAULT_TRAIN_FEATURES, "--features")
    spec = FeatureSpec(features, lag=cfg.lag)

    _banner(f"TREINO - {kind.upper()} ({spec.label})")
    records = _training_records(cfg, clean)
    train = prepare_training_set(records, spec)
    model = train_model(train, kind, EeatcConfig.from_run_config(cfg))
    fit = evaluate_records(model, records, cfg.metric_space)

    out = Path(cfg.output_dir)
    save_model(model, out / "model.json")
    print(f"\nLinhas de treino: {train.n_rows}")
    print(f"R² (treino): {fit.r2:.3f}")
    print(f"RMSE (treino, {cfg.metric_space}): {fit.rmse:.3f}")
    print(f"\n✓ Modelo salvo em: {out / 'model.json'}")
    return ["model.json"]


def cmd_predict(cfg: RunConfig, model_file: str) -> List[str]:
    _banner("PREVISÃO")
    model = load_model(model_file)
    records, _ = _load_records(cfg.inputs, _mapping(cfg))
    predictions = predict_records(model, records)

    out = Path(cfg.output_dir)
    atomic_write_text(out / "predictions.csv", predictions.to_csv(index=False, lineterminator="\n"))
    print(f"\nModelo: {model.kind} ({model.spec.label})")
    print(f"Previsões: {len(predictions)}")
    if isinstance(model, EeatcModel):
        print(f"MAE estimado (sem referência): {estimated_mae(predictions['e_hat']):.3f}")
    print(f"\n✓ Previsões salvas em: {out / 'predictions.csv'}")
    return ["predictions.csv"]


def cmd_evaluate(cfg: RunConfig, model_file: str) -> List[str]:
    _banner("AVALIAÇÃO")
    model = load_model(model_file)
    records, _ = _load_records(cfg.inputs, _mapping(cfg))
    result: MetricPair = evaluate_records(model, records, cfg.metric_space)

    out = Path(cfg.output_dir)
    payload = dict(result.to_dict(), meets_usepa=result.meets_usepa, metric_space=cfg.metric_space,
                   model=model.kind, features=list(model.spec.features))
    save_json(out / "evaluation.json", payload)
    print(f"\nModelo: {model.kind} ({model.spec.label})")
    print(f"Amostras: {result.n}")
    print(f"R²: {result.r2:.3f}")
    print(f"RMSE ({cfg.metric_space}): {result.rmse:.3f}")
    print(f"Atende USEPA (R² >= 0.8): {'sim' if result.meets_usepa else 'não'}")
    return ["evaluation.json"]


def cmd_sweep(cfg: RunConfig, clean: bool = False, progress: bool = True) -> List[str]:
    _banner("VARREDURA DE MODELOS E FEATURES")
    mapping = _mapping(cfg)
    if cfg.sensors:
        sources = {}
        for sensor in cfg.sensors:
            records, _ = _load_records(cfg.inputs, mapping.with_sensor(sensor))
            sources[sensor] = clean_records(records, _cleaning(cfg))[0] if clean else records
    else:
        records, _ = _load_records(cfg.inputs, mapping)
        sources = {"s": clean_records(records, _cleaning(cfg))[0] if clean else records}

    report = feature_sweep(sources, cfg.models, cfg.feature_sets, cfg.seeds,
                           SweepConfig.from_run_config(cfg), config_snapshot=cfg.snapshot(),
                           progress=progress)
    table = emit_report(report, "table")
    out = Path(cfg.output_dir)
    atomic_write_text(out / "report.txt", table)
    atomic_write_text(out / "report.mach", emit_report(report, "machine"))

    print()
    print(table)
    if report.skipped:
        print(f"Células ignoradas: {len(report.skipped)}")
    print(f"✓ Relatórios salvos em: {out / 'report.txt'} e {out / 'report.mach'}")
    return ["report.mach", "report.txt"]


def cmd_synth(cfg: RunConfig, args: argparse.Namespace) -> List[str]:
    _banner("DADOS SINTÉTICOS")
    try:
        low, high = (float(v) for v in args.rh_range.split(":"))
    except ValueError:
        raise BadConfig(f"--rh-range inválido: {args.rh_range!r}") from None
    synth_cfg = SynthConfig(
        n=args.n,
        seed=cfg.seed,
        dt=args.dt,
        sigma0=args.sigma0,
        sigma1=args.sigma1,
        rh_range=(low, high),
        lag_alpha=args.lag_alpha,
        mobile=cfg.mobile,
    )
    records, sidecar = generate(synth_cfg)

    out = Path(cfg.output_dir)
    atomic_write_text(out / "synthetic.csv", to_canonical_csv(records))
    atomic_write_text(out / "synthetic_truth.csv", sidecar.to_csv(index=False, lineterminator="\n"))
    save_json(out / "synth_config.json", synth_cfg.to_dict())
    print(f"\nRegistros gerados: {len(records)} (dt={synth_cfg.dt}s, semente {synth_cfg.seed})")
    print(f"✓ CSV salvo em: {out / 'synthetic.csv'}")
    return ["synth_config.json", "synthetic.csv", "synthetic_truth.csv"]


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Executa um subcomando e devolve o código de saída."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code or 0)

    _setup_logging(args.verbose, args.quiet)
    try:
        cfg = config_from_args(args)
        if args.command != "synth":
            _check_inputs(cfg.inputs)
        if args.command == "ingest":
            outputs = cmd_ingest(cfg)
        elif args.command == "train":
            outputs = cmd_train(cfg, clean=args.clean)
        elif args.command == "predict":
            outputs = cmd_predict(cfg, args.model_file)
        elif args.command == "evaluate":
            outputs = cmd_evaluate(cfg, args.model_file)
        elif args.command == "sweep":
            outputs = cmd_sweep(cfg, clean=args.clean, progress=not args.quiet)
        else:
            outputs = cmd_synth(cfg, args)
        write_run_manifest(cfg.output_dir, args.command, cfg.snapshot(), outputs)
    except (UsageError, BadConfig) as e:
        logger.error(str(e))
        print(f"eeatc: {e}", file=sys.stderr)
        return EXIT_USAGE
    except CalibrationError as e:
        logger.error(str(e))
        print(f"eeatc: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run())
