"""
Gravação de artefatos das execuções (modelos, relatórios, CSVs, manifesto).

Toda escrita passa por um arquivo temporário no mesmo diretório seguido de
os.replace, de modo que uma execução interrompida nunca deixa saída parcial.
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, Union

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Escreve texto de forma atômica.

    Args:
        path: Caminho final do arquivo
        text: Conteúdo (UTF-8)

    Returns:
        Caminho final
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug(f"Arquivo salvo em: {path}")
    return path


def dumps_json(data: Any) -> str:
    """JSON estável: chaves ordenadas, indentação fixa e quebra final."""
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def save_json(path: PathLike, data: Any) -> Path:
    return atomic_write_text(path, dumps_json(data))


def load_json(path: PathLike) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_run_manifest(output_dir: PathLike, command: str, snapshot: Dict[str, Any],
                       outputs: Iterable[str] = ()) -> Path:
    """Salva o manifesto da execução (configuração + sementes + saídas).

    O conteúdo é suficiente para repetir a execução e obter os mesmos bytes.
    """
    manifest = {
        "command": command,
        "config": snapshot,
        "seeds": snapshot.get("seeds", []),
        "outputs": sorted(outputs),
    }
    path = Path(output_dir) / "run_config.json"
    save_json(path, manifest)
    logger.info(f"Manifesto da execução salvo em: {path}")
    return path
