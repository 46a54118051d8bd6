"""
Exceções do toolkit de calibração.

Todas derivam de CalibrationError para que o CLI consiga separar erros de
dados (código de saída 2) de erros de uso (código 1).
"""


class CalibrationError(Exception):
    """Erro base do toolkit."""


class DataError(CalibrationError):
    """Problema nos dados de entrada (arquivo, colunas, valores)."""


class EmptyInput(DataError, ValueError):
    pass


class ZeroVariance(DataError, ValueError):
    """Coluna constante: não é possível normalizar pelo desvio padrão."""

    def __init__(self, column: str):
        super().__init__(f"Coluna com variância zero: {column}")
        self.column = column


class MissingColumn(DataError, KeyError):
    def __init__(self, column: str):
        super().__init__(f"Coluna ausente: {column}")
        self.column = column

    def __str__(self) -> str:
        return self.args[0]


class TooFewRows(DataError, ValueError):
    pass


class EmptyAfterDrop(DataError, ValueError):
    pass


class NonMonotonicTimestamps(DataError, ValueError):
    pass


class MissingHeader(DataError):
    pass


class MissingMandatoryColumn(DataError):
    def __init__(self, column: str):
        super().__init__(f"Coluna obrigatória ausente no cabeçalho: {column}")
        self.column = column


class EmptyFile(DataError):
    pass


class NoMotionData(DataError):
    pass


class RankDeficient(DataError):
    def __init__(self, condition: float):
        super().__init__(f"Sistema mal condicionado (cond={condition:.3e})")
        self.condition = condition


class ShapeMismatch(CalibrationError, ValueError):
    pass


class NotFitted(CalibrationError, RuntimeError):
    pass


class NegativeTargets(DataError, ValueError):
    pass


class ConstantTarget(DataError, ValueError):
    pass


class BadConfig(CalibrationError, ValueError):
    pass


class EmptyReport(CalibrationError, ValueError):
    pass
