import logging
import os
import sys

LOG_FORMAT = '%(asctime)s %(levelname)-7s %(name)s: %(message)s'


def configure_logging(level: str = 'INFO') -> None:
    """Configura o logging do processo (uma única vez por execução)"""
    root = logging.getLogger()
    root.setLevel(level.upper())

    ours = [h for h in root.handlers if getattr(h, '_ufdanet', False)]
    if ours:
        # sys.stderr pode ter sido trocado (ex.: CliRunner)
        for handler in ours:
            handler.stream = sys.stderr
    else:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._ufdanet = True
        root.addHandler(handler)

    # matplotlib e PIL são verbosos em DEBUG
    logging.getLogger('matplotlib').setLevel(logging.WARNING)
    logging.getLogger('PIL').setLevel(logging.WARNING)


class MetricsLog:
    """Log de métricas por passo: uma linha ``step<TAB>nome<TAB>valor``"""

    def __init__(self, path: str | None):
        self.path = path
        self._fh = None
        if path:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            self._fh = open(path, 'a', encoding='utf-8')

    def write(self, step: int, values: dict[str, float]) -> None:
        if self._fh is None:
            return
        for name, value in values.items():
            self._fh.write(f"{step}\t{name}\t{value!r}\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
