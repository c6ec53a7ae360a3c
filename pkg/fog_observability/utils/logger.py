import sys
import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path

from fog_observability.utils import path_resolver

_g_logger = None
LOGGER_NAME = 'odlc'


class OdlcFormatter(logging.Formatter):
    COLOR_PREFIX = '\x1b['
    COLOR_SUFFIX = '\x1b[0m'
    COLORS = {
        logging.DEBUG: '34m',  # blue
        logging.INFO: '36m',  # Cyan
        logging.WARNING: '33;1m',  # bold yellow
        logging.ERROR: '31;1m',  # bold red
        logging.CRITICAL: '41;1m',  # bold white on red
    }

    def __init__(self, use_color=True):
        super().__init__()
        self._use_color = use_color

    def format(self, record):
        level_name = record.levelname
        message = '%(message)s'
        if not self._use_color:
            return logging.Formatter(f'<ODLC {level_name}> {message}').format(record)
        level_fmt = f'{self.COLOR_PREFIX}{self.COLORS[record.levelno]}<ODLC '\
                    f'{level_name}> {message}{self.COLOR_SUFFIX}'
        formatter = logging.Formatter(f'{level_fmt}')
        return formatter.format(record)


def namer(name):
    return name.replace('.log', '') + '.log'


def _make_file_handler(log_file):
    Path(log_file).parent.mkdir(parents=True, exist_ok=True)
    rotate_handler = RotatingFileHandler(log_file, maxBytes=10000000, backupCount=10)
    rotate_handler.namer = namer
    rotate_handler.setFormatter(logging.Formatter('%(asctime)s %(name)s %(levelname)s %(message)s'))
    return rotate_handler


def get_logger():
    global _g_logger
    if _g_logger is None:
        _g_logger = logging.getLogger(LOGGER_NAME)
        _g_logger.setLevel(logging.INFO)
        _g_logger.propagate = False
        # machine-readable output owns stdout, humans read stderr
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(OdlcFormatter(use_color=sys.stderr.isatty()))
        _g_logger.addHandler(console_handler)
    return _g_logger


def configure_logger(level='INFO', log_file=None):
    """Applies the `logging` config section. A file handler is only attached for CLI runs."""
    logger = get_logger()
    logger.setLevel(getattr(logging, str(level).upper(), logging.INFO))
    if any(isinstance(handler, RotatingFileHandler) for handler in logger.handlers):
        return logger
    log_file = log_file or path_resolver.resolve_data_path('logs/odlc.log')
    try:
        logger.addHandler(_make_file_handler(log_file))
    except OSError as err:
        logger.warning(f'File logging disabled, cannot open {log_file}: {err}')
    return logger
