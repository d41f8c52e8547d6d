import sys
from pathlib import Path

from loguru import logger

LOG_FORMAT = "<blue>{time}</blue> | <level>{level}</level> | {message}"
LOG_FILE_NAME = "inpaintx.log"

_file_sinks = {}


def setup_logger():
    logger.remove()
    _file_sinks.clear()
    logger.add(sys.stderr, colorize=True, format=LOG_FORMAT, level="INFO")


# | Level name | Severity value | Logger method     |
# ---------------------------------------------------
# | TRACE      | 5              | logger.trace()    |
# | DEBUG      | 10             | logger.debug()    |
# | INFO       | 20             | logger.info()     |
# | SUCCESS    | 25             | logger.success()  |
# | WARNING    | 30             | logger.warning()  |
# | ERROR      | 40             | logger.error()    |
# | CRITICAL   | 50             | logger.critical() |
# ---------------------------------------------------
def verbosity_level(verbose: int) -> str:
    levels = {0: "INFO", 1: "INFO", 2: "DEBUG", 3: "TRACE"}
    return levels.get(verbose, "TRACE")


def logger_enable(verbose: int):
    level = verbosity_level(verbose)
    logger.remove()
    _file_sinks.clear()
    logger.add(sys.stderr, colorize=True, format=LOG_FORMAT, level=level)


def add_file_sink(out_dir, verbose: int = 0):
    """Mirror log records into ``<out_dir>/inpaintx.log``; the only file the logger ever writes."""
    path = Path(out_dir) / LOG_FILE_NAME
    key = str(path.resolve())
    if key in _file_sinks:
        return _file_sinks[key]
    path.parent.mkdir(parents=True, exist_ok=True)
    handler_id = logger.add(path, rotation="100 MB", compression="zip", level=verbosity_level(verbose),
                            format=LOG_FORMAT)
    _file_sinks[key] = handler_id
    return handler_id


def remove_file_sink(out_dir):
    handler_id = _file_sinks.pop(str((Path(out_dir) / LOG_FILE_NAME).resolve()), None)
    if handler_id is not None:
        logger.remove(handler_id)


def remove_file_sinks():
    for handler_id in list(_file_sinks.values()):
        logger.remove(handler_id)
    _file_sinks.clear()


def get_logger():
    return logger
