import logging
from pathlib import Path
from typing import Optional

from sim_config import RUN_LOG_DIRECTORY


class RunLogger:
    """Handles logging of experiment runs to separate files, one per experiment."""

    def __init__(self, log_directory: str = RUN_LOG_DIRECTORY):
        self.log_directory = Path(log_directory)
        self.log_directory.mkdir(parents=True, exist_ok=True)
        self.loggers = {}  # Cache for experiment-specific loggers

    def _get_safe_name(self, experiment: str, tag: Optional[str] = None) -> str:
        """Convert an experiment id (and optional tag) to a safe filename."""
        name = f"{experiment}_{tag}" if tag else experiment
        safe_name = "".join(c for c in name if c.isalnum() or c in (' ', '-', '_')).strip()
        return safe_name.replace(' ', '_')

    def _get_experiment_logger(self, experiment: str, tag: Optional[str] = None) -> logging.Logger:
        """Get or create a logger for a specific experiment."""
        key = (experiment, tag)
        if key not in self.loggers:
            log_file = self.log_directory / f"{self._get_safe_name(experiment, tag)}.log"

            logger = logging.getLogger(f"run.{self._get_safe_name(experiment, tag)}")
            logger.setLevel(logging.INFO)

            # Remove existing handlers to avoid duplicates
            for handler in logger.handlers[:]:
                logger.removeHandler(handler)
                handler.close()

            handler = logging.FileHandler(log_file, encoding='utf-8')
            formatter = logging.Formatter('%(asctime)s - %(message)s', datefmt='%Y-%m-%d %H:%M:%S')
            handler.setFormatter(formatter)
            logger.addHandler(handler)

            # Prevent propagation to root logger
            logger.propagate = False

            self.loggers[key] = logger

        return self.loggers[key]

    def log_event(self, experiment: str, kind: str, message: str, tag: Optional[str] = None):
        """Log one entry; ``kind`` picks the entry format."""
        logger = self._get_experiment_logger(experiment, tag)

        if kind == "start":
            log_entry = f"[START] {message}"
        elif kind == "end":
            log_entry = f"[END] {message}"
        elif kind == "fail":
            log_entry = f"[FAIL] {message}"
        elif kind == "out_of_regime":
            log_entry = f"[OUT OF REGIME] {message}"
        elif kind == "rejected":
            log_entry = f"[REJECTED] {message}"
        else:
            log_entry = f"[{kind.upper()}] {message}"

        logger.info(log_entry)

    def log_start(self, experiment: str, seed: int, params: dict):
        settings = ", ".join(f"{k}={v}" for k, v in sorted(params.items()))
        self.log_event(experiment, "start", f"seed={seed} {settings}")

    def log_end(self, experiment: str, rows: int, failures: int, passed: bool):
        self.log_event(experiment, "end", f"{rows} rows, {failures} failed checks, {'PASS' if passed else 'FAIL'}")

    def log_failed_check(self, experiment: str, instance: int, metric: str, measured: float, bound: float):
        self.log_event(experiment, "fail", f"instance {instance}: {metric} measured {measured:.12g} vs bound {bound:.12g}")

    def log_instance_error(self, experiment: str, instance: int, status: str, error: Exception):
        self.log_event(experiment, status, f"instance {instance}: {type(error).__name__}: {error}")

    def close(self):
        for logger in self.loggers.values():
            for handler in logger.handlers[:]:
                logger.removeHandler(handler)
                handler.close()
        self.loggers.clear()
