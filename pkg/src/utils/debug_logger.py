import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional, Dict, Any, List
import json

# Корень иерархии логгеров проекта: src.services.x -> robust_rl.services.x
PACKAGE_LOGGER = "robust_rl"

LOG_FORMAT = '%(asctime)s | %(levelname)-8s | %(funcName)-20s | %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def get_logger(module_name: str) -> logging.Logger:
    """Логгер модуля внутри иерархии PACKAGE_LOGGER"""
    _, _, relative = module_name.partition('.')
    return logging.getLogger(f"{PACKAGE_LOGGER}.{relative or module_name}")


class RunLogger:
    """
    Логгер запуска обучения и оценки: консоль, основной файл и файл деталей поиска
    """

    def __init__(self, log_level: str = "INFO", log_dir: Optional[Path] = None,
                 log_to_console: bool = True, log_to_file: bool = True):
        self.package_logger = logging.getLogger(PACKAGE_LOGGER)
        self.package_logger.setLevel(getattr(logging, log_level.upper()))
        self.logger = logging.getLogger(f"{PACKAGE_LOGGER}.run")
        self.details_logger = logging.getLogger(f"{PACKAGE_LOGGER}.run.details")
        self.details_logger.propagate = False
        self.details_logger.setLevel(logging.DEBUG)

        self.close()

        formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

        if log_to_console:
            console_handler = logging.StreamHandler(sys.stdout)
            console_handler.setFormatter(formatter)
            self.package_logger.addHandler(console_handler)

        self.log_file: Optional[Path] = None
        self.details_file: Optional[Path] = None
        if log_to_file:
            log_dir = Path(log_dir) if log_dir is not None else Path("logs")
            log_dir.mkdir(parents=True, exist_ok=True)
            stamp = datetime.now().strftime('%Y%m%d')

            self.log_file = log_dir / f"run_{stamp}.log"
            file_handler = logging.FileHandler(self.log_file, encoding='utf-8')
            file_handler.setFormatter(formatter)
            self.package_logger.addHandler(file_handler)

            # Полные таблицы этапов поиска - в отдельный файл
            self.details_file = log_dir / f"search_details_{stamp}.log"
            details_handler = logging.FileHandler(self.details_file, encoding='utf-8')
            details_handler.setFormatter(logging.Formatter('%(asctime)s | SEARCH | %(message)s', datefmt=DATE_FORMAT))
            self.details_logger.addHandler(details_handler)

        self.logger.debug(f"=== RunLogger инициализирован (уровень: {log_level}) ===")

    def close(self) -> None:
        """Снять и закрыть все обработчики пакета"""
        for target in (self.package_logger, self.details_logger):
            for handler in target.handlers[:]:
                target.removeHandler(handler)
                handler.close()

    def log_iteration(self, iteration: int, n_iter: int, damage_label: str, mean_return: float,
                      success_rate: float, buffer_size: int):
        self.logger.info(
            f"ИТЕРАЦИЯ {iteration + 1}/{n_iter}: q={{{damage_label}}}, средняя доходность {mean_return:.3f}, "
            f"успехи {success_rate * 100:.1f}%, буфер {buffer_size}"
        )

    def log_search_result(self, method: str, label: str, evaluations: int, value: Optional[float]):
        value_text = f"{value:.3f}" if value is not None else "n/a"
        self.logger.info(f"ПОИСК ({method}): сложный сценарий {{{label}}}, {evaluations} оценок, доходность {value_text}")

    def log_search_stages(self, stages: List[Dict[str, Any]]):
        """
        Детальная таблица кандидатов каждого этапа поиска
        """
        for stage in stages:
            message_parts = [f"ЭТАП {stage['stage']}: база {{{stage['base']}}}, выбран {stage['chosen']}"]
            for candidate in stage['candidates']:
                message_parts.append(
                    f"  - {{{candidate['set']}}}: доходность {candidate['mean_return']:.4f}, "
                    f"успехи {candidate['success_rate'] * 100:.0f}%"
                )
            self.details_logger.debug("\n".join(message_parts))

    def log_evaluation(self, label: str, mean_return: float, success_rate: float, episodes: int):
        self.logger.info(f"ОЦЕНКА: {{{label}}} - доходность {mean_return:.3f}, успехи {success_rate * 100:.1f}% из {episodes}")

    def log_performance_metrics(self, operation: str, duration: float, env_steps: int = 0,
                                updates: int = 0, evaluations: int = 0, episodes: int = 0):
        """
        Время операции и пропускная способность по шагам среды, обновлениям SAC, оценкам и эпизодам
        """
        parts = [f"ПРОИЗВОДИТЕЛЬНОСТЬ: {operation} - {duration:.2f}с"]
        for count, unit in ((env_steps, "шагов среды"), (updates, "обновлений"), (evaluations, "оценок"),
                            (episodes, "эпизодов")):
            if count:
                rate = count / duration if duration > 0 else 0.0
                parts.append(f"{count} {unit} ({rate:.1f}/с)")
        self.logger.info(", ".join(parts))

    def log_error(self, error_type: str, error_message: str, iteration: Optional[int] = None,
                  damage_label: Optional[str] = None, context: Optional[Dict[str, Any]] = None):
        """
        Ошибка обучения с итерацией, текущим q и числовой сводкой (например, статистикой пакета)
        """
        where = ""
        if iteration is not None:
            where = f" на итерации {iteration + 1}"
        if damage_label is not None:
            where += f", q={{{damage_label}}}"
        message_parts = [f"ОШИБКА ({error_type}){where}: {error_message}"]
        for key, value in (context or {}).items():
            if isinstance(value, (dict, list)):
                value = json.dumps(value, ensure_ascii=False, sort_keys=True, default=str)
            message_parts.append(f"  - {key}: {value}")

        self.logger.error("\n".join(message_parts))


# Глобальный экземпляр логгера
run_logger = None

def get_debug_logger(log_level: str = "INFO") -> RunLogger:
    """
    Глобальный логгер запуска (без файлов, если не был инициализирован)
    """
    global run_logger
    if run_logger is None:
        run_logger = RunLogger(log_level=log_level, log_to_file=False)
    return run_logger

def init_debug_logging(log_level: str = "INFO", log_dir: Optional[Path] = None,
                       log_to_console: bool = True, log_to_file: bool = True) -> RunLogger:
    """
    Инициализация логирования запуска в каталоге log_dir
    """
    global run_logger
    if run_logger is not None:
        run_logger.close()
    run_logger = RunLogger(log_level=log_level, log_dir=log_dir,
                           log_to_console=log_to_console, log_to_file=log_to_file)
    return run_logger
