import logging
import os

# 📂 Директория для логов
LOG_DIR = "logs"
LOG_FILE = "popdiff.log"
ERROR_FILE = "errors.log"

_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
_configured = False


def setup_logging(level="INFO", log_dir=LOG_DIR):
    """🔧 Настраивает логирование: общий лог и отдельный errors.log."""
    global _configured
    root = logging.getLogger()
    root.setLevel(getattr(logging, str(level).upper(), logging.INFO))
    if _configured:
        return root

    # 🛠️ Создаем папку logs, если её нет
    os.makedirs(log_dir, exist_ok=True)

    main_handler = logging.FileHandler(os.path.join(log_dir, LOG_FILE), encoding="utf-8")
    main_handler.setFormatter(logging.Formatter(_FORMAT))
    root.addHandler(main_handler)

    error_handler = logging.FileHandler(os.path.join(log_dir, ERROR_FILE), encoding="utf-8")
    error_handler.setLevel(logging.ERROR)
    error_handler.setFormatter(logging.Formatter("%(asctime)s - ERROR - %(message)s"))
    root.addHandler(error_handler)

    _configured = True
    return root


def log_run(message):
    """📜 Логирует ход вычислений."""
    logging.info(message)


def log_error(message):
    """⚠️ Логирует ошибки."""
    logging.error(message)
