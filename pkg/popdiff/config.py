import logging
import os
from dataclasses import dataclass, field

import yaml  # type: ignore

from popdiff.errors import ConfigError, TooLarge

BASE_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
CONFIG_PATH = os.path.join(BASE_DIR, "config.yaml")

DEFAULTS = {
    "run": {
        "seed": 20240517,
        "seeds": 50,
        "guard_limit": 10**8,
        "backend": "exact",
        "workers": 1,
    },
    "logging": {"dir": "logs", "level": "INFO"},
    "db": {"enabled": False, "url": "sqlite:///popdiff_runs.db"},
}

# Текущий предел перебора; CLI меняет его через set_guard_limit
_guard_limit = DEFAULTS["run"]["guard_limit"]


def load_config(path=None):
    """📄 Загружает config.yaml поверх встроенных значений по умолчанию."""
    path = path or CONFIG_PATH
    merged = {section: dict(values) for section, values in DEFAULTS.items()}
    if not os.path.exists(path):
        logging.info(f"ℹ️ {path} не найден, используются значения по умолчанию")
        return merged

    try:
        with open(path, "r", encoding="utf-8") as file:
            loaded = yaml.safe_load(file) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"не удалось разобрать {path}: {e}") from e

    if not isinstance(loaded, dict):
        raise ConfigError(f"{path}: ожидался словарь верхнего уровня")
    for section, values in loaded.items():
        if section in merged and isinstance(values, dict):
            merged[section].update({k: v for k, v in values.items() if k in merged[section]})
    return merged


@dataclass
class RunConfig:
    subcommand: str
    seed: int = DEFAULTS["run"]["seed"]
    seeds: int = DEFAULTS["run"]["seeds"]
    guard_limit: int = DEFAULTS["run"]["guard_limit"]
    backend: str = DEFAULTS["run"]["backend"]
    workers: int = 1
    output: str | None = None
    deterministic: bool = False
    db_enabled: bool = False
    db_url: str = DEFAULTS["db"]["url"]
    extra: dict = field(default_factory=dict)

    def echo(self):
        """Конфигурация в виде, пригодном для отчёта."""
        return {
            "subcommand": self.subcommand,
            "seed": self.seed,
            "seeds": self.seeds,
            "guard_limit": self.guard_limit,
            "backend": self.backend,
            "workers": self.workers,
            **self.extra,
        }


def build_run_config(args, cfg):
    """🔀 Флаги CLI перекрывают значения из YAML."""
    run = cfg["run"]
    backend = getattr(args, "backend", None) or run["backend"]
    if backend not in ("exact", "float"):
        raise ConfigError(f"неизвестный backend: {backend}")

    def pick(name, default):
        value = getattr(args, name, None)
        return default if value is None else value

    return RunConfig(
        subcommand=args.command,
        seed=int(pick("seed", run["seed"])),
        seeds=int(pick("seeds", run["seeds"])),
        guard_limit=int(pick("guard_limit", run["guard_limit"])),
        backend=backend,
        workers=int(pick("workers", run["workers"])),
        output=getattr(args, "output", None),
        deterministic=bool(getattr(args, "deterministic", False)),
        db_enabled=bool(getattr(args, "db", False) or cfg["db"]["enabled"]),
        db_url=cfg["db"]["url"],
    )


def set_guard_limit(limit):
    global _guard_limit
    _guard_limit = int(limit)


def get_guard_limit():
    return _guard_limit


def guard(count, what="перебор", limit=None):
    """⛔ Проверяет, что перебор не превышает guard_limit."""
    limit = _guard_limit if limit is None else limit
    if count > limit:
        raise TooLarge(f"{what}: {count} элементов превышает guard_limit={limit}")
    return count
