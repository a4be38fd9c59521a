"""📝 JSON-lines отчёты: точные дроби как строки "num/den", служебные поля запуска."""

import dataclasses
import json
import sys
from fractions import Fraction

import numpy as np

from popdiff import __version__


def to_jsonable(obj):
    """Рекурсивно приводит результат операции к JSON-совместимому виду."""
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [to_jsonable(v) for v in items]
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if hasattr(obj, "to_list"):
        return obj.to_list()
    if dataclasses.is_dataclass(obj):
        return to_jsonable(dataclasses.asdict(obj))
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def build_report(run_config, payload, wall_time=None):
    """Отчёт: версия, эхо конфигурации, backend, seed и, вне детерминированного режима, время."""
    report = {
        "tool": "popdiff",
        "version": __version__,
        "subcommand": run_config.subcommand,
        "seed": run_config.seed,
        "backend": run_config.backend,
        "config": run_config.echo(),
        "result": payload,
    }
    if wall_time is not None and not run_config.deterministic:
        report["wall_time_s"] = round(wall_time, 3)
    return to_jsonable(report)


def dumps(report):
    return json.dumps(report, sort_keys=True, ensure_ascii=False)


def write_report(report, output=None):
    """Одна строка JSON на отчёт; output=None пишет в stdout."""
    line = dumps(report) + "\n"
    if output:
        with open(output, "a", encoding="utf-8") as file:
            file.write(line)
    else:
        sys.stdout.write(line)
    return line
