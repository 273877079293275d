"""
Запись и чтение структурированных журналов в формате JSON Lines.

Одна запись - одна строка, ключи отсортированы, окончания строк LF;
массивы и скаляры numpy приводятся к обычным типам Python.
"""

from __future__ import annotations
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List
import json

import numpy as np


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    if isinstance(value, Path):
        return value.as_posix()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def to_json_line(record: Dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, default=_to_builtin) + "\n"


def write_jsonl(path: Path, records: Iterable[Dict[str, Any]]) -> Path:
    """Перезапись файла набором записей"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for record in records:
            f.write(to_json_line(record))
    return path


def append_jsonl(path: Path, record: Dict[str, Any]) -> None:
    """Дописывание одной записи; файл сбрасывается на диск сразу"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'a', encoding='utf-8', newline='\n') as f:
        f.write(to_json_line(record))
        f.flush()


def read_jsonl(path: Path) -> List[Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        return []
    records = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{line_number}: invalid JSON line ({e})")
    return records


def truncate_jsonl(path: Path, keep: int) -> None:
    """Оставить первые keep записей (используется при продолжении прерванного запуска)"""
    records = read_jsonl(path)
    write_jsonl(path, records[:keep])
