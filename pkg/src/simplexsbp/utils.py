import csv
import json
import re
from pathlib import Path

import numpy as np


class Utility:

    @staticmethod
    def format(
        string: str,
        data: dict[str, object],
        fallback: str = "NA"
    ) -> str:
        assert isinstance(string, str), f"string must be a string. Value: {string!r}"
        assert isinstance(data, dict), f"data must be a dictionary. Value: {data!r}"
        assert isinstance(fallback, str), f"fallback must be a string. Value: {fallback!r}"

        placeholders = re.findall(r'<<(.*?)>>', string)

        for key in set(placeholders):
            value = data.get(key, fallback)
            if not isinstance(value, str):
                value = str(value)

            string = string.replace(f"<<{key}>>", value.strip())

        return string

    @staticmethod
    def write_csv(path: Path, header: list[str], rows: list[list[object]]) -> Path:
        assert isinstance(header, list) and header, f"header must be a non-empty list. Value: {header!r}"
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in rows:
                assert len(row) == len(header), f"row width must match header. Value: {row!r}"
                writer.writerow(row)
        return path

    @staticmethod
    def write_json(path: Path, data: dict[str, object]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(data, f, indent=2, default=ObjectService.to_jsonable)
        return path

    @staticmethod
    def read_json(path: Path) -> dict[str, object]:
        with open(path) as f:
            return json.load(f)


class ObjectService:
    @staticmethod
    def validate_keys(data: dict[str, object] | None, keys: list[str]) -> bool:
        if data is None:
            data = {}

        assert isinstance(data, dict), f"data must be a dictionary. Value: {data}"
        assert isinstance(keys, list), f"keys must be a list. Value: {keys}"
        assert all(isinstance(key, str) for key in keys), f"all keys must be strings. Value: {keys}"

        return not keys or all(key in data for key in keys)

    @staticmethod
    def to_jsonable(value: object) -> object:
        if isinstance(value, np.ndarray):
            return value.tolist()
        if isinstance(value, (np.integer,)):
            return int(value)
        if isinstance(value, (np.floating,)):
            return float(value)
        if isinstance(value, Path):
            return str(value)
        raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")
