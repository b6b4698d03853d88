"""
Storage abstraction layer for experiment results.

Commands write JSON documents (summaries, LP reports, probe plans) and CSV
tables (verdicts, rate dumps, recurrence tables) through this interface,
so tests can swap in memory-backed storage.

Usage:
    # Production usage (file-based)
    from storage import FileResultStorage
    storage = FileResultStorage("results")

    # Testing usage (in-memory)
    from storage import InMemoryResultStorage
    storage = InMemoryResultStorage()

    # Both can be used interchangeably
    storage.save_json("summary", summary.to_dict())
    storage.save_rows("verdicts", [row.to_dict() for row in comparison.rows])
"""

import csv
import io
import json
import logging
import os
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Sequence


def _json_default(value):
    """numpy scalars and arrays in result documents."""
    if hasattr(value, 'tolist'):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def dumps(data: Any) -> str:
    return json.dumps(data, indent=2, default=_json_default)


def rows_to_csv(rows: Sequence[Dict[str, Any]]) -> str:
    """CSV text with the union of row keys as header, in first-seen order."""
    header: List[str] = []
    for row in rows:
        for key in row:
            if key not in header:
                header.append(key)
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buffer.getvalue()


class ResultStorage(ABC):
    """
    Abstract interface for result persistence.

    Results are addressed by a bare name; implementations choose the
    extension (.json for documents, .csv for row tables).
    """

    @abstractmethod
    def save_json(self, name: str, data: Any) -> str:
        """
        Save a JSON document.

        Returns:
            Where the document was stored.
        """
        pass

    @abstractmethod
    def load_json(self, name: str) -> Optional[Any]:
        """Load a JSON document, None if absent."""
        pass

    @abstractmethod
    def save_rows(self, name: str, rows: Sequence[Dict[str, Any]]) -> str:
        """Save a table as CSV."""
        pass

    @abstractmethod
    def load_rows(self, name: str) -> List[Dict[str, str]]:
        """Load a CSV table (values as strings), empty if absent."""
        pass

    @abstractmethod
    def list_results(self) -> List[str]:
        """Names of stored results."""
        pass

    @abstractmethod
    def delete_result(self, name: str) -> bool:
        """
        Delete a result (both forms).

        Returns:
            True if deleted, False if not found.
        """
        pass


class FileResultStorage(ResultStorage):
    """
    File-based storage under a base directory.

    Files:
    - {base_path}/{name}.json - documents
    - {base_path}/{name}.csv - tables
    """

    def __init__(self, base_path: str = "results"):
        self._base_path = base_path
        os.makedirs(base_path, exist_ok=True)
        logging.debug(f"FileResultStorage initialized with base_path: {base_path}")

    def _path(self, name: str, extension: str) -> str:
        return os.path.join(self._base_path, f"{name}.{extension}")

    def save_json(self, name: str, data: Any) -> str:
        path = self._path(name, "json")
        with open(path, 'w') as f:
            f.write(dumps(data))
        logging.info(f"Saved result document: {path}")
        return path

    def load_json(self, name: str) -> Optional[Any]:
        path = self._path(name, "json")
        if not os.path.exists(path):
            return None
        with open(path) as f:
            return json.load(f)

    def save_rows(self, name: str, rows: Sequence[Dict[str, Any]]) -> str:
        path = self._path(name, "csv")
        with open(path, 'w', newline='') as f:
            f.write(rows_to_csv(rows))
        logging.info(f"Saved {len(rows)} rows: {path}")
        return path

    def load_rows(self, name: str) -> List[Dict[str, str]]:
        path = self._path(name, "csv")
        if not os.path.exists(path):
            return []
        with open(path, newline='') as f:
            return list(csv.DictReader(f))

    def list_results(self) -> List[str]:
        names = {os.path.splitext(entry)[0] for entry in os.listdir(self._base_path)
                 if entry.endswith(('.json', '.csv'))}
        return sorted(names)

    def delete_result(self, name: str) -> bool:
        deleted = False
        for extension in ("json", "csv"):
            path = self._path(name, extension)
            if os.path.exists(path):
                os.remove(path)
                deleted = True
                logging.info(f"Deleted result file: {path}")
        return deleted


class InMemoryResultStorage(ResultStorage):
    """
    In-memory implementation for tests.

    Documents go through a JSON round trip so tests see what a file would hold.
    """

    def __init__(self):
        self._documents: Dict[str, Any] = {}
        self._tables: Dict[str, str] = {}
        logging.debug("InMemoryResultStorage initialized")

    def save_json(self, name: str, data: Any) -> str:
        self._documents[name] = json.loads(dumps(data))
        return f"memory://{name}.json"

    def load_json(self, name: str) -> Optional[Any]:
        return self._documents.get(name)

    def save_rows(self, name: str, rows: Sequence[Dict[str, Any]]) -> str:
        self._tables[name] = rows_to_csv(rows)
        return f"memory://{name}.csv"

    def load_rows(self, name: str) -> List[Dict[str, str]]:
        text = self._tables.get(name)
        if text is None:
            return []
        return list(csv.DictReader(io.StringIO(text)))

    def list_results(self) -> List[str]:
        return sorted(set(self._documents) | set(self._tables))

    def delete_result(self, name: str) -> bool:
        deleted = name in self._documents or name in self._tables
        self._documents.pop(name, None)
        self._tables.pop(name, None)
        return deleted


class StorageFactory:
    """
    Factory for creating storage instances.

    Example:
        storage = StorageFactory.create_file_based("results")
        storage = StorageFactory.create_in_memory()
    """

    @staticmethod
    def create_file_based(base_path: str = "results") -> FileResultStorage:
        return FileResultStorage(base_path=base_path)

    @staticmethod
    def create_in_memory() -> InMemoryResultStorage:
        return InMemoryResultStorage()
