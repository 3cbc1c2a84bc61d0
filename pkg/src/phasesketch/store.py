"""Append-only JSON Lines record store with a journal of completed keys.

A store directory holds ``manifest.json`` (format version and the sweep
config), ``records.jsonl`` (one RunRecord per line) and ``journal.jsonl``
(one completed key per line). A record counts only once its key is in the
journal, so a run killed mid-write loses at most the record being written.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .vqe_engine import RunRecord

FORMAT_VERSION = "1.0"


class StoreError(RuntimeError):
    pass


def _check_version(version, where):
    major = str(version).split(".")[0]
    if major != FORMAT_VERSION.split(".")[0]:
        raise StoreError(f"{where}: unsupported format version {version!r} (reader is {FORMAT_VERSION})")


def _write_atomic(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class RecordStore:
    def __init__(self, directory):
        self.dir = Path(directory)
        self.manifest_path = self.dir / "manifest.json"
        self.records_path = self.dir / "records.jsonl"
        self.journal_path = self.dir / "journal.jsonl"

    # -- lifecycle -----------------------------------------------------------
    def exists(self) -> bool:
        return self.manifest_path.exists()

    def create(self, config: dict):
        self.dir.mkdir(parents=True, exist_ok=True)
        manifest = {"format_version": FORMAT_VERSION, "config": config}
        _write_atomic(self.manifest_path, json.dumps(manifest, indent=2) + "\n")
        self.records_path.touch()
        self.journal_path.touch()

    def manifest(self) -> dict:
        if not self.exists():
            raise StoreError(f"no record store at {self.dir}")
        data = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        _check_version(data.get("format_version"), self.manifest_path)
        return data

    def open(self, config: dict, resume: bool = True):
        """Create the store, or reopen it for resuming the same config."""
        if not self.exists():
            self.create(config)
            return self
        stored = self.manifest()["config"]
        if stored != config:
            raise StoreError(f"{self.dir} holds a sweep with a different config")
        if not resume and self.journal_keys():
            raise StoreError(f"{self.dir} already has records; pass --resume to continue")
        self.compact()
        return self

    # -- io ------------------------------------------------------------------
    def journal_keys(self) -> set:
        keys = set()
        if not self.journal_path.exists():
            return keys
        for line in self.journal_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn final line
            _check_version(entry.get("format_version"), self.journal_path)
            keys.add(tuple(entry["key"]))
        return keys

    def _raw_records(self):
        if not self.records_path.exists():
            return
        for line in self.records_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError:
                continue
            _check_version(data.pop("format_version", None), self.records_path)
            yield RunRecord.from_dict(data)

    def records(self) -> list[RunRecord]:
        """Journaled records, one per key (the last written wins)."""
        keys = self.journal_keys()
        out = {}
        for rec in self._raw_records():
            if rec.key in keys:
                out[rec.key] = rec
        return list(out.values())

    def append(self, rec: RunRecord):
        line = json.dumps({"format_version": FORMAT_VERSION, **rec.to_dict()})
        with open(self.records_path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        with open(self.journal_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"format_version": FORMAT_VERSION, "key": list(rec.key)}) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def rewrite(self, records):
        """Replace the record file (e.g. after setting best flags or exact refs)."""
        recs = list(records)
        lines = [json.dumps({"format_version": FORMAT_VERSION, **r.to_dict()}) for r in recs]
        _write_atomic(self.records_path, "".join(line + "\n" for line in lines))
        keys = [json.dumps({"format_version": FORMAT_VERSION, "key": list(r.key)}) for r in recs]
        _write_atomic(self.journal_path, "".join(k + "\n" for k in keys))

    def compact(self):
        """Drop unjournaled or torn lines left by an interrupted run."""
        self.rewrite(sorted(self.records(), key=lambda r: (r.stage, r.g_index, r.p, r.restart)))
