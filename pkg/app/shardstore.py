"""Sharded corpus-opslag met streaming reader en hervatbare cursor.

Shardformaat: records achter elkaar, elk als 4-byte little-endian lengte
gevolgd door de UTF-8 JSON van het Sample. Naast de shards staat
manifest.json met per shard het aantal records en de FNV-1a hash.
"""
import json
import os
import struct
from dataclasses import asdict, dataclass, replace

from config import DEFAULT_SHARD_SIZE, FSYNC, SCHEMA_VERSION
from digest import FNV_OFFSET, fnv1a64, fnv1a_file, hash_json, hex64
from errors import DataError, StorageError, UsageError
from logging_config import get_logger
from schema import TaskType, sample_from_json

logger = get_logger(__name__)

MANIFEST_FILE = "manifest.json"
DATASET_FILE = "dataset.json"
LOCK_FILE = ".lock"
COMPRESSION = "none"

_LENGTH = struct.Struct("<I")


def shard_name(index):
    return f"shard-{index:05d}"


@dataclass(frozen=True)
class ShardInfo:
    file: str
    record_count: int
    content_hash: str


@dataclass(frozen=True)
class ShardManifest:
    shards: tuple
    total_records: int
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    compression: str = COMPRESSION

    def to_dict(self):
        data = asdict(self)
        data["shards"] = [asdict(s) for s in self.shards]
        return data

    def manifest_hash(self):
        return hash_json(self.to_dict())


def manifest_from_dict(data):
    try:
        shards = tuple(ShardInfo(file=s["file"], record_count=int(s["record_count"]),
                                 content_hash=s["content_hash"]) for s in data["shards"])
        manifest = ShardManifest(
            shards=shards,
            total_records=int(data["total_records"]),
            schema_version=int(data["schema_version"]),
            seed=int(data.get("seed", 0)),
            compression=data.get("compression", COMPRESSION),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DataError("SCHEMA_VIOLATION", f"ongeldige shard manifest: {e}", path=MANIFEST_FILE)
    if manifest.compression != COMPRESSION:
        raise DataError("SCHEMA_VIOLATION", f"compressie niet ondersteund: {manifest.compression}",
                        path="compression")
    if manifest.total_records != sum(s.record_count for s in shards):
        raise DataError("SCHEMA_VIOLATION", "total_records klopt niet met de shards",
                        path="total_records")
    if [s.file for s in shards] != [shard_name(i) for i in range(len(shards))]:
        raise DataError("SCHEMA_VIOLATION", "shard namen niet aaneengesloten", path="shards")
    return manifest


def load_manifest(directory):
    path = os.path.join(directory, MANIFEST_FILE)
    try:
        with open(path, "r", encoding="utf-8") as f:
            return manifest_from_dict(json.load(f))
    except OSError as e:
        raise StorageError("IO_FAILURE", str(e), path=path)
    except json.JSONDecodeError as e:
        raise DataError("MALFORMED_TEXT", f"manifest is geen geldige JSON: {e.msg}", path=path)


def _fsync_file(f):
    if FSYNC:
        f.flush()
        os.fsync(f.fileno())


def write_json_atomic(path, data):
    """Schrijf JSON via een temp-bestand en os.replace."""
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")
            _fsync_file(f)
        os.replace(tmp, path)
    except OSError as e:
        raise StorageError("IO_FAILURE", str(e), path=path)


class DirectoryLock:
    """Exclusieve schrijver per map via een O_EXCL lock-bestand."""

    def __init__(self, directory):
        self.path = os.path.join(directory, LOCK_FILE)
        self._held = False

    def acquire(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StorageError("LOCKED", "map wordt al beschreven", path=self.path)
        except OSError as e:
            raise StorageError("IO_FAILURE", str(e), path=self.path)
        with os.fdopen(fd, "w") as f:
            f.write(str(os.getpid()))
        self._held = True

    def release(self):
        if self._held:
            try:
                os.remove(self.path)
            except FileNotFoundError:
                pass
            self._held = False

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, *exc):
        self.release()


class ShardWriter:
    """Incrementele shard writer; geheugen begrensd door één record.

    Gebruik:
        with ShardWriter(out_dir, shard_size=1000) as writer:
            for sample in samples:
                writer.add(sample)
        manifest = writer.manifest
    """

    def __init__(self, out_dir, shard_size=DEFAULT_SHARD_SIZE, seed=0, lock=True):
        if shard_size < 1:
            raise UsageError("INVALID_CONFIG", "shard_size moet minimaal 1 zijn")
        self.out_dir = out_dir
        self.shard_size = shard_size
        self.seed = seed
        self.manifest = None
        self._lock = DirectoryLock(out_dir) if lock else None
        self._shards = []
        self._file = None
        self._count = 0
        self._hash = FNV_OFFSET

    def open(self):
        try:
            os.makedirs(self.out_dir, exist_ok=True)
        except OSError as e:
            raise StorageError("IO_FAILURE", str(e), path=self.out_dir)
        if self._lock:
            self._lock.acquire()
        return self

    def __enter__(self):
        return self.open()

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self.close()
            elif self._file:
                self._file.close()
        finally:
            if self._lock:
                self._lock.release()

    def _path(self, index):
        return os.path.join(self.out_dir, shard_name(index))

    def add(self, sample):
        self.add_encoded(sample.to_json().encode("utf-8"))

    def add_encoded(self, payload):
        """Voeg een al gecodeerd record (UTF-8 JSON bytes) toe."""
        if self._file is None:
            try:
                self._file = open(self._path(len(self._shards)), "wb")
            except OSError as e:
                raise StorageError("IO_FAILURE", str(e), path=self.out_dir)
            self._count = 0
            self._hash = FNV_OFFSET
        record = _LENGTH.pack(len(payload)) + payload
        try:
            self._file.write(record)
        except OSError as e:
            raise StorageError("IO_FAILURE", str(e), path=self._file.name)
        self._hash = fnv1a64(record, self._hash)
        self._count += 1
        if self._count == self.shard_size:
            self._finish_shard()

    def _finish_shard(self):
        path = self._file.name
        try:
            _fsync_file(self._file)
            self._file.close()
        except OSError as e:
            raise StorageError("IO_FAILURE", str(e), path=path)
        self._file = None
        expected = hex64(self._hash)
        actual = hex64(fnv1a_file(path))
        if actual != expected:
            raise StorageError("HASH_MISMATCH", "shard hash klopt niet na schrijven",
                               path=path, expected=expected, actual=actual)
        self._shards.append(ShardInfo(file=os.path.basename(path), record_count=self._count,
                                      content_hash=expected))

    def close(self):
        if self._file is not None:
            self._finish_shard()
        self.manifest = ShardManifest(
            shards=tuple(self._shards),
            total_records=sum(s.record_count for s in self._shards),
            seed=self.seed,
        )
        write_json_atomic(os.path.join(self.out_dir, MANIFEST_FILE), self.manifest.to_dict())
        logger.info("Shards geschreven", extra={"out": self.out_dir,
                                                "shards": len(self._shards),
                                                "records": self.manifest.total_records})
        return self.manifest


def write_shards(samples, shard_size, out_dir, seed=0):
    """Schrijf een sample-stroom in één doorgang naar shards.

    Returns: ShardManifest
    """
    with ShardWriter(out_dir, shard_size=shard_size, seed=seed) as writer:
        for sample in samples:
            writer.add(sample)
    return writer.manifest


def write_task_shards(samples, shard_size, out_dir, seed=0):
    """Schrijf één shard-set per taak onder DIR/<task>/ plus DIR/dataset.json.

    Returns: dict TaskType -> ShardManifest
    """
    writers = {}
    manifests = {}
    with DirectoryLock(_makedirs(out_dir)):
        try:
            for sample in samples:
                writer = writers.get(sample.task)
                if writer is None:
                    writer = ShardWriter(os.path.join(out_dir, sample.task.value),
                                         shard_size=shard_size, seed=seed, lock=False).open()
                    writers[sample.task] = writer
                writer.add(sample)
            for task, writer in writers.items():
                manifests[task] = writer.close()
        finally:
            for writer in writers.values():
                if writer._file is not None:
                    writer._file.close()

        dataset = {
            "schema_version": SCHEMA_VERSION,
            "seed": seed,
            "tasks": {
                task.value: {"dir": task.value,
                             "total_records": m.total_records,
                             "manifest_hash": m.manifest_hash()}
                for task, m in sorted(manifests.items(), key=lambda kv: kv[0].value)
            },
        }
        write_json_atomic(os.path.join(out_dir, DATASET_FILE), dataset)
    return manifests


def _makedirs(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise StorageError("IO_FAILURE", str(e), path=path)
    return path


def load_dataset(directory):
    """Laad een per-taak dataset.

    Returns:
        (dict TaskType -> (pad, ShardManifest), dataset hash)
    """
    path = os.path.join(directory, DATASET_FILE)
    try:
        with open(path, "r", encoding="utf-8") as f:
            dataset = json.load(f)
    except OSError as e:
        raise StorageError("IO_FAILURE", str(e), path=path)
    except json.JSONDecodeError as e:
        raise DataError("MALFORMED_TEXT", f"dataset.json is geen geldige JSON: {e.msg}", path=path)

    result = {}
    for name, entry in dataset.get("tasks", {}).items():
        task_dir = os.path.join(directory, entry["dir"])
        manifest = load_manifest(task_dir)
        if manifest.manifest_hash() != entry["manifest_hash"]:
            raise DataError("CORRUPT_SHARD", "manifest hash wijkt af van dataset.json",
                            path=task_dir)
        result[TaskType.parse(name)] = (task_dir, manifest)
    return result, hash_json(dataset)


# --- Cursor ---

@dataclass(frozen=True)
class Cursor:
    epoch: int = 0
    shard_index: int = 0
    record_index: int = 0
    draws_consumed: int = 0

    def at_end(self, manifest):
        return self.shard_index >= len(manifest.shards)


def _valid_position(cursor, manifest):
    if min(cursor.epoch, cursor.shard_index, cursor.record_index, cursor.draws_consumed) < 0:
        return False
    if cursor.shard_index == len(manifest.shards):
        return cursor.record_index == 0
    if cursor.shard_index > len(manifest.shards):
        return False
    return cursor.record_index < manifest.shards[cursor.shard_index].record_count


def serialize_cursor(cursor, manifest=None, schema_version=SCHEMA_VERSION):
    """Canonieke JSON; met een manifest gaat ook diens hash mee."""
    data = asdict(cursor)
    data["schema_version"] = schema_version
    if manifest is not None:
        data["manifest_hash"] = manifest.manifest_hash()
    return json.dumps(data, sort_keys=True, separators=(",", ":")).encode("utf-8")


def restore_cursor(data, manifest):
    """Herstel een cursor en controleer hem tegen de manifest.

    Raises: DataError(CURSOR_MANIFEST_MISMATCH)
    """
    try:
        fields = json.loads(data)
        version = fields.pop("schema_version")
        expected_hash = fields.pop("manifest_hash", None)
        cursor = Cursor(**{k: int(fields[k]) for k in Cursor.__dataclass_fields__})
    except (ValueError, KeyError, TypeError) as e:
        raise DataError("CURSOR_MANIFEST_MISMATCH", f"cursor onleesbaar: {e}")
    if version != manifest.schema_version:
        raise DataError("CURSOR_MANIFEST_MISMATCH", "schema_version verschilt",
                        cursor_version=version, manifest_version=manifest.schema_version)
    if expected_hash is not None and expected_hash != manifest.manifest_hash():
        raise DataError("CURSOR_MANIFEST_MISMATCH", "cursor hoort bij een andere manifest",
                        cursor_manifest=expected_hash, manifest=manifest.manifest_hash())
    if not _valid_position(cursor, manifest):
        raise DataError("CURSOR_MANIFEST_MISMATCH", "positie buiten de manifest",
                        shard_index=cursor.shard_index, record_index=cursor.record_index,
                        shards=len(manifest.shards))
    return cursor


class ShardReader:
    """Streaming reader over één shard-set.

    Houdt één shard open met de byte-offset van de volgende record; een
    cursor op een andere positie wordt bereikt door records over te slaan op
    hun lengte-prefix. Hashes worden bij het openen van een shard gecontroleerd
    (eenmaal per shard per reader).
    """

    def __init__(self, directory, manifest=None, verify=True):
        self.directory = directory
        self.manifest = manifest or load_manifest(directory)
        self.verify = verify
        self._verified = set()
        self._file = None
        self._position = None  # (shard_index, record_index) van de volgende record

    def close(self):
        if self._file:
            self._file.close()
        self._file = None
        self._position = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _open_shard(self, index):
        self.close()
        info = self.manifest.shards[index]
        path = os.path.join(self.directory, info.file)
        if self.verify and index not in self._verified:
            try:
                actual = hex64(fnv1a_file(path))
            except OSError as e:
                raise StorageError("IO_FAILURE", str(e), path=path)
            if actual != info.content_hash:
                raise DataError("CORRUPT_SHARD", "shard hash klopt niet", path=path,
                                expected=info.content_hash, actual=actual)
            self._verified.add(index)
        try:
            self._file = open(path, "rb")
        except OSError as e:
            raise StorageError("IO_FAILURE", str(e), path=path)
        self._position = (index, 0)

    def _read_payload(self):
        header = self._file.read(_LENGTH.size)
        if len(header) != _LENGTH.size:
            raise DataError("CORRUPT_SHARD", "record afgebroken", path=self._file.name)
        (length,) = _LENGTH.unpack(header)
        payload = self._file.read(length)
        if len(payload) != length:
            raise DataError("CORRUPT_SHARD", "record afgebroken", path=self._file.name)
        return payload

    def _seek(self, shard_index, record_index):
        if self._position is None or self._position[0] != shard_index \
                or self._position[1] > record_index:
            self._open_shard(shard_index)
        while self._position[1] < record_index:
            header = self._file.read(_LENGTH.size)
            if len(header) != _LENGTH.size:
                raise DataError("CORRUPT_SHARD", "record afgebroken", path=self._file.name)
            self._file.seek(_LENGTH.unpack(header)[0], os.SEEK_CUR)
            self._position = (shard_index, self._position[1] + 1)

    def next(self, cursor):
        """Lees de record onder de cursor.

        Returns:
            (Sample, volgende cursor), of (None, cursor van het volgende epoch)
            als de cursor aan het einde van het epoch staat.

        Raises: DataError(CORRUPT_SHARD | CURSOR_MANIFEST_MISMATCH)
        """
        if not _valid_position(cursor, self.manifest):
            raise DataError("CURSOR_MANIFEST_MISMATCH", "positie buiten de manifest",
                            shard_index=cursor.shard_index, record_index=cursor.record_index)
        if cursor.at_end(self.manifest):
            return None, replace(cursor, epoch=cursor.epoch + 1, shard_index=0, record_index=0)

        self._seek(cursor.shard_index, cursor.record_index)
        payload = self._read_payload()
        self._position = (cursor.shard_index, cursor.record_index + 1)
        try:
            sample = sample_from_json(payload)
        except DataError as e:
            raise DataError("CORRUPT_SHARD", f"record niet te parsen: {e.code}",
                            path=self._file.name, record_index=cursor.record_index)

        if cursor.record_index + 1 < self.manifest.shards[cursor.shard_index].record_count:
            advanced = replace(cursor, record_index=cursor.record_index + 1)
        else:
            advanced = replace(cursor, shard_index=cursor.shard_index + 1, record_index=0)
        return sample, advanced

    def iter_epoch(self, cursor=None):
        """Alle samples vanaf de cursor tot het einde van het epoch."""
        cursor = cursor or Cursor()
        while True:
            sample, cursor = self.next(cursor)
            if sample is None:
                return
            yield sample
