"""Atomische checkpoints: schrijven, verifiëren, selecteren en opruimen.

Protocol:
    1. schrijf alle bestanden in .tmp-ckpt-%09d (met fsync)
    2. schrijf manifest.json met de hash van elk bestand
    3. hernoem de temp-map naar ckpt-%09d
    4. schrijf COMPLETE als laatste

Een checkpoint is consistent als COMPLETE bestaat en elke hash klopt.
"""
import json
import os
import re
import shutil
from dataclasses import dataclass

import config
from digest import fnv1a64, hex64
from errors import DataError, StorageError
from logging_config import get_logger

logger = get_logger(__name__)

CHECKPOINT_FILES = ("model.bin", "optimizer.bin", "sampler.json", "cursor.json", "monitor.json")
MANIFEST = "manifest.json"
COMPLETE = "COMPLETE"

PERIODIC = "periodic"
EMERGENCY = "emergency"

_NAME = re.compile(r"^ckpt-(\d{9})(\.emergency)?$")

# Elk punt waar een crash kan vallen, in protocolvolgorde
BOUNDARIES = (
    ("begin",)
    + tuple(f"{when}:{name}" for name in CHECKPOINT_FILES for when in ("before", "mid"))
    + ("before:manifest.json", "mid:manifest.json", "before:rename",
       "before:COMPLETE", "after:COMPLETE")
)


def checkpoint_name(step, kind=PERIODIC):
    name = f"ckpt-{step:09d}"
    return f"{name}.emergency" if kind == EMERGENCY else name


@dataclass(frozen=True)
class Checkpoint:
    step: int
    kind: str
    path: str
    manifest: dict
    blobs: dict  # bestandsnaam -> bytes

    def json_blob(self, name):
        return json.loads(self.blobs[name])


def _fsync_dir(path):
    if not config.FSYNC:
        return
    try:
        fd = os.open(path, os.O_RDONLY)
    except OSError:
        return
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


def _write_file(path, data, boundary):
    """Schrijf in twee helften zodat een crash halverwege een torn write geeft."""
    half = len(data) // 2
    with open(path, "wb") as f:
        f.write(data[:half])
        f.flush()
        boundary(f"mid:{os.path.basename(path)}")
        f.write(data[half:])
        if config.FSYNC:
            f.flush()
            os.fsync(f.fileno())


def write_checkpoint(run_dir, step, payloads, meta, kind=PERIODIC, fault_hook=None):
    """Schrijf een checkpoint volgens het marker-last protocol.

    Args:
        run_dir: run-map
        step: stapnummer
        payloads: dict bestandsnaam -> bytes (alle CHECKPOINT_FILES)
        meta: extra manifest-velden (config_hash, manifest_hash, ...)
        kind: PERIODIC of EMERGENCY
        fault_hook: optionele callable(boundary) voor fault-injection

    Returns: pad van de checkpoint-map

    Raises: StorageError(IO_FAILURE)
    """
    def boundary(name):
        if fault_hook:
            fault_hook(name)

    final = os.path.join(run_dir, checkpoint_name(step, kind))
    tmp = os.path.join(run_dir, f".tmp-{checkpoint_name(step, kind)}")
    try:
        boundary("begin")
        shutil.rmtree(tmp, ignore_errors=True)
        os.makedirs(tmp)

        hashes = {}
        for name in CHECKPOINT_FILES:
            data = payloads[name]
            boundary(f"before:{name}")
            _write_file(os.path.join(tmp, name), data, boundary)
            hashes[name] = hex64(fnv1a64(data))

        manifest = dict(meta)
        manifest.update({
            "step": step,
            "kind": kind,
            "schema_version": config.SCHEMA_VERSION,
            "files": hashes,
        })
        boundary(f"before:{MANIFEST}")
        _write_file(os.path.join(tmp, MANIFEST),
                    json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8"), boundary)
        _fsync_dir(tmp)

        boundary("before:rename")
        if os.path.exists(final):
            # Overblijfsel van een eerdere poging zonder COMPLETE
            shutil.rmtree(final)
        os.rename(tmp, final)
        _fsync_dir(run_dir)

        boundary(f"before:{COMPLETE}")
        with open(os.path.join(final, COMPLETE), "wb") as f:
            if config.FSYNC:
                os.fsync(f.fileno())
        _fsync_dir(final)
        boundary(f"after:{COMPLETE}")
    except OSError as e:
        raise StorageError("IO_FAILURE", str(e), path=final)

    logger.info("Checkpoint geschreven", extra={"step": step, "kind": kind, "path": final})
    return final


def verify_checkpoint(path):
    """Controleer een checkpoint-map.

    Returns:
        (is_consistent, problems) tuple
    """
    problems = []
    if not os.path.isfile(os.path.join(path, COMPLETE)):
        problems.append("COMPLETE ontbreekt")
        return (False, problems)
    try:
        with open(os.path.join(path, MANIFEST), "rb") as f:
            manifest = json.loads(f.read())
    except (OSError, ValueError) as e:
        problems.append(f"manifest onleesbaar: {e}")
        return (False, problems)

    files = manifest.get("files", {})
    for name in CHECKPOINT_FILES:
        expected = files.get(name)
        try:
            with open(os.path.join(path, name), "rb") as f:
                actual = hex64(fnv1a64(f.read()))
        except OSError:
            problems.append(f"{name} ontbreekt")
            continue
        if actual != expected:
            problems.append(f"{name} hash klopt niet")

    match = _NAME.match(os.path.basename(path))
    if not match or int(match.group(1)) != manifest.get("step"):
        problems.append("stap in manifest wijkt af van de mapnaam")
    return (len(problems) == 0, problems)


def list_checkpoints(run_dir):
    """Alle checkpoint-mappen als (step, kind, path), oplopend."""
    if not os.path.isdir(run_dir):
        return []
    found = []
    for name in os.listdir(run_dir):
        match = _NAME.match(name)
        path = os.path.join(run_dir, name)
        if match and os.path.isdir(path):
            kind = EMERGENCY if match.group(2) else PERIODIC
            found.append((int(match.group(1)), kind, path))
    return sorted(found, key=lambda c: (c[0], c[1] == PERIODIC))


def select_latest(run_dir):
    """Hoogste consistente checkpoint; bij gelijke stap wint periodiek.

    Returns: pad of None
    """
    for step, kind, path in reversed(list_checkpoints(run_dir)):
        is_consistent, problems = verify_checkpoint(path)
        if is_consistent:
            return path
        logger.warning("Checkpoint overgeslagen",
                       extra={"step": step, "kind": kind, "problems": problems})
    return None


def load_checkpoint(path):
    """Laad een checkpoint na verificatie.

    Raises: DataError(NO_CONSISTENT_CHECKPOINT)
    """
    is_consistent, problems = verify_checkpoint(path)
    if not is_consistent:
        raise DataError("NO_CONSISTENT_CHECKPOINT", "checkpoint is niet consistent",
                        path=path, problems=problems)
    try:
        with open(os.path.join(path, MANIFEST), "rb") as f:
            manifest = json.loads(f.read())
        blobs = {}
        for name in CHECKPOINT_FILES:
            with open(os.path.join(path, name), "rb") as f:
                blobs[name] = f.read()
    except OSError as e:
        raise StorageError("IO_FAILURE", str(e), path=path)
    return Checkpoint(step=manifest["step"], kind=manifest.get("kind", PERIODIC), path=path,
                      manifest=manifest, blobs=blobs)


def apply_retention(run_dir, keep_last, keep_every=0):
    """Ruim checkpoints op: bewaar de laatste K periodieke plus elk veelvoud van keep_every.

    Temp-mappen, onvolledige checkpoints en noodcheckpoints ouder dan de
    nieuwste bewaarde worden ook verwijderd.

    Returns: lijst van verwijderde paden
    """
    checkpoints = list_checkpoints(run_dir)
    consistent = [c for c in checkpoints if c[1] == PERIODIC and verify_checkpoint(c[2])[0]]
    keep = {c[2] for c in consistent[-keep_last:]} if keep_last > 0 else set()
    if keep_every > 0:
        keep |= {c[2] for c in consistent if c[0] % keep_every == 0}
    newest = consistent[-1][0] if consistent else -1

    removed = []
    for step, kind, path in checkpoints:
        if path in keep:
            continue
        if kind == PERIODIC and (path in {c[2] for c in consistent} or step < newest):
            removed.append(path)
        elif kind == EMERGENCY and step < newest:
            removed.append(path)
    for name in os.listdir(run_dir):
        if name.startswith(".tmp-ckpt-"):
            removed.append(os.path.join(run_dir, name))

    for path in removed:
        shutil.rmtree(path, ignore_errors=True)
    if removed:
        logger.info("Checkpoints opgeruimd", extra={"removed": len(removed)})
    return removed
