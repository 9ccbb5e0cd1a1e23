"""Durable, versioned storage of run artifacts in plain directories.

A run is a directory named by its UTC creation time and a short hash of
its configuration.  Every payload is written atomically (temp file then
rename) with the manifest last, so a directory containing a manifest is
complete and a directory without one is detectably unfinished.  SHA-256
digests in the manifest let readers verify integrity before use.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.json"
DATA_NAME = "data.csv"


class NotARunError(Exception):
    """The path does not contain a completed run (no parseable manifest)."""


class RunIntegrityError(Exception):
    """A stored payload does not match its manifest digest."""


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    """Provenance record for one run directory.

    Parameters
    ----------
    artifact_version : str
        Package version that produced the run.
    master_seed : int
        Root seed of every random stream in the run.
    config_hash : str
        SHA-256 of the stored config.json bytes; filled by write_run.
    created_utc, finished_utc : str
        ISO timestamps; stamped by write_run when left empty.
    data_digest : str or None
        SHA-256 of the input data payload, if the run stores one.
    outputs : dict
        Payload filename -> SHA-256 digest inventory; filled by write_run.
    """

    artifact_version: str
    master_seed: int
    config_hash: str = ""
    created_utc: str = ""
    finished_utc: str = ""
    data_digest: str | None = None
    outputs: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        raw = json.loads(text)
        return cls(**{k: raw[k] for k in cls.__dataclass_fields__})


def _as_bytes(value) -> bytes:
    if isinstance(value, bytes):
        return value
    if isinstance(value, str):
        return value.encode("utf-8")
    raise TypeError(f"payload values must be str or bytes, got {type(value).__name__}")


def _atomic_write(directory: Path, name: str, payload: bytes) -> None:
    tmp = directory / (name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, directory / name)


def write_run(manifest: RunManifest, payloads, root="runs") -> Path:
    """Persist payloads plus a completed manifest into a fresh directory.

    The directory is named by UTC timestamp and the first 8 hex digits
    of the config hash; a same-second collision appends a counter.
    Payloads land via write-temp-then-rename with the manifest last, and
    any failure removes the partial directory before re-raising.

    Parameters
    ----------
    manifest : RunManifest
        Caller fills artifact_version and master_seed; hashes,
        timestamps and the output inventory are computed here.
    payloads : mapping
        Filename -> str or bytes.  Must include config.json; the name
        manifest.json is reserved.
    root : path-like
        Parent directory for runs; created if missing.

    Returns
    -------
    Path
        The run directory.
    """
    if MANIFEST_NAME in payloads:
        raise ValueError(f"{MANIFEST_NAME} is written by write_run, not a payload")
    if CONFIG_NAME not in payloads:
        raise ValueError(f"payloads must include {CONFIG_NAME}")
    names = sorted(payloads)
    config_bytes = _as_bytes(payloads[CONFIG_NAME])
    config_hash = sha256_hex(config_bytes)

    now = datetime.now(timezone.utc)
    stamp = now.strftime("%Y%m%dT%H%M%SZ")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    run_dir = None
    for attempt in range(1, 1000):
        suffix = "" if attempt == 1 else f"-{attempt}"
        candidate = root / f"{stamp}-{config_hash[:8]}{suffix}"
        try:
            candidate.mkdir()
        except FileExistsError:
            continue
        run_dir = candidate
        break
    if run_dir is None:
        raise OSError(f"could not create a fresh run directory under {root}")

    try:
        outputs = {}
        for name in names:
            data = _as_bytes(payloads[name])
            _atomic_write(run_dir, name, data)
            outputs[name] = sha256_hex(data)
        final = replace(
            manifest,
            config_hash=config_hash,
            created_utc=manifest.created_utc or now.isoformat(),
            finished_utc=datetime.now(timezone.utc).isoformat(),
            data_digest=outputs.get(DATA_NAME, manifest.data_digest),
            outputs=outputs,
        )
        _atomic_write(run_dir, MANIFEST_NAME, final.to_json().encode("utf-8"))
    except BaseException:
        shutil.rmtree(run_dir, ignore_errors=True)  # no half-written runs
        raise
    return run_dir


def load_run(path) -> tuple[RunManifest, dict]:
    """Open a run directory, verifying every payload digest.

    Parameters
    ----------
    path : path-like
        Run directory produced by write_run.

    Returns
    -------
    (RunManifest, dict)
        The manifest and a mapping filename -> zero-argument callable
        returning the payload bytes.

    Raises
    ------
    NotARunError
        No directory, no manifest, or manifest does not parse.
    RunIntegrityError
        A payload is missing or fails its digest check.
    """
    run_dir = Path(path)
    manifest_path = run_dir / MANIFEST_NAME
    if not manifest_path.is_file():
        raise NotARunError(f"{run_dir}: no {MANIFEST_NAME}; not a completed run")
    try:
        manifest = RunManifest.from_json(manifest_path.read_text())
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise NotARunError(f"{manifest_path}: manifest does not parse: {exc}") from exc

    for name, digest in manifest.outputs.items():
        payload_path = run_dir / name
        if not payload_path.is_file():
            raise RunIntegrityError(f"{run_dir}: missing payload {name}")
        actual = sha256_hex(payload_path.read_bytes())
        if actual != digest:
            raise RunIntegrityError(
                f"{run_dir}: digest mismatch for {name}: "
                f"manifest {digest[:12]}.., file {actual[:12]}.."
            )
    if CONFIG_NAME not in manifest.outputs:
        raise RunIntegrityError(f"{run_dir}: manifest lists no {CONFIG_NAME}")
    stored_config_hash = manifest.outputs[CONFIG_NAME]
    if stored_config_hash != manifest.config_hash:
        raise RunIntegrityError(
            f"{run_dir}: config hash {manifest.config_hash[:12]}.. does not match "
            f"stored {CONFIG_NAME} ({stored_config_hash[:12]}..)"
        )

    def reader(name: str):
        target = run_dir / name
        return lambda: target.read_bytes()

    return manifest, {name: reader(name) for name in manifest.outputs}
