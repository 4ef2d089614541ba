"""Flush an in-memory artifact tree to a local directory."""

import enum as _enum
import hashlib as _hashlib
import logging as _logging
import pathlib as _pathlib
import typing as _ty

from ..mempath import MemPath

_logger = _logging.getLogger(__name__)


class ArtifactEvent(_enum.Enum):
    Copy = 1
    Skipped = 2
    CreatedDirectory = 3


ArtifactHook = _ty.Callable[[MemPath, _pathlib.Path, ArtifactEvent, bool], None]


def _digest(data: bytes) -> str:
    return _hashlib.sha256(data).hexdigest()


class ArtifactSyncer(object):
    """Copies every file of a MemPath tree below a target directory.

    Files whose target already holds identical bytes are skipped, so
    flushing the same tree twice leaves the directory untouched.
    """

    __slots__ = ("_hook", "overwrite")
    EVENT_LOG_FORMAT = "[{event}] Source:{source} Target:{target} DryRun:{dry_run}"

    def __init__(self, hook: ArtifactHook = None, overwrite: bool = True) -> None:
        self._hook = hook
        self.overwrite = overwrite

    def log(self, msg: str, **kwargs):
        _logger.debug(msg.format_map(kwargs))

    def hook(
        self,
        source: MemPath,
        target: _pathlib.Path,
        event: ArtifactEvent,
        dry_run: bool,
        do: _ty.Callable[[], None] = None,
    ):
        if not dry_run and do:
            do()
        if self._hook:
            self._hook(source, target, event, dry_run)
        self.log(
            self.EVENT_LOG_FORMAT,
            event=event.name,
            source=source,
            target=target,
            dry_run=dry_run,
        )

    def sync(
        self, source: MemPath, target: str | _pathlib.Path, /, dry_run: bool = False
    ) -> list[_pathlib.Path]:
        """Flush ``source`` below ``target``; returns the written paths."""
        target = _pathlib.Path(target)
        written = []
        if not target.is_dir():
            self.hook(
                source,
                target,
                ArtifactEvent.CreatedDirectory,
                dry_run,
                lambda: target.mkdir(parents=True, exist_ok=True),
            )
        for file in source.walk_files():
            dest = target.joinpath(*file.relative_parts(source))
            data = file.read_bytes()
            if dest.is_file() and _digest(dest.read_bytes()) == _digest(data):
                self.hook(file, dest, ArtifactEvent.Skipped, dry_run)
                continue
            if dest.exists() and not self.overwrite:
                raise FileExistsError(dest)
            if not dest.parent.is_dir():
                self.hook(
                    file,
                    dest.parent,
                    ArtifactEvent.CreatedDirectory,
                    dry_run,
                    lambda: dest.parent.mkdir(parents=True, exist_ok=True),
                )
            self.hook(file, dest, ArtifactEvent.Copy, dry_run, lambda: dest.write_bytes(data))
            written.append(dest)
        return written
