"""In-memory artifact tree.

Sweep workers and tests write their outputs here instead of the file
system. A tree is a plain ``dict`` of directories and ``bytearray`` files,
so it pickles across process boundaries and can be flushed to disk later
(see ``utils.sync``).
"""

import io
import posixpath as _posix
import typing as _ty
from io import IOBase

from .protocols.io import BinaryOpen


class MemPathBackend(dict): ...


class MemBytesIO(io.BytesIO):
    def __init__(self, dest: bytearray) -> None:
        self._bytes = dest
        super().__init__()

    def close(self) -> None:
        if not self.closed:
            self.seek(0)
            self._bytes.clear()
            self._bytes.extend(self.read())
        return super().close()


class MemPath(BinaryOpen):

    __slots__ = ("_backend", "_segments", "_normalized")

    def __init__(self, *segments: "str | MemPath", backend: MemPathBackend = None):
        _segments = []
        _backend = None
        for segment in segments:
            if isinstance(segment, MemPath):
                _segments.extend(segment.segments)
                _backend = segment.backend
            else:
                _segments.append(str(segment))
        self._segments = [s for s in "/".join(_segments).split("/") if s]
        if _backend is not None and backend is None:
            backend = _backend
        self._backend = backend if backend is not None else MemPathBackend()
        self._normalized = None

    def __repr__(self):
        return "{}({!r})".format(type(self).__name__, self.as_posix())

    def __str__(self) -> str:
        return self.as_posix()

    def __truediv__(self, other: str):
        return self.with_segments(*self.segments, other)

    def __eq__(self, other):
        if not isinstance(other, MemPath):
            return NotImplemented
        return self.backend is other.backend and self.normalized == other.normalized

    def __hash__(self):
        return hash((id(self.backend), tuple(self.normalized)))

    def as_posix(self) -> str:
        return "/" + "/".join(self.segments)

    @property
    def backend(self):
        return self._backend

    @property
    def normalized(self) -> list[str]:
        if self._normalized is None:
            path = _posix.normpath(self.as_posix()).removeprefix("/")
            self._normalized = path.split("/") if path else []
        return self._normalized

    @property
    def segments(self) -> list[str]:
        return self._segments

    @property
    def parent(self):
        return self.with_segments(*self.normalized[:-1])

    def with_segments(self, *segments: str):
        return type(self)(*segments, backend=self.backend)

    def _parent_container(self) -> tuple[dict, str]:
        parent = self.backend
        *ancestors, name = self.normalized or [""]
        for path in ancestors:
            child = parent.get(path)
            if child is None:
                raise FileNotFoundError(self.parent)
            if not isinstance(child, dict):
                raise NotADirectoryError(self.parent)
            parent = child
        return parent, name

    def _content(self):
        try:
            parent, name = self._parent_container()
        except (FileNotFoundError, NotADirectoryError):
            return None
        return parent.get(name) if name else parent

    def exists(self) -> bool:
        return self._content() is not None

    def is_dir(self) -> bool:
        return isinstance(self._content(), dict)

    def is_file(self) -> bool:
        return isinstance(self._content(), bytearray)

    def mkdir(self, parents: bool = False, exist_ok: bool = False):
        if parents and self.normalized:
            parent = self.parent
            if not parent.exists():
                parent.mkdir(parents=True, exist_ok=True)
        parent, name = self._parent_container()
        if not name or name in parent:
            if exist_ok and self.is_dir():
                return
            raise FileExistsError(self)
        parent[name] = {}

    def iterdir(self) -> _ty.Iterator["MemPath"]:
        content = self._content()
        if content is None:
            raise FileNotFoundError(self)
        if not isinstance(content, dict):
            raise NotADirectoryError(self)
        for name in sorted(content):
            yield self / name

    def walk_files(self) -> _ty.Iterator["MemPath"]:
        """Every file below this directory, in sorted order."""
        for child in self.iterdir():
            if child.is_dir():
                yield from child.walk_files()
            else:
                yield child

    def relative_parts(self, root: "MemPath") -> list[str]:
        if self.normalized[: len(root.normalized)] != root.normalized:
            raise ValueError(f"{self} is not below {root}")
        return self.normalized[len(root.normalized) :]

    def _open(self, mode="r", buffering=-1) -> IOBase:
        parent, name = self._parent_container()
        if not name:
            raise IsADirectoryError(self)
        if "w" in mode:
            content = parent.get(name)
            if isinstance(content, dict):
                raise IsADirectoryError(self)
            if content is None:
                content = parent[name] = bytearray()
            return MemBytesIO(content)
        content = parent.get(name)
        if content is None:
            raise FileNotFoundError(self)
        if isinstance(content, dict):
            raise IsADirectoryError(self)
        return io.BytesIO(bytes(content))
