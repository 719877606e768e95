"""Package version, recorded in run manifests."""

from __future__ import annotations

import importlib.metadata
import importlib.resources


def _installed_or_bundled_version() -> str:
    try:
        return importlib.metadata.version("crlr")
    except importlib.metadata.PackageNotFoundError:
        # Source checkout without installed metadata.
        bundled = importlib.resources.files("crlr").joinpath("_version.txt")
        return bundled.read_text().strip()


__version__ = _installed_or_bundled_version()
