"""Raw byte fetchers for the supported URI schemes."""

from __future__ import annotations

import urllib.request
from pathlib import Path
from urllib.parse import urlparse
from urllib.request import url2pathname

import httpx

DEFAULT_S3_GATEWAY = "https://{bucket}.s3.amazonaws.com/{key}"


def file_uri_to_path(uri: str) -> Path:
    parts = urlparse(uri)
    return Path(url2pathname(parts.path))


def s3_to_https(uri: str, template: str | None = None) -> str:
    parts = urlparse(uri)
    return (template or DEFAULT_S3_GATEWAY).format(bucket=parts.netloc, key=parts.path.lstrip("/"))


def fetch_uri(uri: str, timeout: float, s3_gateway_template: str | None = None) -> bytes:
    """Download ``uri`` and return its bytes; raises OSError/httpx errors on failure."""
    scheme = urlparse(uri).scheme
    if scheme == "file":
        return file_uri_to_path(uri).read_bytes()
    if scheme == "s3":
        uri, scheme = s3_to_https(uri, s3_gateway_template), "https"
    if scheme in ("http", "https"):
        resp = httpx.get(uri, timeout=timeout, follow_redirects=True)
        resp.raise_for_status()
        return resp.content
    if scheme == "ftp":
        with urllib.request.urlopen(uri, timeout=timeout) as fh:
            return fh.read()
    raise ValueError(f"no fetcher for scheme {scheme!r}")
