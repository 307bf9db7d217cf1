# !/usr/bin/env python3
# -*- coding: UTF-8 -*-

"""The ``codecs`` module defines functions for casting between Python objects
and the serialized formats `dmf_poi` writes: Avro (single records and
container files) and canonical JSON.

.. autosummary::
   :nosignatures:

   dmf_poi.utils.codecs.dict_to_avro
   dmf_poi.utils.codecs.avro_to_dict
   dmf_poi.utils.codecs.dict_to_b64avro
   dmf_poi.utils.codecs.b64avro_to_dict
   dmf_poi.utils.codecs.write_avro_file
   dmf_poi.utils.codecs.read_avro_file
   dmf_poi.utils.codecs.dump_json
   dmf_poi.utils.codecs.load_json
   dmf_poi.utils.codecs.check_schema_version
"""

from base64 import b64decode, b64encode
import hashlib
from io import BytesIO
import json
from pathlib import Path

import fastavro

from .. import settings
from ..exceptions import UnreadableFile, UnsupportedSchema


def parse_schema(schema):
    """Parse an Avro schema dict with fastavro, keeping it reusable."""
    return fastavro.parse_schema(schema)


def dict_to_avro(record, schema):
    """Serialize a single record to schemaless Avro bytes.

    Args:
        record (dict): Record matching ``schema``
        schema (dict): Parsed Avro schema

    Returns:
        Avro serialized bytes
    """
    with BytesIO() as fout:
        fastavro.schemaless_writer(fout, schema, record)
        return fout.getvalue()


def avro_to_dict(bytes_data, schema):
    """Convert schemaless Avro bytes data to a dict.

    Args:
        bytes_data (bytes): Avro serialized bytes
        schema (dict): Parsed Avro schema the bytes were written with

    Returns:
        A dictionary
    """
    if bytes_data is not None:
        with BytesIO(bytes_data) as fin:
            return fastavro.schemaless_reader(fin, schema)


def dict_to_b64avro(record, schema):
    """Serialize a single record to base64 encoded, schemaless Avro bytes."""
    return b64encode(dict_to_avro(record, schema))


def b64avro_to_dict(bytes_data, schema):
    """Convert base64 encoded, schemaless Avro bytes data to a dict.

    Args:
        bytes_data (bytes): base64 encoded, Avro serialized bytes
        schema (dict): Parsed Avro schema

    Returns:
        A dictionary
    """
    if bytes_data is not None:
        return avro_to_dict(b64decode(bytes_data), schema)


def sync_marker(seed):
    """16-byte Avro sync marker derived from ``seed``.

    fastavro draws a random marker by default, which would make identical runs
    write different bytes.
    """
    return hashlib.sha256(f"dmf_poi:{seed}".encode("utf-8")).digest()[:16]


def write_avro_file(path, schema, records, metadata=None, seed=0):
    """Write ``records`` to an Avro container file at ``path``.

    Args:
        path (str or Path): Output file
        schema (dict): Parsed Avro schema
        records (iterable of dict): Records to write
        metadata (dict): String key/value pairs stored in the file header
        seed (int): Seeds the sync marker so output bytes are reproducible
    """
    with open(path, "wb") as fout:
        fastavro.writer(
            fout,
            schema,
            records,
            metadata={k: str(v) for k, v in (metadata or {}).items()},
            sync_marker=sync_marker(seed),
        )


def read_avro_file(path):
    """Read an Avro container file.

    Returns:
        (records, metadata): list of dicts and the header metadata dict
    """
    with open(path, "rb") as fin:
        try:
            reader = fastavro.reader(fin)
            records = [r for r in reader]
        except (ValueError, EOFError, KeyError) as e:
            raise UnreadableFile(f"{path} is not a readable Avro file: {e}") from e
        metadata = dict(reader.metadata)
    return records, metadata


def to_json(obj):
    """Canonical JSON text: sorted keys, 2-space indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def dump_json(obj, path):
    """Write ``obj`` to ``path`` as canonical JSON."""
    Path(path).write_text(to_json(obj), encoding="utf-8")


def load_json(path):
    """Read a JSON file into Python objects.

    Raises:
        UnreadableFile: the file is not UTF-8 encoded JSON.
    """
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except ValueError as e:  # JSONDecodeError and UnicodeDecodeError
        raise UnreadableFile(f"{path} is not a readable JSON file: {e}") from e


def check_schema_version(found, what):
    """Raise `UnsupportedSchema` unless ``found`` is the current schema version.

    ``found`` may be an int or, as in Avro file metadata, its string form.
    """
    try:
        version = int(found)
    except (TypeError, ValueError):
        version = None
    if version != settings.SCHEMA_VERSION:
        raise UnsupportedSchema(
            f"Unsupported {what}: schema_version {found!r}, expected {settings.SCHEMA_VERSION}"
        )
