#!/usr/bin/env python3
"""validate_json.py SCHEMA DEF < instance.json

Validates a JSON document on stdin against SCHEMA's $defs/DEF. Exit 0 when
valid, 1 with the errors on stderr otherwise."""

import json
import sys

import jsonschema


def main():
    schema_path, name = sys.argv[1], sys.argv[2]
    with open(schema_path, encoding="utf-8") as f:
        root = json.load(f)
    schema = {"$schema": root["$schema"], "$defs": root["$defs"], "$ref": "#/$defs/" + name}
    instance = json.load(sys.stdin)
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.path))
    for e in errors:
        print("/".join(map(str, e.path)) + ": " + e.message, file=sys.stderr)
    return 1 if errors else 0


if __name__ == "__main__":
    sys.exit(main())
