#!/usr/bin/env python3
"""Validate a cpl run report against the JSON schema, optionally diffing it
against a golden report with a numeric tolerance."""
import argparse
import json
import math
import sys

import jsonschema


def diff(a, b, path, tol, out):
    if isinstance(a, dict) and isinstance(b, dict):
        for key in sorted(set(a) | set(b)):
            if key not in a or key not in b:
                out.append(f"{path}/{key}: present in only one report")
            else:
                diff(a[key], b[key], f"{path}/{key}", tol, out)
    elif isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            out.append(f"{path}: length {len(a)} != {len(b)}")
            return
        for i, (x, y) in enumerate(zip(a, b)):
            diff(x, y, f"{path}[{i}]", tol, out)
    elif isinstance(a, float) or isinstance(b, float):
        if not (isinstance(a, (int, float)) and isinstance(b, (int, float))) or \
                not math.isclose(a, b, rel_tol=tol, abs_tol=tol):
            out.append(f"{path}: {a!r} != {b!r}")
    elif a != b:
        out.append(f"{path}: {a!r} != {b!r}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("report")
    ap.add_argument("--schema", required=True)
    ap.add_argument("--golden")
    ap.add_argument("--tol", type=float, default=1e-9)
    args = ap.parse_args()

    with open(args.report) as f:
        report = json.load(f)
    with open(args.schema) as f:
        schema = json.load(f)
    try:
        jsonschema.validate(report, schema)
    except jsonschema.ValidationError as e:
        print(f"schema violation at /{'/'.join(map(str, e.absolute_path))}: {e.message}")
        return 1
    print("schema ok")

    if args.golden:
        with open(args.golden) as f:
            golden = json.load(f)
        problems = []
        diff(report, golden, "", args.tol, problems)
        if problems:
            print("\n".join(problems[:20]))
            return 1
        print("golden ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
