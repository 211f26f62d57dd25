"""Command-line runner: ``matrixtx run|preset|validate``.

Every ``run`` writes its CSVs and a ``manifest.json`` into ``--out``.  The
manifest records the config, its hash, the package version, the seed and a
sha256 per file, so a rerun with the same config can be checked byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

from . import __version__
from .config import PRESETS, ExperimentConfig, load_config, preset_dict
from .core import MatrixTxError


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def run_config(cfg: ExperimentConfig, out_dir: str, quiet=False):
    """Run one experiment and write CSVs plus the manifest; returns the manifest."""
    from .experiments import run

    os.makedirs(out_dir, exist_ok=True)
    started = time.perf_counter()
    outcome = run(cfg)
    files = []
    for table in outcome.tables:
        path = os.path.join(out_dir, table.name)
        table.write(path)
        files.append({"name": table.name, "sha256": _sha256(path), "config_hash": cfg.hash()})
    if outcome.text:
        path = os.path.join(out_dir, "report.txt")
        with open(path, "w") as fh:
            fh.write(outcome.text + "\n")
        files.append({"name": "report.txt", "sha256": _sha256(path), "config_hash": cfg.hash()})
    manifest = {
        "experiment": cfg.experiment,
        "version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seed": cfg.get("seed"),
        "files": files,
        "summary": outcome.summary,
    }
    if "note" in cfg.raw:
        manifest["provenance"] = cfg.raw["note"]
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not quiet:
        if outcome.text:
            print(outcome.text)
        for f in files:
            print(os.path.join(out_dir, f["name"]))
        print(f"done in {time.perf_counter() - started:.1f} s", file=sys.stderr)
    return manifest


def build_parser():
    p = argparse.ArgumentParser(prog="matrixtx", description="Matrix-carrier release and channel response experiments")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default="out")

    s = sub.add_parser("preset", help="print or run a built-in parameter set")
    s.add_argument("--name", required=True, help=", ".join(PRESETS))
    s.add_argument("--emit-config", action="store_true", help="print the preset as JSON and exit")
    s.add_argument("--experiment", help="override the preset's experiment")
    s.add_argument("--out", default="out")

    v = sub.add_parser("validate", help="check a JSON config without running it")
    v.add_argument("--config", required=True)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"ok: {cfg.experiment} ({cfg.hash()[:12]})")
            return 0
        if args.command == "preset":
            data = preset_dict(args.name)
            if args.experiment:
                data["experiment"] = args.experiment
            if args.emit_config:
                print(json.dumps(data, indent=2, sort_keys=True))
                return 0
            run_config(ExperimentConfig.from_dict(data), args.out)
            return 0
        run_config(load_config(args.config), args.out)
        return 0
    except (MatrixTxError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
