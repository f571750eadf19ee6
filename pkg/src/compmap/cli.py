"""Command-line front end.

Subcommands: keygen, encrypt, decrypt, attack, randtest, lyapunov, graph,
diffuse.  Failures print one JSON object ``{"code", "message", "context"}``
to stderr and exit nonzero (2 for usage errors, 1 otherwise).

Relative output paths are resolved against ``$COMPMAP_OUTPUT_DIR`` when set.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import attack as atk
from . import chaos, diffusion, fileio, randomness
from .cipher import PUBLISHED_KEY, decrypt, encrypt, sample_key
from .errors import CompmapError

OUTPUT_DIR_ENV = "COMPMAP_OUTPUT_DIR"


class UsageError(CompmapError):
    code = "usage_error"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, prog=self.prog)


def _out(path) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _dims(text: str):
    try:
        m, n = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"dimensions must look like 64x64, got {text!r}") from None
    if m < 1 or n < 1:
        raise UsageError(f"dimensions must be positive, got {text!r}")
    return m, n


def _floats(text: str, count: int | None = None):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise UsageError(f"expected {count} comma-separated numbers, got {text!r}")
    return vals


def _write_json(doc, path):
    _out(path).write_text(json.dumps(doc, indent=2) + "\n")


def _read_input(path, raw):
    return fileio.bytes_as_image(Path(path).read_bytes()) if raw else fileio.read_pgm(path)


def _write_output(img, path, raw):
    if raw:
        _out(path).write_bytes(np.asarray(img, dtype=np.uint8).tobytes())
    else:
        fileio.write_pgm(img, _out(path))


# --------------------------------------------------------------------------


def cmd_keygen(args):
    if args.published:
        key = PUBLISHED_KEY
    elif args.seed is None:
        raise UsageError("keygen needs --seed (or --published)")
    else:
        rng = np.random.default_rng(args.seed)
        key = sample_key(rng)
        if args.check:
            m, n = args.check
            for _ in range(1000):
                try:
                    key.keystreams(m, n)
                    break
                except CompmapError:
                    key = sample_key(rng)
    fileio.save_key(key, _out(args.out))


def cmd_encrypt(args):
    key = fileio.load_key(args.key)
    _write_output(encrypt(_read_input(args.inp, args.raw), key), args.out, args.raw)


def cmd_decrypt(args):
    key = fileio.load_key(args.key)
    _write_output(decrypt(_read_input(args.inp, args.raw), key), args.out, args.raw)


def cmd_attack(args):
    m, n = args.dims
    if args.oracle == "in-process":
        if not args.key:
            raise UsageError("--oracle in-process needs --key")
        oracle = atk.InProcessOracle(fileio.load_key(args.key), m, n)
    else:
        if not (args.outbox and args.inbox):
            raise UsageError("--oracle file needs --outbox and --inbox")
        oracle = atk.FileExchangeOracle(args.outbox, args.inbox, m, n, timeout=args.timeout)
    pairs = atk.DEFAULT_PAIRS
    if args.pairs:
        vals = [int(v) for v in args.pairs.split(",")]
        if len(vals) % 2:
            raise UsageError("--pairs needs an even number of values")
        pairs = tuple(zip(vals[::2], vals[1::2]))
    try:
        ek, transcript = atk.run_differential_attack(oracle, pairs)
    except CompmapError as exc:
        if args.transcript and getattr(exc, "transcript", None) is not None:
            _write_json(exc.transcript.to_dict(), args.transcript)
        raise
    out = _out(args.out)
    ek.save(out, _out(args.perm_out) if args.perm_out else None)
    doc = transcript.to_dict()
    if args.transcript:
        _write_json(doc, args.transcript)
    if args.decrypt:
        plain = atk.decrypt_with_equivalent(fileio.read_pgm(args.decrypt), ek)
        fileio.write_pgm(plain, _out(args.decrypt_out or "recovered.pgm"))
    print(json.dumps({"total_chosen_plaintexts": doc["total_chosen_plaintexts"], "phases": doc["phases"]}))


def _reference_bytes(rng, n):
    # counter-based reference source, independent of the chaotic maps
    return np.random.Generator(np.random.Philox(int(rng.integers(2**63)))).integers(0, 256, n, dtype=np.uint8)


def cmd_randtest(args):
    reports = []
    for gen in args.generator:
        if gen in ("f", "g"):
            r = randomness.run_suite(gen, args.batch, args.sample_bytes, args.alpha, args.seed)
        elif gen == "reference":
            r = randomness.run_suite("external", args.batch, args.sample_bytes, args.alpha, args.seed, external=_reference_bytes)
            r.generator = "reference"
        else:
            if not args.input:
                raise UsageError("--generator file needs --input")
            data = np.frombuffer(Path(args.input).read_bytes(), dtype=np.uint8)
            chunks = iter(range(0, len(data) - args.sample_bytes + 1, args.sample_bytes))

            def from_file(rng, n, data=data, chunks=chunks):
                try:
                    start = next(chunks)
                except StopIteration:
                    raise UsageError(f"{args.input} holds fewer than {args.batch} samples of {n} bytes") from None
                return data[start : start + n]

            r = randomness.run_suite("external", args.batch, args.sample_bytes, args.alpha, args.seed, external=from_file)
            r.generator = "file"
        reports.append(r)
    _write_json({"reports": [r.to_dict() for r in reports]}, args.out)
    table = randomness.format_table(reports)
    if args.table:
        _out(args.table).write_text(table)
    sys.stdout.write(table)


def cmd_lyapunov(args):
    if args.map == "logistic":
        grid = [(r,) for r in np.linspace(args.range1[0], args.range1[1], args.resolution)]
    else:
        grid = chaos.param_grid(args.range1, args.range2, args.resolution)
    res = chaos.lyapunov_sweep(args.map, grid, args.x0, args.transient, args.samples)
    _out(args.out).write_text(res.to_csv())
    summary = {
        "map": args.map,
        "cells": len(res.cells),
        "fraction_positive": res.fraction_positive,
        "fraction_escaped": res.fraction_escaped,
        "x0": args.x0,
        "n_transient": args.transient,
        "n_sample": args.samples,
    }
    g = chaos.GMapParams(*args.collapse_g)
    summary["g_orbit_collapse"] = {"alpha3": g.alpha3, "alpha4": g.alpha4, **chaos.orbit_collapse_fraction(g, seed=args.seed)}
    if args.summary:
        _write_json(summary, args.summary)
    print(json.dumps(summary))


def cmd_graph(args):
    points = chaos.map_graph(args.map, args.params, args.range, args.samples)
    _out(args.out).write_text(chaos.graph_csv(points))


def cmd_diffuse(args):
    key = fileio.load_key(args.key)
    img = fileio.read_pgm(args.inp)
    report = diffusion.bit_flip_diff(key, img, args.row, args.col, args.bit)
    outdir = _out(Path(args.out_dir) / "summary.json").parent
    for p in range(8):
        fileio.write_pgm(report.masks[p].astype(np.uint8) * 255, outdir / f"plane{p}.pgm")
    doc = report.to_dict()
    doc["planes"] = [row.__dict__ for row in diffusion.plane_change_summary(report)]
    (outdir / "summary.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(json.dumps({k: doc[k] for k in ("plane_counts", "lowest_changed_plane", "changed_fraction")}))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="compmap", description="Composition-map image cipher workbench")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("keygen", help="write a key file")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--published", action="store_true", help="emit the published experiment key")
    s.add_argument("--check", type=_dims, metavar="MxN", help="resample until keystreams of this size are usable")
    s.set_defaults(func=cmd_keygen)

    for name, fn in (("encrypt", cmd_encrypt), ("decrypt", cmd_decrypt)):
        s = sub.add_parser(name, help=f"{name} a P5 PGM image")
        s.add_argument("--key", required=True)
        s.add_argument("--in", dest="inp", required=True)
        s.add_argument("--out", required=True)
        s.add_argument("--raw", action="store_true", help="treat input/output as raw bytes (a 1xL image)")
        s.set_defaults(func=fn)

    s = sub.add_parser("attack", help="differential chosen-plaintext attack")
    s.add_argument("--oracle", choices=("in-process", "file"), default="in-process")
    s.add_argument("--key", help="hidden key for the in-process oracle")
    s.add_argument("--dims", type=_dims, required=True, metavar="MxN")
    s.add_argument("--out", required=True, help="equivalent key JSON")
    s.add_argument("--perm-out", help="permutation file (default: <out>.perm.bin)")
    s.add_argument("--transcript")
    s.add_argument("--outbox")
    s.add_argument("--inbox")
    s.add_argument("--timeout", type=float, default=600.0)
    s.add_argument("--pairs", help="comma-separated a,b values, e.g. 9,127,1,52,33,65")
    s.add_argument("--decrypt", help="cipher PGM to decrypt with the recovered key")
    s.add_argument("--decrypt-out")
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("randtest", help="run the nine-test battery")
    s.add_argument("--generator", choices=("f", "g", "reference", "file"), action="append", required=True)
    s.add_argument("--input", help="byte file for --generator file")
    s.add_argument("--batch", type=int, default=100)
    s.add_argument("--sample-bytes", type=int, default=32768)
    s.add_argument("--alpha", type=float, default=randomness.ALPHA)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True, help="JSON report")
    s.add_argument("--table", help="plain-text table")
    s.set_defaults(func=cmd_randtest)

    s = sub.add_parser("lyapunov", help="Lyapunov exponent sweep (CSV)")
    s.add_argument("--map", choices=("f", "g", "logistic"), default="f")
    s.add_argument("--range1", type=lambda t: _floats(t, 2), default=(1.0, 4.0))
    s.add_argument("--range2", type=lambda t: _floats(t, 2), default=(1.0, 5.0))
    s.add_argument("--resolution", type=int, default=50)
    s.add_argument("--x0", type=float, default=25.687)
    s.add_argument("--transient", type=int, default=1000)
    s.add_argument("--samples", type=int, default=5000)
    s.add_argument("--seed", type=int, default=0, help="seed of the g-orbit collapse diagnostic")
    s.add_argument("--collapse-g", type=lambda t: _floats(t, 2), default=(PUBLISHED_KEY.g.alpha3, PUBLISHED_KEY.g.alpha4))
    s.add_argument("--out", required=True)
    s.add_argument("--summary")
    s.set_defaults(func=cmd_lyapunov)

    s = sub.add_parser("graph", help="sample a map's graph (CSV)")
    s.add_argument("--map", choices=("f", "g", "logistic"), default="f")
    s.add_argument("--params", type=_floats, required=True)
    s.add_argument("--range", type=lambda t: _floats(t, 2), required=True)
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_graph)

    s = sub.add_parser("diffuse", help="single-bit plaintext sensitivity")
    s.add_argument("--key", required=True)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--row", type=int, required=True)
    s.add_argument("--col", type=int, required=True)
    s.add_argument("--bit", type=int, required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_diffuse)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except CompmapError as exc:
        json.dump({"code": exc.code, "message": str(exc), "context": _jsonable(exc.context)}, sys.stderr)
        sys.stderr.write("\n")
        return 2 if isinstance(exc, UsageError) else 1
    except (OSError, ValueError) as exc:
        code = "io_error" if isinstance(exc, OSError) else "value_error"
        json.dump({"code": code, "message": str(exc), "context": {}}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    return 0


def _jsonable(ctx):
    return {k: (v if isinstance(v, (int, float, str, bool, type(None))) else str(v)) for k, v in ctx.items()}


if __name__ == "__main__":
    sys.exit(main())
