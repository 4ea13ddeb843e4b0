"""Command-line front end: gen, cluster, evolve, detect, eval.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .clustering import ClusterTree, hierarchical_fit, hierarchical_predict
from .core import ClusterCode, CratosError, DataError, load_dataset, load_series, save_dataset
from .datagen import GeneratorParams, generate_dataset
from .detect import PipelineConfig, run_pipeline
from .evaluate import clustering_report, pass_rate
from .evolve import EvolutionConfig, Genome, decode, evolve_per_cluster, series_passes

SEED_ENV = "CRATOS_SEED"

log = logging.getLogger("cratos")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _resolve_seed(flag: Optional[int]) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_assignments(path: Path) -> dict:
    if not path.exists():
        raise DataError(f"predictions file not found: {path}")
    out = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["series", "code"]:
            raise DataError(f"{path}: expected header 'series,code'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{path}: line {lineno}: expected 2 fields")
            out[row[0]] = ClusterCode.parse(row[1])
    return out


def _genome_path(genomes_dir: Path, code: ClusterCode) -> Path:
    return genomes_dir / f"{code}.json"


def _load_pipeline(genomes_dir: Path, code: ClusterCode) -> PipelineConfig:
    path = _genome_path(genomes_dir, code)
    if not path.exists():
        raise DataError(f"no evolved genome for cluster {code} in {genomes_dir}")
    try:
        return decode(Genome.from_dict(json.loads(path.read_text())))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: malformed genome: {exc}") from None


# ------------------------------
# Commands
# ------------------------------

def cmd_gen(args, seed: int) -> None:
    params = GeneratorParams.from_json(args.spec) if args.spec else GeneratorParams()
    if args.per_cluster < 1:
        raise UsageError("--per-cluster must be >= 1")
    data = generate_dataset(args.per_cluster, args.length, seed, params, anomalies=args.anomalies)
    manifest = save_dataset(data, args.out)
    print(f"wrote {len(data)} series to {manifest}")


def cmd_cluster(args, seed: int) -> None:
    data = load_dataset(args.dataset)
    tree, codes = hierarchical_fit(data, seed=seed)
    out = Path(args.out)
    tree.save(out)
    assign = Path(args.assignments) if args.assignments else out.with_name(out.stem + "_assignments.csv")
    _write_rows(assign, ["series", "code"], [(e.source, str(c)) for e, c in zip(data, codes)])
    counts = {str(c): sum(1 for k in codes if k == c) for c in ClusterCode.all()}
    print(" ".join(f"{c}={n}" for c, n in counts.items()))


def cmd_evolve(args, seed: int) -> None:
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    try:
        cfg = EvolutionConfig(args.population, args.survivors, args.offspring, args.generations, seed,
                              args.delay_tolerance, args.meta_rate, not args.conventional_rate)
    except DataError as exc:
        raise UsageError(str(exc)) from None
    only = None if args.cluster.lower() == "all" else ClusterCode.parse(args.cluster)
    data = load_dataset(args.dataset)
    tree = ClusterTree.load(args.model)
    codes = [hierarchical_predict(tree, e.series) for e in data]
    results = evolve_per_cluster(cfg, data, codes, only=only, workers=args.workers)
    if not results:
        raise DataError(f"no training series fall in cluster {only}")
    out = Path(args.out)
    genomes = {}
    for code, res in results.items():
        gpath = _genome_path(out, code)
        res.save(gpath, out / f"{code}_history.csv")
        genomes[str(code)] = gpath.name
        members = sum(1 for c in codes if c == code)
        print(f"{code}: pass {res.best.fitness}/{members}")
    manifest = {
        "seed": seed,
        "dataset": str(Path(args.dataset)),
        "model": str(Path(args.model)),
        "genomes": genomes,
        "evolution": {"population": cfg.population, "survivors": cfg.survivors,
                      "offspring": cfg.offspring, "generations": cfg.generations,
                      "delay_tolerance": cfg.delay_tolerance, "meta_rate": cfg.meta_rate,
                      "literal_rate": cfg.literal_rate},
        "version": __version__,
    }
    (out / "run.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def cmd_detect(args, seed: int) -> None:
    series = load_series(args.series)
    tree = ClusterTree.load(args.model)
    code = hierarchical_predict(tree, series)
    result = run_pipeline(_load_pipeline(Path(args.genomes), code), series)
    result.save_csv(args.out)
    print(f"{code} {len(result.anomalous_indices)} anomalous points")


def cmd_eval(args, seed: int) -> None:
    truth = load_dataset(args.truth)
    predicted = _read_assignments(Path(args.predictions))
    pred, true = [], []
    for e in truth:
        if e.code is None:
            raise DataError(f"truth entry {e.source} has no code")
        if e.source not in predicted:
            raise DataError(f"no prediction for {e.source}")
        pred.append(predicted[e.source])
        true.append(e.code)
    report = clustering_report(pred, true)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "clustering.json", out / "clustering.txt")
    sys.stdout.write(report.to_text())
    if args.genomes:
        genomes = Path(args.genomes)
        passed = 0
        for e, code in zip(truth, pred):
            if e.labels is None:
                raise DataError(f"truth entry {e.source} has no anomaly labels")
            flagged = run_pipeline(_load_pipeline(genomes, code), e.series).anomalous_indices
            passed += series_passes(flagged, e.labels, args.delay_tolerance)
        rate = pass_rate(passed, len(truth))
        (out / "pass_rate.json").write_text(json.dumps(
            {"pass_count": passed, "total": len(truth), "pass_rate": rate,
             "delay_tolerance": args.delay_tolerance}, indent=1, sort_keys=True) + "\n")
        print(f"pass rate {passed}/{len(truth)} = {rate:.4f}")


# ------------------------------
# Parser
# ------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cratos", description="Cluster KPI series and evolve per-cluster anomaly detectors.")
    p.add_argument("--seed", type=int, default=None, help=f"master seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--version", action="version", version=f"cratos {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic labeled dataset")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--spec", help="JSON file overriding generator parameters")
    g.add_argument("--per-cluster", type=int, default=2)
    g.add_argument("--length", type=int, default=5760)
    g.add_argument("--anomalies", type=int, default=1, help="planted anomalies per series")
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("cluster", help="fit the three-level cluster tree")
    c.add_argument("--dataset", required=True, help="dataset manifest.json")
    c.add_argument("--out", required=True, help="model JSON path")
    c.add_argument("--assignments", help="assignments CSV (default: <model>_assignments.csv)")
    c.set_defaults(func=cmd_cluster)

    e = sub.add_parser("evolve", help="evolve detection pipelines per cluster")
    e.add_argument("--dataset", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--cluster", default="all", help="cluster code such as TFT, or 'all'")
    e.add_argument("--out", required=True, help="directory for genomes and histories")
    e.add_argument("--population", type=int, default=200)
    e.add_argument("--survivors", type=int, default=40)
    e.add_argument("--offspring", type=int, default=160)
    e.add_argument("--generations", type=int, default=40)
    e.add_argument("--delay-tolerance", type=int, default=5)
    e.add_argument("--meta-rate", type=float, default=0.1)
    e.add_argument("--conventional-rate", action="store_true",
                   help="mutate selection genes when r < rate instead of r > rate")
    e.add_argument("--workers", type=int, default=1)
    e.set_defaults(func=cmd_evolve)

    d = sub.add_parser("detect", help="route a series to its cluster and run its pipeline")
    d.add_argument("--series", required=True)
    d.add_argument("--model", required=True)
    d.add_argument("--genomes", required=True, help="directory written by evolve")
    d.add_argument("--out", required=True, help="result CSV path")
    d.set_defaults(func=cmd_detect)

    v = sub.add_parser("eval", help="score cluster predictions and, optionally, detection")
    v.add_argument("--predictions", required=True, help="CSV with header series,code")
    v.add_argument("--truth", required=True, help="truth dataset manifest.json")
    v.add_argument("--out", required=True, help="report directory")
    v.add_argument("--genomes", help="evolved genomes; adds the pass rate")
    v.add_argument("--delay-tolerance", type=int, default=5)
    v.set_defaults(func=cmd_eval)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        seed = _resolve_seed(args.seed)
        args.func(args, seed)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CratosError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
