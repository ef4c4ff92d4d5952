"""posterlens command line: the full pipeline plus one subcommand per stage."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, FORMAT_VERSION


def _cmd_version(_args: argparse.Namespace) -> int:
    print(f"posterlens {__version__} (format {FORMAT_VERSION})")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    from .pipeline import PipelineConfig, run_pipeline

    config = PipelineConfig.load(args.config)
    outcomes = run_pipeline(config)
    for outcome in outcomes:
        print(f"{outcome.name}: {outcome.status}")
    return 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    from .ingestion import CassetteClient, HttpMetadataClient, ingest_catalog

    if args.offline or args.cassette:
        if not args.cassette:
            print("--offline requires --cassette", file=sys.stderr)
            return 2
        client = CassetteClient(args.cassette)
    else:
        if not args.api_base_url:
            print("set --cassette for offline runs or --api-base-url for live ones", file=sys.stderr)
            return 2
        client = HttpMetadataClient(args.api_base_url, args.api_key or "")
    result = ingest_catalog(
        args.movie_dump,
        client,
        args.out,
        min_votes=args.min_votes,
        exclude_animated=args.exclude_animated,
    )
    print(
        f"movies={len(result.movies)} posters={len(result.posters)} "
        f"actors={len(result.actors)} rejects={result.rejects} fetch_failures={result.fetch_failures}"
    )
    return 0


def _cmd_dedup(args: argparse.Namespace) -> int:
    from .catalog import read_posters, write_jsonl
    from .imageprep import dedup_posters, dhash_hex, hash_posters

    in_dir = Path(args.in_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    posters = read_posters(in_dir / "posters.jsonl")
    hashed = hash_posters(posters, root=in_dir)
    by_movie: dict[str, list] = {}
    for ref, bits in hashed:
        by_movie.setdefault(ref.movie_id, []).append((ref, bits))
    kept_all, clusters_all = [], []
    for movie_id in sorted(by_movie):
        kept, clusters = dedup_posters(by_movie[movie_id], threshold=args.threshold)
        kept_all.extend(kept)
        clusters_all.extend(clusters)
    hash_by_id = {ref.poster_id: bits for ref, bits in hashed}
    write_jsonl(out / "posters.hashed.jsonl", ({**r.to_json(), "dhash": dhash_hex(b)} for r, b in hashed))
    write_jsonl(out / "clusters.jsonl", (c.to_json() for c in clusters_all))
    write_jsonl(out / "kept.jsonl", ({**r.to_json(), "dhash": dhash_hex(hash_by_id[r.poster_id])} for r in kept_all))
    print(f"posters={len(hashed)} kept={len(kept_all)} clusters={len(clusters_all)}")
    return 0


def _cmd_grayscale(args: argparse.Namespace) -> int:
    from .catalog import ActorProfileRaw, read_actors, write_jsonl
    from .imageprep import is_grayscale

    in_dir = Path(args.in_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    actors = read_actors(in_dir / "actors.jsonl")
    filtered = []
    dropped = 0
    for actor in actors:
        keep = tuple(p for p in actor.image_paths if not is_grayscale(in_dir / p, args.tolerance))
        dropped += len(actor.image_paths) - len(keep)
        filtered.append(ActorProfileRaw(actor_id=actor.actor_id, name=actor.name, image_paths=keep))
    write_jsonl(out / "actors.filtered.jsonl", (a.to_json() for a in filtered))
    print(f"actors={len(filtered)} grayscale_dropped={dropped}")
    return 0


def _cmd_match(args: argparse.Namespace) -> int:
    from .catalog import read_jsonl, read_movies, write_jsonl
    from .gateway import read_bundle
    from .identity import IndexScope, collect_actor_embeddings, match_catalog

    bundle_root = Path(args.bundle)
    catalog = Path(args.catalog)
    movies = read_movies(catalog / "movies.jsonl")
    poster_bundle = read_bundle(bundle_root / "posters")
    actor_bundle = read_bundle(bundle_root / "actors")
    posters_by_movie: dict[str, list[str]] = {}
    for rec in read_jsonl(catalog / "posters.jsonl"):
        if rec["poster_id"] in poster_bundle.detections:
            posters_by_movie.setdefault(rec["movie_id"], []).append(rec["poster_id"])
    matches, omitted, coverage = match_catalog(
        movies,
        posters_by_movie,
        poster_bundle,
        collect_actor_embeddings(actor_bundle, args.confidence_floor),
        IndexScope.parse(args.scope),
        args.accept_threshold,
        args.confidence_floor,
    )
    write_jsonl(args.out, matches)
    print(json.dumps({"matches": len(matches), "movies_with_omitted_actors": len(omitted), **coverage}, sort_keys=True))
    return 0


def _cmd_vote_ethnicity(args: argparse.Namespace) -> int:
    from .catalog import write_jsonl
    from .gateway import read_bundle
    from .identity import vote_catalog

    records, coverage = vote_catalog(read_bundle(args.bundle), args.confidence_floor)
    write_jsonl(args.out, records)
    print(json.dumps(coverage, sort_keys=True))
    return 0


def _cmd_validate_bundle(args: argparse.Namespace) -> int:
    from .gateway import read_manifest, validate_bundle

    manifest = read_manifest(args.manifest) if args.manifest else None
    problems = validate_bundle(args.bundle, manifest)
    for problem in problems:
        print(problem, file=sys.stderr)
    print(f"bundle {'OK' if not problems else 'INVALID'} ({len(problems)} problems)")
    return 0 if not problems else 1


def _cmd_evaluate_matching(args: argparse.Namespace) -> int:
    from .catalog import read_jsonl
    from .identity import MatchResult, evaluate_matching

    truth = {}
    for rec in read_jsonl(args.truth):
        truth[(rec["poster_id"], int(rec["face_index"]))] = rec.get("actor_id")
    matches = [
        MatchResult(
            poster_id=rec["poster_id"],
            face_index=int(rec["face_index"]),
            actor_id=rec.get("actor_id"),
            distance=rec["distance"] if rec.get("distance") is not None else float("inf"),
        )
        for rec in read_jsonl(args.matches)
    ]
    report = evaluate_matching(matches, truth)
    print(json.dumps(report.to_json(), indent=1, sort_keys=True))
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    from .catalog import write_jsonl
    from .demographics import bundled_census, load_census_csv, map_census_categories, parity_by_decade
    from .metrics import compute_all, filter_language, read_facts, write_all

    facts = filter_language(read_facts(args.facts), args.language)
    tables, stats = compute_all(facts, max_rank=args.max_rank)
    write_all(tables, stats, args.out, {"language": args.language, "facts_used": len(facts)})
    census_rows = load_census_csv(args.census) if args.census else bundled_census()
    census = map_census_categories(census_rows)
    freq = tables["frequency_by_decade"]
    decade_fractions = {
        int(decade): {cat: values[cat] for cat in freq.columns if cat != "n_movies"}
        for decade, values in freq.rows
    }
    write_jsonl(Path(args.out) / "parity_by_decade.jsonl",
                parity_by_decade(decade_fractions, census, args.ethnicity_model))
    print(f"facts={len(facts)} tables=7 out={args.out}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    from .report import render_all

    written = render_all(args.metrics, args.plots)
    for path in written:
        print(path)
    return 0


def _cmd_synth_corpus(args: argparse.Namespace) -> int:
    from .synthcorpus import generate_corpus

    info = generate_corpus(
        args.out,
        n_movies=args.movies,
        seed=args.seed,
        scrambled_ranks=args.scrambled_ranks,
    )
    total = info.cast_faces + info.extra_faces
    print(f"movies={len(info.movies)} planted_faces={total} cast_faces={info.cast_faces}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posterlens", description=__doc__)
    parser.add_argument("--version", action="version", version=f"posterlens {__version__} (format {FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("ingest", help="fetch and normalize movie/poster/actor catalogs")
    p.add_argument("--movie-dump", required=True)
    p.add_argument("--min-votes", type=int, default=1000)
    p.add_argument("--exclude-animated", action="store_true", default=False)
    p.add_argument("--out", required=True)
    p.add_argument("--offline", action="store_true")
    p.add_argument("--cassette")
    p.add_argument("--api-base-url")
    p.add_argument("--api-key")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("dedup", help="perceptual-hash dedup of posters per movie")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--threshold", type=int, default=16)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dedup)

    p = sub.add_parser("grayscale-filter", help="drop grayscale actor profile images")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--tolerance", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_grayscale)

    p = sub.add_parser("match", help="match poster faces to actors per movie")
    p.add_argument("--bundle", required=True, help="directory holding posters/ and actors/ bundles")
    p.add_argument("--catalog", required=True, help="ingest output directory (movies.jsonl, posters.jsonl)")
    p.add_argument("--scope", default="whole", help="whole or top:<k>")
    p.add_argument("--accept-threshold", type=float, default=1.0)
    p.add_argument("--confidence-floor", type=float, default=0.9)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("vote-ethnicity", help="average per-image ethnicity scores and vote")
    p.add_argument("--bundle", required=True, help="actor-image inference bundle directory")
    p.add_argument("--confidence-floor", type=float, default=0.9)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_vote_ethnicity)

    p = sub.add_parser("validate-bundle", help="check an inference bundle against the protocol")
    p.add_argument("--bundle", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_validate_bundle)

    p = sub.add_parser("evaluate-matching", help="verification/identification vs ground truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--matches", required=True)
    p.set_defaults(func=_cmd_evaluate_matching)

    p = sub.add_parser("analyze", help="compute metric CSVs from facts")
    p.add_argument("--facts", required=True)
    p.add_argument("--census")
    p.add_argument("--language", choices=["en", "non-en", "all"], default="all")
    p.add_argument("--max-rank", type=int, default=12)
    p.add_argument("--ethnicity-model", choices=["four", "seven"], default="four")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("report", help="render SVG charts from metric CSVs")
    p.add_argument("--metrics", required=True)
    p.add_argument("--plots", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("synth-corpus", help="generate the bundled synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--movies", type=int, default=10)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--scrambled-ranks", action="store_true")
    p.set_defaults(func=_cmd_synth_corpus)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
