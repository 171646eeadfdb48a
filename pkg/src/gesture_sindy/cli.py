"""Command line front end.

Subcommands: simulate, segment, discover, analyze, synth. Every run
takes an INI config and an output directory and leaves a manifest
embedding the toolkit version and the sha256 of the config it ran
from, so results can be traced back to their exact inputs. Outputs
are deterministic: given the same config and seed, reruns produce
byte-identical files.
"""

import argparse
import concurrent.futures
import json
import os
import sys
from collections import Counter

import numpy as np

from . import __version__, analysis, config as cfgmod, pipeline
from .errors import ConfigError, DataError, NumericalError
from .integrate import integrate
from .kinematics import (
    CHANNELS,
    read_pauses,
    read_recording,
    filter_tokens,
    read_tokens,
    segment_recording,
    write_tokens,
)
from .trajectory import write_trajectory_csv

__all__ = ["main"]


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="gesture-sindy",
        description="Discover and analyze oscillator models of speech gestures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "integrate oscillator models and write trajectories"),
        ("segment", "cut recordings into gesture tokens"),
        ("discover", "fit sparse models to gesture tokens"),
        ("analyze", "summarize tokens and fitted models"),
        ("synth", "generate a synthetic gesture corpus"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="INI config file")
        cmd.add_argument("--out", required=True, help="output directory")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the config seed")
        cmd.add_argument("--jobs", type=int, default=None,
                         help="worker threads (default $GESTURE_SINDY_JOBS or 1)")
    return parser


def _resolve_jobs(args):
    jobs = args.jobs
    if jobs is None:
        raw = os.environ.get("GESTURE_SINDY_JOBS", "1")
        try:
            jobs = int(raw)
        except ValueError:
            raise ConfigError(f"GESTURE_SINDY_JOBS must be an integer, got {raw!r}") from None
    if jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs}")
    return jobs


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _run_info(command, sha, seed, jobs):
    return {
        "command": command,
        "version": __version__,
        "config_sha256": sha,
        "seed": seed,
        "jobs": jobs,
    }


def cmd_simulate(args, parser, sha, jobs):
    job = cfgmod.extract_simulate(parser)
    runs = []
    for index, params in enumerate(job.combos):
        trajectory = integrate(
            job.model, params, (0.0, job.t_end), job.dt,
            activation=job.activation, rtol=job.rtol, atol=job.atol,
        )
        filename = f"sim_{index:04d}.csv"
        write_trajectory_csv(os.path.join(args.out, filename), trajectory)
        runs.append({
            "file": filename,
            "model": job.model,
            "k": params.k, "b": params.b, "d": params.d,
            "T": params.T, "x0": params.x0, "v0": params.v0,
        })
    manifest = _run_info("simulate", sha, None, jobs)
    manifest.update({
        "model": job.model,
        "t_end": job.t_end,
        "dt": job.dt,
        "activation": None if job.activation is None else {
            "kind": job.activation.kind,
            "ta": job.activation.ta, "tb": job.activation.tb,
            "tc": job.activation.tc, "td": job.activation.td,
        },
        "runs": runs,
    })
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    print(f"wrote {len(runs)} trajectories to {args.out}")
    return 0


def cmd_segment(args, parser, sha, jobs):
    job = cfgmod.extract_segment(parser)
    recording = read_recording(job.recording)
    pauses = read_pauses(job.pauses) if job.pauses else None
    tokens = segment_recording(recording, pauses, job.channels, job.speaker)
    tokens = filter_tokens(tokens, max_duration=job.max_duration,
                           prominence=job.prominence)
    counts = Counter(token.status for token in tokens)
    total = len(tokens) if tokens else 1
    extra = _run_info("segment", sha, None, jobs)
    extra.update({
        "source": job.recording,
        "sample_rate": recording.sample_rate,
        "exclusions": {
            "counts": dict(sorted(counts.items())),
            "rates": {status: counts[status] / total for status in sorted(counts)},
        },
    })
    write_tokens(args.out, tokens, extra=extra)
    kept = counts.get("kept", 0)
    print(f"wrote {len(tokens)} tokens ({kept} kept) to {args.out}")
    return 0


def _fit_stats(fits):
    scores = np.array([fit.r2 for fit in fits], dtype=float)
    if scores.size == 0:
        return {"mean": None, "sd": None, "min": None, "max": None, "n": 0}
    if scores.size > 1:
        sd = float(np.std(scores, ddof=1)) if np.all(np.isfinite(scores)) else float("nan")
    else:
        sd = 0.0
    return {
        "mean": float(np.mean(scores)),
        "sd": sd,
        "min": float(np.min(scores)),
        "max": float(np.max(scores)),
        "n": int(scores.size),
    }


def _channel_columns(channels):
    ordered = [channel for channel in CHANNELS if channel in channels]
    ordered += sorted(set(channels) - set(CHANNELS))
    return ordered


def _write_comparison_csv(path, records, specs, channels):
    by_key = {(rec["library"], rec["channel"]): rec for rec in records}
    rows = []
    for spec in specs:
        row = [spec]
        for channel in channels:
            rec = by_key.get((spec, channel))
            if rec is None or rec["n"] == 0:
                row.append("")
            else:
                row.append(f"{rec['mean']:.3f} ({rec['sd']:.3f})")
        rows.append(row)
    _write_csv(path, ["library"] + list(channels), rows)


def _write_fit_summary_csv(path, train_fits, test_fits, channels):
    blocks = (("train", train_fits), ("test", test_fits))
    rows = []
    for label, fits in blocks:
        per_channel = {
            channel: _fit_stats([f for f in fits if f.channel == channel])
            for channel in channels
        }
        for stat in ("mean", "sd", "min", "max", "n"):
            row = [label, stat]
            for channel in channels:
                row.append(_cell(per_channel[channel][stat]))
            rows.append(row)
    _write_csv(path, ["set", "statistic"] + list(channels), rows)


def cmd_discover(args, parser, sha, jobs):
    job = cfgmod.extract_discover(parser, seed_override=args.seed)
    tokens, _ = read_tokens(job.tokens)
    tokens = [t for t in tokens if t.channel in job.channels]
    if not tokens:
        raise DataError(f"no kept tokens found under {job.tokens}")
    train, test = pipeline.split(tokens, fraction=job.train_fraction, seed=job.seed)
    _, library = cfgmod.make_library(job.library_spec, job.order)

    def fit_one(token):
        return pipeline.fit_token(
            token, library, order=job.order, thresholds=job.thresholds,
            alpha=job.alpha, nu=job.nu, rtol=job.rtol, atol=job.atol,
        )

    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            train_fits = list(pool.map(fit_one, train))
    else:
        train_fits = [fit_one(token) for token in train]

    overall = pipeline.ensemble(train_fits)
    channels = _channel_columns({fit.channel for fit in train_fits})
    per_channel = {}
    for channel in channels:
        channel_fits = [fit for fit in train_fits if fit.channel == channel]
        if channel_fits:
            per_channel[channel] = pipeline.ensemble(channel_fits).to_dict()
    test_fits = pipeline.refit_test(
        test, overall.majority_structure, library, order=job.order,
        rtol=job.rtol, atol=job.atol,
    )

    libraries = [cfgmod.make_library(spec, job.order) for spec in job.compare_specs]
    comparison = pipeline.library_comparison(
        train, libraries, order=job.order, thresholds=job.thresholds,
        alpha=job.alpha, nu=job.nu, rtol=job.rtol, atol=job.atol,
    )

    pipeline.write_fit_reports(os.path.join(args.out, "fits_train.jsonl"), train_fits)
    pipeline.write_fit_reports(os.path.join(args.out, "fits_test.jsonl"), test_fits)
    _write_json(os.path.join(args.out, "ensemble.json"),
                {"overall": overall.to_dict(), "channels": per_channel})
    _write_comparison_csv(os.path.join(args.out, "library_comparison.csv"),
                          comparison, job.compare_specs, channels)
    _write_fit_summary_csv(os.path.join(args.out, "fit_summary.csv"),
                           train_fits, test_fits, channels)

    comparison_thresholds = {}
    for rec in comparison:
        comparison_thresholds.setdefault(rec["library"], {})[rec["channel"]] = rec["threshold"]
    manifest = _run_info("discover", sha, job.seed, jobs)
    manifest.update({
        "order": job.order,
        "library": job.library_spec,
        "thresholds": list(job.thresholds),
        "alpha": job.alpha,
        "nu": job.nu,
        "train_fraction": job.train_fraction,
        "n_tokens": len(tokens),
        "n_train": len(train),
        "n_test": len(test),
        "train_ids": [t.token_id for t in train],
        "test_ids": [t.token_id for t in test],
        "comparison_thresholds": comparison_thresholds,
        "comparison": comparison,
        "outputs": ["fits_train.jsonl", "fits_test.jsonl", "ensemble.json",
                    "library_comparison.csv", "fit_summary.csv"],
    })
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    print(f"fit {len(train_fits)} train and {len(test_fits)} test tokens; "
          f"majority structure {overall.majority_structure!r}")
    return 0


def _fit_report_paths(path):
    """Resolve a fits config value to report files.

    Accepts either a single .jsonl report or a discover output directory,
    in which case train reports come first.
    """
    if not os.path.isdir(path):
        return [path]
    names = ("fits_train.jsonl", "fits_test.jsonl")
    found = [os.path.join(path, n) for n in names
             if os.path.isfile(os.path.join(path, n))]
    if not found:
        raise DataError(f"no fit reports ({' or '.join(names)}) under {path}")
    return found


def cmd_analyze(args, parser, sha, jobs):
    job = cfgmod.extract_analyze(parser)
    tokens, _ = read_tokens(job.tokens)
    tokens = [t for t in tokens if t.channel in job.channels]
    if not tokens:
        raise DataError(f"no kept tokens found under {job.tokens}")
    census = analysis.nonlinearity_census(tokens, cutoffs=job.cutoffs)
    _write_json(os.path.join(args.out, "census.json"), census)
    outputs = ["census.json"]

    if job.fits:
        records = [r for p in _fit_report_paths(job.fits)
                   for r in pipeline.read_fit_reports(p)]
        records = [r for r in records if r.get("channel") in job.channels]
        if not records:
            raise DataError(f"no fit records for channels {job.channels} in {job.fits}")
        correlations = analysis.target_correlation(records, tokens)
        _write_json(os.path.join(args.out, "correlations.json"), correlations)
        outputs.append("correlations.json")

        token_by_id = {token.token_id: token for token in tokens}
        portrait_dir = os.path.join(args.out, "portraits")
        os.makedirs(portrait_dir, exist_ok=True)
        exemplars = {}
        channels = _channel_columns({r["channel"] for r in records})
        for channel in channels:
            channel_records = [r for r in records if r["channel"] == channel]
            exemplars[channel] = {}
            for pct in job.percentiles:
                record = analysis.percentile_fit(channel_records, pct)
                token = token_by_id.get(record["token_id"])
                if token is None:
                    raise DataError(
                        f"fit record {record['token_id']} has no token in {job.tokens}"
                    )
                columns = analysis.portrait_data(token, record)
                filename = f"{channel}_p{pct:g}_{record['token_id']}.csv"
                names = list(columns)
                _write_csv(
                    os.path.join(portrait_dir, filename),
                    names,
                    [[repr(float(columns[name][i])) for name in names]
                     for i in range(len(token.x))],
                )
                exemplars[channel][f"{pct:g}"] = {
                    "token_id": record["token_id"],
                    "r2": record.get("r2"),
                    "portrait": f"portraits/{filename}",
                }
        _write_json(os.path.join(args.out, "exemplars.json"), exemplars)
        outputs.append("exemplars.json")

    manifest = _run_info("analyze", sha, None, jobs)
    manifest.update({
        "tokens": job.tokens,
        "fits": job.fits,
        "cutoffs": list(job.cutoffs),
        "percentiles": list(job.percentiles),
        "outputs": outputs,
    })
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    print(f"analyzed {len(tokens)} tokens; wrote {', '.join(outputs)}")
    return 0


def cmd_synth(args, parser, sha, jobs):
    job = cfgmod.extract_synth(parser, seed_override=args.seed)
    spec = job.spec
    tokens, truths = pipeline.generate_synthetic_corpus(spec)
    extra = _run_info("synth", sha, spec.seed, jobs)
    extra.update({
        "sample_rate": spec.sample_rate,
        "params": {
            "n_linear": spec.n_linear,
            "n_cubic": spec.n_cubic,
            "k_range": list(spec.k_range),
            "damping_ratio_range": list(spec.damping_ratio_range),
            "d_over_k_range": list(spec.d_over_k_range),
            "x0_range": list(spec.x0_range),
            "amplitude_range": list(spec.amplitude_range),
            "noise": spec.noise,
            "horizon": spec.horizon,
            "channels": list(spec.channels),
        },
    })
    write_tokens(args.out, tokens, extra=extra, truths=truths)
    print(f"wrote {len(tokens)} synthetic tokens to {args.out}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "segment": cmd_segment,
    "discover": cmd_discover,
    "analyze": cmd_analyze,
    "synth": cmd_synth,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        jobs = _resolve_jobs(args)
        parser, sha = cfgmod.load_config(args.config)
        os.makedirs(args.out, exist_ok=True)
        return _COMMANDS[args.command](args, parser, sha, jobs)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
