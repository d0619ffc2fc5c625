"""Command-line entry point: ``cfbandit {generate,replay,report,selftest}``.

Exit codes: 0 success, 2 configuration or validation error, 3 data error,
4 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from importlib import metadata
from pathlib import Path

from cfbandit import io
from cfbandit.contexts import UnknownImage
from cfbandit.experiment import ConfigError, Dataset, ExperimentConfig, run_experiment, synthetic_dataset
from cfbandit.report import SUMMARY_FILE, build_report, trajectory_path
from cfbandit.selftest import run_selftest

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
OUTPUT_ENV = "CFBANDIT_OUTPUT_DIR"
MANIFEST_FILE = "manifest.json"

log = logging.getLogger("cfbandit")


def package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _key_value(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    return key.strip(), value.strip()


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    # defaults are None so that only flags actually given override the config file
    p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", dest="out_dir", help=f"output directory (overrides ${OUTPUT_ENV})")
    p.add_argument("--num-sessions", dest="sessions", type=int, help="synthetic session count")
    p.add_argument("--gen", dest="generator", action="append", type=_key_value, metavar="KEY=VALUE",
                   help="override one generator parameter (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfbandit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic sessions.jsonl and features.csv")
    _add_config_flags(gen)

    rep = sub.add_parser("replay", help="run replicated replay experiments")
    _add_config_flags(rep)
    rep.add_argument("--sessions", dest="sessions_path", help="sessions.jsonl of a real dataset")
    rep.add_argument("--features", dest="features_path", help="features.csv of a real dataset")
    rep.add_argument("--num-arms", dest="num_arms", type=int)
    rep.add_argument("--contexts", type=_csv_list, help="comma list of imgctx,simctx")
    rep.add_argument("--policies", type=_csv_list, help="comma list of cfts,ts,extts,obs,zeror")
    rep.add_argument("-r", "--replicas", dest="r", type=int)
    rep.add_argument("--p-drop", dest="p_drop", type=float)
    rep.add_argument("-n", "--runs", dest="n", type=int)
    rep.add_argument("--cutoffs", type=_int_list)
    rep.add_argument("--pca-dim", dest="pca_dim", type=int)
    rep.add_argument("--scale", type=float, help="posterior sampling scale v")
    rep.add_argument("--fixed-corpus", dest="resample_corpus", action="store_const", const=False,
                     help="synthetic mode: draw one corpus for all runs")

    rpt = sub.add_parser("report", help="curves and accuracy table from a replay directory")
    rpt.add_argument("result_dir", nargs="?", help=f"defaults to ${OUTPUT_ENV} or ./results")

    sub.add_parser("selftest", help="run the built-in invariant checks")
    return parser


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    if "," in value:
        return [_coerce(v) for v in _csv_list(value)]
    return value


def resolve_config(args: argparse.Namespace, env=None) -> ExperimentConfig:
    """Merge defaults, the config file, the output-dir env var and flags, in
    increasing order of precedence."""
    env = os.environ if env is None else env
    merged: dict = {}
    if getattr(args, "config", None) is not None:
        try:
            merged.update(io.read_json(args.config))
        except OSError as err:
            raise ConfigError(f"cannot read config {args.config}: {err.strerror}") from None
        except io.DataError as err:
            raise ConfigError(str(err)) from None
    if env.get(OUTPUT_ENV):
        merged["out_dir"] = env[OUTPUT_ENV]
    generator = dict(merged.get("generator") or {})
    for key, value in getattr(args, "generator", None) or []:
        generator[key] = _coerce(value)
    if generator:
        merged["generator"] = generator
    for name in ("seed", "out_dir", "sessions", "sessions_path", "features_path", "num_arms",
                 "contexts", "policies", "r", "p_drop", "n", "cutoffs", "pca_dim", "scale",
                 "resample_corpus"):
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    try:
        return ExperimentConfig.from_dict(merged)
    except TypeError as err:
        raise ConfigError(str(err)) from None


def _manifest(cfg: ExperimentConfig, command: str, outputs: list[Path], root: Path,
              inputs: dict[str, str] | None = None) -> dict:
    config = cfg.to_dict()
    # where the files land does not affect their content
    del config["out_dir"]
    return {
        "command": command,
        "config": config,
        "seed": cfg.seed,
        "arm_names": cfg.names_of_arms(),
        "version": package_version(),
        "source_sha256": io.source_hash(),
        "inputs": inputs or {},
        "outputs": {str(p.relative_to(root)): io.file_sha256(p) for p in outputs},
    }


def cmd_generate(cfg: ExperimentConfig) -> list[Path]:
    if cfg.seed is None:
        cfg = cfg.updated(seed=0)
    if cfg.sessions < 1:
        raise ConfigError("session count must be at least 1")
    try:
        cfg.generator.validate()
    except ValueError as err:
        raise ConfigError(f"generator: {err}") from None
    data = synthetic_dataset(cfg, None)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sp, fp = out / "sessions.jsonl", out / "features.csv"
    io.write_sessions(sp, data.sessions)
    io.write_features(fp, data.features)
    io.write_json(out / MANIFEST_FILE, _manifest(cfg, "generate", [sp, fp], out))
    log.info("wrote %d sessions and %d images to %s", len(data.sessions),
             len(data.features.rows), out)
    return [sp, fp]


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    try:
        sessions = io.read_sessions(cfg.sessions_path, cfg.arms)
        features = io.read_features(cfg.features_path)
    except OSError as err:
        raise io.DataError(f"cannot read {err.filename}: {err.strerror}") from None
    io.check_images_known(sessions, features)
    return Dataset(sessions, features)


def cmd_replay(cfg: ExperimentConfig) -> Path:
    if cfg.seed is None:
        raise ConfigError("--seed is required for replay (or set seed in the config file)")
    data = None
    inputs = {}
    if cfg.synthetic:
        cfg.validate()
    else:
        if cfg.features_path is None:
            raise ConfigError("--sessions needs --features")
        data = load_dataset(cfg)
        cfg.validate(len(data.sessions))
        inputs = {p: io.file_sha256(p) for p in (cfg.sessions_path, cfg.features_path)}
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def save_run(result):
        for ctx, by_policy in result.trajectories.items():
            for label, traj in by_policy.items():
                path = trajectory_path(out, ctx, result.run_index, label)
                path.parent.mkdir(parents=True, exist_ok=True)
                io.write_trajectory(path, traj)
                written.append(path)
        log.info("run %d/%d done", result.run_index, cfg.n)

    summary = run_experiment(cfg, data, on_run=save_run)
    summary_path = out / SUMMARY_FILE
    io.write_summary(summary_path, summary.rows)
    io.write_json(out / MANIFEST_FILE,
                  _manifest(cfg, "replay", [summary_path] + written, out, inputs))
    return summary_path


def cmd_report(result_dir, env=None) -> list[Path]:
    env = os.environ if env is None else env
    root = Path(result_dir or env.get(OUTPUT_ENV) or "results")
    if not root.is_dir():
        raise io.DataError(f"result directory {root} does not exist")
    return build_report(root)


def cmd_selftest() -> bool:
    ok = True
    for name, passed, detail in run_selftest():
        print(f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
        ok &= passed
    return ok


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "generate":
            for p in cmd_generate(resolve_config(args)):
                print(p)
        elif args.command == "replay":
            print(cmd_replay(resolve_config(args)))
        elif args.command == "report":
            for p in cmd_report(args.result_dir):
                print(p)
        elif args.command == "selftest":
            return EXIT_OK if cmd_selftest() else EXIT_RUNTIME
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (io.DataError, UnknownImage) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except Exception as err:  # noqa: BLE001 - mapped to the runtime exit code
        log.debug("unhandled error", exc_info=True)
        print(f"runtime error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
