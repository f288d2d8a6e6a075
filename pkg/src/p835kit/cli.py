"""Command-line front end: synth, train, train-ovrl, predict, evaluate.

Exit codes: 0 success, 1 operational failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .audio import AudioError, load_canonical
from .config import ConfigError, RunConfig, derive_rng, load_config
from .dataset import (
    DEFAULT_DURATION_RANGE,
    DEGRADED_KINDS,
    AudioCache,
    Manifest,
    ManifestError,
    PoolError,
    apply_exclusion_list,
    generate_bak_corpus,
    generate_degraded_corpus,
    generate_sig_corpus,
    label_histogram,
    level_histogram,
    read_exclusion_list,
    read_manifest,
    read_pool,
    split_train_val,
    vmc2024_exclusion_list,
    write_manifest,
)
from .degrade import DEFAULT_SNR_LEVELS
from .evaluation import evaluate, predict_entry, report_to_json, report_to_text
from .model import (
    CheckpointError,
    init_checkpoint,
    load_checkpoint,
    load_ovrl_head,
    save_checkpoint,
    save_ovrl_head,
    train_ovrl_head,
    train_stage,
)

log = logging.getLogger("p835kit")


class UsageError(Exception):
    pass


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _record_config(cfg: RunConfig) -> None:
    cfg.run_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(cfg.run_path("config.json"), json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


class _EpochLog:
    def __init__(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        self.fh = open(path, "w", encoding="utf-8")

    def __call__(self, record: dict) -> None:
        self.fh.write(json.dumps(record, sort_keys=True) + "\n")
        self.fh.flush()
        log.info("epoch %d: %s", record["epoch"],
                 ", ".join(f"{k}={v:.5f}" for k, v in record.items() if isinstance(v, float)))

    def close(self) -> None:
        self.fh.close()


# --------------------------------------------------------------------------
# synth
# --------------------------------------------------------------------------

def _check_pool_kinds(cfg: RunConfig) -> None:
    pool = read_pool(cfg.path(cfg.synth["pool"]))
    kinds = {e.kind for e in pool}
    problems = []
    if "noise" not in kinds:
        problems.append("synth.pool has no noise entries")
    if "bak" in cfg.synth and "clean_natural" not in kinds:
        problems.append("BAK corpus needs clean_natural entries in synth.pool")
    if "sig" in cfg.synth and not kinds & {"clean_natural", "clean_spoofed"}:
        problems.append("SIG corpus needs clean speech entries in synth.pool")
    if "degraded" in cfg.synth and "clean_natural" not in kinds:
        problems.append("degraded corpus needs clean_natural entries in synth.pool")
    if problems:
        raise ConfigError(problems)


def _write_splits(manifest: Manifest, out_dir: Path, ratio: float, rng) -> dict:
    write_manifest(manifest, out_dir / "all.jsonl")
    train, valid = split_train_val(manifest, ratio, rng)
    write_manifest(train, out_dir / "train.jsonl")
    write_manifest(valid, out_dir / "valid.jsonl")
    return {"count": len(manifest), "train": len(train), "valid": len(valid),
            "level_histogram": level_histogram(manifest)}


def cmd_synth(cfg: RunConfig) -> dict:
    _check_pool_kinds(cfg)
    synth = cfg.synth
    pool = read_pool(cfg.path(synth["pool"]))
    natural = [e for e in pool if e.kind == "clean_natural"]
    clean = [e for e in pool if e.kind != "noise"]
    noise = [e for e in pool if e.kind == "noise"]
    ratio = float(synth.get("split_ratio", 0.9))
    corpora = cfg.run_path("corpora")
    loader = AudioCache()
    _record_config(cfg)
    summary = {"seed": cfg.seed, "corpora": {}}

    def ladder_args(section):
        return {
            "segments": section.get("segments"),
            "snr_levels": tuple(section.get("levels", DEFAULT_SNR_LEVELS)),
            "duration_range": tuple(section.get("duration_range", DEFAULT_DURATION_RANGE)),
        }

    if "bak" in synth:
        sec = synth["bak"]
        args = ladder_args(sec)
        m = generate_bak_corpus(
            natural, noise, sec.get("hours"), args["snr_levels"], derive_rng(cfg.seed, "bak"),
            corpora / "bak", segments=args["segments"], duration_range=args["duration_range"],
            keep_components=bool(sec.get("keep_components", False)), jobs=cfg.jobs, loader=loader,
        )
        info = _write_splits(m, corpora / "bak", ratio, derive_rng(cfg.seed, "split", "bak"))
        info["label_histogram"] = label_histogram(m, "bak")
        summary["corpora"]["bak"] = info
        log.info("bak corpus: %d entries", len(m))

    degraded = None
    if "degraded" in synth:
        sec = synth["degraded"]
        degraded = generate_degraded_corpus(
            natural, noise, derive_rng(cfg.seed, "degraded"), corpora / "degraded",
            count=int(sec["count"]), kinds=tuple(sec.get("kinds", DEGRADED_KINDS)),
            duration_range=tuple(sec.get("duration_range", DEFAULT_DURATION_RANGE)),
            codec_command=sec.get("codec_command"), jobs=cfg.jobs, loader=loader,
        )
        write_manifest(degraded, corpora / "degraded" / "all.jsonl")
        summary["corpora"]["degraded"] = {"count": len(degraded)}
        log.info("degraded corpus: %d entries", len(degraded))

    if "sig" in synth:
        sec = synth["sig"]
        args = ladder_args(sec)
        if sec.get("degraded_manifest"):
            degraded = read_manifest(cfg.path(sec["degraded_manifest"]))
        m = generate_sig_corpus(
            clean, noise, degraded, derive_rng(cfg.seed, "sig"), corpora / "sig",
            total_hours=sec.get("hours"), segments=args["segments"], snr_levels=args["snr_levels"],
            duration_range=args["duration_range"], degraded_cap=sec.get("degraded_cap"),
            jobs=cfg.jobs, loader=loader,
        )
        info = _write_splits(m, corpora / "sig", ratio, derive_rng(cfg.seed, "split", "sig"))
        info["label_histogram"] = label_histogram(m, "sig")
        summary["corpora"]["sig"] = info
        log.info("sig corpus: %d entries", len(m))

    _atomic_write_text(corpora / "synth_log.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


# --------------------------------------------------------------------------
# train / train-ovrl
# --------------------------------------------------------------------------

def _stage_manifests(cfg: RunConfig, target: str, stage: int, train_path, valid_path):
    section = cfg.train.get(target, {}).get(f"stage{stage}", {}) or {}
    if stage == 1:
        default_dir = cfg.run_path("corpora", target)
        train_path = train_path or section.get("train") or default_dir / "train.jsonl"
        valid_path = valid_path or section.get("valid") or default_dir / "valid.jsonl"
    else:
        train_path = train_path or section.get("train")
        valid_path = valid_path or section.get("valid")
        if train_path is None or valid_path is None:
            raise ConfigError([f"train.{target}.stage2 needs train and valid manifests (or --train/--valid)"])
    train_path, valid_path = cfg.path(train_path), cfg.path(valid_path)
    missing = [f"manifest not found: {p}" for p in (train_path, valid_path) if not p.is_file()]
    if missing:
        raise ConfigError(missing)
    return section, read_manifest(train_path, "train"), read_manifest(valid_path, "valid")


def cmd_train(cfg: RunConfig, target: str, stage: int, init: str | None = None,
              out: str | None = None, train_path=None, valid_path=None) -> Path:
    if stage == 2 and init is None:
        raise UsageError("stage 2 continues from a stage-1 checkpoint; pass --init")
    section, train, valid = _stage_manifests(cfg, target, stage, train_path, valid_path)
    tcfg = cfg.train_config(section, f"stage{stage}")
    start = load_checkpoint(init, cfg.model) if init else init_checkpoint(cfg.model, cfg.seed)
    out_path = Path(out) if out else cfg.run_path("checkpoints", f"{target}_stage{stage}.ckpt")
    _record_config(cfg)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    epoch_log = _EpochLog(cfg.run_path("logs", f"{target}_stage{stage}.epochs.jsonl"))
    try:
        ckpt = train_stage(start, train, valid, target, tcfg, stage=f"stage{stage}",
                           epoch_log=epoch_log, loader=AudioCache())
    finally:
        epoch_log.close()
    tmp = out_path.with_name(out_path.name + ".tmp")
    save_checkpoint(ckpt, tmp)
    os.replace(tmp, out_path)
    if ckpt.stages:
        best = ckpt.stages[-1]
        log.info("best epoch %d (valid loss %.5f) -> %s", best["epoch"], best["valid_loss"], out_path)
    return out_path


def cmd_train_ovrl(cfg: RunConfig, sig: str, bak: str, out: str | None = None, train_path=None) -> Path:
    section = cfg.train.get("ovrl", {}) or {}
    train_path = train_path or section.get("train")
    if train_path is None:
        raise ConfigError(["train.ovrl.train manifest is required (or --train)"])
    train_path = cfg.path(train_path)
    if not train_path.is_file():
        raise ConfigError([f"manifest not found: {train_path}"])
    train = read_manifest(train_path, "train")
    tcfg = cfg.train_config(section, "ovrl")
    ckpt_sig = load_checkpoint(sig, cfg.model)
    ckpt_bak = load_checkpoint(bak, cfg.model)
    out_path = Path(out) if out else cfg.run_path("checkpoints", "ovrl_head.ckpt")
    _record_config(cfg)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    epoch_log = _EpochLog(cfg.run_path("logs", "ovrl_head.epochs.jsonl"))
    try:
        head = train_ovrl_head(ckpt_sig, ckpt_bak, train, tcfg, epoch_log=epoch_log, loader=AudioCache())
    finally:
        epoch_log.close()
    tmp = out_path.with_name(out_path.name + ".tmp")
    save_ovrl_head(head, tmp)
    os.replace(tmp, out_path)
    log.info("ovrl head (%d epochs) -> %s", tcfg.epochs, out_path)
    return out_path


# --------------------------------------------------------------------------
# predict / evaluate
# --------------------------------------------------------------------------

def _load_models(sig, bak, ovrl_head):
    ckpt_sig = load_checkpoint(sig) if sig else None
    ckpt_bak = load_checkpoint(bak) if bak else None
    head = load_ovrl_head(ovrl_head) if ovrl_head else None
    if head is not None and (ckpt_sig is None or ckpt_bak is None):
        raise UsageError("--ovrl-head needs both --sig and --bak")
    return ckpt_sig, ckpt_bak, head


def _expand_inputs(inputs: list[str]) -> list[tuple[str, Path]]:
    items = []
    for raw in inputs:
        p = Path(raw)
        if p.suffix.lower() == ".jsonl":
            m = read_manifest(p)
            items.extend((e.id, m.resolve(e)) for e in m.entries)
        else:
            items.append((raw, p))
    return items


PREDICT_COLUMNS = ("sig", "bak", "ovrl_a", "ovrl_p")


def cmd_predict(sig, bak, ovrl_head, inputs: list[str], jobs: int = 1) -> list[dict]:
    ckpt_sig, ckpt_bak, head = _load_models(sig, bak, ovrl_head)

    def work(item):
        uid, path = item
        try:
            return dict({"id": uid}, **predict_entry(ckpt_sig, ckpt_bak, head, load_canonical(path)))
        except (OSError, AudioError, ValueError) as exc:
            return {"id": uid, "error": str(exc)}

    items = _expand_inputs(inputs)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(work, items))
    return [work(i) for i in items]


def format_predictions(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    cols = [c for c in PREDICT_COLUMNS if any(c in r for r in rows)]
    lines = ["\t".join(["id"] + cols)]
    for r in rows:
        if "error" in r:
            lines.append(f"{r['id']}\tERROR\t{r['error']}")
        else:
            lines.append("\t".join([r["id"]] + [f"{r[c]:.4f}" if c in r else "--" for c in cols]))
    return "\n".join(lines) + "\n"


def cmd_evaluate(sig, bak, ovrl_head, manifest_path: str, out_dir, *, exclude=(),
                 exclude_vmc2024: bool = False, jobs: int = 1):
    manifest = read_manifest(manifest_path, "eval")
    ckpt_sig, ckpt_bak, head = _load_models(sig, bak, ovrl_head)
    lists = [(str(p), read_exclusion_list(p)) for p in exclude]
    if exclude_vmc2024:
        lists += [(f"vmc2024:{w}", vmc2024_exclusion_list(w)) for w in ("train", "valid")]
    removed = {}
    for name, ids in lists:
        manifest, n = apply_exclusion_list(manifest, ids)
        removed[name] = n
        log.info("exclusion list %s: removed %d", name, n)
    report = evaluate(ckpt_sig, ckpt_bak, head, manifest, jobs=jobs, manifest_path=str(manifest_path))
    report.provenance["excluded"] = removed
    report.provenance["n_entries"] = len(manifest)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(out_dir / "report.json", report_to_json(report) + "\n")
    text = report_to_text(report)
    _atomic_write_text(out_dir / "report.txt", text)
    return report, text


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config (JSON or YAML)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--run-dir", help="override the config run directory")
    common.add_argument("--jobs", type=int, help="worker threads for synthesis and inference")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    common.add_argument("-q", "--quiet", action="store_true", help="warnings only")

    p = argparse.ArgumentParser(prog="p835kit", description="P.835 score prediction toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="generate BAK/SIG corpora")

    t = sub.add_parser("train", parents=[common], help="train one stage of a SIG or BAK predictor")
    t.add_argument("--target", choices=("sig", "bak"), required=True)
    t.add_argument("--stage", type=int, choices=(1, 2), required=True)
    t.add_argument("--init", help="checkpoint to start from (required for stage 2)")
    t.add_argument("--train", dest="train_manifest", help="override the training manifest")
    t.add_argument("--valid", dest="valid_manifest", help="override the validation manifest")
    t.add_argument("--out", help="output checkpoint path")

    o = sub.add_parser("train-ovrl", parents=[common], help="train the OVRL head on frozen backbones")
    o.add_argument("--sig", required=True)
    o.add_argument("--bak", required=True)
    o.add_argument("--train", dest="train_manifest", help="override the training manifest")
    o.add_argument("--out", help="output head path")

    pr = sub.add_parser("predict", parents=[common], help="score wav files or manifests")
    pr.add_argument("inputs", nargs="+", help="wav files and/or .jsonl manifests")
    pr.add_argument("--sig")
    pr.add_argument("--bak")
    pr.add_argument("--ovrl-head")
    pr.add_argument("--format", choices=("text", "json"), default="text")
    pr.add_argument("--output", help="write rows here instead of stdout")

    e = sub.add_parser("evaluate", parents=[common], help="correlation report against manifest labels")
    e.add_argument("--manifest", required=True)
    e.add_argument("--sig")
    e.add_argument("--bak")
    e.add_argument("--ovrl-head")
    e.add_argument("--exclude", action="append", default=[], help="exclusion list file (repeatable)")
    e.add_argument("--exclude-vmc2024", action="store_true", help="apply the bundled overlap lists")
    e.add_argument("--out", help="report directory (default: <run-dir>/eval)")
    return p


def _setup_logging(args) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    root = logging.getLogger("p835kit")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False


def _run(args) -> int:
    needs_config = args.command in ("synth", "train", "train-ovrl")
    cfg = None
    if args.config:
        require = ("synth",) if args.command == "synth" else ()
        cfg = load_config(args.config, seed=args.seed, run_dir=args.run_dir, jobs=args.jobs, require=require)
    elif needs_config:
        raise UsageError(f"{args.command} needs --config")
    jobs = args.jobs or (cfg.jobs if cfg else 1)
    if jobs < 1:
        raise UsageError("--jobs must be positive")

    if args.command == "synth":
        summary = cmd_synth(cfg)
        counts = {k: v["count"] for k, v in summary["corpora"].items()}
        print(json.dumps(counts, sort_keys=True))
    elif args.command == "train":
        print(cmd_train(cfg, args.target, args.stage, args.init, args.out, args.train_manifest, args.valid_manifest))
    elif args.command == "train-ovrl":
        print(cmd_train_ovrl(cfg, args.sig, args.bak, args.out, args.train_manifest))
    elif args.command == "predict":
        if not (args.sig or args.bak):
            raise UsageError("predict needs --sig and/or --bak")
        rows = cmd_predict(args.sig, args.bak, args.ovrl_head, args.inputs, jobs)
        text = format_predictions(rows, args.format)
        if args.output:
            Path(args.output).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        if rows and all("error" in r for r in rows):
            log.error("every input failed")
            return 1
    elif args.command == "evaluate":
        if not (args.sig or args.bak):
            raise UsageError("evaluate needs --sig and/or --bak")
        out = args.out or (cfg.run_path("eval") if cfg else None)
        if out is None:
            raise UsageError("evaluate needs --out or --config")
        report, text = cmd_evaluate(args.sig, args.bak, args.ovrl_head, args.manifest, out,
                                    exclude=args.exclude, exclude_vmc2024=args.exclude_vmc2024, jobs=jobs)
        sys.stdout.write(text)
        if not report.any_available:
            log.error("no metric could be computed")
            return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(args)
    try:
        return _run(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        log.error("%s", exc)
        return 2
    except ConfigError as exc:
        log.error("%s", exc)
        return 2
    except (CheckpointError, ManifestError, PoolError, AudioError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
