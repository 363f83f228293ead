"""Command-line pipeline: data generation, training, evaluation, sweeps and self-checks.

Every command reads one JSON config, works under ``<run root>/<run_name>``
and records its inputs and outputs (with git-style content hashes) in
``manifest.json``. The run root comes from ``--run-root``, else the
``STYLESMOOTH_RUN_ROOT`` environment variable, else ``./runs``.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import json
import os
import sys
from typing import Any, Iterator

import numpy as np

from .checkpoint import save_checkpoint
from .config import load_config
from .datagen import VARIANTS, Dataset, export_dataset, load_dataset
from .errors import CheckpointError, ConfigError, RunLockedError, StyleSmoothError
from .evaluation import (
    AUC_CONVENTION,
    SweepTable,
    abstained_accuracy,
    accuracy,
    build_curve,
    compare_methods,
    comparison_summary,
    scored_from_counts,
    scored_from_proba,
    styles_sweep,
    write_comparison_csv,
)
from .experiment import ABSTAINERS, METHODS, make_classifier, make_stylizer, make_suite, per_sample_seconds
from .models import ToyClassifier
from .nss import NSSClassifier, write_loss_history
from .oracles import exact_smoothed_prediction, grid_auc
from .smoothing import ConfidenceAbstainer, StyleBank, consensus_profiles, decide, write_verdicts
from .stylizer import AdaINStylizer

ENV_RUN_ROOT = "STYLESMOOTH_RUN_ROOT"
SOURCE_NAMES = ("S1", "S2", "S3")
EXIT_CODES = {"config_error": 2, "file_error": 3, "lock_error": 4}


# ---------------------------------------------------------------- hashing / io

def git_blob_hash(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def content_hash(path: str) -> str:
    """Blob hash of a file; for a directory, a hash over its sorted (path, blob hash) listing."""
    if os.path.isfile(path):
        with open(path, "rb") as fh:
            return git_blob_hash(fh.read())
    lines = []
    for root, _, files in os.walk(path):
        for name in files:
            full = os.path.join(root, name)
            lines.append(f"{os.path.relpath(full, path)} {content_hash(full)}\n")
    return git_blob_hash("".join(sorted(lines)).encode())


def write_json(path: str, obj: Any) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_rows(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------- run directory

class Run:
    """One run directory: per-seed artifacts, the manifest and the lock."""

    def __init__(self, cfg: dict, root: str):
        self.cfg = cfg
        self.dir = os.path.join(root, cfg["run_name"])
        self.manifest_path = os.path.join(self.dir, "manifest.json")
        self.config_hash = git_blob_hash(json.dumps(cfg, sort_keys=True).encode())

    def seed_dir(self, seed: int, *parts: str) -> str:
        path = os.path.join(self.dir, f"seed-{seed}", *parts)
        os.makedirs(os.path.dirname(path) if parts else path, exist_ok=True)
        return path

    def rel(self, path: str) -> str:
        return os.path.relpath(path, self.dir).replace(os.sep, "/")

    @contextlib.contextmanager
    def locked(self) -> Iterator[None]:
        os.makedirs(self.dir, exist_ok=True)
        lock = os.path.join(self.dir, ".lock")
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RunLockedError(f"run directory {self.dir} is locked by another process ({lock})") from None
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            yield
        finally:
            os.remove(lock)

    def _load_manifest(self) -> dict:
        if not os.path.exists(self.manifest_path):
            return {"config": self.cfg, "config_hash": self.config_hash, "seeds": self.cfg["seeds"],
                    "auc_convention": AUC_CONVENTION, "commands": {}, "timing": {}}
        with open(self.manifest_path) as fh:
            manifest = json.load(fh)
        if manifest.get("config_hash") != self.config_hash:
            err = ConfigError(f"run directory {self.dir} was created with a different config; "
                              f"change run_name or use a fresh run root")
            err.key = "run_name"
            raise err
        return manifest

    def check_config(self) -> None:
        self._load_manifest()

    def record(self, key: str, args: dict, inputs: list[str], outputs: list[str], timing: dict | None = None) -> None:
        manifest = self._load_manifest()
        manifest["commands"][key] = {
            "args": args,
            "inputs": {self.rel(p): content_hash(p) for p in sorted(set(inputs))},
            "outputs": {self.rel(p): content_hash(p) for p in sorted(set(outputs))},
        }
        if timing:
            manifest["timing"][key] = timing
        write_json(self.manifest_path, manifest)

    # artifact locations
    def data_path(self, seed: int, name: str) -> str:
        return self.seed_dir(seed, "data", name)

    def model_path(self, seed: int, name: str) -> str:
        return self.seed_dir(seed, "models", name)

    def load_data(self, seed: int, name: str) -> Dataset:
        path = self.data_path(seed, name)
        if not os.path.exists(os.path.join(path, "manifest.json")):
            raise CheckpointError(f"dataset {name!r} for seed {seed} not found at {path}; run gen-data first")
        return load_dataset(path)

    def load_sources(self, seed: int) -> list[Dataset]:
        return [self.load_data(seed, name) for name in SOURCE_NAMES]

    def load_stylizer(self, seed: int) -> AdaINStylizer:
        return AdaINStylizer.from_checkpoints(self.model_path(seed, "encoder.json"),
                                              self.model_path(seed, "decoder.json"))

    def load_classifier(self, seed: int, method: str) -> ToyClassifier:
        return ToyClassifier.from_checkpoint(self.model_path(seed, f"classifier-{method}.json"))


def _seeds(cfg: dict, args) -> list[int]:
    if args.seed is not None:
        if args.seed < 0:
            err = ConfigError("--seed must be non-negative")
            err.key = "seed"
            raise err
        return [args.seed]
    return list(cfg["seeds"])


# ---------------------------------------------------------------- commands

def cmd_gen_data(run: Run, args) -> list[str]:
    outputs = []
    for seed in _seeds(run.cfg, args):
        suite = make_suite(run.cfg, seed)
        named = dict(zip(SOURCE_NAMES, suite.sources), source_test=suite.source_test, **suite.variants)
        paths = []
        for name, data in named.items():
            paths.append(run.data_path(seed, name))
            export_dataset(data, paths[-1])
        run.record(f"gen-data/seed-{seed}", {"seed": seed}, [], paths)
        outputs += paths
    return outputs


def cmd_train_decoder(run: Run, args) -> list[str]:
    outputs = []
    for seed in _seeds(run.cfg, args):
        inputs = [run.data_path(seed, n) for n in SOURCE_NAMES]
        pooled = Dataset.concat(run.load_sources(seed))
        stylizer = make_stylizer(run.cfg, seed).fit(pooled.X)
        enc_doc, dec_doc = stylizer.to_checkpoints()
        paths = [run.model_path(seed, "encoder.json"), run.model_path(seed, "decoder.json"),
                 run.model_path(seed, "encoder-loss.csv"), run.model_path(seed, "decoder-loss.csv")]
        save_checkpoint(paths[0], enc_doc)
        save_checkpoint(paths[1], dec_doc)
        write_rows(paths[2], ["step", "loss"], ((i, repr(v)) for i, v in enumerate(stylizer.encoder_history_)))
        write_rows(paths[3], ["step", "loss"], ((i, repr(v)) for i, v in enumerate(stylizer.decoder_history_)))
        run.record(f"train-decoder/seed-{seed}", {"seed": seed}, inputs, paths)
        outputs += paths
    return outputs


def cmd_train_classifier(run: Run, args) -> list[str]:
    outputs = []
    for seed in _seeds(run.cfg, args):
        inputs = [run.data_path(seed, n) for n in SOURCE_NAMES]
        pooled = Dataset.concat(run.load_sources(seed))
        stylizer = None
        if args.method == "nss":
            stylizer = run.load_stylizer(seed)
            inputs += [run.model_path(seed, "encoder.json"), run.model_path(seed, "decoder.json")]
        clf = make_classifier(run.cfg, args.method, seed, stylizer).fit(pooled.X, pooled.y)
        ckpt = run.model_path(seed, f"classifier-{args.method}.json")
        history = run.model_path(seed, f"loss-{args.method}.csv")
        save_checkpoint(ckpt, clf.to_checkpoint())
        if isinstance(clf, NSSClassifier):
            write_loss_history(history, clf.loss_history_)
        else:
            write_rows(history, ["step", "loss"], ((i, repr(v)) for i, v in enumerate(clf.history_)))
        run.record(f"train-classifier/{args.method}/seed-{seed}", {"seed": seed, "method": args.method},
                   inputs, [ckpt, history])
        outputs += [ckpt, history]
    return outputs


def _bank(run: Run, seed: int) -> StyleBank:
    return StyleBank.from_datasets(run.load_sources(seed))


def _scored(run: Run, seed: int, classifier: str, abstainer: str, variant: str, n_styles: int):
    """(scored predictions, vote counts or None, input paths) for one evaluation cell."""
    data = run.load_data(seed, variant)
    clf = run.load_classifier(seed, classifier)
    inputs = [run.data_path(seed, variant), run.model_path(seed, f"classifier-{classifier}.json")]
    if abstainer == "tt-nss":
        stylizer = run.load_stylizer(seed)
        bank = _bank(run, seed)
        inputs += [run.model_path(seed, "encoder.json"), run.model_path(seed, "decoder.json")]
        inputs += [run.data_path(seed, n) for n in SOURCE_NAMES]
        counts = consensus_profiles(data.X, clf, stylizer, bank, n_styles, seed)
        return data, scored_from_counts(data.ids, data.y, counts), counts, inputs
    return data, scored_from_proba(data.ids, data.y, clf.predict_proba(data.X)), None, inputs


def cmd_evaluate(run: Run, args) -> list[str]:
    n_styles = args.n_styles or run.cfg["smoothing"]["n_styles"]
    alpha = run.cfg["smoothing"]["alpha"] if args.alpha is None else args.alpha
    outputs = []
    for seed in _seeds(run.cfg, args):
        data, preds, counts, inputs = _scored(run, seed, args.classifier, args.abstainer, args.variant, n_styles)
        stem = run.seed_dir(seed, "eval", f"{args.classifier}-{args.abstainer}-{args.variant}")
        curve = build_curve(preds)
        curve.to_csv(stem + "-curve.csv")
        if counts is not None:
            verdicts = [decide(c, alpha) for c in counts]
        else:
            clf = run.load_classifier(seed, args.classifier)
            verdicts = ConfidenceAbstainer(clf, threshold=alpha).fit().verdicts(data.X)
        write_verdicts(stem + "-verdicts.jsonl", data.ids, verdicts)
        summary = {
            "seed": seed, "classifier": args.classifier, "abstainer": args.abstainer, "variant": args.variant,
            "alpha": alpha, "auc": curve.auc, "accuracy": accuracy(preds),
            "abstention_rate": float(np.mean([v.abstained for v in verdicts])),
            "abstained_accuracy": abstained_accuracy(preds, alpha), "auc_convention": AUC_CONVENTION,
        }
        if args.abstainer == "tt-nss":
            summary["n_styles"] = n_styles
        write_json(stem + "-summary.json", summary)
        paths = [stem + "-curve.csv", stem + "-verdicts.jsonl", stem + "-summary.json"]
        cmd_args = {"seed": seed, "classifier": args.classifier, "abstainer": args.abstainer,
                    "variant": args.variant, "alpha": alpha}
        timing = None
        if args.abstainer == "tt-nss":
            cmd_args["n_styles"] = n_styles
            cmd_args["style_sampling"] = f"{n_styles} randomly sampled style images per test sample"
            t_n = run.cfg["smoothing"]["timing_n_styles"]
            subset = data.X[: run.cfg["smoothing"]["timing_samples"]]
            secs = per_sample_seconds(subset, run.load_classifier(seed, args.classifier), run.load_stylizer(seed),
                                      _bank(run, seed), t_n, seed)
            timing = {"tt_nss_n_styles": t_n, "tt_nss_seconds_per_sample": secs, "samples_timed": len(subset)}
        run.record(f"evaluate/{args.classifier}/{args.abstainer}/{args.variant}/seed-{seed}", cmd_args,
                   inputs, paths, timing)
        outputs += paths
    return outputs


def alpha_grid_rows(preds, n_classes: int):
    """(alpha, abstention rate, kept accuracy, abstained accuracy, n kept) over the realized grid plus 0 and 1/K."""
    grid = sorted({0.0, 1.0 / n_classes} | {p.score for p in preds})
    n = len(preds)
    for a in grid:
        kept = [p for p in preds if not p.score < a]
        yield [repr(float(a)), repr((n - len(kept)) / n), _fmt(accuracy(kept) if kept else None),
               _fmt(abstained_accuracy(preds, a)), len(kept)]


def cmd_sweep_alpha(run: Run, args) -> list[str]:
    n_styles = args.n_styles or run.cfg["smoothing"]["n_styles"]
    outputs = []
    for seed in _seeds(run.cfg, args):
        _, preds, _, inputs = _scored(run, seed, args.classifier, args.abstainer, args.variant, n_styles)
        n_classes = len(run.load_classifier(seed, args.classifier).classes_)
        path = run.seed_dir(seed, "sweep-alpha", f"{args.classifier}-{args.abstainer}-{args.variant}.csv")
        write_rows(path, ["alpha", "abstention_rate", "accuracy", "abstained_accuracy", "n_kept"],
                   alpha_grid_rows(preds, n_classes))
        run.record(f"sweep-alpha/{args.classifier}/{args.abstainer}/{args.variant}/seed-{seed}",
                   {"seed": seed, "n_styles": n_styles}, inputs, [path])
        outputs.append(path)
    return outputs


def cmd_sweep_styles(run: Run, args) -> list[str]:
    sweep = run.cfg["sweep"]
    variant = args.variant or sweep["variant"]
    method = args.classifier or sweep["classifier"]
    seeds = _seeds(run.cfg, args)
    aucs: dict[int, list[float]] = {int(n): [] for n in sweep["n_values"]}
    inputs = []
    for seed in seeds:
        data = run.load_data(seed, variant)
        table = styles_sweep(data.X, data.y, run.load_classifier(seed, method), run.load_stylizer(seed),
                             _bank(run, seed), sweep["n_values"], seeds=(seed,), ids=data.ids)
        for n in table.n_values:
            aucs[n].append(table.aucs[n][0])
        inputs += [run.data_path(seed, variant), run.model_path(seed, f"classifier-{method}.json"),
                   run.model_path(seed, "encoder.json"), run.model_path(seed, "decoder.json")]
    table = SweepTable(list(aucs), seeds, aucs)
    csv_path = os.path.join(run.dir, f"sweep-styles-{method}-{variant}.csv")
    json_path = os.path.join(run.dir, f"sweep-styles-{method}-{variant}.json")
    table.to_csv(csv_path)
    write_json(json_path, dict(table.summary(), classifier=method, variant=variant))
    run.record(f"sweep-styles/{method}/{variant}", {"seeds": seeds, "n_values": list(aucs)}, inputs,
               [csv_path, json_path])
    return [csv_path, json_path]


def directional_counts(records) -> dict:
    """Per-seed directional outcomes on the severity-5 variant."""
    auc = {(r.seed, r.classifier, r.abstainer, r.variant): r.auc for r in records}
    seeds = sorted({r.seed for r in records})
    nss_wins = [s for s in seeds if auc.get((s, "nss", "tt-nss", "c5"), -1) > auc.get((s, "erm", "tt-nss", "c5"), 2)]
    tt_wins = [s for s in seeds
               if auc.get((s, "erm", "tt-nss", "c5"), -1) >= auc.get((s, "erm", "confidence", "c5"), 2)]
    return {"seeds": seeds, "nss_beats_erm_tt_nss_c5": nss_wins, "tt_nss_ge_confidence_erm_c5": tt_wins}


def cmd_compare(run: Run, args) -> list[str]:
    n_styles = args.n_styles or run.cfg["smoothing"]["n_styles"]
    seeds = _seeds(run.cfg, args)
    records, inputs = [], []
    for seed in seeds:
        test_sets = {v: run.load_data(seed, v) for v in VARIANTS}
        classifiers = {m: run.load_classifier(seed, m) for m in METHODS}
        records += compare_methods(test_sets, classifiers, run.load_stylizer(seed), _bank(run, seed), seed,
                                   ABSTAINERS, n_styles)
        inputs += [run.data_path(seed, v) for v in VARIANTS] + [run.data_path(seed, n) for n in SOURCE_NAMES]
        inputs += [run.model_path(seed, f) for f in ("encoder.json", "decoder.json", "classifier-erm.json",
                                                     "classifier-nss.json")]
    csv_path = os.path.join(run.dir, "compare.csv")
    json_path = os.path.join(run.dir, "compare.json")
    write_comparison_csv(csv_path, records)
    summary = comparison_summary(records)
    summary.update(n_styles=n_styles, seeds=seeds, directional=directional_counts(records))
    write_json(json_path, summary)
    run.record("compare", {"seeds": seeds, "n_styles": n_styles}, inputs, [csv_path, json_path])
    return [csv_path, json_path]


class VerificationFailed(StyleSmoothError):
    kind = "verification_failed"


def verify_seed(run: Run, seed: int, variant: str, n_styles: int) -> list[dict]:
    """Oracle agreement, abstention semantics and AUC grid agreement for one seed."""
    checks = []
    data = run.load_data(seed, variant)
    clf = run.load_classifier(seed, "erm")
    stylizer = run.load_stylizer(seed)
    bank = _bank(run, seed)
    small = StyleBank(bank.images[:20])
    X = data.X[:10]
    counts = consensus_profiles(X, clf, stylizer, small, 1, seed, enumerate_bank=True)
    agree = 0
    for x, c in zip(X, counts):
        top, probs = exact_smoothed_prediction(x, clf, stylizer, small)
        agree += int(top == int(np.argmax(c)) and np.allclose(probs, c / c.sum()))
    checks.append({"name": "oracle_enumeration", "seed": seed, "passed": agree == len(X),
                   "detail": f"{agree}/{len(X)} samples agree"})
    n_classes = len(clf.classes_)
    for abstainer in ABSTAINERS:
        _, preds, _, _ = _scored(run, seed, "erm", abstainer, variant, n_styles)
        rates = [(float(a), (len(preds) - sum(not p.score < a for p in preds)) / len(preds))
                 for a in sorted({0.0, 1.0 / n_classes} | {p.score for p in preds})]
        monotone = all(r0 <= r1 for (_, r0), (_, r1) in zip(rates, rates[1:]))
        low = dict(rates)
        zero_ok = low[0.0] == 0.0 and (abstainer != "tt-nss" or low[1.0 / n_classes] == 0.0)
        checks.append({"name": f"abstention_semantics/{abstainer}", "seed": seed, "passed": monotone and zero_ok,
                       "detail": f"monotone={monotone} zero_at_low_alpha={zero_ok}"})
        gap = abs(build_curve(preds).auc - grid_auc(preds, 1e-3))
        checks.append({"name": f"auc_grid/{abstainer}", "seed": seed, "passed": gap <= 1e-3,
                       "detail": f"|build_curve - grid| = {gap!r}"})
    return checks


def cmd_verify(run: Run, args) -> list[str]:
    n_styles = args.n_styles or run.cfg["smoothing"]["n_styles"]
    variant = args.variant or "c5"
    checks = []
    for seed in _seeds(run.cfg, args):
        checks += verify_seed(run, seed, variant, n_styles)
    path = os.path.join(run.dir, f"verify-{variant}.json")
    passed = all(c["passed"] for c in checks)
    write_json(path, {"passed": passed, "checks": checks})
    run.record(f"verify/{variant}", {"seeds": _seeds(run.cfg, args), "n_styles": n_styles}, [], [path])
    if not passed:
        failed = [c["name"] for c in checks if not c["passed"]]
        raise VerificationFailed(f"{len(failed)} check(s) failed: {', '.join(failed)}")
    return [path]


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-decoder": cmd_train_decoder,
    "train-classifier": cmd_train_classifier,
    "evaluate": cmd_evaluate,
    "sweep-alpha": cmd_sweep_alpha,
    "sweep-styles": cmd_sweep_styles,
    "compare": cmd_compare,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (defaults apply when omitted)")
    common.add_argument("--run-root", help=f"run root directory (default: ${ENV_RUN_ROOT} or ./runs)")
    common.add_argument("--seed", type=int, help="restrict to one seed instead of the config's seed list")

    parser = argparse.ArgumentParser(prog="stylesmooth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="render the synthetic suite")
    sub.add_parser("train-decoder", parents=[common], help="train encoder and AdaIN decoder")
    p = sub.add_parser("train-classifier", parents=[common], help="train an ERM or NSS classifier")
    p.add_argument("--method", choices=METHODS, required=True)

    def scoring(p):
        p.add_argument("--classifier", choices=METHODS, default="erm")
        p.add_argument("--n-styles", type=int, help="styles per test sample (default from config)")

    p = sub.add_parser("evaluate", parents=[common], help="curve, verdicts and summary for one cell")
    p.add_argument("--abstainer", choices=ABSTAINERS, required=True)
    p.add_argument("--variant", choices=VARIANTS, required=True)
    p.add_argument("--alpha", type=float, help="abstention threshold for the verdict file")
    scoring(p)
    p = sub.add_parser("sweep-alpha", parents=[common], help="abstention statistics over the realized alpha grid")
    p.add_argument("--abstainer", choices=ABSTAINERS, default="tt-nss")
    p.add_argument("--variant", choices=VARIANTS, default="c5")
    scoring(p)
    p = sub.add_parser("sweep-styles", parents=[common], help="AUC versus the number of styles n")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--classifier", choices=METHODS)
    p = sub.add_parser("compare", parents=[common], help="AUC grid over classifiers, abstainers and variants")
    p.add_argument("--n-styles", type=int)
    p = sub.add_parser("verify", parents=[common], help="oracle, abstention and AUC self-checks")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--n-styles", type=int)
    return parser


def _error_payload(exc: BaseException) -> dict:
    kind = getattr(exc, "kind", "internal_error")
    payload = {"status": "error", "kind": kind, "message": str(exc), "type": type(exc).__name__}
    if getattr(exc, "key", None) is not None:
        payload["key"] = exc.key
    return payload


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "n_styles", None) is not None and args.n_styles < 1:
            err = ConfigError("--n-styles must be >= 1")
            err.key = "n_styles"
            raise err
        if getattr(args, "alpha", None) is not None and not 0.0 <= args.alpha <= 1.0:
            err = ConfigError("--alpha must lie in [0, 1]")
            err.key = "alpha"
            raise err
        cfg = load_config(args.config)
        root = args.run_root or os.environ.get(ENV_RUN_ROOT) or "runs"
        run = Run(cfg, root)
        with run.locked():
            run.check_config()
            outputs = COMMANDS[args.command](run, args)
    except StyleSmoothError as exc:
        print(json.dumps(_error_payload(exc), sort_keys=True), file=sys.stderr)
        return EXIT_CODES.get(exc.kind, 1)
    except Exception as exc:  # noqa: BLE001 - reported as machine-readable JSON
        print(json.dumps(_error_payload(exc), sort_keys=True), file=sys.stderr)
        return 1
    print(json.dumps({"status": "ok", "command": args.command, "run_dir": run.dir,
                      "outputs": [run.rel(p) for p in outputs]}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
