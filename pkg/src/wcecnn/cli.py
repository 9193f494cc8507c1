"""Command-line entry point.

Every command that writes files builds them in a hidden scratch directory
next to the target and renames it into place only on success, so a failed
run leaves nothing behind.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile

import numpy as np

from . import __version__, arch, dataset, evaluate, optim, pipeline
from .channels import DEFAULT_SIGMA, compute_stats
from .checkpoint import CheckpointError
from .layers import ShapeError
from .synth import ClassLabel

OUT_ENV = "WCECNN_OUT"
STORE_BANDS = "bands.npy"
STORE_INDEX = "samples.csv"
STORE_STATS = "stats.csv"
STORE_META = "store.json"
WRINKLES_VS_BLOB = (int(ClassLabel.WRINKLES), int(ClassLabel.CLEAR_BLOB))

log = logging.getLogger("wcecnn")


class CliError(Exception):
    """A user-facing failure; reported as one line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- output dirs

def _default_out(args, name):
    if args.out:
        return args.out
    return os.path.join(os.environ.get(OUT_ENV, "runs"), name)


@contextlib.contextmanager
def staged_dir(target, force=False):
    """Yield a scratch directory that replaces ``target`` only if the block succeeds."""
    target = os.path.abspath(target)
    if os.path.exists(target) and not force:
        if not os.path.isdir(target) or os.listdir(target):
            raise CliError(f"output {target} already exists (use --force to replace it)")
    parent = os.path.dirname(target)
    os.makedirs(parent, exist_ok=True)
    scratch = tempfile.mkdtemp(prefix=f".{os.path.basename(target)}.", dir=parent)
    try:
        yield scratch
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    if os.path.exists(target):
        shutil.rmtree(target)
    os.replace(scratch, target)


@contextlib.contextmanager
def staged_file(target, force=False):
    target = os.path.abspath(target)
    if os.path.exists(target) and not force:
        raise CliError(f"output {target} already exists (use --force to replace it)")
    os.makedirs(os.path.dirname(target), exist_ok=True)
    fd, scratch = tempfile.mkstemp(prefix=f".{os.path.basename(target)}.", dir=os.path.dirname(target))
    os.close(fd)
    try:
        yield scratch
    except BaseException:
        os.unlink(scratch)
        raise
    os.replace(scratch, target)


def write_provenance(directory, args, config_text=""):
    digest = hashlib.sha256(config_text.encode()).hexdigest()
    with open(os.path.join(directory, "provenance.txt"), "w") as fh:
        fh.write(f"command={args.command}\n")
        fh.write(f"seed={args.seed}\n")
        fh.write(f"config_sha256={digest}\n")
        fh.write(f"version={__version__}\n")


# ---------------------------------------------------------------- config files

_FIELDS = {f.name: f.type for f in dataclasses.fields(optim.TrainConfig)}
_CASTS = {"float": float, "int": int, "str": str}


def read_config(path):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except FileNotFoundError:
        raise CliError(f"config file {path} not found") from None
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise CliError(f"{path}:{n}: unknown key {key!r}")
        try:
            values[key] = _CASTS[_FIELDS[key]](value)
        except ValueError:
            raise CliError(f"{path}:{n}: bad value {value!r} for {key}") from None
    return values


def format_config(config, extra=None):
    items = {**dataclasses.asdict(config), **(extra or {})}
    return "".join(f"{k}={v}\n" for k, v in items.items())


def effective_config(args):
    values = {}
    if args.config:
        values.update(read_config(args.config))
    for key in _FIELDS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    values["seed"] = args.seed
    base = optim.paper_config if args.paper_scale else optim.desk_config
    try:
        return base(**values)
    except ValueError as exc:
        raise CliError(f"invalid training config: {exc}") from None


# ---------------------------------------------------------------- sample store

def save_store(directory, ds, bands, stats, sigma):
    np.save(os.path.join(directory, STORE_BANDS), bands)
    with open(os.path.join(directory, STORE_INDEX), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label_code"])
        writer.writerows((s.id, s.label) for s in ds.samples)
    with open(os.path.join(directory, STORE_STATS), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["band", "mean", "std"])
        for name, m, s in zip("RGBHL", stats.mean, stats.std):
            writer.writerow([name, repr(float(m)), repr(float(s))])
    with open(os.path.join(directory, STORE_META), "w") as fh:
        json.dump({"sigma": sigma, "source": ds.meta, "count": len(ds)}, fh, indent=1)


def load_samples(path, sigma=DEFAULT_SIGMA):
    """``(ids, labels, bands, inner_meta)`` from a sample store or an image dataset."""
    if os.path.isfile(os.path.join(path, STORE_BANDS)):
        with open(os.path.join(path, STORE_INDEX), newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        bands = np.load(os.path.join(path, STORE_BANDS))
        if len(rows) != len(bands):
            raise CliError(f"{path}: {len(rows)} index rows for {len(bands)} band stacks")
        with open(os.path.join(path, STORE_META)) as fh:
            meta = json.load(fh)
        if sigma != meta["sigma"]:
            raise CliError(f"{path} was preprocessed with sigma={meta['sigma']}, not {sigma}")
        return [r[0] for r in rows], np.array([int(r[1]) for r in rows]), bands, meta
    ds = dataset.load_dataset(path)
    return [s.id for s in ds.samples], ds.labels, pipeline.bands_for(ds, sigma), ds.meta


def load_images(path):
    if os.path.isfile(os.path.join(path, STORE_BANDS)):
        raise CliError(f"{path} is a preprocessed store; the colour baseline needs the image dataset")
    return dataset.load_dataset(path)


# ---------------------------------------------------------------- reports

def write_reports(directory, cm, title):
    report = evaluate.report_from(cm)
    evaluate.write_report_csv(report, os.path.join(directory, "report.csv"))
    evaluate.write_confusion_csv(cm, os.path.join(directory, "confusion.csv"),
                                 os.path.join(directory, "confusion_counts.csv"))
    evaluate.render_confusion(cm, os.path.join(directory, "confusion.ppm"))
    from . import plotting
    plotting.plot_confusion(cm, os.path.join(directory, "confusion.png"), title=f"{title} confusion")
    plotting.plot_accuracy(report, os.path.join(directory, "accuracy.png"), title=f"{title} accuracy")
    return report


def print_report(report):
    print("class,accuracy")
    for name, value in report.percent_rows():
        print(f"{name},{value}")


# ---------------------------------------------------------------- commands

def cmd_gen_data(args):
    ds = dataset.make_dataset(args.per_class, args.seed, args.side)
    out = _default_out(args, "data")
    with staged_dir(out, args.force) as tmp:
        dataset.save_dataset(ds, tmp)
        write_provenance(tmp, args, f"per_class={args.per_class}\nside={args.side}\n")
    print(f"wrote {len(ds)} images to {out}")


def cmd_split(args):
    ds = dataset.load_dataset(args.data)
    train, test = dataset.stratified_split(ds, args.test_fraction, args.seed)
    out = _default_out(args, "split")
    with staged_dir(out, args.force) as tmp:
        dataset.save_dataset(train, os.path.join(tmp, "train"))
        dataset.save_dataset(test, os.path.join(tmp, "test"))
        write_provenance(tmp, args, f"test_fraction={args.test_fraction}\n")
    print(f"train {len(train)} / test {len(test)} in {out}")


def cmd_preprocess(args):
    ds = dataset.load_dataset(args.data)
    bands = pipeline.bands_for(ds, args.sigma)
    stats = compute_stats(bands)
    out = _default_out(args, "store")
    with staged_dir(out, args.force) as tmp:
        save_store(tmp, ds, bands, stats, args.sigma)
        write_provenance(tmp, args, f"sigma={args.sigma}\n")
    print(f"preprocessed {len(ds)} samples into {out}")


def cmd_train(args):
    config = effective_config(args)
    _, labels, bands, _ = load_samples(args.data, args.sigma)
    held = None
    if args.eval_data:
        _, elabels, ebands, _ = load_samples(args.eval_data, args.sigma)
        held = dict(eval_bands=ebands, eval_labels=elabels)
    extra = {"arch": args.arch, "sigma": args.sigma, "standardize": not args.no_standardize}
    text = format_config(config, extra)
    out = _default_out(args, f"train-{args.arch}")
    with staged_dir(out, args.force) as tmp:
        model, trainlog = pipeline.train_cnn(args.arch, bands, labels, config,
                                             standardize=not args.no_standardize,
                                             sigma=args.sigma, **(held or {}))
        model.save(os.path.join(tmp, "model.ckpt"), {"config": extra | dataclasses.asdict(config)})
        trainlog.write_csv(os.path.join(tmp, "train_log.csv"))
        from . import plotting
        plotting.plot_training(trainlog, os.path.join(tmp, "training.png"))
        with open(os.path.join(tmp, "config.txt"), "w") as fh:
            fh.write(text)
        write_provenance(tmp, args, text)
    last = trainlog.records[-1]
    print(f"trained {args.arch} for {config.max_iters} iterations, final loss {last.loss:.4f}; "
          f"checkpoint {os.path.join(out, 'model.ckpt')}")


def _load_cnn(path):
    return pipeline.CnnModel.load(path)[0]


def cmd_eval(args):
    model = _load_cnn(args.checkpoint)
    _, labels, bands, _ = load_samples(args.data, model.sigma)
    cm = evaluate.confusion_matrix(labels, model.predict_bands(bands))
    out = _default_out(args, "eval")
    with staged_dir(out, args.force) as tmp:
        report = write_reports(tmp, cm, model.net.spec.name)
        write_provenance(tmp, args, f"checkpoint={args.checkpoint}\n")
    print_report(report)


def cmd_params(args):
    print(arch.format_param_table(arch.build(args.arch)))


def cmd_export_features(args):
    model = _load_cnn(args.checkpoint)
    ids, labels, bands, _ = load_samples(args.data, model.sigma)
    feats = model.features_bands(bands)
    out = args.out or os.path.join(os.environ.get(OUT_ENV, "runs"), "features.csv")
    with staged_file(out, args.force) as tmp:
        evaluate.write_features_csv(tmp, ids, labels, feats)
    print(f"wrote {len(ids)} x {feats.shape[1]} features to {out}")


def cmd_baseline_train(args):
    ds = load_images(args.data)
    model = pipeline.fit_color_baseline(ds.images(), ds.labels, seed=args.seed,
                                        lam=args.lam, epochs=args.epochs)
    text = f"lam={args.lam}\nepochs={args.epochs}\n"
    out = _default_out(args, "baseline")
    with staged_dir(out, args.force) as tmp:
        pipeline.save_baseline(model, os.path.join(tmp, "baseline.ckpt"),
                               {"lam": args.lam, "epochs": args.epochs, "seed": args.seed})
        with open(os.path.join(tmp, "config.txt"), "w") as fh:
            fh.write(text)
        write_provenance(tmp, args, text)
    print(f"trained colour baseline; checkpoint {os.path.join(out, 'baseline.ckpt')}")


def cmd_baseline_eval(args):
    model, _ = pipeline.load_baseline(args.checkpoint)
    ds = load_images(args.data)
    feats = model.features(ds.images())
    scores = model.model.scores(feats)
    cm = evaluate.confusion_matrix(ds.labels, scores.argmax(axis=1))
    pair = evaluate.pair_accuracy(scores, ds.labels, WRINKLES_VS_BLOB)
    out = _default_out(args, "baseline-eval")
    with staged_dir(out, args.force) as tmp:
        report = write_reports(tmp, cm, "COLOR+SVM")
        with open(os.path.join(tmp, "pair.csv"), "w") as fh:
            fh.write(f"pair,accuracy\nWrinkles-ClearBlob,{100 * pair:.1f}\n")
        write_provenance(tmp, args, f"checkpoint={args.checkpoint}\n")
    print_report(report)
    print(f"Wrinkles-vs-ClearBlob,{100 * pair:.1f}")


def cmd_confusion_render(args):
    try:
        cm = evaluate.read_confusion_counts(args.counts)
    except (FileNotFoundError, ValueError, IndexError) as exc:
        raise CliError(f"cannot read confusion counts {args.counts}: {exc}") from None
    if cm.counts.shape != (6, 6):
        raise CliError(f"{args.counts}: expected a 6x6 matrix, got {cm.counts.shape}")
    with staged_file(args.out, args.force) as tmp:
        evaluate.render_confusion(cm, tmp, cell=args.cell)
    print(f"wrote {args.out}")


# ---------------------------------------------------------------- parser

def _positive_int(text):
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def build_parser():
    p = _Parser(prog="wcecnn", description="Motility-frame CNNs, colour baseline and evaluation.")
    p.add_argument("--seed", type=int, default=0, help="seed for every randomized step (default 0)")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="cap BLAS/FFT worker threads")
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=func)
        sp.add_argument("--force", action="store_true", help="replace existing output")
        return sp

    sp = command("gen-data", cmd_gen_data, "render a synthetic labelled corpus")
    sp.add_argument("--per-class", type=_positive_int, default=500)
    sp.add_argument("--side", type=_positive_int, default=128)
    sp.add_argument("--out")

    sp = command("split", cmd_split, "stratified train/test split of a dataset")
    sp.add_argument("--data", required=True)
    sp.add_argument("--test-fraction", type=float, default=0.2)
    sp.add_argument("--out")

    sp = command("preprocess", cmd_preprocess, "images -> 5-band sample store + stats")
    sp.add_argument("--data", required=True)
    sp.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)
    sp.add_argument("--out")

    sp = command("train", cmd_train, "train a CNN")
    sp.add_argument("--arch", required=True, choices=[k.value for k in arch.ArchKind])
    sp.add_argument("--data", required=True, help="sample store or image dataset")
    sp.add_argument("--eval-data", help="held-out set scored at each log point")
    sp.add_argument("--config", help="flat key=value training config")
    sp.add_argument("--paper-scale", action="store_true", help="start from the full-scale recipe")
    sp.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)
    sp.add_argument("--no-standardize", action="store_true")
    for key, kind in _FIELDS.items():
        if key != "seed":
            sp.add_argument(f"--{key.replace('_', '-')}", type=_CASTS[kind], default=None)
    sp.add_argument("--out")

    for name, func, help_text in (("eval", cmd_eval, "score a CNN checkpoint"),
                                  ("export-features", cmd_export_features,
                                   "dump penultimate activations to CSV")):
        sp = command(name, func, help_text)
        sp.add_argument("--checkpoint", required=True)
        sp.add_argument("--data", required=True)
        sp.add_argument("--out")

    sp = command("params", cmd_params, "layer-by-layer parameter listing")
    sp.add_argument("--arch", required=True, choices=[k.value for k in arch.ArchKind])

    sp = command("baseline-train", cmd_baseline_train, "fit the colour-words + SVM baseline")
    sp.add_argument("--data", required=True)
    sp.add_argument("--lam", type=float, default=1e-4)
    sp.add_argument("--epochs", type=_positive_int, default=50)
    sp.add_argument("--out")

    sp = command("baseline-eval", cmd_baseline_eval, "score a colour baseline checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out")

    sp = command("confusion-render", cmd_confusion_render, "confusion counts CSV -> PPM heatmap")
    sp.add_argument("--counts", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--cell", type=_positive_int, default=evaluate.CELL_PX)
    return p


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        if args.threads:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                args.func(args)
        else:
            args.func(args)
    except (CliError, dataset.DatasetError, CheckpointError, ShapeError,
            ValueError, FloatingPointError, OSError) as exc:
        print(f"wcecnn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
