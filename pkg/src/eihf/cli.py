"""Command-line surface: transform, encode, bandscan, fit-stats, score, eval,
diagnose, synth.

Exit codes: 0 on success, 2 for validation/usage errors, 1 for internal
errors. Structured error lines go to stderr; when --out is absent the
JSON-emitting subcommands print nothing but the report on stdout.

Flags may also be supplied through a TOML config file (--config): keys
at the top level apply to every subcommand, keys inside a
[subcommand] table apply to one, and explicit command-line flags win.
Every JSON artifact embeds the resolved configuration and the library
version, and contains no timestamps, so identical invocations produce
byte-identical outputs.

Transform provenance travels with the data: `transform` writes a
transform_meta JSON next to its outputs, `fit-stats` embeds those
parameters in the stats bundle, and `score` refuses to score features
whose transform parameters differ from the bundle's.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import FormatError, TransformMismatchError, ValidationError
from .frequency import (
    ResidualParams,
    apply_channel_variant,
    fit_alpha,
    hf_residual,
    make_band_masks,
    smoothed_map,
)
from .kernel_mmd import BandProfile, KernelParams, bandwise_profile, median_bandwidth, mmd2
from .metrics import evaluate_scores, expected_mahalanobis, mean_id_distance, v_intra
from .ood_scoring import (
    ClassStats,
    ScoreSet,
    energy_scores,
    fit_class_stats,
    knn_scores,
    mahalanobis_scores,
    msp_scores,
)
from .synth import make_band_textures, make_gaussian_sets, make_two_class_images
from .tensor_io import (
    FeatureMatrix,
    ImageTensor,
    decode_ftb,
    encode_ftb,
    load_feature_matrix,
    load_image,
    load_labels,
    load_scores,
    write_csv,
    write_ftb,
)
from .toy_encoder import encode as toy_encode
from .toy_encoder import init_encoder
from .util import (
    atomic_write_bytes,
    atomic_write_text,
    dump_report,
    format_value,
    parallel_map,
    spawn_seeds,
)

CLI_VARIANTS = ("eihf", "zero", "random", "lowfreq", "shuffled")
_LIB_VARIANT = {v: v for v in CLI_VARIANTS} | {"shuffled": "shuffled_hf"}
VARIANT_CODES = {v: float(i) for i, v in enumerate(CLI_VARIANTS)}
OPERATOR_CODES = {"gaussian": 0.0, "sobel": 1.0, "laplace": 2.0}
TRANSFORM_META_KEYS = ("variant", "alpha_hf", "kernel_size", "sigma_blur", "epsilon", "operator")

EVAL_REPORT_SCHEMA = {
    "type": "object",
    "required": ["auroc", "fpr95", "tau95", "overlap", "bins", "n_id", "n_ood", "config", "version"],
    "properties": {
        "auroc": {"type": "number", "minimum": 0.0, "maximum": 1.0},
        "fpr95": {"type": "number", "minimum": 0.0, "maximum": 1.0},
        "tau95": {"type": "number"},
        "overlap": {"type": "number", "minimum": 0.0, "maximum": 1.0},
        "bins": {"type": "integer", "minimum": 2},
        "bin_range": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "n_id": {"type": "integer", "minimum": 1},
        "n_ood": {"type": "integer", "minimum": 1},
        "config": {"type": "object"},
        "version": {"type": "string"},
    },
}


def entrypoint() -> None:
    sys.exit(main())


def main(argv=None) -> int:
    try:
        args, config = _parse_and_resolve(argv)
        args.handler(args, config)
        return 0
    except SystemExit as exc:
        code = exc.code
        if code is None:
            return 0
        return code if isinstance(code, int) else 2
    except TransformMismatchError as exc:
        print(f"eihf: error[transform-mismatch]: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, FormatError) as exc:
        print(f"eihf: error[validation]: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"eihf: error[validation]: input not found: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"eihf: error[internal]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


# ---------------------------------------------------------------------------
# Argument parsing and config-file resolution
# ---------------------------------------------------------------------------

# builtin defaults per subcommand; None means "required, may come from config"
_DEFAULTS: dict[str, dict] = {
    "transform": {
        "in_path": None, "out": None, "variant": "eihf", "alpha": None,
        "fit_alpha": None, "kernel_size": 5, "sigma": 1.0, "epsilon": 1e-6,
        "operator": "gaussian", "seed": 0,
    },
    "encode": {"in_path": None, "encoder": "toy:0", "out": None},
    "bandscan": {
        "id": None, "ood": None, "bands": 8, "encoder": "toy:0",
        "estimator": "unbiased", "sigma": "median", "out": None,
    },
    "fit-stats": {
        "features": None, "labels": None, "shrinkage": 0.05,
        "transform_meta": None, "out": None,
    },
    "score": {
        "method": None, "features": None, "logits": None, "stats": None,
        "bank": None, "temperature": 1.0, "k": 50, "no_normalize": False,
        "transform_meta": None, "out": None, "format": "ftb",
    },
    "eval": {"id_scores": None, "ood_scores": None, "bins": 100, "tpr": 0.95, "out": None},
    "diagnose": {"features": None, "labels": None, "shrinkage": 0.05, "out": None},
    "synth": {
        "mode": None, "out": None, "seed": 0, "format": "ftb",
        "mu": 0.0, "n": None, "dim": 1,
        "size": 32, "bands": 8, "band_target": 7, "gain": 3.0,
        "n_train": 40, "n_test": 40, "texture_amp": 0.8,
    },
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eihf",
        description="Frequency-band OOD diagnostics: transforms, band profiles, scoring, metrics.",
    )
    parser.add_argument("--version", action="version", version=f"eihf {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    def sub(name, handler, help_text):
        p = subs.add_parser(name, help=help_text)
        p.add_argument("--config", help="TOML config file mirroring flags")
        p.set_defaults(handler=handler)
        return p

    p = sub("transform", cmd_transform, "append a fourth channel to images")
    p.add_argument("--in", dest="in_path", help="input image file or directory (FTB/PNG)")
    p.add_argument("--out", help="output file or directory (FTB)")
    p.add_argument("--variant", choices=CLI_VARIANTS)
    p.add_argument("--alpha", type=float, help="residual scale (mutually exclusive with --fit-alpha)")
    p.add_argument("--fit-alpha", dest="fit_alpha", help="directory of training images to fit alpha on")
    p.add_argument("--kernel-size", dest="kernel_size", type=int)
    p.add_argument("--sigma", type=float, help="Gaussian blur spread")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--operator", choices=sorted(OPERATOR_CODES))
    p.add_argument("--seed", type=int)

    p = sub("encode", cmd_encode, "encode images to a feature matrix")
    p.add_argument("--in", dest="in_path", help="input image directory or list file")
    p.add_argument("--encoder", help="toy:<seed>[,<filters>,<kernel>]")
    p.add_argument("--out", help="output feature FTB")

    p = sub("bandscan", cmd_bandscan, "band-wise MMD^2 separability profile")
    p.add_argument("--id", help="ID image directory or list file")
    p.add_argument("--ood", help="OOD image directory or list file")
    p.add_argument("--bands", type=int)
    p.add_argument("--encoder", help="toy:<seed>[,<filters>,<kernel>] or features:<dir>")
    p.add_argument("--estimator", choices=("biased", "unbiased"))
    p.add_argument("--sigma", help="'median' or a positive kernel bandwidth")
    p.add_argument("--out", help="output CSV path (JSON metadata written alongside)")

    p = sub("fit-stats", cmd_fit_stats, "fit class means and tied covariance")
    p.add_argument("--features", help="training features FTB")
    p.add_argument("--labels", help="training labels FTB")
    p.add_argument("--shrinkage", type=float)
    p.add_argument("--transform-meta", dest="transform_meta", help="transform_meta JSON to embed")
    p.add_argument("--out", help="output stats bundle")

    p = sub("score", cmd_score, "post-hoc ID-confidence scores")
    p.add_argument("--method", choices=("mahalanobis", "msp", "energy", "knn"))
    p.add_argument("--features", help="test features FTB (mahalanobis/knn)")
    p.add_argument("--logits", help="test logits FTB (msp/energy)")
    p.add_argument("--stats", help="stats bundle (mahalanobis)")
    p.add_argument("--bank", help="feature bank FTB (knn)")
    p.add_argument("--temperature", type=float, help="energy temperature")
    p.add_argument("--k", type=int, help="knn neighbor rank")
    p.add_argument("--no-normalize", dest="no_normalize", action="store_true", default=None)
    p.add_argument("--transform-meta", dest="transform_meta", help="transform_meta JSON of the test set")
    p.add_argument("--out", help="output score file")
    p.add_argument("--format", choices=("ftb", "csv"))

    p = sub("eval", cmd_eval, "AUROC / FPR95 / overlap report")
    p.add_argument("--id-scores", dest="id_scores", help="ID score file (FTB/CSV)")
    p.add_argument("--ood-scores", dest="ood_scores", help="OOD score file (FTB/CSV)")
    p.add_argument("--bins", type=int)
    p.add_argument("--tpr", type=float)
    p.add_argument("--out", help="output JSON (stdout if absent)")

    p = sub("diagnose", cmd_diagnose, "feature-geometry diagnostics report")
    p.add_argument("--features", help="labeled features FTB")
    p.add_argument("--labels", help="labels FTB")
    p.add_argument("--shrinkage", type=float)
    p.add_argument("--out", help="output JSON (stdout if absent)")

    p = sub("synth", cmd_synth, "generate deterministic synthetic fixtures")
    p.add_argument("--mode", choices=("gaussians", "band_textures", "two_class_images"))
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=("ftb", "csv"))
    p.add_argument("--mu", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--bands", type=int)
    p.add_argument("--band-target", dest="band_target", type=int)
    p.add_argument("--gain", type=float)
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--texture-amp", dest="texture_amp", type=float)

    return parser


def _parse_and_resolve(argv) -> tuple[argparse.Namespace, dict]:
    args = _build_parser().parse_args(argv)
    defaults = _DEFAULTS[args.subcommand]
    table: dict = {}
    if args.config:
        with open(args.config, "rb") as fh:
            raw = tomllib.load(fh)
        table = {k.replace("-", "_"): v for k, v in raw.items() if not isinstance(v, dict)}
        section = raw.get(args.subcommand, {})
        if not isinstance(section, dict):
            raise ValidationError(f"config section [{args.subcommand}] must be a table")
        table.update({k.replace("-", "_"): v for k, v in section.items()})
    resolved = {}
    for key, default in defaults.items():
        value = getattr(args, key, None)
        if value is None:
            alias = "in" if key == "in_path" else key
            value = table.get(alias, default)
        setattr(args, key, value)
        resolved[key] = value
    config = {"subcommand": args.subcommand}
    config.update({k.replace("_", "-"): v for k, v in sorted(resolved.items())})
    return args, config


def _require(value, flag: str):
    if value is None:
        raise ValidationError(f"missing required flag {flag}")
    return value


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _list_inputs(path_str: str) -> list[Path]:
    """Files from a directory (sorted FTB/PNG) or a .txt list of paths."""
    path = Path(path_str)
    if path.is_dir():
        files = sorted(
            p for p in path.iterdir() if p.suffix.lower() in (".ftb", ".png")
        )
        if not files:
            raise ValidationError(f"no .ftb or .png files in directory {path}")
        return files
    if path.suffix == ".txt":
        lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
        if not lines:
            raise ValidationError(f"list file {path} is empty")
        return [Path(ln) for ln in lines]
    if path.is_file():
        return [path]
    raise FileNotFoundError(str(path))


def _load_images(path_str: str) -> list[ImageTensor]:
    return parallel_map(load_image, _list_inputs(path_str))


def _parse_encoder_spec(spec: str):
    kind, _, rest = spec.partition(":")
    if kind == "toy":
        parts = rest.split(",") if rest else []
        if not parts or not parts[0]:
            raise ValidationError("toy encoder spec must be toy:<seed>[,<filters>,<kernel>]")
        try:
            seed = int(parts[0])
            n_filters = int(parts[1]) if len(parts) > 1 else 64
            kernel = int(parts[2]) if len(parts) > 2 else 5
        except ValueError:
            raise ValidationError(f"bad toy encoder spec {spec!r}") from None
        return ("toy", seed, n_filters, kernel)
    if kind == "features":
        if not rest:
            raise ValidationError("features encoder spec must be features:<dir>")
        return ("features", rest)
    raise ValidationError(f"unknown encoder kind {kind!r} (expected toy: or features:)")


def _parse_sigma(raw) -> float:
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ValidationError(
            f"--sigma must be 'median' or a positive number, got {raw!r}"
        ) from None


def _write_scores(score_set: ScoreSet, out: str, fmt: str) -> None:
    if fmt == "ftb":
        write_ftb(out, score_set.scores)
    elif fmt == "csv":
        write_csv(out, score_set.scores)
    else:
        raise ValidationError(f"unknown score format {fmt!r}")


def _emit_report(report: dict, out: str | None) -> None:
    text = dump_report(report)
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# transform
# ---------------------------------------------------------------------------


def _residual_params(args) -> ResidualParams:
    return ResidualParams(
        kernel_size=args.kernel_size,
        sigma_blur=args.sigma,
        alpha_hf=args.alpha,
        epsilon=args.epsilon,
        operator=args.operator,
    )


def transform_meta_dict(variant: str, params: ResidualParams, seed: int) -> dict:
    return {
        "variant": variant,
        "alpha_hf": params.alpha_hf,
        "kernel_size": params.kernel_size,
        "sigma_blur": params.sigma_blur,
        "epsilon": params.epsilon,
        "operator": params.operator,
        "seed": seed,
    }


def check_transform_meta(bundle_meta: dict | None, test_meta: dict | None) -> None:
    """Refuse to score when train and test transform parameters differ.

    Only the parameters that change the transformed input space are
    compared; seeds are per-image draws and excluded.
    """
    if bundle_meta is None or test_meta is None:
        return
    for key in TRANSFORM_META_KEYS:
        a, b = bundle_meta.get(key), test_meta.get(key)
        if a != b:
            raise TransformMismatchError(
                f"transform parameter {key!r} differs between fitted statistics "
                f"({a!r}) and test data ({b!r}); statistics must be fitted in the "
                "same transformed input space as the samples they score"
            )


def cmd_transform(args, config) -> None:
    in_path = Path(_require(args.in_path, "--in"))
    out = Path(_require(args.out, "--out"))
    variant = _LIB_VARIANT[args.variant]
    params = _residual_params(args)

    needs_alpha = variant in ("eihf", "lowfreq", "shuffled_hf")
    if needs_alpha and not params.fitted:
        fit_dir = args.fit_alpha
        if fit_dir is None:
            raise ValidationError(
                f"variant {args.variant!r} needs --alpha or --fit-alpha <dir>"
            )
        fit_images = _load_images(fit_dir)
        map_fn = smoothed_map if variant == "lowfreq" else hf_residual
        maps = parallel_map(lambda img: map_fn(img, params), fit_images)
        params = params.with_alpha(fit_alpha(maps, params.epsilon))

    inputs = _list_inputs(str(in_path))
    dir_mode = in_path.is_dir() or len(inputs) > 1
    if dir_mode:
        out.mkdir(parents=True, exist_ok=True)
    seeds = spawn_seeds(args.seed, len(inputs))

    def run_one(item):
        src, seq = item
        return apply_channel_variant(load_image(src), variant, params, seq)

    results = parallel_map(run_one, list(zip(inputs, seeds)))
    for src, transformed in zip(inputs, results):
        dest = out / (src.stem + ".ftb") if dir_mode else out
        write_ftb(dest, transformed.data)

    meta = transform_meta_dict(args.variant, params, args.seed)
    meta.update({"config": config, "version": __version__})
    meta_path = out / "transform_meta.json" if dir_mode else Path(str(out) + ".meta.json")
    atomic_write_text(meta_path, dump_report(meta))


# ---------------------------------------------------------------------------
# encode
# ---------------------------------------------------------------------------


def cmd_encode(args, config) -> None:
    in_path = _require(args.in_path, "--in")
    out = _require(args.out, "--out")
    spec = _parse_encoder_spec(args.encoder)
    if spec[0] != "toy":
        raise ValidationError("encode supports only toy:<seed>[,<filters>,<kernel>] encoders")
    images = _load_images(in_path)
    channels = images[0].channels
    if any(img.channels != channels for img in images):
        raise ValidationError("all images must share one channel count")
    enc = init_encoder(spec[1], channels, spec[2], spec[3])
    rows = parallel_map(lambda img: toy_encode(enc, img), images)
    write_ftb(out, np.stack(rows))


# ---------------------------------------------------------------------------
# bandscan
# ---------------------------------------------------------------------------


def _bandscan_from_features(args) -> BandProfile:
    """Band profile over externally produced features.

    Expects features:<dir> holding id_band_<b>.ftb / ood_band_<b>.ftb for
    b = 1..bands, plus id_full.ftb / ood_full.ftb when --sigma median.
    """
    base = Path(_parse_encoder_spec(args.encoder)[1])
    bands = args.bands
    if args.sigma == "median":
        pooled = np.vstack(
            [
                load_feature_matrix(base / "id_full.ftb").values,
                load_feature_matrix(base / "ood_full.ftb").values,
            ]
        )
        sigma_k = median_bandwidth(pooled)
    else:
        sigma_k = _parse_sigma(args.sigma)
    params = KernelParams(sigma_k, args.estimator)
    values = []
    n_id = n_ood = 0
    for b in range(1, bands + 1):
        z_in = load_feature_matrix(base / f"id_band_{b}.ftb")
        z_out = load_feature_matrix(base / f"ood_band_{b}.ftb")
        n_id, n_ood = z_in.n, z_out.n
        values.append(mmd2(z_in, z_out, params))
    return BandProfile(
        values=np.asarray(values), sigma_k=sigma_k, estimator=args.estimator,
        n_id=n_id, n_ood=n_ood,
    )


def cmd_bandscan(args, config) -> None:
    out = Path(_require(args.out, "--out"))
    spec = _parse_encoder_spec(args.encoder)
    if spec[0] == "features":
        profile = _bandscan_from_features(args)
    else:
        id_images = _load_images(_require(args.id, "--id"))
        ood_images = _load_images(_require(args.ood, "--ood"))
        shape = (id_images[0].height, id_images[0].width)
        for img in id_images + ood_images:
            if (img.height, img.width) != shape:
                raise ValidationError("all images must share one spatial size")
        masks = make_band_masks(shape[0], shape[1], args.bands)
        enc = init_encoder(spec[1], id_images[0].channels, spec[2], spec[3])
        params = None
        if args.sigma != "median":
            params = KernelParams(_parse_sigma(args.sigma), args.estimator)
        profile = bandwise_profile(
            lambda img: toy_encode(enc, img),
            id_images,
            ood_images,
            masks,
            params=params,
            estimator=args.estimator,
        )

    lines = ["band,mmd2"]
    lines += [f"{b + 1},{format_value(v)}" for b, v in enumerate(profile.values)]
    atomic_write_bytes(out, ("\n".join(lines) + "\n").encode("ascii"))
    meta = {
        "bands": profile.band_count,
        "sigma_k": profile.sigma_k,
        "estimator": profile.estimator,
        "n_id": profile.n_id,
        "n_ood": profile.n_ood,
        "argmax_band": int(np.argmax(profile.values)) + 1,
        "encoder": args.encoder,
        "config": config,
        "version": __version__,
    }
    _emit_report(meta, str(out.with_suffix(".json")))


# ---------------------------------------------------------------------------
# fit-stats / stats bundle format
# ---------------------------------------------------------------------------


def _meta_to_vector(meta: dict | None, shrinkage: float, c: int, d: int) -> np.ndarray:
    vec = np.full(10, np.nan)
    vec[0] = shrinkage
    vec[1] = c
    vec[2] = d
    vec[3] = 0.0
    if meta is not None:
        vec[3] = 1.0
        vec[4] = VARIANT_CODES[meta["variant"]]
        vec[5] = math.nan if meta.get("alpha_hf") is None else float(meta["alpha_hf"])
        vec[6] = float(meta["kernel_size"])
        vec[7] = float(meta["sigma_blur"])
        vec[8] = float(meta["epsilon"])
        vec[9] = OPERATOR_CODES[meta["operator"]]
    return vec


def _vector_to_meta(vec: np.ndarray) -> dict | None:
    if vec[3] == 0.0:
        return None
    variant = CLI_VARIANTS[int(vec[4])]
    return {
        "variant": variant,
        "alpha_hf": None if math.isnan(vec[5]) else float(vec[5]),
        "kernel_size": int(vec[6]),
        "sigma_blur": float(vec[7]),
        "epsilon": float(vec[8]),
        "operator": {v: k for k, v in OPERATOR_CODES.items()}[float(vec[9])],
    }


def write_stats_bundle(
    path: str | Path, stats: ClassStats, transform_meta: dict | None = None
) -> None:
    """Bundle = three concatenated FTB records: mu, sigma_hat, metadata vector."""
    meta_vec = _meta_to_vector(transform_meta, stats.shrinkage, stats.class_count, stats.dim)
    payload = encode_ftb(stats.mu) + encode_ftb(stats.sigma_hat) + encode_ftb(meta_vec)
    atomic_write_bytes(path, payload)


def read_stats_bundle(path: str | Path) -> tuple[ClassStats, dict | None]:
    buf = Path(path).read_bytes()
    mu, offset = decode_ftb(buf)
    sigma_hat, offset = decode_ftb(buf, offset)
    meta_vec, offset = decode_ftb(buf, offset)
    if offset != len(buf):
        raise FormatError(f"trailing bytes in stats bundle: {len(buf) - offset}")
    if mu.ndim != 2 or sigma_hat.ndim != 2 or meta_vec.ndim != 1 or meta_vec.size != 10:
        raise FormatError("stats bundle records have unexpected shapes")
    if (mu.shape[0], mu.shape[1]) != (int(meta_vec[1]), int(meta_vec[2])):
        raise FormatError("stats bundle metadata disagrees with mu dimensions")
    stats = ClassStats(mu=mu, sigma_hat=sigma_hat, shrinkage=float(meta_vec[0]))
    return stats, _vector_to_meta(meta_vec)


def _load_transform_meta(path: str | None) -> dict | None:
    if path is None:
        return None
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    missing = [k for k in TRANSFORM_META_KEYS if k not in raw]
    if missing:
        raise FormatError(f"transform meta {path} is missing keys {missing}")
    return {k: raw[k] for k in TRANSFORM_META_KEYS}


def cmd_fit_stats(args, config) -> None:
    features = load_feature_matrix(_require(args.features, "--features"))
    labels = load_labels(_require(args.labels, "--labels"))
    feats = FeatureMatrix(features.values, labels.values)
    stats = fit_class_stats(feats, shrinkage=args.shrinkage, keep_per_class=False)
    meta = _load_transform_meta(args.transform_meta)
    write_stats_bundle(_require(args.out, "--out"), stats, meta)


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------


def cmd_score(args, config) -> None:
    method = _require(args.method, "--method")
    out = _require(args.out, "--out")
    if method == "mahalanobis":
        stats, bundle_meta = read_stats_bundle(_require(args.stats, "--stats"))
        check_transform_meta(bundle_meta, _load_transform_meta(args.transform_meta))
        feats = load_feature_matrix(_require(args.features, "--features"))
        scores = mahalanobis_scores(feats, stats)
    elif method in ("msp", "energy"):
        logits = load_feature_matrix(_require(args.logits, "--logits"))
        if method == "msp":
            scores = msp_scores(logits)
        else:
            scores = energy_scores(logits, args.temperature)
    elif method == "knn":
        feats = load_feature_matrix(_require(args.features, "--features"))
        bank = load_feature_matrix(_require(args.bank, "--bank"))
        scores = knn_scores(feats, bank, k=args.k, normalize=not args.no_normalize)
    else:  # pragma: no cover - argparse restricts choices
        raise ValidationError(f"unknown method {method!r}")
    _write_scores(scores, out, args.format)


# ---------------------------------------------------------------------------
# eval / diagnose
# ---------------------------------------------------------------------------


def cmd_eval(args, config) -> None:
    ids = load_scores(_require(args.id_scores, "--id-scores"))
    oods = load_scores(_require(args.ood_scores, "--ood-scores"))
    report = evaluate_scores(ids, oods, bins=args.bins, tpr_target=args.tpr)
    payload = report.to_dict()
    payload.update({"config": config, "version": __version__})
    _emit_report(payload, args.out)


def cmd_diagnose(args, config) -> None:
    features = load_feature_matrix(_require(args.features, "--features"))
    labels = load_labels(_require(args.labels, "--labels"))
    feats = FeatureMatrix(features.values, labels.values)
    stats = fit_class_stats(feats, shrinkage=args.shrinkage, keep_per_class=True)
    payload = {
        "v_intra": v_intra(feats),
        "mean_id_dist": mean_id_distance(feats),
        "trace_terms": [expected_mahalanobis(stats, c) for c in range(stats.class_count)],
        "n": feats.n,
        "d": feats.d,
        "classes": stats.class_count,
        "shrinkage": args.shrinkage,
        "config": config,
        "version": __version__,
    }
    _emit_report(payload, args.out)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def _write_image_dir(images, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(images):
        write_ftb(directory / f"img_{i:05d}.ftb", img.data)


def cmd_synth(args, config) -> None:
    mode = _require(args.mode, "--mode")
    out = Path(_require(args.out, "--out"))
    out.mkdir(parents=True, exist_ok=True)
    # --n defaults depend on the mode: 1000 score draws, 200 images per set
    n = args.n if args.n is not None else (1000 if mode == "gaussians" else 200)
    manifest: dict = {"mode": mode, "config": dict(config, n=n), "version": __version__}

    if mode == "gaussians":
        id_values, ood_values = make_gaussian_sets(args.mu, n, args.seed, args.dim)
        suffix = args.format
        kind = "scores" if args.dim == 1 else "features"
        for name, values in (("id", id_values), ("ood", ood_values)):
            path = out / f"{name}_{kind}.{suffix}"
            if suffix == "ftb":
                write_ftb(path, values)
            else:
                write_csv(path, values)
        manifest["files"] = [f"id_{kind}.{suffix}", f"ood_{kind}.{suffix}"]
    elif mode == "band_textures":
        id_images, ood_images = make_band_textures(
            n=n, size=args.size, bands=args.bands, target_band=args.band_target,
            gain=args.gain, seed=args.seed,
        )
        _write_image_dir(id_images, out / "id")
        _write_image_dir(ood_images, out / "ood")
        manifest["files"] = ["id/", "ood/"]
        manifest["band_target"] = args.band_target
    elif mode == "two_class_images":
        train, labels, test_id, test_ood = make_two_class_images(
            n_train_per_class=args.n_train, n_test_per_set=args.n_test,
            size=args.size, seed=args.seed, texture_amp=args.texture_amp,
        )
        _write_image_dir(train, out / "train")
        _write_image_dir(test_id, out / "test_id")
        _write_image_dir(test_ood, out / "test_ood")
        write_ftb(out / "train_labels.ftb", labels)
        manifest["files"] = ["train/", "test_id/", "test_ood/", "train_labels.ftb"]
    else:  # pragma: no cover - argparse restricts choices
        raise ValidationError(f"unknown mode {mode!r}")

    atomic_write_text(out / "synth_meta.json", dump_report(manifest))
