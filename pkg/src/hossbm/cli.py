"""Command-line interface.

Subcommands: gen-toy, train, verify, filters, extract, eval, sample.
Every command is deterministic given its seed flags; every output file
embeds the resolved configuration (binary formats in their header
sections, CSV and PPM files as comment lines).

Options may also come from a config file of `key=value` lines (see
--config; '#' starts a comment, flags override file values).  Exit
codes: 0 success, 2 usage error, 3 verification failure, 4 I/O or
corruption error.
"""

import argparse
import os
import sys

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VERIFY = 3
EXIT_IO = 4


def _read_config_file(path):
    out = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(
                        f"{path}:{lineno}: expected key=value, got {line!r}")
                key, val = line.split("=", 1)
                out[key.strip().replace("-", "_")] = val.strip()
    except OSError as exc:
        raise ValueError(f"cannot read config file: {exc}") from exc
    return out


def _coerce(text, like):
    if isinstance(like, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    return type(like)(text)


def _merge_config(args, parser, defaults):
    """Resolve option values: defaults, then config file, then flags."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        file_vals = _read_config_file(args.config)
        unknown = set(file_vals) - set(defaults)
        if unknown:
            parser.error(f"unknown config keys: {sorted(unknown)}")
        for key, text in file_vals.items():
            try:
                resolved[key] = _coerce(text, defaults[key])
            except ValueError as exc:
                parser.error(f"config key {key}: {exc}")
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            resolved[key] = val
    return resolved


def _config_lines(resolved):
    return [f"{k}={resolved[k]}" for k in sorted(resolved)]


def _add_config_flag(sub):
    sub.add_argument("--config", metavar="FILE",
                     help="key=value config file; flags override it")


# ---------------------------------------------------------------------------
# subcommand implementations (heavy imports deferred so --threads can cap
# BLAS pools before numpy loads)


def _set_threads(n):
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def cmd_gen_toy(args, parser):
    defaults = dict(n=10000, sigma=0.1, seed=0, include_empty=True,
                    out="toy.hossdata")
    cfg = _merge_config(args, parser, defaults)
    from .toydata import ToyConfig, gen_toy, save_dataset
    tc = ToyConfig(n_samples=cfg["n"], noise_sigma=cfg["sigma"],
                   seed=cfg["seed"], include_empty=cfg["include_empty"])
    ds = gen_toy(tc)
    save_dataset(ds, cfg["out"], header="\n".join(_config_lines(cfg)))
    print(f"wrote {cfg['out']}: n={ds.n} D={ds.dim} "
          f"sigma={cfg['sigma']} seed={cfg['seed']}")
    return EXIT_OK


def _train_defaults():
    return dict(data="toy.hossdata", out="model.hoss1",
                blocks=1, rows=3, cols=5,
                lr=1e-3, lr_decay=1.0, epochs=1, minibatch=32,
                mf_tol=1e-6, mf_max_sweeps=50, mf_damping=0.2,
                mf_init="bias-sigmoid", bias_sign="energy",
                n_chains=64, steps_per_update=1,
                mu_min=1.0, alpha_min=0.1, alpha_max=100.0,
                lambda_min=0.01, learn_lambda=False, clamp_f=False,
                chain_init="data", seed=0, log="train_log.csv",
                resume="")


def _build_train_config(cfg):
    from .gibbs import GibbsConfig
    from .meanfield import MfConfig
    from .train import TrainConfig
    mf = MfConfig(tol=cfg["mf_tol"], max_sweeps=cfg["mf_max_sweeps"],
                  damping=cfg["mf_damping"], init=cfg["mf_init"],
                  bias_sign=cfg["bias_sign"])
    gibbs = GibbsConfig(n_chains=cfg["n_chains"],
                        steps_per_update=cfg["steps_per_update"],
                        seed=cfg["seed"])
    return TrainConfig(
        lr=cfg["lr"], lr_decay=cfg["lr_decay"], epochs=cfg["epochs"],
        minibatch=cfg["minibatch"], mf=mf, gibbs=gibbs,
        mu_min=cfg["mu_min"], alpha_min=cfg["alpha_min"],
        alpha_max=cfg["alpha_max"], lambda_min=cfg["lambda_min"],
        learn_lambda=cfg["learn_lambda"], seed=cfg["seed"],
        clamp_f=cfg["clamp_f"], chain_init=cfg["chain_init"])


def cmd_train(args, parser):
    cfg = _merge_config(args, parser, _train_defaults())
    from .checkpoint import read_checkpoint, write_checkpoint
    from .model import BlockShape
    from .toydata import load_dataset
    from .train import TrainState, init_train_state, run_epochs
    tcfg = _build_train_config(cfg)
    ds = load_dataset(cfg["data"])
    shape = BlockShape(D=ds.dim, K=cfg["blocks"], M=cfg["rows"],
                       N=cfg["cols"])
    if cfg["resume"]:
        ck = read_checkpoint(cfg["resume"])
        if ck.chains is None or ck.epoch is None or ck.center is None:
            raise ValueError(
                f"{cfg['resume']} lacks the chain/trainer sections needed "
                "to resume")
        if ck.params.shape != shape:
            raise ValueError("checkpoint shape does not match requested "
                             f"shape {shape}")
        from .train import TrainLog
        state = TrainState(params=ck.params, chains=ck.chains,
                           center=ck.center, epoch=ck.epoch,
                           update_counter=ck.update_counter, lr=ck.lr,
                           log=TrainLog())
    else:
        state = init_train_state(ds.pixels, shape, tcfg)
    state = run_epochs(state, ds.pixels, tcfg)
    lines = _config_lines(cfg)
    write_checkpoint(cfg["out"], state.params, center=state.center,
                     chains=state.chains, epoch=state.epoch,
                     update_counter=state.update_counter, lr=state.lr,
                     config_text="\n".join(lines))
    state.log.write_csv(cfg["log"], header_lines=lines)
    last = state.log.rows[-1] if state.log.rows else None
    print(f"wrote {cfg['out']} after epoch {state.epoch}"
          + (f"; recon_mse={last[1]:.5f}" if last else ""))
    return EXIT_OK


def cmd_verify(args, parser):
    defaults = dict(seed=0, quick=False, shape="")
    cfg = _merge_config(args, parser, defaults)
    from . import checks
    from .errors import EnumBudgetError
    from .model import BlockShape
    from .oracle import EnumBudget, check_budget
    if cfg["shape"]:
        try:
            dims = [int(t) for t in cfg["shape"].lower().split("x")]
            shape = BlockShape(*dims)
        except (ValueError, TypeError):
            parser.error(f"--shape expects DxKxMxN, got {cfg['shape']!r}")
        try:
            check_budget(shape, EnumBudget())
        except EnumBudgetError as exc:
            print(f"refusing: {exc}")
            return EXIT_USAGE
        print(f"shape {cfg['shape']} fits the enumeration budget")
    results = checks.run_all(seed=cfg["seed"], quick=cfg["quick"])
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def _load_model(path):
    from .checkpoint import read_checkpoint
    return read_checkpoint(path)


def cmd_filters(args, parser):
    defaults = dict(model="model.hoss1", out_prefix="filters",
                    geometry="", pad=1)
    cfg = _merge_config(args, parser, defaults)
    import numpy as np
    from .ppm import filter_grid_image, write_ppm
    ck = _load_model(cfg["model"])
    p = ck.params
    if cfg["geometry"]:
        try:
            channels, width = (int(t) for t in cfg["geometry"].split("x"))
        except ValueError:
            parser.error(f"--geometry expects CxW, got {cfg['geometry']!r}")
    elif p.shape.D == 60:
        channels, width = 3, 20
    else:
        channels, width = 1, p.shape.D
    if channels * width != p.shape.D:
        parser.error(f"geometry {channels}x{width} does not cover "
                     f"D={p.shape.D}")
    paths = []
    for k in range(p.shape.K):
        img = filter_grid_image(p.W[:, :, :, k], channels, width,
                                pad=cfg["pad"])
        path = f"{cfg['out_prefix']}_block{k}.ppm"
        write_ppm(path, img, comment_lines=_config_lines(cfg))
        paths.append(path)
    print(f"wrote {len(paths)} filter image(s): " + ", ".join(paths))
    return EXIT_OK


def _feature_spec(cfg):
    from .features import FeatureSpec
    return FeatureSpec(kind=cfg["kind"], include_f=cfg["include_f"])


def cmd_extract(args, parser):
    defaults = dict(model="model.hoss1", data="toy.hossdata",
                    out="features.csv", kind="factored", include_f=False)
    cfg = _merge_config(args, parser, defaults)
    import numpy as np
    from .features import extract_batch
    from .toydata import load_dataset
    ck = _load_model(cfg["model"])
    ds = load_dataset(cfg["data"])
    V = ds.pixels if ck.center is None else ds.pixels - ck.center
    clamp_f = "clamp_f=True" in ck.config_text
    spec = _feature_spec(cfg)
    feats = extract_batch(V, ck.params, spec, clamp_f=clamp_f)
    names = spec.column_names(ck.params.shape)
    with open(cfg["out"], "w") as fh:
        for line in _config_lines(cfg):
            fh.write(f"# {line}\n")
        fh.write(",".join(names) + "\n")
        for row in feats:
            fh.write(",".join(repr(x) for x in row) + "\n")
    print(f"wrote {cfg['out']}: {feats.shape[0]} rows x "
          f"{feats.shape[1]} features")
    return EXIT_OK


def cmd_eval(args, parser):
    defaults = dict(model="model.hoss1", data="toy.hossdata",
                    out="decodability.csv", kind="factored",
                    include_f=False)
    cfg = _merge_config(args, parser, defaults)
    from .features import decodability_report
    from .toydata import load_dataset
    ck = _load_model(cfg["model"])
    ds = load_dataset(cfg["data"])
    if ds.color_bits.shape[1] == 0 or ds.position_bits.shape[1] == 0:
        raise ValueError(f"{cfg['data']} carries no factor labels")
    clamp_f = "clamp_f=True" in ck.config_text
    report = decodability_report(ds, ck.params, _feature_spec(cfg),
                                 clamp_f=clamp_f, center=ck.center)
    report.write_csv(cfg["out"], header_lines=_config_lines(cfg))
    print(report.text())
    print(f"wrote {cfg['out']}")
    return EXIT_OK


def cmd_sample(args, parser):
    defaults = dict(model="model.hoss1", out="samples.hossdata", n=100,
                    burn_in=500, thin=10, seed=0)
    cfg = _merge_config(args, parser, defaults)
    import numpy as np
    from . import rng as rngmod
    from .gibbs import GibbsConfig, chains_to_arrays, init_chains, \
        step_chain_arrays
    from .toydata import ToyDataset, save_dataset
    ck = _load_model(cfg["model"])
    p = ck.params
    clamp_f = "clamp_f=True" in ck.config_text
    gcfg = GibbsConfig(n_chains=1, steps_per_update=1, seed=cfg["seed"])
    chains = init_chains(p, gcfg)
    V, F, G, H, S = chains_to_arrays(chains)
    gen = [rngmod.stream(cfg["seed"], chains[0].rng_stream_id, counter=0)]
    rows = []
    total = cfg["burn_in"] + cfg["n"] * cfg["thin"]
    for t in range(total):
        V, F, G, H, S = step_chain_arrays(V, F, G, H, S, p, gen,
                                          clamp_f=clamp_f)
        if t >= cfg["burn_in"] and (t - cfg["burn_in"]) % cfg["thin"] == 0:
            rows.append(V[0].copy())
    pixels = np.stack(rows) if rows else np.zeros((0, p.shape.D))
    if ck.center is not None:
        pixels = pixels + ck.center
    ds = ToyDataset(pixels=pixels,
                    color_bits=np.zeros((pixels.shape[0], 0), dtype=np.uint8),
                    position_bits=np.zeros((pixels.shape[0], 0),
                                           dtype=np.uint8),
                    header="\n".join(_config_lines(cfg)))
    save_dataset(ds, cfg["out"])
    print(f"wrote {cfg['out']}: {pixels.shape[0]} samples")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _int_flag(sub, name, help):
    sub.add_argument(name, type=int, default=None, help=help)


def _float_flag(sub, name, help):
    sub.add_argument(name, type=float, default=None, help=help)


def _bool_flag(sub, name, help):
    group = sub.add_mutually_exclusive_group()
    dest = name.lstrip("-").replace("-", "_")
    group.add_argument(name, dest=dest, action="store_true", default=None,
                       help=help)
    group.add_argument(f"--no-{name.lstrip('-')}", dest=dest,
                       action="store_false", default=None,
                       help=argparse.SUPPRESS)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hossbm",
        description="Higher-order spike-and-slab Boltzmann machine tools")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS/OpenMP worker threads")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("gen-toy", help="generate the synthetic dataset")
    _add_config_flag(sub)
    _int_flag(sub, "--n", "number of samples")
    _float_flag(sub, "--sigma", "additive noise standard deviation")
    _int_flag(sub, "--seed", "generation seed")
    _bool_flag(sub, "--include-empty", "allow the all-empty placement")
    sub.add_argument("--out", default=None, help="output HOSSDATA1 path")
    sub.set_defaults(fn=cmd_gen_toy)

    sub = subs.add_parser("train", help="train a model")
    _add_config_flag(sub)
    sub.add_argument("--data", default=None, help="HOSSDATA1 dataset path")
    sub.add_argument("--out", default=None, help="output checkpoint path")
    sub.add_argument("--log", default=None, help="training-log CSV path")
    sub.add_argument("--resume", default=None,
                     help="checkpoint to resume from (epoch boundary)")
    _int_flag(sub, "--blocks", "number of blocks K")
    _int_flag(sub, "--rows", "row spikes per block M")
    _int_flag(sub, "--cols", "column spikes per block N")
    _float_flag(sub, "--lr", "learning rate")
    _float_flag(sub, "--lr-decay", "multiplicative lr decay per epoch")
    _int_flag(sub, "--epochs", "training epochs")
    _int_flag(sub, "--minibatch", "minibatch size")
    _float_flag(sub, "--mf-tol", "mean-field convergence tolerance")
    _int_flag(sub, "--mf-max-sweeps", "mean-field sweep cap")
    _float_flag(sub, "--mf-damping", "mean-field damping in [0,1)")
    sub.add_argument("--mf-init", default=None,
                     choices=["bias-sigmoid", "uniform-half"])
    sub.add_argument("--bias-sign", default=None,
                     choices=["energy", "paper"])
    _int_flag(sub, "--n-chains", "persistent chain count")
    _int_flag(sub, "--steps-per-update", "Gibbs sweeps per update")
    _float_flag(sub, "--mu-min", "slab mean floor")
    _float_flag(sub, "--alpha-min", "slab precision floor")
    _float_flag(sub, "--alpha-max", "slab precision cap")
    _float_flag(sub, "--lambda-min", "visible precision floor")
    _bool_flag(sub, "--learn-lambda", "learn the visible precision")
    _bool_flag(sub, "--clamp-f", "hold block gates at 1 (bilinear mode)")
    sub.add_argument("--chain-init", default=None, choices=["data", "noise"])
    _int_flag(sub, "--seed", "training seed")
    sub.set_defaults(fn=cmd_train)

    sub = subs.add_parser("verify",
                          help="run the oracle verification suites")
    _add_config_flag(sub)
    _int_flag(sub, "--seed", "suite seed")
    _bool_flag(sub, "--quick", "smaller, faster suite")
    sub.add_argument("--shape", default=None,
                     help="probe a DxKxMxN shape against the budget")
    sub.set_defaults(fn=cmd_verify)

    sub = subs.add_parser("filters", help="export filter images (PPM)")
    _add_config_flag(sub)
    sub.add_argument("--model", default=None, help="HOSS1 checkpoint")
    sub.add_argument("--out-prefix", default=None, help="PPM path prefix")
    sub.add_argument("--geometry", default=None,
                     help="CxW pixel geometry (default 3x20 when D=60)")
    _int_flag(sub, "--pad", "pixels between tiles")
    sub.set_defaults(fn=cmd_filters)

    sub = subs.add_parser("extract", help="write features CSV")
    _add_config_flag(sub)
    sub.add_argument("--model", default=None)
    sub.add_argument("--data", default=None)
    sub.add_argument("--out", default=None)
    sub.add_argument("--kind", default=None,
                     choices=["factored", "unfactored"])
    _bool_flag(sub, "--include-f", "append block-gate marginals")
    sub.set_defaults(fn=cmd_extract)

    sub = subs.add_parser("eval", help="decodability report")
    _add_config_flag(sub)
    sub.add_argument("--model", default=None)
    sub.add_argument("--data", default=None)
    sub.add_argument("--out", default=None)
    sub.add_argument("--kind", default=None,
                     choices=["factored", "unfactored"])
    _bool_flag(sub, "--include-f", "append block-gate marginals")
    sub.set_defaults(fn=cmd_eval)

    sub = subs.add_parser("sample",
                          help="draw Gibbs samples from a checkpoint")
    _add_config_flag(sub)
    sub.add_argument("--model", default=None)
    sub.add_argument("--out", default=None)
    _int_flag(sub, "--n", "number of samples")
    _int_flag(sub, "--burn-in", "sweeps before the first sample")
    _int_flag(sub, "--thin", "sweeps between samples")
    _int_flag(sub, "--seed", "chain seed")
    sub.set_defaults(fn=cmd_sample)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _set_threads(args.threads)
    from .errors import CorruptFileError, EnumBudgetError
    try:
        return args.fn(args, parser)
    except CorruptFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, EnumBudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
