"""Command-line frontend tying the toolkit into one pipeline.

Subcommands: synth, train, sample, speedup, rapsd, eval, klcheck,
footprint.  Every tunable is a config key (``key = value`` file, see
:mod:`hdd.config`) mirrored by a flag (``--noise.sigma-max 80``); the
HDD_CONFIG environment variable names a default config file.  All
randomness derives from the single ``--seed`` by stable stream
splitting, so any invocation is reproducible from (config, seed).

Exit codes: 0 success, 1 validation failure (bad config, missing or
malformed input), 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import config as _config
from . import diffusion, klcheck, metrics, rng, schedules, spectral, synth
from .config import ConfigError
from .denoisers import GaussianOracleDenoiser, ToyDenoiser, read_checkpoint, write_checkpoint
from .footprint import EmissionFactors, cpu_ksu_emissions, gpu_hours_emissions, run_emissions
from .grid import Grid, GridFileError, Shape, read_grid, upsample, write_grid
from .metrics import MonthlyClimatology
from .schedules import ChurnParams

__all__ = ["main"]


class CliError(Exception):
    """Validation failure with a single-line diagnostic."""


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file (default: $HDD_CONFIG)")
    parser.add_argument("--seed", type=int, help="root seed for all randomness")
    parser.add_argument("--print-effective-config", action="store_true",
                        help="dump the fully resolved configuration and exit")
    for key in _config.DEFAULTS:
        if key == "seed":
            continue  # dedicated flag above
        flag = "--" + key.replace("_", "-")
        parser.add_argument(flag, dest=f"cfg:{key}", metavar="V", help=argparse.SUPPRESS)


def _resolve_config(args) -> dict:
    overrides = {}
    for key in _config.DEFAULTS:
        raw = getattr(args, f"cfg:{key}", None)
        if raw is not None:
            overrides[key] = _config.parse_value(key, raw)
    if args.seed is not None:
        overrides["seed"] = args.seed
    return _config.load_config(args.config, overrides)


def _noise(cfg, prefix="noise"):
    return schedules.karras_sigmas(
        cfg[f"{prefix}.sigma_min"], cfg[f"{prefix}.sigma_max"],
        cfg[f"{prefix}.rho"], cfg[f"{prefix}.steps"],
    )


def _shapes(cfg, H: int, W: int, T: int, kind: str | None = None):
    kind = kind or cfg["shapes.kind"]
    if kind == "equal":
        return schedules.equally_spaced_shapes(H, W, T)
    if kind == "unit":
        return schedules.unit_shrink_shapes(H, W, T)
    if kind == "tandem":
        return schedules.tandem_shapes(H, W, T, cfg["shapes.k"])
    if kind == "identity":
        return schedules.identity_shapes(H, W, T)
    raise CliError(f"shapes.kind must be equal|unit|tandem|identity, got {kind!r}")


def _churn(cfg) -> ChurnParams:
    return ChurnParams(cfg["sampler.s_churn"], cfg["sampler.s_min"],
                       cfg["sampler.s_max"], cfg["sampler.s_noise"])


def _read_grid(path) -> Grid:
    try:
        return read_grid(path)
    except FileNotFoundError:
        raise CliError(f"no such file: {path}") from None
    except GridFileError as exc:
        raise CliError(f"{path}: {exc}") from None


# -- subcommands -----------------------------------------------------------


def _cmd_synth(args, cfg) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    spec = synth.PowerLawSpec(
        cfg["synth.beta"], cfg["synth.height"], cfg["synth.width"], cfg["synth.channels"],
        seed=rng.derive_seed(cfg["seed"], "synth"), mean=cfg["synth.mean"], std=cfg["synth.std"],
    )
    pairs = synth.make_pairs(spec, cfg["synth.factor"], cfg["synth.pairs"])
    rows = []
    for i, (coarse, fine) in enumerate(pairs):
        pair_seed = rng.derive_seed(spec.seed, "pair", i)
        for role, g in (("coarse", coarse), ("fine", fine)):
            name = f"pair_{i:04d}_{role}.hddg"
            write_grid(g, outdir / name)
            rows.append((name, role, pair_seed))
    with open(outdir / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "role", "seed"])
        writer.writerows(rows)
    print(f"wrote {len(pairs)} pairs to {outdir}")
    return 0


def _load_pairs(data_dir: Path):
    manifest = data_dir / "manifest.csv"
    if not manifest.exists():
        raise CliError(f"no such file: {manifest}")
    by_seed: dict = {}
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            by_seed.setdefault(row["seed"], {})[row["role"]] = row["filename"]
    pairs = []
    for seed_key in sorted(by_seed):
        roles = by_seed[seed_key]
        if "coarse" not in roles or "fine" not in roles:
            raise CliError(f"manifest entry {seed_key} lacks a coarse/fine pair")
        pairs.append((_read_grid(data_dir / roles["coarse"]), _read_grid(data_dir / roles["fine"])))
    if not pairs:
        raise CliError(f"manifest {manifest} lists no pairs")
    return pairs


def _cmd_train(args, cfg) -> int:
    pairs = _load_pairs(Path(args.data))
    coarse0, fine0 = pairs[0]
    noise = _noise(cfg, "train")
    shapes = _shapes(cfg, fine0.height, fine0.width, cfg["train.steps"])
    tc = diffusion.TrainConfig(
        epochs=cfg["train.epochs"], batch_size=cfg["train.batch_size"],
        learning_rate=cfg["train.learning_rate"],
        seed=rng.derive_seed(cfg["seed"], "train"),
        noise=noise, shapes=shapes, sigma_data=cfg["train.sigma_data"],
    )
    model = ToyDenoiser(fine0.channels, coarse0.channels, width=cfg["train.width"],
                        sigma_data=cfg["train.sigma_data"], seed=tc.seed)
    model, curve = diffusion.train(model, pairs, tc)
    write_checkpoint(model, args.out, metadata={
        "seed": tc.seed, "epochs": tc.epochs, "config_hash": tc.digest(),
    })
    if args.loss_csv:
        with open(args.loss_csv, "w", newline="") as fh:
            fh.write("epoch,mean_loss\n")
            for epoch, loss in enumerate(curve, start=1):
                fh.write(f"{epoch},{loss:.10g}\n")
    print(f"trained {tc.epochs} epochs; final mean loss {curve[-1]:.6g}; wrote {args.out}")
    return 0


def _cmd_sample(args, cfg) -> int:
    coarse = _read_grid(args.coarse)
    factor = cfg["synth.factor"] if args.factor is None else args.factor
    full = Shape(coarse.height * factor, coarse.width * factor)
    conditioning = upsample(coarse, full)
    if args.checkpoint:
        model, _ = read_checkpoint(args.checkpoint)
    else:
        raise CliError("sample requires --checkpoint")
    noise = _noise(cfg)
    shapes = _shapes(cfg, full.h, full.w, noise.T)
    members = max(1, args.ensemble)
    out_path = Path(args.out)
    total_pixels = 0
    for member in range(members):
        member_seed = rng.derive_seed(cfg["seed"], "sample", member)
        trace = diffusion.SampleTrace()
        result = diffusion.sample(model, conditioning, noise, shapes, _churn(cfg),
                                  member_seed, mode=cfg["sampler.mode"], trace=trace)
        pixels, alpha = diffusion.count_pixels(trace)
        total_pixels += pixels
        path = out_path if members == 1 else out_path.with_name(
            f"{out_path.stem}_{member:03d}{out_path.suffix}")
        write_grid(result, path)
    print(f"pixels={total_pixels} alpha={alpha:.6f} steps={noise.T} members={members}")
    return 0


def _cmd_speedup(args, cfg) -> int:
    sched = _shapes(cfg, args.H, args.W, args.T, kind=args.kind)
    alpha = schedules.normalized_mean_area(sched)
    s = schedules.speedup(sched)
    print(f"alpha={alpha:.6f} speedup={s:.6f} pixels={schedules.pixel_total(sched)}")
    if args.kind == "unit" and args.T <= min(args.H, args.W):
        closed = schedules.unit_shrink_speedup_closed_form(args.H, args.W, args.T)
        print(f"closed_form_speedup={closed:.6f}")
    if args.audit:
        noise = schedules.karras_sigmas(cfg["noise.sigma_min"], cfg["noise.sigma_max"],
                                        cfg["noise.rho"], args.T)
        Path(args.audit).write_text(schedules.schedule_lines(sched, noise))
    return 0


def _cmd_rapsd(args, cfg) -> int:
    g = _read_grid(args.input)
    spec = spectral.rapsd(g, channel=cfg["rapsd.channel"],
                          bins_per_decade=cfg["rapsd.bins_per_decade"])
    text = spectral.spectrum_csv(spec)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_eval(args, cfg) -> int:
    pred = _read_grid(args.pred)
    obs = _read_grid(args.obs)
    if pred.data.shape != obs.data.shape:
        raise CliError(f"pred {pred.data.shape} and obs {obs.data.shape} differ in shape")
    data_range = cfg["eval.data_range"]
    if data_range == 0.0:
        span = float(obs.data.max() - obs.data.min())
        data_range = span if span > 0 else 1.0
    print(f"rmse,{metrics.rmse(pred, obs):.10g}")
    print(f"psnr,{metrics.psnr(pred, obs, data_range):.10g}")
    is_climatology = pred.channel_names == tuple(f"m{m:02d}" for m in range(1, 13))
    if not is_climatology:
        return 0
    card = metrics.scorecard(
        MonthlyClimatology.from_grid(pred), MonthlyClimatology.from_grid(obs)
    )
    print(f"mape,{card.mape:.10g}")
    print(f"scor,{card.scor:.10g}")
    print(f"nrmse,{card.nrmse:.10g}")
    print(f"mad,{card.mad:.10g}")
    print(card.summary())
    if not card.overall and not args.no_exit_fail:
        return 1
    return 0


def _cmd_klcheck(args, cfg) -> int:
    instances = cfg["klcheck.instances"]
    max_support = cfg["klcheck.max_support"]
    g = rng.generator(cfg["seed"], "klcheck")
    worst = 0.0
    violations = 0
    for _ in range(instances):
        fine = int(g.integers(2, max_support + 1))
        coarse = int(g.integers(1, fine + 1))
        assign = np.concatenate([np.arange(coarse), g.integers(0, coarse, size=fine - coarse)])
        g.shuffle(assign)
        m = klcheck.CoarseningMap(tuple(int(a) for a in assign), coarse)
        q = klcheck.DiscreteDist.normalized(g.uniform(0.0, 1.0, size=fine))
        p = klcheck.DiscreteDist.normalized(g.uniform(0.01, 1.0, size=fine))
        resid = abs(klcheck.chain_rule_residual(q, p, m))
        worst = max(worst, resid)
        if resid >= 1e-10:
            violations += 1
    print(f"instances={instances} max|residual|={worst:.3e} violations={violations}")
    return 0 if violations == 0 else 1


def _cmd_footprint(args, cfg) -> int:
    factors = EmissionFactors(pue=cfg["footprint.pue"], gamma=cfg["footprint.gamma"])
    log_path = Path(args.log)
    if not log_path.exists():
        raise CliError(f"no such file: {log_path}")
    entries = []
    with open(log_path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() in ("device", ""):
                continue
            if len(row) != 2:
                raise CliError(f"{log_path}: expected 'device,hours' rows, got {row}")
            entries.append((row[0].strip(), float(row[1])))
    print("device,hours,kwh,kg_co2")
    for device, hours in entries:
        kwh, kg = gpu_hours_emissions(device, hours, factors)
        print(f"{device},{hours:g},{kwh:.3f},{kg:.3f}")
    total = run_emissions(entries, factors, cfg["footprint.overhead"])
    print(f"total_kg_co2,{total:.3f} (overhead {cfg['footprint.overhead']:g})")
    if args.ksu:
        kwh, kg = cpu_ksu_emissions(args.ksu, factors)
        print(f"ksu,{args.ksu:g},{kwh:.3f},{kg:.3f}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdd", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic coarse/fine training pairs")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("train", help="train the toy denoiser on synthetic pairs")
    p.add_argument("--data", required=True, help="directory with manifest.csv")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--loss-csv", help="write per-epoch mean loss CSV here")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("sample", help="downscale a coarse field with a trained model")
    p.add_argument("--checkpoint", help="toy denoiser checkpoint")
    p.add_argument("--coarse", required=True, help="coarse conditioning HDDG file")
    p.add_argument("--out", required=True, help="output HDDG path")
    p.add_argument("--factor", type=int, help="upscaling factor (default synth.factor)")
    p.add_argument("--ensemble", type=int, default=1, help="number of ensemble members")
    p.set_defaults(handler=_cmd_sample)

    p = sub.add_parser("speedup", help="pixel-budget calculus for a shape schedule")
    p.add_argument("--kind", required=True, choices=["equal", "unit", "tandem", "identity"])
    p.add_argument("--H", type=int, required=True)
    p.add_argument("--W", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--audit", help="write 't h w sigma' schedule lines here")
    p.set_defaults(handler=_cmd_speedup)

    p = sub.add_parser("rapsd", help="radially averaged power spectrum as CSV")
    p.add_argument("--input", required=True, help="HDDG field")
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.set_defaults(handler=_cmd_rapsd)

    p = sub.add_parser("eval", help="accuracy metrics and climate scorecard")
    p.add_argument("--pred", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--no-exit-fail", action="store_true",
                   help="exit 0 even when the scorecard fails")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("klcheck", help="verify the KL chain rule on random instances")
    p.set_defaults(handler=_cmd_klcheck)

    p = sub.add_parser("footprint", help="energy/CO2 accounting for a run log")
    p.add_argument("--log", required=True, help="CSV run log with device,hours rows")
    p.add_argument("--ksu", type=float, help="additionally price this many CPU kSU")
    p.set_defaults(handler=_cmd_footprint)

    for sp in sub.choices.values():
        _add_config_flags(sp)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.print_effective_config:
        sys.stdout.write(_config.effective_config_text(cfg))
        return 0
    try:
        return args.handler(args, cfg)
    except (CliError, ConfigError, GridFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 -- CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
