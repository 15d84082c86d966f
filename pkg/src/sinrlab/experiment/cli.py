"""Command-line entry point: ``sinrlab <command> [options]``.

Exit codes: 0 success, 1 other error, 2 configuration error, 3 numerical
failure, 4 selftest property failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .. import scheduling
from ..beamforming import Mode
from ..dmhsa import DmhsaModel, LabelStandardizer, calibrate_bias, load_model, save_model
from ..errors import ConfigError, ModelFileError, NonFiniteLoss, NumericalFailure
from . import reports
from .config import ExperimentConfig, load_config
from .data import calibrate_standardizer
from .evaluate import standardized_features, collect_pqs, complexity_report, eval_pqs, eval_random
from .train import train, write_outputs

log = logging.getLogger("sinrlab")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SELFTEST = 0, 1, 2, 3, 4


def _add_globals(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="TOML file with dotted-key overrides")
    p.add_argument("--seed", type=int)
    p.add_argument("--profile", choices=["paper", "desk"])
    p.add_argument("--variant", choices=["csi", "geo"])
    p.add_argument("--out", type=Path, default=Path("runs"))
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sinrlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-calibration", help="estimate label and channel-power statistics")
    _add_globals(p)
    p = sub.add_parser("train", help="train one variant and write model, curve and run metadata")
    _add_globals(p)
    p.add_argument("--calibration", type=Path, help="calibration JSON from gen-calibration")
    p = sub.add_parser("eval-random", help="test under the random scheduler")
    _add_globals(p)
    p.add_argument("--model", type=Path)
    p.add_argument("--estimates", type=int, help="override eval.test_estimates")
    p = sub.add_parser("eval-pqs", help="run the PQS traffic grid")
    _add_globals(p)
    p.add_argument("--model", type=Path)
    p = sub.add_parser("calibrate-bias", help="estimate the PQS output bias for one traffic cell")
    _add_globals(p)
    p.add_argument("--model", type=Path)
    p.add_argument("--c-min", type=float, required=True)
    p.add_argument("--c-max", type=float, required=True)
    p = sub.add_parser("complexity", help="operation counts over an N_C sweep")
    _add_globals(p)
    p.add_argument("--n-sched", type=int, default=24)
    p.add_argument("--n-r", type=int, default=512)
    p.add_argument("--n-c-max", type=int, default=32)
    p = sub.add_parser("selftest", help="oracle, gradient and masking property checks")
    _add_globals(p)
    return parser


def _config(args) -> ExperimentConfig:
    return load_config(args.config, args.profile, seed=args.seed, variant=args.variant)


def _model_path(args, cfg) -> Path:
    return args.model or args.out / f"model_{cfg.variant}.dmhs"


def cmd_gen_calibration(args, cfg):
    s = calibrate_standardizer(cfg, cfg.variant, args.workers)
    path = reports.write_json(args.out / f"calibration_{cfg.variant}.json", vars(s))
    print(f"mu_sinr={s.mu_sinr:.6g} sigma_sinr={s.sigma_sinr:.6g} mu_h={s.mu_h:.6g} sigma_h={s.sigma_h:.6g}")
    print(f"wrote {path}")


def _read_calibration(path: Path) -> LabelStandardizer:
    try:
        doc = json.loads(path.read_text())
        return LabelStandardizer(doc["mu_sinr"], doc["sigma_sinr"], doc["mu_h"], doc["sigma_h"])
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"bad calibration file {path}: {exc}") from exc


def cmd_train(args, cfg):
    s = _read_calibration(args.calibration) if args.calibration else None
    res = train(cfg, cfg.variant, s, args.workers, diagnostics=args.out / f"diagnostics_{cfg.variant}.json",
                log=log.info)
    paths = write_outputs(cfg, res, args.out)
    print(f"{cfg.variant}: {len(res.curve)} epochs, first-epoch loss {res.first_epoch_loss:.4f}, "
          f"final cycle loss {res.final_cycle_loss:.4f}, {res.model.n_parameters()} parameters, "
          f"{res.wall_time:.1f} s")
    for p in paths.values():
        print(f"wrote {p}")


def cmd_eval_random(args, cfg):
    model = load_model(_model_path(args, cfg))
    rep = eval_random(model, cfg, args.workers, args.out, args.estimates)
    m = rep.meta
    print(f"{m['variant']}: {m['n_estimates']} estimates, RMSE {m['rmse_db']:.3f} dB "
          f"(constant-mean {m['constant_mean_rmse_db']:.3f} dB), Spearman vs N_sched "
          f"{m['spearman_rmse_vs_n_sched']:.3f}")


def cmd_eval_pqs(args, cfg):
    model = load_model(_model_path(args, cfg))
    res = eval_pqs(model, cfg, args.out)
    print(f"{'cell':>10} {'RMSE':>7} {'median|E|':>10} {'bias':>7} {'group':>6}")
    for key, c in res["cells"].items():
        print(f"{key:>10} {c['rmse_db']:7.3f} {c['median_abs_error_db']:10.3f} {c['bias_db']:7.3f} "
              f"{c['mean_group_size']:6.2f}")


def cmd_calibrate_bias(args, cfg):
    model = load_model(_model_path(args, cfg))
    model = DmhsaModel(model.cfg, model.params, replace(model.standardizer, bias_db=0.0))
    rec = collect_pqs(cfg, Mode(model.cfg.variant), scheduling.TrafficModel(args.c_min, args.c_max),
                      "pqs-calib", cfg.pqs.calibration_periods, audit=False)
    bias = calibrate_bias(model, standardized_features(rec, model), rec.valid, rec.labels_db)
    path = save_model(model, args.out / f"model_{model.cfg.variant}_{args.c_min:g}-{args.c_max:g}.dmhs")
    print(f"bias {bias:.6f} dB over {int(rec.valid.sum())} estimates; wrote {path}")


def cmd_complexity(args, cfg):
    rows = complexity_report(args.n_sched, args.n_r, range(1, args.n_c_max + 1), args.out)
    for n_c, mmse, csi, geo in rows:
        if n_c == 8:
            print(f"N_C=8: MMSE {mmse}, CSI-DMHSA {csi}, GEO-DMHSA {geo}")
    print(f"wrote {args.out / 'complexity.csv'}")


def cmd_selftest(args, cfg):
    from .. import selftest

    ok = True
    for name, passed, detail in selftest.run(cfg.seed):
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        ok &= passed
    return EXIT_OK if ok else EXIT_SELFTEST


COMMANDS = {
    "gen-calibration": cmd_gen_calibration, "train": cmd_train, "eval-random": cmd_eval_random,
    "eval-pqs": cmd_eval_pqs, "calibrate-bias": cmd_calibrate_bias, "complexity": cmd_complexity,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _config(args)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg) or EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, NonFiniteLoss) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ModelFileError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
