"""Command-line entry point.

Every subcommand reads an optional flat ``key = value`` config file
(``--config``), then ``--set key=value`` overrides, validates all keys,
logs the resolved configuration and writes its tables under ``--out``.
Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import re
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import datagen, econo, namematch, search, shocks
from .errors import ConfigError, InvalidParameter, SpecError
from .model import Destination, Firm, ModelParams, cost_elasticity, solve_line, validate_params

log = logging.getLogger("supplierlab")

HELP_WIDTH = 88

# --------------------------------------------------------------------------
# configuration schema


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(s) for s in str(text).split(",") if s.strip())


MODEL_KEYS = {
    "model.rho": (float, "2.0"),
    "model.alpha": (float, "0.5"),
    "model.wage": (float, "1.0"),
    "model.f": (float, "1.0"),
    "model.discount": (float, "0.9"),
}
DEST_FIELDS = {"zeta": float, "income": float, "price_index": float, "fixed_cost": float, "income_group": str}
DEFAULT_DESTS = {
    "dest.D.zeta": "0.2", "dest.D.income_group": "domestic",
    "dest.P.zeta": "0.1", "dest.P.fixed_cost": "0.065", "dest.P.income_group": "emerging",
    "dest.R.zeta": "0.6", "dest.R.income": "30", "dest.R.fixed_cost": "4.1", "dest.R.income_group": "advanced",
}
MARKET_KEYS = {
    "market.c_low": (float, "0.5"),
    "market.c_high": (float, "2.0"),
    "market.search_cost": (float, "0.05"),
    "market.family": (str, "uniform"),
    "market.log_mean": (float, "0.0"),
    "market.log_sd": (float, "0.5"),
}
_DEST_KEY = re.compile(r"^dest\.([A-Za-z0-9_]+)\.([a-z_]+)$")


def _world_keys() -> dict:
    out = {}
    for f in dataclasses.fields(datagen.WorldConfig):
        if f.name == "seed":
            continue
        out[f"world.{f.name}"] = ({int: int, float: float, str: str}.get(type(f.default), str), str(f.default))
    return out


SCHEMAS = {
    "model-eval": {
        **MODEL_KEYS,
        "eval.z": (_floats, "0.5,1,2"),
        "eval.xi": (_floats, "0.5,1,2"),
        "eval.c": (_floats, "1.0"),
    },
    "heatmap": {
        **MODEL_KEYS,
        **MARKET_KEYS,
        "heatmap.rich": (str, "R"),
        "heatmap.poor": (str, "P"),
        "heatmap.n": (int, "100"),
        "heatmap.z_min": (float, "0.3"),
        "heatmap.z_max": (float, "3.0"),
        "heatmap.xi_min": (float, "0.3"),
        "heatmap.xi_max": (float, "3.0"),
        "heatmap.c": (float, "1.0"),
        "heatmap.c_factor": (float, "1.5"),
        "heatmap.thresholds": (_bool, "false"),
    },
    "search-sim": {
        **MODEL_KEYS,
        **MARKET_KEYS,
        "sim.n_firms": (int, "1000"),
        "sim.horizon": (int, "200"),
        "sim.z_min": (float, "0.3"),
        "sim.z_max": (float, "3.0"),
        "sim.xi_min": (float, "0.3"),
        "sim.xi_max": (float, "3.0"),
    },
    "gen": _world_keys(),
    "shocks": {
        "shocks.base": (str, "lagged"),
        "shocks.variants": (str, ",".join(v.value for v in shocks.ALL_VARIANTS)),
        "shocks.drop_zeros": (_bool, "true"),
    },
    "regress": {
        "regress.shocks": (str, ""),
        "regress.covariates": (str, ""),
        "shocks.base": (str, "lagged"),
        **{f"spec.{f.name}": (str, "") for f in dataclasses.fields(econo.RegressionSpec)},
    },
    "clean-names": {
        "names.countries": (str, ""),
        "names.suffixes": (str, ""),
        "names.aliases": (str, ""),
        "names.importers": (str, ""),
        "names.both": (float, "0.65"),
        "names.strong": (float, "0.8"),
        "names.weak": (float, "0.35"),
    },
}
USES_DESTS = ("model-eval", "heatmap", "search-sim")


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{n}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def resolve(command: str, file_values: dict, overrides: list[str]) -> dict:
    """Merge defaults, file values and overrides into typed values; reject unknown keys."""
    schema = SCHEMAS[command]
    raw = {k: d for k, (_, d) in schema.items()}
    if command in USES_DESTS:
        raw.update(DEFAULT_DESTS)
    given = dict(file_values)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        given[key.strip()] = value.strip()
    for key, value in given.items():
        m = _DEST_KEY.match(key)
        if key in schema or (command in USES_DESTS and m and m.group(2) in DEST_FIELDS):
            raw[key] = value
        else:
            raise ConfigError(f"unknown configuration key {key!r} for {command}")
    typed = {}
    for key, value in raw.items():
        m = _DEST_KEY.match(key)
        conv = DEST_FIELDS[m.group(2)] if (m and key not in schema) else schema[key][0]
        try:
            typed[key] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    return typed


def model_params(cfg: dict) -> ModelParams:
    dests: dict[str, dict] = {}
    for key, value in cfg.items():
        m = _DEST_KEY.match(key)
        if m:
            dests.setdefault(m.group(1), {})[m.group(2)] = value
    built = []
    for dest_id in sorted(dests):
        fields = dests[dest_id]
        if "zeta" not in fields:
            raise ConfigError(f"destination {dest_id} lacks zeta")
        built.append(Destination(dest_id, **fields))
    params = ModelParams(cfg["model.rho"], cfg["model.alpha"], cfg["model.wage"], cfg["model.f"],
                         cfg["model.discount"], tuple(built))
    return validate_params(params)


def market(cfg: dict) -> search.SupplierMarket:
    return search.SupplierMarket(cfg["market.c_low"], cfg["market.c_high"], cfg["market.search_cost"],
                                 cfg["market.family"], cfg["market.log_mean"], cfg["market.log_sd"])


# --------------------------------------------------------------------------
# subcommands


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return path


def cmd_model_eval(cfg, args, out: Path) -> list[Path]:
    params = model_params(cfg)
    rows = []
    for dest in params.destinations:
        elast = cost_elasticity(params, dest)
        for z in cfg["eval.z"]:
            for xi in cfg["eval.xi"]:
                for c in cfg["eval.c"]:
                    s = solve_line(params, dest, Firm("eval", z, xi, c))
                    rows.append((dest.id, z, xi, c, s.quality, s.quantity, s.price, s.profit, s.active, elast))
    cols = ["dest", "z", "xi", "c", "quality", "quantity", "price", "profit", "active", "cost_elasticity"]
    return [_write_csv(pd.DataFrame(rows, columns=cols), out / "model_eval.csv")]


def cmd_heatmap(cfg, args, out: Path) -> list[Path]:
    params = model_params(cfg)
    n = cfg["heatmap.n"]
    zg = search.log_grid(cfg["heatmap.z_min"], cfg["heatmap.z_max"], n)
    xg = search.log_grid(cfg["heatmap.xi_min"], cfg["heatmap.xi_max"], n)
    frames = []
    for c in (cfg["heatmap.c"], cfg["heatmap.c"] * cfg["heatmap.c_factor"]):
        cells = search.scope_heatmap(params, zg, xg, c, cfg["heatmap.rich"], cfg["heatmap.poor"])
        frames.append(search.heatmap_frame(zg, xg, cells).assign(c=c))
    written = [_write_csv(pd.concat(frames, ignore_index=True)[["c", "z", "xi", "category"]], out / "heatmap.csv")]
    if cfg["heatmap.thresholds"]:
        thr = search.threshold_heatmap(params, market(cfg), zg, xg)
        written.append(_write_csv(search.heatmap_frame(zg, xg, thr, "threshold"), out / "threshold_heatmap.csv"))
    return written


def cmd_search_sim(cfg, args, out: Path) -> list[Path]:
    params = model_params(cfg)
    mk = market(cfg)
    sim = search.SimConfig(cfg["sim.n_firms"], cfg["sim.horizon"], args.seed,
                           z_range=(cfg["sim.z_min"], cfg["sim.z_max"]),
                           xi_range=(cfg["sim.xi_min"], cfg["sim.xi_max"]))
    firms = search.draw_firms(sim)
    panel = search.simulate_panel(params, mk, sim, firms, threads=args.threads)
    z = np.array([f.z for f in firms])
    xi = np.array([f.xi for f in firms])
    thr, resid = search.search_thresholds(params, mk, z, xi)
    table = pd.DataFrame({"firm_id": [f.id for f in firms], "z": z, "xi": xi, "threshold": thr, "residual": resid})
    return [_write_csv(panel, out / "panel.csv"), _write_csv(table, out / "thresholds.csv")]


def cmd_gen(cfg, args, out: Path) -> list[Path]:
    fields = {k.split(".", 1)[1]: v for k, v in cfg.items()}
    wc = datagen.WorldConfig(**fields, seed=args.seed)
    corpus = datagen.generate_corpus(wc)
    written = datagen.write_corpus(corpus, out)
    truth = pd.DataFrame({
        "parameter": ["import_elasticity", "export_elasticity_advanced", "export_elasticity_emerging"],
        "value": [wc.import_elasticity, wc.true_export_elasticity("advanced"), wc.true_export_elasticity("emerging")],
    })
    written.append(_write_csv(truth, out / "truth.csv"))
    written.append(_write_csv(corpus.true_shocks, out / "true_shocks.csv"))
    return written


def _variants(text: str):
    try:
        return [shocks.ShockVariant(v.strip()) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_shocks(cfg, args, out: Path) -> list[Path]:
    corpus = datagen.read_corpus(_need_input(args))
    table = shocks.build_shocks(corpus.imports, _variants(cfg["shocks.variants"]), cfg["shocks.base"])
    summary, corr = shocks.shock_stats(table, cfg["shocks.drop_zeros"])
    return [
        _write_csv(table, out / "shocks.csv"),
        _write_csv(summary.reset_index(), out / "shock_summary.csv"),
        _write_csv(corr.reset_index(), out / "shock_corr.csv"),
    ]


def cmd_regress(cfg, args, out: Path) -> list[Path]:
    values = read_config_file(args.spec) if args.spec else {}
    values.update({k[5:]: v for k, v in cfg.items() if k.startswith("spec.") and v != ""})
    spec = econo.RegressionSpec.from_mapping(values)
    log.info("regression spec: %s", spec.as_dict())
    corpus = datagen.read_corpus(_need_input(args))
    if cfg["regress.shocks"]:
        table = pd.read_csv(cfg["regress.shocks"], dtype={"firm_id": str, "variant": str},
                            float_precision="round_trip")
    else:
        table = shocks.build_shocks(corpus.imports, [spec.variant], cfg["shocks.base"])
    cov = None
    if cfg["regress.covariates"]:
        cov = pd.read_csv(cfg["regress.covariates"], dtype={"country": str}, float_precision="round_trip")
    result = econo.run_spec(corpus, table, spec, cov)
    return result.write(out)


def cmd_clean_names(cfg, args, out: Path) -> list[Path]:
    records = pd.read_csv(_need_input(args), dtype={"firm_id": str, "supplier_raw": str},
                          keep_default_na=False, float_precision="round_trip")
    missing = {"firm_id", "supplier_raw", "value_usd"} - set(records.columns)
    if missing:
        raise ValueError(f"input lacks columns {sorted(missing)}")
    countries = namematch.read_list(cfg["names.countries"]) if cfg["names.countries"] else None
    suffixes = namematch.read_list(cfg["names.suffixes"]) if cfg["names.suffixes"] else None
    aliases = namematch.read_aliases(cfg["names.aliases"]) if cfg["names.aliases"] else None
    importers = None
    if cfg["names.importers"]:
        imp = pd.read_csv(cfg["names.importers"], dtype=str, keep_default_na=False)
        importers = dict(zip(imp["firm_id"], imp["name"]))
    th = namematch.Thresholds(cfg["names.both"], cfg["names.strong"], cfg["names.weak"])
    result = namematch.dedup_suppliers(records, importers, aliases, countries, suffixes, th)
    return [_write_csv(result, out / "clean_names.csv")]


def _need_input(args) -> Path:
    if not args.input:
        raise ConfigError("--input is required for this subcommand")
    return Path(args.input)


COMMANDS = {
    "model-eval": (cmd_model_eval, "solve every product line on a (z, xi, c) grid"),
    "heatmap": (cmd_heatmap, "export-scope categories on a (z, xi) grid"),
    "search-sim": (cmd_search_sim, "simulate supplier search for a firm population"),
    "gen": (cmd_gen, "generate a synthetic customs corpus"),
    "shocks": (cmd_shocks, "build firm-year shift-share shocks and their statistics"),
    "regress": (cmd_regress, "run a panel regression on a corpus"),
    "clean-names": (cmd_clean_names, "normalise and cluster supplier names"),
}


# --------------------------------------------------------------------------
# parser


def _formatter(prog):
    return argparse.RawDescriptionHelpFormatter(prog, width=HELP_WIDTH)


def _key_listing(command: str) -> str:
    lines = ["configuration keys (default):"]
    for key, (_, default) in SCHEMAS[command].items():
        lines.append(f"  {key} = {default}")
    if command in USES_DESTS:
        lines.append("  dest.<ID>.{zeta,income,price_index,fixed_cost,income_group}")
        for key, value in DEFAULT_DESTS.items():
            lines.append(f"  {key} = {value}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="supplierlab", formatter_class=_formatter,
                                     description="Export quality, supplier search and import-shock pipeline.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    parser.subcommands = {}
    for name, (_, summary) in COMMANDS.items():
        p = sub.add_parser(name, help=summary, description=summary, formatter_class=_formatter,
                           epilog=_key_listing(name))
        p.add_argument("--config", metavar="FILE", help="key = value configuration file")
        p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides",
                       help="override one configuration key (repeatable)")
        p.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
        p.add_argument("--out", metavar="DIR", default="out", help="output directory (default out)")
        p.add_argument("--threads", type=int, default=1, metavar="N", help="worker threads, 0 = auto (default 1)")
        if name in ("shocks", "regress", "clean-names"):
            what = "names CSV" if name == "clean-names" else "corpus directory"
            p.add_argument("--input", metavar="PATH", help=f"input {what}")
        if name == "regress":
            p.add_argument("--spec", metavar="FILE", help="regression spec file (key = value)")
        parser.subcommands[name] = p
    return parser


def _usage_error(parser, command: str, exc: Exception) -> int:
    sys.stderr.write(parser.subcommands[command].format_usage())
    print(f"supplierlab {command}: error: {exc}", file=sys.stderr)
    return 2


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.threads < 0:
        return _usage_error(parser, args.command, ValueError("--threads must be >= 0"))
    args.threads = args.threads or (os.cpu_count() or 1)

    handler, _ = COMMANDS[args.command]
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve(args.command, file_values, args.overrides)
        _prevalidate(args, cfg)
    except (ConfigError, SpecError, InvalidParameter, OSError) as exc:
        return _usage_error(parser, args.command, exc)

    log.info("command = %s", args.command)
    log.info("seed = %d", args.seed)
    log.info("threads = %d", args.threads)
    log.info("input = %s", getattr(args, "input", None))
    log.info("out = %s", args.out)
    for key in sorted(cfg):
        log.info("%s = %s", key, cfg[key])

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        resolved = [f"command = {args.command}", f"seed = {args.seed}"]
        resolved += [f"{k} = {_fmt(v)}" for k, v in sorted(cfg.items())]
        (out / "resolved_config.txt").write_text("\n".join(resolved) + "\n", encoding="utf-8")
        written = handler(cfg, args, out)
    except (ConfigError, InvalidParameter) as exc:
        return _usage_error(parser, args.command, exc)
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"supplierlab {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for path in written:
        log.info("wrote %s", path)
    return 0


def _prevalidate(args, cfg: dict) -> None:
    """Catch configuration errors before anything is written."""
    if args.command in USES_DESTS:
        params = model_params(cfg)
        if args.command == "heatmap":
            ids = {d.id for d in params.destinations}
            for key in ("heatmap.rich", "heatmap.poor"):
                if cfg[key] not in ids:
                    raise ConfigError(f"{key}: no destination {cfg[key]!r} configured")
    if args.command in ("heatmap", "search-sim"):
        market(cfg)
    if args.command == "gen":
        datagen.WorldConfig(**{k.split(".", 1)[1]: v for k, v in cfg.items()}, seed=args.seed)
    if args.command == "shocks":
        _variants(cfg["shocks.variants"])
        if cfg["shocks.base"] not in ("lagged", "fixed"):
            raise ConfigError("shocks.base must be 'lagged' or 'fixed'")
    if args.command == "regress":
        values = read_config_file(args.spec) if args.spec else {}
        values.update({k[5:]: v for k, v in cfg.items() if k.startswith("spec.") and v != ""})
        econo.RegressionSpec.from_mapping(values)
    if args.command in ("shocks", "regress", "clean-names"):
        _need_input(args)


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


if __name__ == "__main__":
    raise SystemExit(main())
