"""Command-line entry point.

Every run takes a JSON config document plus optional ``--set key=value``
overrides (dotted paths); outputs are CSV or JSON files whose headers record
the schema version, the seed, and the exact config, so rerunning a recorded
config reproduces the data rows byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, rngstream
from .alphabet import make_algebra
from .bec_lab import bec_scl_unbounded, branching_stats_batch, i_loss, verify_identity
from .channel import ebn0_to_sigma2, qbiawgn_law
from .density_evolution import (
    DiscreteDist,
    cc_plausibility,
    de_profile,
    epmu_tables,
    union_bound,
)
from .design import GaConfig, design_de, design_ga, design_msd
from .montecarlo import (
    EVENTS,
    SimPoint,
    Termination,
    run_point,
)
from .polarcode import PolarCode, load_code, rm_info_set, save_code
from .quantization import MidTreadQuantizer, threshold_cap, threshold_de, threshold_fbl

SCHEMA_VERSION = 1


def _num(x) -> str:
    """Full-precision, numpy-free numeric literal for CSV cells."""
    return repr(float(x))


def _apply_overrides(cfg: dict, pairs: list) -> dict:
    for pair in pairs or []:
        key, _, raw = pair.partition("=")
        if not _:
            raise SystemExit(f"override {pair!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return cfg


def _load_config(args) -> dict:
    cfg = json.loads(Path(args.config).read_text()) if args.config else {}
    return _apply_overrides(cfg, args.set)


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise SystemExit(f"config is missing required key {key!r}")
    return cfg[key]


def _resolve_code(cfg: dict) -> PolarCode:
    ref = _require(cfg, "code")
    if isinstance(ref, str):
        return load_code(ref)
    if "info_bits" in ref:
        return PolarCode(ref["m"], tuple(ref["info_bits"]), design=ref.get("design", {}))
    if ref.get("method") == "rm":
        return PolarCode(
            ref["m"], rm_info_set(ref["m"], ref["r"]), design={"method": "rm", "r": ref["r"]}
        )
    raise SystemExit(f"cannot resolve code reference {ref!r}")


def _channel_dist(cfg: dict, algebra, code_rate: float):
    ch = _require(cfg, "channel")
    kind = ch.get("kind")
    if kind == "bec":
        eps = float(ch["eps"])
        return DiscreteDist.from_scalars({1.0: 1.0 - eps, 0.0: eps}), None
    if kind == "q-biawgn":
        sigma2 = ebn0_to_sigma2(float(_require(cfg, "ebn0_db")), code_rate)
        levels = int(ch["levels"])
        rule = ch.get("delta_rule", "cap")
        delta = float(rule) if isinstance(rule, (int, float)) else threshold_cap(levels, sigma2)
        return algebra.channel_dist(qbiawgn_law(levels, delta, sigma2)), delta
    raise SystemExit(f"analysis needs a discrete channel, got {kind!r}")


def _write_csv(path: Path, cfg: dict, header: list, rows: list):
    lines = [
        f"# schema_version={SCHEMA_VERSION}",
        f"# seed={cfg.get('seed', 0)}",
        f"# config={json.dumps(cfg, sort_keys=True)}",
        ",".join(header),
    ]
    for row in rows:
        lines.append(",".join(str(x) for x in row))
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path}")


def _outdir(args) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_design(args) -> int:
    cfg = _load_config(args)
    method = _require(cfg, "method")
    out = _outdir(args)
    name = cfg.get("name", f"{method}-code")
    seed = int(cfg.get("seed", 0))

    if method == "rm":
        code = PolarCode(
            cfg["m"], rm_info_set(cfg["m"], cfg["r"]), design={"method": "rm", "r": cfg["r"]}
        )
        report = {"method": "rm", "k": code.k}
    elif method == "de":
        algebra = make_algebra(cfg.get("algebra", "l3"), **cfg.get("algebra_params", {}))
        m, k = int(cfg["m"]), int(cfg["k"])
        rate = k / (1 << m)
        dist, delta = _channel_dist(cfg, algebra, rate)
        info = design_de(dist, algebra, m, k)
        code = PolarCode(
            m,
            info,
            design={
                "method": "de",
                "ebn0_db": cfg.get("ebn0_db"),
                "channel": cfg.get("channel"),
                "algebra": cfg.get("algebra", "l3"),
                "delta": delta,
            },
        )
        report = {"method": "de", "delta": delta}
    elif method == "msd":
        m, k = int(cfg["m"]), int(cfg["k"])
        sigma2 = ebn0_to_sigma2(float(_require(cfg, "ebn0_db")), k / (1 << m))
        info, d_cn, d_vn = design_msd(m, k, sigma2)
        code = PolarCode(
            m,
            info,
            design={
                "method": "msd",
                "ebn0_db": cfg.get("ebn0_db"),
                "delta_cn": d_cn,
                "delta_vn": d_vn,
            },
        )
        report = {"method": "msd", "delta_cn": d_cn, "delta_vn": d_vn}
    elif method == "ga":
        m, k = int(cfg["m"]), int(cfg["k"])
        ga = GaConfig(
            population=int(cfg.get("population", 200)),
            generations=int(cfg.get("generations", 100)),
            master_seed=seed,
            target_fer=cfg.get("target_fer"),
        )
        budget_frames = int(cfg.get("budget_frames", 2 * 10**5))
        budget_errors = int(cfg.get("budget_errors", 200))
        ebn0 = float(_require(cfg, "ebn0_db"))
        channel = cfg.get("channel", {"kind": "q-biawgn", "levels": 3, "delta_rule": "cap"})
        algebra = cfg.get("algebra", "l3")
        L = int(cfg.get("list_size", 32))

        def evaluator(info_set, gen_seed):
            pt = SimPoint(
                code=PolarCode(m, info_set),
                ebn0_db=ebn0,
                channel=channel,
                algebra=algebra,
                list_size=L,
                master_seed=gen_seed,
            )
            stop = Termination(
                primary="pm", rel_ci=1e-9, frame_cap=budget_frames,
                min_errors=budget_errors, abandon_below=None,
            )
            stop.rel_ci = 1.96 / np.sqrt(budget_errors)
            est = run_point(pt, stop, workers=args.workers)
            return est.fer("pm") if est.errors["pm"] else 0.5 / max(est.frames, 1)

        info, history = design_ga(m, k, ga, evaluator)
        code = PolarCode(m, info, design={"method": "ga", "ebn0_db": ebn0, "seed": seed})
        report = {"method": "ga", "history": history}
    else:
        raise SystemExit(f"unknown design method {method!r}")

    save_code(code, out / f"{name}.json")
    report.update({"seed": seed, "config": cfg, "n": code.n, "k": code.k})
    (out / f"{name}-report.json").write_text(json.dumps(report, indent=2, default=float) + "\n")
    print(f"wrote {out / (name + '.json')}")
    return 0


def cmd_analyze(args) -> int:
    cfg = _load_config(args)
    code = _resolve_code(cfg)
    algebra = make_algebra(cfg.get("algebra", "l3"), **cfg.get("algebra_params", {}))
    dist, _ = _channel_dist(cfg, algebra, code.rate)
    profile = de_profile(dist, code, algebra)
    clamped, raw = union_bound(code, profile)
    rows = [(i, _num(profile.error_probs[i]), int(code.info_mask[i])) for i in range(code.n)]
    out = _outdir(args)
    _write_csv(out / "per_bit.csv", cfg, ["bit", "error_prob", "is_info"], rows)
    (out / "union_bound.json").write_text(
        json.dumps({"union_bound": clamped, "raw_sum": raw}, indent=2) + "\n"
    )
    print(f"union bound {clamped:.6g} (raw {raw:.6g})")
    return 0


def cmd_threshold(args) -> int:
    cfg = _load_config(args)
    levels = int(_require(cfg, "levels"))
    rate = cfg.get("rate")
    code = _resolve_code(cfg) if "code" in cfg else None
    if rate is None:
        if code is None:
            raise SystemExit("need either rate or code")
        rate = code.rate
    sigma2 = ebn0_to_sigma2(float(_require(cfg, "ebn0_db")), float(rate))
    rules = cfg.get("rules", ["cap"])
    out = _outdir(args)
    rows, selected = [], {}
    grid = (8.0 / sigma2) * np.arange(1, 401) / 400
    for rule in rules:
        if rule == "cap":
            from .channel import capacity_bms

            obj = lambda d: capacity_bms(qbiawgn_law(levels, d, sigma2))
            selected[rule] = threshold_cap(levels, sigma2)
        elif rule == "fbl":
            from .quantization import _normal_approx_rate

            n = int(cfg.get("n", code.n if code else 256))
            peb = float(cfg.get("peb", 1e-3))
            obj = lambda d: _normal_approx_rate(qbiawgn_law(levels, d, sigma2), n, peb)
            selected[rule] = threshold_fbl(levels, sigma2, n, peb)
        elif rule == "de":
            if code is None:
                raise SystemExit("the de rule needs a code")
            algebra = make_algebra(cfg.get("algebra", "l3" if levels == 3 else "l7"),
                                   **({"delta": 1.0} if levels == 7 else {}))
            def obj(d):
                alg = make_algebra(cfg.get("algebra", "l3" if levels == 3 else "l7"),
                                   **({"delta": d} if levels == 7 else {}))
                prof = de_profile(alg.channel_dist(qbiawgn_law(levels, d, sigma2)), code, alg)
                return -union_bound(code, prof)[1]
            selected[rule] = threshold_de(levels, sigma2, code, algebra)
        else:
            raise SystemExit(f"unknown rule {rule!r}")
        for d in grid:
            rows.append((rule, _num(d), _num(obj(d))))
    _write_csv(out / "threshold.csv", cfg, ["rule", "delta", "objective"], rows)
    (out / "selected.json").write_text(json.dumps(selected, indent=2) + "\n")
    for rule, d in selected.items():
        print(f"delta*_{rule} = {d:.6g}")
    return 0


def cmd_epmu(args) -> int:
    cfg = _load_config(args)
    code = _resolve_code(cfg)
    sigma2 = ebn0_to_sigma2(float(_require(cfg, "ebn0_db")), code.rate)
    delta = cfg.get("delta")
    if delta is None:
        delta = threshold_cap(3, sigma2)
    quant = MidTreadQuantizer(3, float(delta))
    tables = epmu_tables(code, sigma2, quant)
    doc = tables.to_dict()
    doc["delta"] = float(delta)
    doc["sigma2"] = sigma2
    if cfg.get("with_thresholds", True):
        thr = cc_plausibility(code, sigma2, quant, tail=float(cfg.get("tail", 1e-6)))
        doc["cc_thresholds"] = [int(t) for t in thr]
        doc["penalty"] = 5.0 * tables.max_entry
    out = _outdir(args)
    (out / "epmu.json").write_text(json.dumps(doc, indent=2, default=float) + "\n")
    print(f"wrote {out / 'epmu.json'}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    code = _resolve_code(cfg)
    grid = cfg.get("ebn0_grid") or [cfg.get("ebn0_db")]
    seed = int(cfg.get("seed", 0))
    stop = Termination(
        primary=cfg.get("primary", "pm"),
        rel_ci=float(cfg.get("rel_ci", 0.1)),
        frame_cap=int(cfg.get("frame_cap", 10**8)),
    )
    rows = []
    all_met = True
    for ebn0 in grid:
        point = SimPoint(
            code=code,
            ebn0_db=float(ebn0),
            channel=cfg.get("channel", {"kind": "biawgn"}),
            algebra=cfg.get("algebra", "linf-min"),
            list_size=int(cfg.get("list_size", 1)),
            pm_rule=cfg.get("pm_rule", "default"),
            algebra_params=cfg.get("algebra_params", {}),
            master_seed=seed,
        )
        est = run_point(point, stop, workers=args.workers)
        all_met &= est.stopped_by == "ci_met"
        code_name = cfg["code"] if isinstance(cfg.get("code"), str) else f"m{code.m}k{code.k}"
        for ev in cfg.get("events", EVENTS):
            lo, hi = est.ci(ev)
            rows.append(
                (
                    ebn0, ev, _num(est.fer(ev)), _num(lo), _num(hi), est.frames,
                    est.errors[ev], code_name, point.algebra, point.list_size,
                    point.pm_rule, seed,
                )
            )
        print(
            f"{ebn0:+.3f} dB: "
            + " ".join(f"{ev}={est.fer(ev):.3e}" for ev in EVENTS)
            + f" ({est.frames} frames, {est.stopped_by})"
        )
    out = _outdir(args)
    _write_csv(
        out / "fer.csv",
        cfg,
        [
            "ebn0_db", "event_type", "fer", "ci_lo", "ci_hi", "frames", "errors",
            "code", "algebra", "list_size", "pm_rule", "seed",
        ],
        rows,
    )
    return 0 if all_met else 1


def cmd_bec(args) -> int:
    cfg = _load_config(args)
    code = _resolve_code(cfg)
    frames = int(cfg.get("frames", 10**4))
    seed = int(cfg.get("seed", 0))
    rows = []
    for eps in cfg.get("eps_grid", [3 / 8]):
        eps = float(eps)
        rep = verify_identity(code, eps, frames=max(frames, 10**4), seed=seed)
        # consolidation and success statistics need the explicit list decoder
        explicit = int(cfg.get("explicit_frames", min(frames, 2000)))
        keys = rngstream.frame_keys(seed, np.arange(explicit, dtype=np.uint64))
        uni = rngstream.uniform(
            keys[:, None], np.arange(code.n, dtype=np.uint64)[None, :]
        )
        cons, succ = 0, 0
        for f in range(explicit):
            st = bec_scl_unbounded(code, uni[f] < eps)
            cons += st.consolidations
            succ += st.success
        rows.append(
            (
                eps, _num(rep.i_loss), _num(rep.mean_branchings), _num(rep.ci_lo),
                _num(rep.ci_hi), rep.frames, _num(cons / explicit), _num(succ / explicit),
            )
        )
        print(
            f"eps={eps}: i_loss {rep.i_loss:.5f} vs mean B {rep.mean_branchings:.5f} "
            f"[{rep.ci_lo:.5f}, {rep.ci_hi:.5f}] {'ok' if rep.passed else 'MISS'}"
        )
    out = _outdir(args)
    _write_csv(
        out / "bec.csv",
        cfg,
        ["eps", "i_loss", "mean_B", "ci_lo", "ci_hi", "frames",
         "consolidations_mean", "success_rate"],
        rows,
    )
    return 0


def cmd_info(args) -> int:
    from .backends import HAVE_COMPILED, get_backend

    print(f"polarq {__version__}")
    print(f"compiled core: {'yes' if HAVE_COMPILED else 'no (numpy fallback)'}")
    print(f"active backend: {get_backend().name}")
    print(f"workers: {args.workers}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="polarq", description=__doc__)
    parser.add_argument("--workers", type=int,
                        default=int(os.environ.get("POLARQ_WORKERS", "1")))
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in [
        ("design", cmd_design),
        ("analyze", cmd_analyze),
        ("threshold", cmd_threshold),
        ("epmu", cmd_epmu),
        ("simulate", cmd_simulate),
        ("bec", cmd_bec),
        ("info", cmd_info),
    ]:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", help="JSON config document")
        p.add_argument("-o", "--output", default=".", help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (dotted path)")
        p.set_defaults(func=fn)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        raise SystemExit(f"error: {exc}")


if __name__ == "__main__":
    sys.exit(main())
