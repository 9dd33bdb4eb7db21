"""Command-line pipeline: train -> cegis -> verify -> certify -> report.

Every command writes its artifacts plus a manifest entry (config snapshot,
content hashes, timings); `report` refuses to aggregate artifacts whose
hashes no longer match. Exit codes: 0 success/VERIFIED, 2 FALSIFIED,
3 TIMEOUT, 4 config error, 5 missing artifact.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
import torch

from . import empirical
from .boxes import Box
from .cegis import train_stage2
from .config import ConfigError, load_config
from .nets import load_checkpoint, save_checkpoint
from .simulate import graph_fn, rollout_summary, simulate
from .systems import closed_loop, resolve_system
from .train import TrainingDiverged, train_stage1
from .verify import (VerifyTask, bab_verify, certify_theorem,
                     make_verification_graph, validate_certificate)

EXIT_OK = 0
EXIT_FALSIFIED = 2
EXIT_TIMEOUT = 3
EXIT_CONFIG = 4
EXIT_MISSING = 5

MANIFEST_SCHEMA = "roacert.manifest.v1"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


class Manifest:
    def __init__(self, out_dir: Path):
        self.path = out_dir / "manifest.json"
        if self.path.exists():
            self.data = json.loads(self.path.read_text())
        else:
            self.data = {"schema": MANIFEST_SCHEMA, "artifacts": {},
                         "timings": {}, "metrics": {}, "config": None}

    def record(self, name: str, path: Path):
        self.data["artifacts"][name] = {"path": path.name,
                                        "sha256": _sha256(path)}

    def save(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=1))

    def artifact_path(self, name: str, out_dir: Path, check_hash=True) -> Path:
        entry = self.data["artifacts"].get(name)
        if entry is None:
            raise FileNotFoundError(f"artifact {name!r} missing from manifest")
        p = out_dir / entry["path"]
        if not p.exists():
            raise FileNotFoundError(f"artifact file missing: {p}")
        if check_hash and _sha256(p) != entry["sha256"]:
            raise ValueError(f"artifact {name!r} hash mismatch: {p}")
        return p


def _write_csv(path: Path, rows, fieldnames=None):
    if not rows:
        path.write_text("")
        return
    fieldnames = fieldnames or list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=fieldnames)
        wr.writeheader()
        for row in rows:
            wr.writerow({k: row.get(k) for k in fieldnames})


def _setup(args):
    cfg = load_config(args.config, overrides={
        "system": getattr(args, "system", None),
        "seed": getattr(args, "seed", None),
        "out_dir": getattr(args, "out", None),
    })
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(cfg.seed)
    threads = int(os.environ.get("ROACERT_THREADS", "0"))
    if threads > 0:
        torch.set_num_threads(threads)
    man = Manifest(out)
    man.data["config"] = cfg.to_dict()
    return cfg, out, man


def cmd_train(args) -> int:
    cfg, out, man = _setup(args)
    system = resolve_system(cfg.system, cfg.system_params)
    t0 = time.time()
    try:
        ctrl, V, box, history = train_stage1(system, cfg.train, seed=cfg.seed)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_TIMEOUT
    ckpt = out / "checkpoint_stage1.json"
    save_checkpoint(ckpt, ctrl, V, extra={"box": box.to_json(),
                                          "system": cfg.system,
                                          "system_params": cfg.system_params,
                                          "seed": cfg.seed})
    _write_csv(out / "loss_history.csv",
               [{k: v for k, v in row.items() if not isinstance(v, list)}
                for row in history])
    domain_rows = [{"iter": r["iter"],
                    **{f"lo{i}": v for i, v in enumerate(r["box_lo"])},
                    **{f"hi{i}": v for i, v in enumerate(r["box_hi"])}}
                   for r in history]
    _write_csv(out / "domain_history.csv", domain_rows)
    (out / "domain.json").write_text(json.dumps(box.to_json()))
    for name, fname in [("checkpoint_stage1", "checkpoint_stage1.json"),
                        ("loss_history", "loss_history.csv"),
                        ("domain_history", "domain_history.csv"),
                        ("domain", "domain.json")]:
        man.record(name, out / fname)
    man.data["timings"]["train"] = time.time() - t0
    man.save()
    print(f"stage 1 done in {time.time()-t0:.1f}s; domain "
          f"lo={box.lo.tolist()} hi={box.hi.tolist()}")
    return EXIT_OK


def _load_model(out: Path, man: Manifest, stage: str):
    ckpt = man.artifact_path(f"checkpoint_{stage}", out)
    ctrl, V, extra = load_checkpoint(ckpt)
    system = resolve_system(extra["system"], extra.get("system_params") or None)
    box = Box.from_json(extra["box"])
    return system, ctrl, V, box, extra


def cmd_cegis(args) -> int:
    cfg, out, man = _setup(args)
    try:
        system, ctrl, V, box, extra = _load_model(out, man, "stage1")
    except (FileNotFoundError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_MISSING
    t0 = time.time()
    V, ctrl, rounds, clean = train_stage2(V, ctrl, system, box, cfg.cegis,
                                          seed=cfg.seed)
    ckpt = out / "checkpoint_stage2.json"
    save_checkpoint(ckpt, ctrl, V, extra={**extra,
                                          "cegis_rounds": rounds,
                                          "cegis_clean": clean,
                                          "c_prime": cfg.cegis.c_prime})
    man.record("checkpoint_stage2", ckpt)
    man.data["timings"]["cegis"] = time.time() - t0
    man.data["metrics"]["cegis_rounds"] = rounds
    man.data["metrics"]["cegis_clean_exit"] = clean
    man.save()
    print(f"stage 2 {'clean' if clean else 'exhausted'} after {rounds} rounds "
          f"({time.time()-t0:.1f}s)")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg, out, man = _setup(args)
    stage = "stage2" if (out / "checkpoint_stage2.json").exists() else "stage1"
    try:
        system, ctrl, V, box, extra = _load_model(out, man, stage)
    except (FileNotFoundError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_MISSING
    v = cfg.verify
    c1 = args.c1 if args.c1 is not None else v.c1
    c2 = args.c2 if args.c2 is not None else v.c2
    if args.thin_band or v.thin_band:
        c2 = c1 + v.thin_band_eps
    task = VerifyTask(make_verification_graph(V, ctrl, system), box,
                      c1=c1, c2=c2, eps=args.eps if args.eps else v.eps,
                      batch=args.batch if args.batch else v.batch,
                      timeout=args.timeout if args.timeout else v.timeout,
                      max_subdomains=v.max_subdomains, adaptive=v.adaptive,
                      pgd_restarts=v.pgd_restarts, pgd_steps=v.pgd_steps)
    rep = bab_verify(task)
    verdict = {
        "schema": "roacert.verdict.v1",
        "status": rep.status, "c1": rep.c1, "c2": rep.c2,
        "subdomains_processed": rep.subdomains_processed,
        "boundings": rep.boundings,
        "counterexamples_applied": rep.counterexamples_applied,
        "wall_time": rep.wall_time,
        "band_verified": rep.band_verified,
        "faces_verified": rep.faces_verified, "faces_total": rep.faces_total,
        "thin_band": bool(args.thin_band or v.thin_band),
        "detail": rep.detail,
    }
    (out / "verdict.json").write_text(json.dumps(verdict, indent=1))
    man.record("verdict", out / "verdict.json")
    man.data["metrics"]["verify_status"] = rep.status
    man.data["metrics"]["c1"] = rep.c1
    man.data["metrics"]["c2"] = rep.c2
    man.data["timings"]["verify"] = rep.wall_time
    if rep.status == "VERIFIED":
        cert = certify_theorem(system, ctrl, V, box, rep)
        (out / "certificate.json").write_text(json.dumps(cert, indent=1))
        man.record("certificate", out / "certificate.json")
    man.save()
    print(f"{rep.status}: c1={rep.c1:.6g} c2={rep.c2:.6g} "
          f"({rep.subdomains_processed} subdomains, {rep.wall_time:.1f}s)")
    return {"VERIFIED": EXIT_OK, "FALSIFIED": EXIT_FALSIFIED}.get(
        rep.status, EXIT_TIMEOUT)


def cmd_certify(args) -> int:
    cfg, out, man = _setup(args)
    stage = "stage2" if (out / "checkpoint_stage2.json").exists() else "stage1"
    try:
        system, ctrl, V, box, extra = _load_model(out, man, stage)
    except (FileNotFoundError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_MISSING
    c1, c2 = cfg.verify.c1, cfg.verify.c2
    if (out / "verdict.json").exists():
        verdict = json.loads((out / "verdict.json").read_text())
        c1, c2 = verdict["c1"], verdict["c2"]
    e = cfg.empirical
    t0 = time.time()
    pgd = empirical.pgd_verify(V, ctrl, system, box, c1, c2,
                               restarts=e.pgd_restarts, steps=e.pgd_steps,
                               seed=cfg.seed)
    (out / "empirical_pgd.json").write_text(json.dumps(pgd.to_json(), indent=1))
    man.record("empirical_pgd", out / "empirical_pgd.json")
    traj = empirical.trajectory_verify(V, ctrl, system, box, c2,
                                       n_traj=e.n_trajectories,
                                       horizon=e.horizon, dt=e.dt,
                                       conv_tol=e.conv_tol, seed=cfg.seed)
    (out / "empirical_trajectory.json").write_text(
        json.dumps(traj.to_json(), indent=1))
    man.record("empirical_trajectory", out / "empirical_trajectory.json")
    man.data["timings"]["certify"] = time.time() - t0
    man.data["metrics"]["pgd_pass"] = pgd.passed
    man.data["metrics"]["trajectory_pass"] = traj.passed
    man.save()
    print(f"pgd: {'pass' if pgd.passed else 'FAIL'} "
          f"(worst {pgd.worst_violation:.3e}); trajectories: "
          f"{'pass' if traj.passed else 'FAIL'} ({traj.violations} fails)")
    return EXIT_OK if (pgd.passed and traj.passed) else EXIT_FALSIFIED


def cmd_simulate(args) -> int:
    cfg, out, man = _setup(args)
    stage = "stage2" if (out / "checkpoint_stage2.json").exists() else "stage1"
    try:
        system, ctrl, V, box, extra = _load_model(out, man, stage)
    except (FileNotFoundError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_MISSING
    x0 = np.array([float(v) for v in args.x0.split(",")])
    f = closed_loop(system, ctrl)
    traj = simulate(f, x0, args.dt, int(args.steps), x_star=system.x_star,
                    method=args.method)
    rows = [{"t": i * args.dt, **{f"x{d}": s[d] for d in range(len(s))}}
            for i, s in enumerate(traj.states)]
    _write_csv(out / "trajectory.csv", rows)
    man.record("trajectory", out / "trajectory.csv")
    man.save()
    print(f"simulated {len(traj.states)-1} steps; converged={traj.converged} "
          f"diverged={traj.diverged}")
    return EXIT_OK


def cmd_volume(args) -> int:
    cfg, out, man = _setup(args)
    stage = "stage2" if (out / "checkpoint_stage2.json").exists() else "stage1"
    try:
        system, ctrl, V, box, extra = _load_model(out, man, stage)
    except (FileNotFoundError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_MISSING
    c1, c2 = cfg.verify.c1, cfg.verify.c2
    if (out / "verdict.json").exists():
        verdict = json.loads((out / "verdict.json").read_text())
        c1, c2 = verdict["c1"], verdict["c2"]
    n = cfg.empirical.volume_samples
    # report both the certified level and the near-Zubov level
    vol_c2 = empirical.estimate_volume(V, box, c2, n, seed=cfg.seed)
    vol_z = empirical.estimate_volume(V, box, 0.99, n, seed=cfg.seed + 1)
    hole = empirical.unverifiable_hole_report(V, box, c1, c2, n, seed=cfg.seed)
    payload = {"schema": "roacert.volume.v1",
               "at_c2": vol_c2.to_json(), "at_0.99": vol_z.to_json(),
               "hole": hole}
    (out / "volume.json").write_text(json.dumps(payload, indent=1))
    man.record("volume", out / "volume.json")
    man.data["metrics"]["roa_volume"] = vol_c2.volume
    man.save()
    print(f"ROA volume at c2={c2:.4g}: {vol_c2.volume:.4g} "
          f"+- {vol_c2.stderr:.2g}; hole fraction {hole['fraction']:.3%}")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg, out, man = _setup(args)
    try:
        stage = "stage2" if "checkpoint_stage2" in man.data["artifacts"] \
            else "stage1"
        system, ctrl, V, box, extra = _load_model(out, man, stage)
        rows = {}
        for name in ("verdict", "empirical_pgd", "empirical_trajectory",
                     "volume"):
            if name in man.data["artifacts"]:
                p = man.artifact_path(name, out)
                rows[name] = json.loads(p.read_text())
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_MISSING
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_MISSING
    summary = {
        "schema": "roacert.report.v1",
        "system": cfg.system,
        "seed": cfg.seed,
        "formal": rows.get("verdict", {}).get("status", "not run"),
        "c1": rows.get("verdict", {}).get("c1"),
        "c2": rows.get("verdict", {}).get("c2"),
        "pgd_pass": rows.get("empirical_pgd", {}).get("passed"),
        "trajectory_pass": rows.get("empirical_trajectory", {}).get("passed"),
        "roa_volume": rows.get("volume", {}).get("at_c2", {}).get("volume"),
        "roa_volume_stderr": rows.get("volume", {}).get("at_c2", {}).get("stderr"),
        "hole_fraction": rows.get("volume", {}).get("hole", {}).get("fraction"),
        "timings": man.data["timings"],
    }
    (out / "report.json").write_text(json.dumps(summary, indent=1))
    man.record("report", out / "report.json")
    # V over 2d slices for external plotting
    grid = int(args.grid)
    dims = (0, 1)
    xs = np.linspace(box.lo[dims[0]], box.hi[dims[0]], grid)
    ys = np.linspace(box.lo[dims[1]], box.hi[dims[1]], grid)
    pts = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    full = np.tile(system.x_star, (pts.shape[0], 1))
    full[:, dims[0]] = pts[:, 0]
    full[:, dims[1]] = pts[:, 1]
    with torch.no_grad():
        vv = V(torch.as_tensor(full)).numpy()
    slice_rows = [{"x": float(p[0]), "y": float(p[1]), "V": float(v)}
                  for p, v in zip(pts, vv)]
    _write_csv(out / "v_slice.csv", slice_rows)
    man.record("v_slice", out / "v_slice.csv")
    man.save()
    print(json.dumps(summary, indent=1))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="roacert", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="TOML or JSON config file")
        p.add_argument("--system", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")

    for name, fn in [("train", cmd_train), ("cegis", cmd_cegis),
                     ("certify", cmd_certify), ("volume", cmd_volume)]:
        p = sub.add_parser(name)
        common(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("verify")
    common(p)
    p.add_argument("--c1", type=float, default=None)
    p.add_argument("--c2", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--timeout", type=float, default=None)
    p.add_argument("--thin-band", action="store_true")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("simulate")
    common(p)
    p.add_argument("--x0", required=True, help="comma-separated initial state")
    p.add_argument("--dt", type=float, default=0.005)
    p.add_argument("--steps", type=int, default=6000)
    p.add_argument("--method", default="euler", choices=["euler", "rk4"])
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("report")
    common(p)
    p.add_argument("--grid", type=int, default=101)
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
