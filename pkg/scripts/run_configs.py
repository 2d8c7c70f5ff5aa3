"""Run every config in configs/ through the CLI sweep and print one line per report."""
import argparse
import json
import sys
from pathlib import Path

from dnle.cli import sweep
from dnle.config import load_config

ROOT = Path(__file__).resolve().parent.parent

KEYS = {
    "rate": ("slope", "C_num"),
    "eigen": ("lambda1", "relative_error"),
    "quasilinear": ("c_star", "gap", "ref_sup"),
    "positivity": ("T_inner", "T_boundary", "bound", "s0", "s1"),
    "selfsim": ("case", "support_radius", "closed_form_error"),
    "profile": ("sup_f", "C1", "C2"),
    "simulate": ("final_mass", "final_supnorm"),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("configs", nargs="*", help="default: configs/*.toml")
    ap.add_argument("--no-assert", action="store_true")
    args = ap.parse_args()
    paths = args.configs or sorted(str(p) for p in (ROOT / "configs").glob("*.toml"))
    code = sweep(paths, check=not args.no_assert)
    for path in paths:
        cfg = load_config(path)
        report = next((f for f in cfg.out_dir.glob("*.json") if f.name not in ("timing.json", "error.json")), None)
        if report is None:
            print(f"{Path(path).name:28s} no report (see {cfg.out_dir / 'error.json'})")
            continue
        body = json.loads(report.read_text())
        vals = ", ".join(f"{k}={body.get(k)!r}" if isinstance(body.get(k), str) else f"{k}={body.get(k):.6g}"
                         for k in KEYS[cfg.experiment] if body.get(k) is not None)
        print(f"{Path(path).name:28s} checks_passed={body['checks_passed']}  {vals}")
    sys.exit(code)


if __name__ == "__main__":
    main()
