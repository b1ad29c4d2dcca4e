"""Runs the CLI over the sample scenarios and validates every emitted report
and every scenario file against the published JSON schemas."""

import glob
import json
import os
import subprocess
import sys

import jsonschema


def main() -> int:
    cli, root, workdir = sys.argv[1], sys.argv[2], sys.argv[3]
    os.makedirs(workdir, exist_ok=True)
    load = lambda p: json.load(open(p))
    report_schema = load(os.path.join(root, "schemas", "report.schema.json"))
    scenario_schema = load(os.path.join(root, "schemas", "scenario.schema.json"))
    v = jsonschema.Draft202012Validator
    v.check_schema(report_schema)
    v.check_schema(scenario_schema)

    failures = 0
    scenarios = sorted(glob.glob(os.path.join(root, "scenarios", "*.json")))
    for path in scenarios:
        name = os.path.splitext(os.path.basename(path))[0]
        errs = list(v(scenario_schema).iter_errors(load(path)))
        if errs:
            failures += 1
            print(f"FAIL scenario {name}: {errs[0].message}")
        runs = [("certify", os.path.join(workdir, f"{name}.certify.json")),
                ("classify", os.path.join(workdir, f"{name}.classify.json")),
                ("report", os.path.join(workdir, f"{name}.report"))]
        sc = load(path)
        certifiable = ("lambda" in sc or "lambda_grid" in sc
                       or sc["field"].get("family") == "cyclic_feedback")
        for cmd, out in runs:
            rc = subprocess.run([cli, cmd, "--scenario", path, "--out", out, "--quiet"],
                                stderr=subprocess.DEVNULL).returncode
            if cmd == "certify" and not certifiable:
                if rc != 2:
                    failures += 1
                    print(f"FAIL certify {name}: expected schema exit 2 without lambda, got {rc}")
                else:
                    print(f"ok   certify {name} (rejected: no lambda)")
                continue
            if rc not in (0, 4):
                failures += 1
                print(f"FAIL {cmd} {name}: exit {rc}")
                continue
            doc = out if cmd != "report" else os.path.join(out, "report.json")
            if not os.path.exists(doc):
                failures += 1
                print(f"FAIL {cmd} {name}: no report written")
                continue
            errs = list(v(report_schema).iter_errors(load(doc)))
            if errs:
                failures += 1
                print(f"FAIL {cmd} {name}: {errs[0].json_path}: {errs[0].message}")
            else:
                print(f"ok   {cmd} {name}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
