"""End-to-end checks of the qsd command-line tool.

usage: check_cli.py QSD_BINARY SCHEMA_DIR WORK_DIR {schemas,exit_codes,determinism,verify}
"""

import json
import os
import pathlib
import subprocess
import sys

import jsonschema
from referencing import Registry, Resource

MODELS = {
    "drift_down": {"drift": "-1", "kappa": "0", "alpha": "inf"},
    "drift_up": {"drift": "1", "kappa": "0", "alpha": "inf"},
    "entrance": {"drift": "-x^2", "kappa": "0", "alpha": "inf"},
    "airy": {"drift": "0", "kappa": "x", "alpha": 0},
    "borderline": {"drift": "0", "kappa": "0.7", "alpha": 0},
    "bent": {"drift": "1-0.5/(1+x)", "kappa": "0", "alpha": "inf"},
    "negative_kappa": {"drift": "0", "kappa": "-1", "alpha": 0},
    "hinted": {
        "drift": "-1",
        "kappa": "0",
        "alpha": "inf",
        "hints": {"kappa_limit": 0, "scale_tail": "infinite", "speed_tail": "finite"},
        "numerics": {"tol": 1e-8, "x_max_cap": 10240},
    },
}


class Cli:
    def __init__(self, binary, work):
        self.binary = binary
        self.work = pathlib.Path(work)
        self.work.mkdir(parents=True, exist_ok=True)
        for name, spec in MODELS.items():
            (self.work / f"{name}.json").write_text(json.dumps(spec))
        (self.work / "broken.json").write_text('{"drift": "1 +", "kappa": "0", "alpha": "inf"}')

    def model(self, name):
        return str(self.work / f"{name}.json")

    def run(self, *args, env=None):
        full_env = dict(os.environ)
        if env:
            full_env.update(env)
        return subprocess.run([self.binary, *args], capture_output=True, env=full_env, timeout=1200)


def registry(schema_dir):
    resources = []
    for path in pathlib.Path(schema_dir).glob("*.schema.json"):
        resources.append((path.name, Resource.from_contents(json.loads(path.read_text()))))
    return Registry().with_resources(resources)


def validate(reg, schema_dir, schema, document):
    contents = json.loads((pathlib.Path(schema_dir) / schema).read_text())
    jsonschema.Draft202012Validator(contents, registry=reg).validate(document)
    # Round trip through the JSON parser without loss.
    assert json.loads(json.dumps(document)) == document


def expect(cond, message):
    if not cond:
        print("FAIL:", message)
        sys.exit(1)
    print("ok:", message)


def check_schemas(cli, schema_dir):
    reg = registry(schema_dir)
    for name, spec in MODELS.items():
        validate(reg, schema_dir, "model.schema.json", spec)
    expect(True, "model files validate")

    r = cli.run("classify", "--model", cli.model("drift_down"))
    verdict = json.loads(r.stdout)
    validate(reg, schema_dir, "verdict.schema.json", verdict)
    expect(verdict["outcome"] == "converges" and verdict["theorem"] == "RecurrentLowKilling", "classify drift -1")
    expect(abs(verdict["mortality_rate"] - 0.5) < 1e-6, "mortality rate 0.5")

    r = cli.run("classify", "--model", cli.model("borderline"))
    validate(reg, schema_dir, "verdict.schema.json", json.loads(r.stdout))
    expect(True, "undetermined verdict validates")

    r = cli.run("eigen", "--model", cli.model("airy"), "--phi", str(cli.work / "phi.csv"))
    eigen = json.loads(r.stdout)
    validate(reg, schema_dir, "eigen.schema.json", eigen)
    expect(abs(eigen["lambda0"] - 0.80861652) < 1e-6, "eigen on the Airy model")
    expect((cli.work / "phi.csv").read_text().startswith("x,log_phi,log_rho\n"), "phi CSV header")

    r = cli.run("simulate", "--model", cli.model("drift_down"), "--paths", "2000", "--t", "2",
                "--record-times", "0.5,1,2", "--format", "json")
    stats = json.loads(r.stdout)
    validate(reg, schema_dir, "survivor_stats.schema.json", stats)
    for rec in stats["records"]:
        expect(sum(rec["histogram"]) + rec["overflow"] == rec["survivors"], f"histogram mass at t={rec['t']}")

    out = cli.work / "drift_up_h.json"
    r = cli.run("htransform", "--model", cli.model("drift_up"), "--out", str(out))
    spec = json.loads(out.read_text())
    validate(reg, schema_dir, "model.schema.json", spec)
    r = cli.run("eigen", "--model", str(out))
    expect(abs(json.loads(r.stdout)["lambda0"] - 0.5) < 1e-6, "h-transformed model keeps lambda0")

    out = cli.work / "bent_h.json"
    r = cli.run("htransform", "--model", cli.model("bent"), "--out", str(out))
    spec = json.loads(out.read_text())
    validate(reg, schema_dir, "model.schema.json", spec)
    expect("drift_table" in spec, "tabulated h-transform")
    a = json.loads(cli.run("eigen", "--model", cli.model("bent")).stdout)["lambda0"]
    b = json.loads(cli.run("eigen", "--model", str(out)).stdout)["lambda0"]
    expect(abs(a - b) < 1e-6, "tabulated h-transform keeps lambda0")

    r = cli.run("verify", "--model", cli.model("borderline"))
    validate(reg, schema_dir, "verify.schema.json", json.loads(r.stdout))
    r = cli.run("verify", "--model", cli.model("airy"), "--paths", "5000", "--t", "4")
    validate(reg, schema_dir, "verify.schema.json", json.loads(r.stdout))
    expect(True, "verify reports validate")


def check_exit_codes(cli):
    expect(cli.run("classify", "--model", cli.model("drift_down")).returncode == 0, "classify exits 0")
    expect(cli.run("classify", "--model", cli.model("borderline")).returncode == 2, "borderline classify exits 2")
    expect(cli.run("classify", "--model", cli.model("broken")).returncode == 1, "parse error exits 1")
    expect(cli.run("classify", "--model", cli.model("negative_kappa")).returncode == 1, "negative kappa exits 1")
    expect(cli.run("classify", "--model", str(cli.work / "missing.json")).returncode == 1, "missing file exits 1")
    expect(cli.run("htransform", "--model", cli.model("drift_down")).returncode == 1, "recurrent h-transform exits 1")
    expect(cli.run("qsd", "--model", cli.model("drift_up")).returncode == 2, "qsd of an escaping model exits 2")
    expect(cli.run("bogus").returncode == 1, "unknown subcommand exits 1")
    expect(cli.run("classify", "--model", cli.model("hinted")).returncode == 0, "hinted model exits 0")


def check_determinism(cli):
    args = ["simulate", "--model", cli.model("drift_down"), "--paths", "20000", "--t", "3", "--seed", "42",
            "--record-times", "1,2,3"]
    a = cli.run(*args).stdout
    b = cli.run(*args).stdout
    c = cli.run(*args, env={"QSD_THREADS": "1"}).stdout
    expect(len(a) > 0 and a == b, "seed 42 twice gives byte-identical CSV")
    expect(a == c, "QSD_THREADS does not change the CSV")
    d = cli.run(*args[:-4], "--seed", "43", "--record-times", "1,2,3").stdout
    expect(a != d, "another seed gives another CSV")
    plot = cli.work / "survival.gp"
    csv = cli.work / "survival.csv"
    r = cli.run(*args, "--out", str(csv), "--plot", str(plot))
    expect(r.returncode == 0 and str(csv) in plot.read_text(), "gnuplot script references the CSV")


def check_verify(cli):
    for name in ("drift_down", "drift_up", "entrance"):
        r = cli.run("verify", "--model", cli.model(name), "--paths", "20000")
        expect(r.returncode == 0, f"verify agrees on {name}")
    expect(cli.run("verify", "--model", cli.model("borderline")).returncode == 2, "verify exits 2 on the borderline model")


def main():
    binary, schema_dir, work, which = sys.argv[1:5]
    cli = Cli(binary, work)
    if which == "schemas":
        check_schemas(cli, schema_dir)
    elif which == "exit_codes":
        check_exit_codes(cli)
    elif which == "determinism":
        check_determinism(cli)
    elif which == "verify":
        check_verify(cli)
    else:
        raise SystemExit(f"unknown check {which}")


if __name__ == "__main__":
    main()
