"""Runs every CLI command on a small dataset and validates each JSON output
against docs/schemas."""

import json
import pathlib
import subprocess
import sys
import tempfile
import xml.etree.ElementTree as ET

import jsonschema
from referencing import Registry, Resource


def main(binary: str, schema_dir: str) -> int:
    binary = str(pathlib.Path(binary).resolve())
    schemas = {}
    for p in pathlib.Path(schema_dir).glob("*.schema.json"):
        schemas[p.name] = json.loads(p.read_text())
    registry = Registry().with_resources(
        (name, Resource.from_contents(s)) for name, s in schemas.items()
    )
    failures = 0

    def check(doc_path: pathlib.Path, schema: str) -> None:
        nonlocal failures
        validator = jsonschema.Draft202012Validator(schemas[schema], registry=registry)
        errors = list(validator.iter_errors(json.loads(doc_path.read_text())))
        for e in errors:
            print(f"{doc_path.name}: {'/'.join(map(str, e.absolute_path))}: {e.message}")
        failures += bool(errors)

    with tempfile.TemporaryDirectory() as tmp:
        t = pathlib.Path(tmp)

        def run(*args: str) -> None:
            subprocess.run([binary, *map(str, args)], check=True, cwd=t)

        run("gen-data", "--n", 3, "--seed", 2, "--out", "data")
        run("default-config", "--preset", "desk", "--out", "desk.json")
        cfg = json.loads((t / "desk.json").read_text())
        cfg.update(pretrain_iters=2, total_iters=3, batch_size=2, warmup_iters=1)
        (t / "quick.json").write_text(json.dumps(cfg))
        run("train", "--data", "data", "--config", "quick.json", "--out", "m.ckpt", "--ablate", "dis_only")
        run("label", "--data", "data", "--ckpt", "m.ckpt", "--out", "labels.json")
        run("label", "--data", "data", "--gt", "--out", "gt.json")
        run("eval", "--data", "data", "--labels", "labels.json", "--baseline", "last",
            "--baseline", "uniform:3", "--baseline", "lindp:2", "--out", "report.json")
        run("eval", "--data", "data", "--labels", "gt.json", "--out", "gt_report.json")
        run("policy", "--data", "data", "--labels", "gt.json", "--iters", 3, "--episodes", 2, "--out", "policy.json")
        run("plot", "--data", "data", "--labels", "labels.json", "--traj", 2, "--out", "t.svg")

        check(t / "data" / "meta.json", "dataset_meta.schema.json")
        for traj in sorted((t / "data").glob("traj_*.json")):
            check(traj, "trajectory.schema.json")
        check(t / "desk.json", "train_config.schema.json")
        check(t / "m.ckpt.config.json", "checkpoint_sidecar.schema.json")
        check(t / "labels.json", "labels.schema.json")
        check(t / "gt.json", "labels.schema.json")
        check(t / "report.json", "eval_report.schema.json")
        check(t / "gt_report.json", "eval_report.schema.json")
        check(t / "policy.json", "policy_report.schema.json")
        manifests = sorted(t.glob("*.manifest.json"))
        if len(manifests) != 9:
            print(f"expected 9 manifests, found {len(manifests)}")
            failures += 1
        for m in manifests:
            check(m, "manifest.schema.json")
        if ET.parse(t / "t.svg").getroot().tag != "{http://www.w3.org/2000/svg}svg":
            print("t.svg: root is not an svg element")
            failures += 1

    print("schema validation:", "FAIL" if failures else "PASS")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1], sys.argv[2]))
