"""Smoke test for the regpy extension: build a REG, score it, check parity with the CLI."""

import json
import pathlib
import subprocess
import sys
import tempfile

import regpy

ROOT = pathlib.Path(__file__).resolve().parent.parent
CONFIG = {"dim": 16, "num_queries": 4, "frame_queries": 3, "frames": 4, "window": 2, "seed": 3}


def main():
    records = [json.loads(l) for l in (ROOT / "corpus" / "mini.jsonl").read_text().splitlines() if l.strip()]
    rec = next(r for r in records if r["id"] == "c1c")
    ann = {k: rec[k] for k in ("tokens", "pos", "deps")}
    reg = regpy.build_reg(rec["penman"], json.dumps(ann))
    golden = (ROOT / "corpus" / "golden" / "c1c.reg.json").read_text()
    assert reg == golden, "REG differs from golden file"

    out = json.loads(regpy.score(reg, json.dumps(CONFIG)))
    assert len(out["scores"]) == 4 and len(out["probs"]) == 4
    assert abs(sum(out["probs"]) - 1.0) < 1e-12
    assert json.loads(regpy.Scorer(json.dumps(CONFIG)).score(reg)) == out

    try:
        regpy.build_reg("(a / b", json.dumps(ann))
    except ValueError:
        pass
    else:
        raise AssertionError("malformed PENMAN should raise")

    cli = ROOT / "target" / "debug" / "reg"
    if cli.exists():
        with tempfile.TemporaryDirectory() as tmp:
            args = [str(cli), "score", str(ROOT / "corpus" / "golden" / "c1c.reg.json"), "--out", tmp]
            for k, v in CONFIG.items():
                args += ["--" + k.replace("_", "-"), str(v)]
            subprocess.run(args, check=True, capture_output=True)
            assert (pathlib.Path(tmp) / "c1c.scores.txt").read_text() == out["scores_text"]
            assert (pathlib.Path(tmp) / "c1c.trace.json").read_text() == out["trace_json"]
        print("CLI parity ok")

    print("regpy", regpy.__version__, "smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
