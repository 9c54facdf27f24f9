"""
Running the Monte-Carlo experiments
===================================

Each experiment is a runner that turns an ``ExperimentSpec`` into a table.
``bench`` writes one CSV per experiment plus a manifest with the seed, the
code version and the wall time. The same thing is available as
``mnomp bench --spec overrides.json --out results/``.
"""

import json
import tempfile
from pathlib import Path

from mnomp.harness import bench

overrides = {"seed": 0, "fig1_calibration": {"mc_trials": 40}, "fig7_doa": {"mc_trials": 20}}
with tempfile.TemporaryDirectory() as out:
    manifest = bench(overrides, out, only=["fig1_calibration", "fig7_doa"])
    for name, entry in manifest["figures"].items():
        print(f"{name}: {entry['rows']} rows in {entry['wall_time_s']:.1f}s")
        print(Path(out, entry["csv"]).read_text().splitlines()[0])
    print(json.dumps({k: manifest[k] for k in ("seed", "git_describe")}))
