"""End-to-end command-line pipeline in a temporary directory.

Run: python3 demos/05_cli_pipeline.py

Equivalent shell session:
    heterograph generate --config cfg.json --out bundles
    heterograph ablate   --config cfg.json --out ablate
    heterograph analyze  --config cfg.json --out analysis
    heterograph report   --config cfg.json --out report
"""

import json
import tempfile
from pathlib import Path

from heterograph.cli import main

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    cfg = {
        "seed": 42,
        "generate": {"h_grid": [0.1, 0.5, 0.9], "replicates": 1, "n": 400},
        "ablate": {"bundle_root": str(tmp / "bundles"), "axes": ["D1"],
                   "settings": {"dropout": 0.0, "max_epochs": 300, "patience": 50}},
        "analyze": {"thresholds": {"h": [0.0, 0.1, 0.2, 0.5, 1.0]}, "two_hop": {}},
        "report": {"inputs": [str(tmp / "ablate")]},
    }
    path = tmp / "cfg.json"
    path.write_text(json.dumps(cfg))
    for cmd, out in (("generate", "bundles"), ("ablate", "ablate"), ("analyze", "analysis"), ("report", "report")):
        print(f"\n$ heterograph {cmd} --config cfg.json --out {out}")
        code = main([cmd, "--config", str(path), "--out", str(tmp / out)])
        assert code == 0, f"{cmd} exited with {code}"
    print("\nreport.md:\n" + (tmp / "report" / "report.md").read_text())
