"""Run every bundled config and print each check's status and the exit code.

Run: python demos/run_configs.py [output-dir]
"""

import sys
import tempfile
from pathlib import Path

from ratelab import cli

CONFIGS = ["vb_testbed", "vb_anchor", "vh_testbed", "vb_corrupted"]

out_root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="ratelab-"))
for name in CONFIGS:
    result = cli.run_config(cli.load_config(name), out_root / name, threads=cli.thread_cap())
    print(f"{name}: exit {result.exit_code}")
    for rep in result.reports:
        print(f"  {rep.status:>12}  {rep.check_id}")
print(f"artifacts under {out_root}")
