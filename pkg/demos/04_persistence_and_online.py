"""Offline/online split: build a reduced model, store it, evaluate it elsewhere.

The same steps are available from the shell:

    weighted-rb offline --mode output --weighting pdf --output-dir demo-out
    weighted-rb online demo-out/rom-output-pdf.bin --xi-ref

Run with ``python3 demos/04_persistence_and_online.py``.
"""
from pathlib import Path

import numpy as np

from weighted_rb.harness import online_report, profile, run_offline
from weighted_rb.rom import load_reduced_model

cfg = profile("desk").replace(output_dir="demo-out", mode="output", weighting="pdf", n_max=10)
result, rom_path, trace_path = run_offline(cfg)
print(f"ROM written to {rom_path} ({Path(rom_path).stat().st_size} bytes)")
print(trace_path.read_text().splitlines()[0])

# the online stage only needs the container; no mesh, no FE matrices
rm, extra = load_reduced_model(rom_path)
print("stored arrays:", ", ".join(f"{k}{v.shape}" for k, v in rm.arrays().items() if v.ndim > 1))
print("offline extras:", {k: v.shape for k, v in extra.items()})

xi = np.append(np.zeros(10), 5.0)
for key, value in online_report(rm, xi).items():
    print(f"  {key:18s} {value}")

# bitwise identical to the in-memory model
assert online_report(rm, xi) == online_report(result.reduced_model, xi)

# outside the parameter domain the density, and so the weighted estimators, vanish
print("outside the support:", online_report(rm, np.append(np.zeros(10), 12.0))["delta_s_weighted"])
