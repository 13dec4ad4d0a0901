"""The command line front end, then the runtime scaling of both estimators."""
import subprocess
import sys
import tempfile
from pathlib import Path

from passloc.experiments import node_scaling, particle_scaling


def passloc(*args):
    cmd = [sys.executable, "-m", "passloc", *args]
    print("$ passloc " + " ".join(args))
    out = subprocess.run(cmd, capture_output=True, text=True)
    text = out.stdout or out.stderr
    print("\n".join(line[:110] for line in text.splitlines()[:6]))
    print(f"(exit {out.returncode})\n")


with tempfile.TemporaryDirectory() as d:
    est = str(Path(d) / "est.csv")
    passloc("bcrb", "-o", "-")
    passloc("estimate", "--algo", "parametric", "--seed", "7", "-o", est)
    print("\n".join(Path(est).read_text().splitlines()[1:4]), "\n")
    passloc("estimate", "--config", est, "--seed", "8", "-o", "-", "--trace", "")
    passloc("bcrb", "--scenario", str(Path(d) / "missing.json"))

print("particle BP runtime vs particle count (no PSO)")
ps = particle_scaling(grid=(250, 500, 1000), repeats=1)
for n, s in zip(ps.grid, ps.seconds):
    print(f"  {n:5d} particles: {s * 1e3:7.1f} ms")
print(f"  fitted exponent {ps.exponent:.2f}")

print("parametric BP runtime vs node count")
ns = node_scaling(grid=(4, 8, 16, 32), repeats=3)
for n, s in zip(ns.grid, ns.seconds):
    print(f"  {n:3d} nodes: {s * 1e3:7.2f} ms")
print(f"  fitted exponent {ns.exponent:.2f}")
