#!/usr/bin/env python3
"""End-to-end smoke test of the adag_py extension module.

Builds nothing itself: run `cargo build -p adag-py` (or --release) first.
The script locates the compiled cdylib, imports it, and drives a miniature
generate -> train -> infer -> metrics pipeline.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def load_module():
    candidates = [
        REPO / "target" / "release" / "libadag_py.so",
        REPO / "target" / "debug" / "libadag_py.so",
    ]
    built = [p for p in candidates if p.exists()]
    if not built:
        sys.exit("libadag_py.so not found; run `cargo build -p adag-py` first")
    stage = Path(tempfile.mkdtemp(prefix="adag-py-"))
    shutil.copy(built[0], stage / "adag_py.so")
    sys.path.insert(0, str(stage))
    import adag_py

    return adag_py


def check(name, ok):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    if not ok:
        sys.exit(1)


def main():
    adag = load_module()

    # Acyclicity: a 2-cycle has h = 2cosh(1) - 2, a chain has h = 0.
    value, grad = adag.acyclicity([[0.0, 1.0], [1.0, 0.0]])
    check("acyclicity two-cycle value", abs(value - (2 * math.cosh(1) - 2)) < 1e-10)
    check("acyclicity two-cycle gradient", abs(grad[0][1] - 2 * math.sinh(1)) < 1e-10)
    chain_h, _ = adag.acyclicity([[0.0, 1.3], [0.0, 0.0]])
    check("acyclicity chain is zero", chain_h < 1e-12)

    # SHD conventions.
    check("shd identical", adag.shd(3, [(0, 1)], [(0, 1)]) == 0)
    check("shd reversal counts once", adag.shd(3, [(0, 1)], [(1, 0)]) == 1)

    # Simulated SEM block satisfies the recursion exactly.
    weights = [[0.0, 1.4, 0.0], [0.0, 0.0, -0.9], [0.0, 0.0, 0.0]]
    x = adag.simulate_sem(weights, 64, seed=5)
    check("simulate_sem shape", len(x) == 3 and len(x[0]) == 64)
    check("simulate_sem finite", all(math.isfinite(v) for row in x for v in row))
    again = adag.simulate_sem(weights, 64, seed=5)
    check("simulate_sem deterministic", x == again)

    # Single-task baseline recovers a strong chain edge.
    fit, converged = adag.notears_fit(x, steps=1500)
    check("notears converged", converged)
    check("notears finds 0->1", abs(fit[0][1] - 1.4) < 0.25)
    check("notears rejects 1->0", abs(fit[1][0]) < 0.3)

    # Miniature corpus + training + zero-shot inference round trip.
    with tempfile.TemporaryDirectory(prefix="adag-corpus-") as tmp:
        corpus_dir = Path(tmp) / "corpus"
        run_dir = Path(tmp) / "run"
        adag.generate_corpus(
            str(corpus_dir), "heterogeneous", d=3, n=16, m=30, degree=1, seed=11
        )
        check("corpus manifest exists", (corpus_dir / "manifest.json").exists())
        converged = adag.train(
            str(corpus_dir),
            str(run_dir),
            epochs_first=60,
            epochs_rest=20,
            max_outer=3,
            batch_size=10,
            k=4,
            layers=2,
            seed=3,
        )
        ckpt = run_dir / "theta.ckpt"
        check("checkpoint written", ckpt.exists())

        model = adag.Model.load(str(ckpt))
        check("model dims", model.dims == (3, 16, 4, 2))
        block = adag.simulate_sem(weights, 16, seed=21)
        estimate = model.infer(block)
        check(
            "inference shape and finiteness",
            len(estimate) == 3
            and all(math.isfinite(v) for row in estimate for v in row),
        )
        rel = adag.relative_error(estimate, weights)
        check("relative error defined", rel is not None and rel >= 0.0)
        edges = adag.threshold_edges(estimate, 0.3)
        check("thresholded edges valid", all(i != j for i, j in edges))

    print("all smoke checks passed")


if __name__ == "__main__":
    main()
