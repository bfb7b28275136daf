"""cadfit: fit sketch-extrude CAD construction sequences to voxel SDF targets.

The package covers the whole edit loop: a token grammar for sequences
(:mod:`cadfit.sequence`), an analytic SDF renderer with CSG composition and
per-segment attribution (:mod:`cadfit.kernel`), shape metrics
(:mod:`cadfit.metrics`), an influence planner that picks segments to mask
(:mod:`cadfit.planner`), a grammar-preserving candidate generator
(:mod:`cadfit.generator`), the iterative engine (:mod:`cadfit.engine`) and
synthetic benchmarks plus a command line front end (:mod:`cadfit.synth`,
:mod:`cadfit.cli`).
"""

__version__ = "0.1.0"
