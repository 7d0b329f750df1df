"""Training and serving for step-type classifiers and the complexity router.

Consumes the corpus formats produced by the steptag toolchain (steps and
annotation JSONL) and serves trained models over the same classifier wire
protocol the steptag gateway speaks.
"""

__version__ = "0.1.0"
