"""portraitforge: self-hosted identity-preserving portrait generation.

Train a per-user low-rank adapter from a handful of photos, validate and
ensemble the checkpoints by identity score, then generate portraits with
a two-stage, guidance-controlled inpaint pipeline. A deterministic mock
diffusion backend makes every contract testable without GPUs.
"""

__version__ = "0.1.0"
