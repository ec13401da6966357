"""tridepth: unsupervised trinocular monocular-depth training at desk scale.

A numpy-only stack: tape-based autodiff, differentiable horizontal warping,
photometric/smoothness/consistency losses, a shared-encoder dual-decoder
network trained with interleaved two-phase Adam, disparity fusion, metrics,
a synthetic trinocular scene generator, and an SGM stereo demo.
"""

__version__ = "0.1.0"
