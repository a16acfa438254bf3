"""Robust face alignment in three stages.

1. An adversarially trained spatial transformer removes rotation, scale
   and background clutter from detector crops (`facealign.stgan`).
2. A two-stack hourglass network regresses per-landmark heatmaps
   (`facealign.hourglass`).
3. Heatmap-intensity scores flag unreliable landmarks, which are repaired
   from an exemplar shape dictionary by masked ridge regression
   (`facealign.refine`).

`facealign.geometry` fixes the shared coordinate conventions,
`facealign.dataio` handles annotations, augmentation and the synthetic
face generator, `facealign.metrics` implements the evaluation suite, and
`facealign.cli` wires everything into subcommands.
"""

__version__ = "0.1.0"
