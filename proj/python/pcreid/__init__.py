"""Point-cloud person re-identification: rendering, tracking, imprints and the CLI."""

from ._core import (
    Model,
    accumulate_imprint,
    embed,
    generate_dataset,
    load_checkpoint,
    main,
    render_views,
    solve_assignment,
)

__all__ = [
    "Model",
    "accumulate_imprint",
    "embed",
    "generate_dataset",
    "load_checkpoint",
    "main",
    "render_views",
    "solve_assignment",
]
