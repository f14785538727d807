"""Neural surface reconstruction toolkit.

Learns a signed distance field and a radiance field from posed multi-view
images, optionally guided by scale-ambiguous depth maps anchored to sparse
metric observations.
"""

import json as _json

from tns._tns import (
    analytic_sdf,
    chamfer,
    evaluate,
    extract_mesh,
    generate,
    render_frame,
    sdf,
)
from tns._tns import train as _train

__all__ = [
    "analytic_sdf",
    "chamfer",
    "evaluate",
    "extract_mesh",
    "generate",
    "render_frame",
    "sdf",
    "train",
]


def train(data_dir, out_dir, config=None, guide_frames=(0,), fixed_lambda=False):
    """Train a model on a generated dataset directory.

    config may be a dict of overrides (iterations, batch_rays, n_samples,
    lr, arch, ...). Returns the path of the final checkpoint.
    """
    config_json = _json.dumps(config) if config else ""
    return _train(data_dir, out_dir, config_json, list(guide_frames), fixed_lambda)
