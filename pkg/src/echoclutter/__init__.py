"""echoclutter: reverberation-clutter simulation and spatiotemporal filtering.

Pipeline pieces: a deterministic phantom generator and parametric clutter
simulator produce paired clean/cluttered sequences; an attention-gated
residual 3D convolutional autoencoder (trained on a minimal reverse-mode
tensor engine with compiled hot kernels) and a tile-wise SVD baseline filter
them; MARE and 2D/3D SSIM score the results.
"""

__version__ = "0.1.0"

from .clutter import (ClutterSpec, GaussianPatch, PlacedClutter, SimConfig,
                      enumerate_pattern_specs, gaussian_patch, place_nf, place_rl,
                      render_clutter_volume, superimpose, time_shift_pair)
from .engine import backend
from .geometry import PhysicalCalibration, SectorGeometry, default_geometry, sector_mask
from .metrics import EvalReport, SsimConfig, evaluate, mare, ssim2d, ssim3d
from .network import (FilterNet, NetConfig, attention_gate_forward, build_network,
                      desk_config, dump_attention, filter_sequence, forward_filter)
from .phantom import PhantomConfig, generate_phantom
from .sequence import (DatasetManifest, ManifestRecord, Sequence, decode_sequence,
                       encode_sequence)
from .svdfilter import (CasoratiBlock, SvdFilterConfig, build_casorati, filter_block,
                        svd_filter_sequence)

__all__ = [
    "__version__", "backend",
    "Sequence", "encode_sequence", "decode_sequence", "DatasetManifest", "ManifestRecord",
    "SectorGeometry", "PhysicalCalibration", "sector_mask", "default_geometry",
    "PhantomConfig", "generate_phantom",
    "SimConfig", "ClutterSpec", "GaussianPatch", "PlacedClutter",
    "gaussian_patch", "enumerate_pattern_specs", "place_nf", "place_rl",
    "render_clutter_volume", "superimpose", "time_shift_pair",
    "NetConfig", "FilterNet", "build_network", "desk_config", "forward_filter",
    "filter_sequence", "attention_gate_forward", "dump_attention",
    "SvdFilterConfig", "CasoratiBlock", "build_casorati", "filter_block",
    "svd_filter_sequence",
    "SsimConfig", "EvalReport", "mare", "ssim2d", "ssim3d", "evaluate",
]
