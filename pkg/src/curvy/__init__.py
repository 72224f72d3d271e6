"""Cross-section based shape encoding and GAN reconstruction.

The pipeline: slice a triangle mesh into planar contours
(:mod:`curvy.geometry`), encode each contour as a handful of degree-5
parametric pieces (:mod:`curvy.splitfit`), stack the piece coefficients
into a graph (:mod:`curvy.graphrep`), and train a graph-conditioned
generator (:mod:`curvy.curvygan`) to predict the latent code of a
point-cloud autoencoder (:mod:`curvy.pointae`). :mod:`curvy.metrics`
evaluates reconstructions and :mod:`curvy.cli` exposes each stage as a
subcommand.
"""
from .errors import (CurvyError, DivergenceError, FitError, GeometryError,
                     MeshFormatError)
from .geometry import (Contour, Plane, TriangleMesh, load_mesh,
                       normalize_mesh, read_ply, sample_planes,
                       sample_surface, slice_mesh, write_obj, write_ply)
from .splitfit import (CrossSection, CrossSectionSet, Piece, SamplingConfig,
                       adaptive_split, douglas_peucker, eval_piece,
                       fit_cross_section, max_fit_residual,
                       sample_cross_section, split_and_fit, turning_angles,
                       upsample_midpoints)
from .graphrep import CSGraph, build_graph, node_permutation, permute_graph, ring_adjacency
from .pointae import AEConfig, AEParams, decode, encode, train_ae
from .curvygan import (DiscriminatorParams, GanConfig, GanLosses,
                       GeneratorParams, discriminate, discriminator_loss,
                       generate, generator_loss, reconstruct, train_gan)
from .metrics import (EvalReport, ShapeSample, chamfer, hausdorff,
                      section_set_from_mesh, sweep_cross_sections)
from . import dataio, primitives, tensornn

__version__ = "0.1.0"

__all__ = [
    "CurvyError", "MeshFormatError", "GeometryError", "FitError",
    "DivergenceError",
    "TriangleMesh", "Plane", "Contour", "load_mesh", "normalize_mesh",
    "read_ply", "write_ply", "write_obj", "sample_planes", "sample_surface",
    "slice_mesh",
    "Piece", "CrossSection", "CrossSectionSet", "SamplingConfig",
    "adaptive_split", "douglas_peucker", "eval_piece", "fit_cross_section",
    "max_fit_residual", "sample_cross_section", "split_and_fit",
    "turning_angles", "upsample_midpoints",
    "CSGraph", "build_graph", "node_permutation", "permute_graph",
    "ring_adjacency",
    "AEConfig", "AEParams", "encode", "decode", "train_ae",
    "GanConfig", "GanLosses", "GeneratorParams", "DiscriminatorParams",
    "generate", "generator_loss", "discriminate", "discriminator_loss",
    "reconstruct", "train_gan",
    "chamfer", "hausdorff", "ShapeSample", "EvalReport",
    "section_set_from_mesh", "sweep_cross_sections",
    "dataio", "primitives", "tensornn",
    "__version__",
]
