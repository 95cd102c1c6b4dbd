"""Dataset construction: annotations, masks, edge maps and synthetic text images."""

from psgan.data.annotations import (
    DEFAULT_MIN_DIM,
    TextAnnotation,
    filter_polygons,
    parse_annotations,
    scaled_min_dim,
    write_annotations,
)
from psgan.data.dataset import load_dataset, read_png, write_dataset, write_png
from psgan.data.edges import edge_bits, edge_map, sobel_magnitude
from psgan.data.font import ALPHABET, GLYPHS, render_text, text_layout
from psgan.data.raster import rasterize_mask
from psgan.data.samples import Sample, build_sample, mask_bbox, replacement_content, to_images, to_tensor
from psgan.data.synth import SynthSpec, generate_synthetic, random_strings, synthetic_samples

__all__ = [
    "ALPHABET", "GLYPHS", "DEFAULT_MIN_DIM", "Sample", "SynthSpec", "TextAnnotation", "build_sample",
    "edge_bits", "edge_map", "filter_polygons", "generate_synthetic", "load_dataset", "mask_bbox",
    "parse_annotations", "random_strings", "rasterize_mask", "read_png", "render_text",
    "replacement_content", "scaled_min_dim", "sobel_magnitude", "synthetic_samples", "text_layout",
    "to_images", "to_tensor", "write_annotations", "write_dataset", "write_png",
]
