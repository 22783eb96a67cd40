//! File formats: grids, template masks and areas of interest.

mod grid_io;
mod mask;

pub use grid_io::{
    decode_grid, encode_grid, load_grid, save_grid, save_grid_as, sidecar_path, GridEncoding,
    GridMetadata, IntensityMapping, LuminancePolicy, SIDECAR_SUFFIX,
};
pub use mask::{
    aoi_to_string, mask_to_string, parse_aoi, parse_mask, read_aoi, read_mask, write_aoi,
    write_mask, AreaOfInterest, Blob, TemplateMask, AOI_MAGIC, FORMAT_VERSION, MASK_MAGIC,
};
