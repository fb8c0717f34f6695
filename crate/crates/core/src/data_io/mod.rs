//! Toy datasets, CSV sample files and SVG plots.

mod csv;
mod datasets;
mod svg;

pub use csv::{format_points, parse_points, read_csv, write_csv};
pub use datasets::{builtin, single_point, Dataset, BUILTIN_NAMES};
pub use svg::{emit_svg_scatter, render_svg, SvgStyle};
