//! Scene generators, SVG import, ray sampling, benchmark runs and SVG output.

mod experiment;
mod generate;
mod rays;
mod render;
mod svg;

pub use experiment::{
    reports_to_csv, run_experiment, ExperimentOptions, ExperimentReport, MeanStats, MethodKind, MethodReport,
    HIT_REL_TOL, ROPE_COST_RULE,
};
pub use generate::{
    gen_curve_and_lines, gen_grass, gen_hair, gen_lines, line_length, Orientation, CURVE_SEGMENTS, GEN_CROSS_TOL,
    GRASS_MARGIN, GRASS_SWAY, HAIR_EMPTY_CENTER, HAIR_EMPTY_RADIUS, MAX_LINE_LENGTH, ORIENTATION_JITTER_DEG,
    TOP_LINE_GAP,
};
pub use rays::{sample_rays, start_triangles, ORIGIN_CLEARANCE};
pub use render::{render_svg, Overlay};
pub use svg::{import_svg, import_svg_str, merge_endpoints, split_t_junctions, svg_segments, SVG_MARGIN};
