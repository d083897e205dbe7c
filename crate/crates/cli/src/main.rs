use anyhow::{bail, Context, Result};
use ccsp_core::accel::{build_bvh, build_kdtree, DEFAULT_CT_GRID};
use ccsp_core::anneal::{full_pipeline, optimize_fixed_vertices, AnnealConfig};
use ccsp_core::harness::{
    gen_curve_and_lines, gen_grass, gen_hair, gen_lines, import_svg, render_svg, reports_to_csv, run_experiment,
    sample_rays, ExperimentOptions, Orientation, Overlay,
};
use ccsp_core::trimesh::{build_cdt, optimal_refined_cdt, refine_cdt, refine_sweep, Triangulation};
use ccsp_core::Scene;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Minimum-weight constrained triangulations of 2D segment scenes and
/// ray-traversal benchmarks.
#[derive(Parser)]
#[command(name = "ccsp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scene file.
    Gen {
        #[command(subcommand)]
        family: Family,
        /// Output scene file.
        #[arg(short, long, global = true)]
        out: Option<PathBuf>,
    },
    /// Constrained Delaunay triangulation of a scene.
    Cdt {
        scene: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Quality-refined CDT. Without bounds the shortest result over the
    /// refinement grid is kept.
    Refine {
        scene: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Minimum angle in degrees.
        #[arg(long, requires = "max_area")]
        min_angle: Option<f64>,
        /// Maximum triangle area.
        #[arg(long, requires = "min_angle")]
        max_area: Option<f64>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Shorten a triangulation by simulated annealing.
    Optimize {
        scene: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Full)]
        mode: Mode,
        /// Starting triangulation for the fixed and flip modes; defaults to
        /// the best refined CDT.
        #[arg(long)]
        start: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Trace rays through triangulations, a BVH and a roped kd-tree.
    Bench {
        scene: PathBuf,
        /// Triangulations as `label=path`; a bare path is labelled by its
        /// file stem.
        #[arg(short, long = "tri")]
        tris: Vec<String>,
        /// Also measure the scene's CDT under the label `cdt`.
        #[arg(long)]
        cdt: bool,
        #[arg(long, default_value_t = 100_000)]
        rays: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Node costs tried for the BVH and kd-tree, comma separated.
        #[arg(long, value_delimiter = ',')]
        ct: Vec<f64>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Draw a scene as SVG with an optional structure and rays.
    Render {
        scene: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, conflicts_with_all = ["bvh", "kd"])]
        tri: Option<PathBuf>,
        /// Overlay the leaves of a BVH built with this node cost.
        #[arg(long, conflicts_with = "kd")]
        bvh: Option<f64>,
        /// Overlay the leaves of a kd-tree built with this node cost.
        #[arg(long)]
        kd: Option<f64>,
        #[arg(long, default_value_t = 0)]
        rays: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Convert an SVG drawing into a scene file.
    ImportSvg {
        svg: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Curve flattening tolerance in SVG units.
        #[arg(long, default_value_t = 0.1)]
        flatten_tol: f64,
        /// Endpoints closer than this (SVG units) are merged.
        #[arg(long, default_value_t = 1e-6)]
        merge_tol: f64,
    },
}

#[derive(Subcommand)]
enum Family {
    /// Straight line segments of equal length.
    Lines {
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = Orientation::Uniform)]
        orientation: Orientation,
        #[arg(long, default_value_t = 1.0)]
        length_factor: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Grass leaves growing from the bottom edge.
    Grass {
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        segments: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Hair strands hanging from both sides, n per side.
    Hair {
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 12)]
        segments: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// A curved polyline below one or two horizontal lines.
    Curve {
        #[arg(long, default_value_t = 1)]
        lines: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Refinement, annealing with fuzzy contraction, contract and polish.
    Full,
    /// Vertex moves only; topology stays fixed.
    Fixed,
    /// Vertex moves and edge flips, then greedy flips.
    Flip,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Wall-clock limit per annealing run.
    #[arg(long)]
    max_seconds: Option<f64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<AnnealConfig> {
        let mut c = match &self.config {
            Some(p) => AnnealConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => AnnealConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.levels {
            c.levels = v;
        }
        if let Some(v) = self.steps {
            c.steps_per_level = v;
        }
        if let Some(v) = self.iterations {
            c.iterations = v;
        }
        if let Some(v) = self.max_seconds {
            c.max_seconds = Some(v);
        }
        c.check()?;
        Ok(c)
    }
}

fn read_scene(path: &Path) -> Result<Arc<Scene>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading scene {}", path.display()))?;
    let scene = Scene::from_text(&text).with_context(|| format!("parsing scene {}", path.display()))?;
    Ok(Arc::new(scene))
}

fn read_tri(scene: &Arc<Scene>, path: &Path) -> Result<Triangulation> {
    Triangulation::load_native(scene.clone(), path).with_context(|| format!("reading triangulation {}", path.display()))
}

fn write_tri(t: &Triangulation, path: &Path) -> Result<()> {
    t.save_native(path).with_context(|| format!("writing {}", path.display()))?;
    log::info!("{}: {} triangles, length {:.6}", path.display(), t.triangle_count(), t.total_edge_length());
    Ok(())
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_labelled(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((label, path)) => (label.to_string(), PathBuf::from(path)),
        None => {
            let p = PathBuf::from(arg);
            let label = p.file_stem().map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
            (label, p)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { family, out } => {
            let scene = match family {
                Family::Lines {
                    n,
                    orientation,
                    length_factor,
                    seed,
                } => gen_lines(n, orientation, length_factor, seed)?,
                Family::Grass { n, segments, seed } => gen_grass(n, segments, seed)?,
                Family::Hair { n, segments, seed } => gen_hair(n, segments, seed)?,
                Family::Curve { lines } => gen_curve_and_lines(lines)?,
            };
            write_text(out.as_deref(), &scene.to_text())
        }
        Command::Cdt { scene, out } => {
            let scene = read_scene(&scene)?;
            write_tri(&build_cdt(&scene)?, &out)
        }
        Command::Refine {
            scene,
            out,
            min_angle,
            max_area,
            config,
        } => {
            let scene = read_scene(&scene)?;
            let t = match (min_angle, max_area) {
                (Some(a), Some(m)) => refine_cdt(&build_cdt(&scene)?, a, m)?,
                _ => {
                    let (t, cells) = refine_sweep(&scene, &config.load()?.refine_grid())?;
                    for c in cells {
                        log::info!("angle {} area {}: {:?} ({} vertices)", c.min_angle, c.max_area, c.length, c.vertices);
                    }
                    t
                }
            };
            write_tri(&t, &out)
        }
        Command::Optimize {
            scene,
            out,
            mode,
            start,
            config,
        } => {
            let scene = read_scene(&scene)?;
            let cfg = config.load()?;
            let t = match mode {
                Mode::Full => {
                    if start.is_some() {
                        bail!("--start only applies to the fixed and flip modes");
                    }
                    let o = full_pipeline(&scene, &cfg)?;
                    log::info!("initial length {:.6}, passes {:?}", o.initial_length, o.pass_lengths);
                    o.tri
                }
                Mode::Fixed | Mode::Flip => {
                    let s = match start {
                        Some(p) => read_tri(&scene, &p)?,
                        None => optimal_refined_cdt(&scene, &cfg.refine_grid())?,
                    };
                    optimize_fixed_vertices(s, &cfg, matches!(mode, Mode::Flip))?
                }
            };
            write_tri(&t, &out)
        }
        Command::Bench {
            scene,
            tris,
            cdt,
            rays,
            seed,
            ct,
            json,
            csv,
        } => {
            let scene = read_scene(&scene)?;
            let mut labelled = Vec::new();
            if cdt {
                labelled.push(("cdt".to_string(), build_cdt(&scene)?));
            }
            for arg in &tris {
                let (label, path) = parse_labelled(arg);
                labelled.push((label, read_tri(&scene, &path)?));
            }
            let opts = ExperimentOptions {
                ct_grid: if ct.is_empty() { DEFAULT_CT_GRID.to_vec() } else { ct },
                ray_seed: Some(seed),
            };
            let sample = sample_rays(&scene, rays, seed);
            let report = run_experiment(scene, &labelled, &sample, &opts)?;
            let doc = serde_json::json!({
                "config": {
                    "rays": rays,
                    "seed": seed,
                    "ct_grid": opts.ct_grid,
                    "triangulations": tris,
                    "cdt": cdt,
                },
                "report": report,
            });
            if let Some(p) = csv {
                write_text(Some(&p), &reports_to_csv(std::slice::from_ref(&report))?)?;
            }
            write_text(json.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&doc)?))
        }
        Command::Render {
            scene,
            out,
            tri,
            bvh,
            kd,
            rays,
            seed,
        } => {
            let scene = read_scene(&scene)?;
            let sample = sample_rays(&scene, rays, seed);
            let svg = if let Some(p) = tri {
                let t = read_tri(&scene, &p)?;
                render_svg(&scene, Overlay::Triangulation(&t), &sample)
            } else if let Some(c) = bvh {
                let b = build_bvh(scene.clone(), c);
                render_svg(&scene, Overlay::BvhLeaves(&b), &sample)
            } else if let Some(c) = kd {
                let k = build_kdtree(scene.clone(), c);
                render_svg(&scene, Overlay::KdLeaves(&k), &sample)
            } else {
                render_svg(&scene, Overlay::None, &sample)
            };
            write_text(Some(&out), &svg)
        }
        Command::ImportSvg {
            svg,
            out,
            flatten_tol,
            merge_tol,
        } => {
            let scene = import_svg(&svg, flatten_tol, merge_tol)?;
            log::info!("{}: {} segments", scene.name, scene.geometry_count());
            write_text(Some(&out), &scene.to_text())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
