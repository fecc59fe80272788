use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use rayon::prelude::*;
use serde_json::json;

use mvinpaint::cues::{assemble_cues, ConfidenceTriple, CueConfig};
use mvinpaint::fusion::{self, binarize_confidence, downsample_confidence, FusionBundle};
use mvinpaint::grid::{Grid, RgbImage};
use mvinpaint::io;
use mvinpaint::mesh::{build_mesh, build_shadow_mesh, default_eps_d, ShadowMesh};
use mvinpaint::pipeline::{self, Denoiser, ExternalDenoiser, RunConfig, StubDenoiser, StubMode};
use mvinpaint::scene::AutoregressiveSet;
use mvinpaint::schedule::{
    build_plan, default_start, default_subset_size, DistanceMatrix, FileEstimator,
    GeometryEstimator, GroundTruthEstimator, InpaintPlan, PlanMode,
};
use mvinpaint::synth::{self, SynthConfig};

use crate::{
    CuesArgs, Estimator, FuseArgs, MeshArgs, Mode, OccluderMode, PlanArgs, PlanOptions, RunArgs,
    StubKind, SynthArgs,
};

/// Bad command-line input that the library never sees.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

impl From<Mode> for PlanMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Narrow => PlanMode::Narrow,
            Mode::Wide => PlanMode::Wide,
        }
    }
}

impl From<OccluderMode> for synth::OccluderMode {
    fn from(m: OccluderMode) -> Self {
        match m {
            OccluderMode::Object => synth::OccluderMode::Object,
            OccluderMode::Scene => synth::OccluderMode::Scene,
        }
    }
}

pub fn mesh(a: MeshArgs) -> Result<()> {
    let camera = io::read_camera(&a.camera)?;
    let depth = io::read_depth(&a.depth)?;
    let image = match &a.image {
        Some(p) => io::read_rgb(p)?,
        None => RgbImage::filled(depth.width(), depth.height(), [0.5; 3]),
    };
    let mesh = build_mesh(&depth, &image, &camera, a.eps_edge)?;
    let eps_d = a
        .eps_d
        .unwrap_or_else(|| default_eps_d(&mesh.mesh.positions));
    let shadow = if mesh.silhouette_edges.is_empty() {
        ShadowMesh::default()
    } else {
        build_shadow_mesh(&mesh, eps_d)?
    };
    info!(
        "{} vertices, {} faces, {} silhouette edges",
        mesh.num_vertices(),
        mesh.num_faces(),
        mesh.silhouette_edges.len()
    );
    io::write_obj(&a.out.join("mesh.obj"), &mesh.mesh)?;
    io::write_obj(&a.out.join("shadow.obj"), &shadow.mesh)?;
    io::write_json(&a.out.join("silhouettes.json"), &mesh.silhouette_edges)?;
    io::write_json(
        &a.out.join("provenance.json"),
        &json!({
            "depth": a.depth,
            "camera": a.camera,
            "image": a.image,
            "eps_edge": a.eps_edge,
            "eps_d": eps_d,
            "vertices": mesh.num_vertices(),
            "faces": mesh.num_faces(),
            "silhouette_edges": mesh.silhouette_edges.len(),
            "shadow_faces": shadow.num_faces(),
        }),
    )?;
    Ok(())
}

pub fn cues(a: CuesArgs) -> Result<()> {
    let views = io::read_scene(&a.scene)?;
    let n = views.len();
    if a.target >= n {
        return Err(usage(format!(
            "target {} out of range for {n} views",
            a.target
        )));
    }
    let refs: Vec<usize> = if a.refs.is_empty() {
        (0..n).filter(|&i| i != a.target).collect()
    } else {
        a.refs.clone()
    };
    if let Some(&r) = refs.iter().find(|&&r| r >= n || r == a.target) {
        return Err(usage(format!("invalid reference {r}")));
    }
    let hint = match a.hint {
        Some(h) if h >= n => return Err(usage(format!("hint view {h} out of range"))),
        Some(h) => Some(&views[h].image),
        None => None,
    };
    let cfg = CueConfig {
        eps_edge: a.eps_edge,
        eps_d: a.eps_d,
    };
    for &r in &refs {
        let cues = assemble_cues(&views, r, a.target, hint, &cfg)
            .with_context(|| format!("reference {r}"))?;
        synth::write_cues(&a.out.join(r.to_string()), &cues, a.target)?;
    }
    Ok(())
}

fn read_estimate(path: &Path, channels: usize) -> Result<Vec<Grid<f64>>> {
    let pfm = io::read_pfm(path, "estimate")?;
    if pfm.channels != 1 || channels == 0 || pfm.height % channels != 0 {
        return Err(usage(format!(
            "{}: expected a single-channel stack of {channels} planes",
            path.display()
        )));
    }
    let h = pfm.height / channels;
    Ok(pfm
        .data
        .chunks_exact(pfm.width * h)
        .map(|c| Grid::from_vec(pfm.width, h, c.iter().map(|&v| f64::from(v)).collect()))
        .collect())
}

pub fn fuse(a: FuseArgs) -> Result<()> {
    let distances: Vec<f64> = io::read_json(&a.dir.join("distances.json"), "distances")?;
    if distances.len() > usize::from(u8::MAX) + 1 {
        return Err(usage("at most 256 references can be fused"));
    }
    let mut estimates = Vec::with_capacity(distances.len());
    let mut confidences = Vec::with_capacity(distances.len());
    for r in 0..distances.len() {
        let sub = a.dir.join(r.to_string());
        let planes = read_estimate(&sub.join("estimate.pfm"), a.channels)?;
        let (w, h) = planes[0].dims();
        let load = |name: &str| -> Result<_> {
            let raw = io::read_gray(&sub.join(format!("{name}.png")), name)?;
            let mask = binarize_confidence(&raw, a.threshold);
            Ok(match mask.dims() == (w, h) {
                true => mask,
                false => downsample_confidence(&mask, w, h)?,
            })
        };
        confidences.push(ConfidenceTriple {
            front: load("cf")?,
            back: load("cb")?,
            shadow: load("cs")?,
        });
        estimates.push(planes);
    }
    let result = fusion::fuse(&FusionBundle {
        estimates,
        confidences,
        distances,
    })?;
    io::write_planes_pfm(&a.out.join("fused.pfm"), &result.fused)?;
    io::write_index_png(
        &a.out.join("selection.png"),
        &result.selection.map(|&s| s as u8),
    )?;
    io::write_index_png(&a.out.join("level.png"), &result.level)?;
    Ok(())
}

fn make_plan(set: &AutoregressiveSet, o: &PlanOptions) -> Result<InpaintPlan> {
    let n = set.len();
    let d = DistanceMatrix::from_cameras(&set.cameras()?);
    let start = o.start.unwrap_or_else(|| default_start(o.seed, n));
    let m = o.m.unwrap_or_else(|| default_subset_size(n));
    let flags: Vec<bool> = set.views.iter().map(|v| v.inpainted).collect();
    Ok(build_plan(
        &d,
        start,
        m,
        o.mode.into(),
        o.max_refs,
        &flags,
        o.seed,
    )?)
}

pub fn plan(a: PlanArgs) -> Result<()> {
    let views = io::read_scene(&a.scene)?;
    if views.is_empty() {
        return Err(usage("scene has no views"));
    }
    let plan = make_plan(&AutoregressiveSet::new(views), &a.plan)?;
    io::write_json(&a.out, &plan)?;
    Ok(())
}

fn image_depth_pairs(images: &Path, depths: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let listing = fs::read_dir(images)
        .map_err(|e| usage(format!("cannot list {}: {e}", images.display())))?;
    let mut pngs: Vec<PathBuf> = listing
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    pngs.sort();
    if pngs.is_empty() {
        return Err(usage(format!("no PNG images in {}", images.display())));
    }
    Ok(pngs
        .into_iter()
        .map(|p| {
            let stem = p.file_stem().unwrap_or_default().to_string_lossy();
            let depth = depths.join(format!("{stem}.pfm"));
            (p, depth)
        })
        .collect())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => io::read_json::<SynthConfig>(p, "synth config")?,
        None => SynthConfig::for_mode(a.mode.into()),
    };
    cfg.seed = a.seed;
    cfg.mode = a.mode.into();
    cfg.validate()?;
    let pairs = image_depth_pairs(&a.images, &a.depths)?;
    let inputs = pairs
        .iter()
        .map(|(img, dep)| Ok((io::read_rgb(img)?, io::read_depth(dep)?)))
        .collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()?;
    pool.install(|| {
        (0..a.n).into_par_iter().try_for_each(|i| -> Result<()> {
            let (image, depth) = &inputs[i % inputs.len()];
            let sample = synth::make_sample(image, depth, &cfg, i as u64).with_context(|| {
                format!("sample {i} from {}", pairs[i % pairs.len()].0.display())
            })?;
            synth::write_sample(&a.out.join(format!("sample_{i:05}")), &sample)?;
            Ok(())
        })
    })?;
    io::write_json(&a.out.join("config.json"), &cfg)?;
    info!("wrote {} samples to {}", a.n, a.out.display());
    Ok(())
}

pub fn run(a: RunArgs) -> Result<()> {
    let views = io::read_scene(&a.scene)?;
    let estimator: Box<dyn GeometryEstimator> = match a.estimator {
        Estimator::Gt => Box::new(
            GroundTruthEstimator::from_views(&views)?
                .with_perturbation(a.perturb, a.plan_options.seed),
        ),
        Estimator::File => {
            let dir = a
                .geometry
                .clone()
                .ok_or_else(|| usage("--estimator file needs --geometry"))?;
            Box::new(FileEstimator { dir })
        }
    };
    let denoiser: Box<dyn Denoiser> = match &a.denoiser_exec {
        Some(program) => Box::new(ExternalDenoiser {
            program: program.clone(),
            args: Vec::new(),
            work_dir: a.out.join("requests"),
        }),
        None => Box::new(StubDenoiser {
            mode: match a.stub {
                StubKind::CopyConfident => StubMode::CopyConfident,
                StubKind::ConstantFill => StubMode::ConstantFill,
            },
            fill: [a.fill[0], a.fill[1], a.fill[2]],
        }),
    };
    let plan = match &a.plan {
        Some(p) => Some(io::read_json::<InpaintPlan>(p, "plan")?),
        None => None,
    };
    let o = &a.plan_options;
    let cfg = RunConfig {
        seed: o.seed,
        start: o.start,
        m: o.m,
        mode: o.mode.into(),
        max_references: o.max_refs,
        cue: CueConfig {
            eps_edge: a.eps_edge,
            eps_d: a.eps_d,
        },
        jobs: a.jobs,
        record_timings: a.timings,
        plan,
    };
    let outcome = pipeline::run(views, estimator.as_ref(), denoiser.as_ref(), &cfg)?;
    pipeline::write_outcome(&a.out, &outcome)?;
    info!(
        "inpainted {} views, geometry version {}",
        outcome.report.events.len(),
        outcome.report.final_geometry_version
    );
    Ok(())
}
