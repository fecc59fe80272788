//! The autoregressive driver: estimate geometry, plan, inpaint the wide-baseline
//! subset one view at a time, then propagate to the remaining views together.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cues::{assemble_cues, select_hint, ConfidenceTriple, CueConfig, CueSet};
use crate::error::{Error, Result};
use crate::fusion::{fuse, FusionBundle, LEVEL_FRONT};
use crate::grid::{Grid, Mask, RgbImage};
use crate::io;
use crate::rng::substream;
use crate::scene::{AutoregressiveSet, View};
use crate::schedule::{
    build_plan, default_start, default_subset_size, refresh_geometry, update_after_inpaint,
    DistanceMatrix, GeometryEstimator, InpaintPlan, PlanMode, DEFAULT_MAX_REFERENCES,
};
use crate::synth::write_cues;

/// What a denoiser sees for one target.
pub struct DenoiseRequest<'a> {
    pub target: usize,
    pub image: &'a RgbImage,
    pub mask: &'a Mask,
    pub cues: &'a [CueSet],
    pub hint: Option<&'a RgbImage>,
    pub seed: u64,
}

/// One reference-conditioned prediction with its confidences.
#[derive(Clone, Debug)]
pub struct ReferenceStream {
    pub image: RgbImage,
    pub confidence: ConfidenceTriple,
}

pub enum DenoiseOutput {
    /// One stream per cue set, combined by hierarchical fusion.
    PerReference(Vec<ReferenceStream>),
    /// An already combined image.
    Final(RgbImage),
}

pub trait Denoiser: Send + Sync {
    fn denoise(&self, request: &DenoiseRequest) -> Result<DenoiseOutput>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StubMode {
    /// Copies front-confident projected color, fills the rest of the mask.
    CopyConfident,
    ConstantFill,
}

/// Deterministic stand-in for a diffusion model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StubDenoiser {
    pub mode: StubMode,
    pub fill: [f64; 3],
}

impl Default for StubDenoiser {
    fn default() -> Self {
        Self {
            mode: StubMode::CopyConfident,
            fill: [0.5; 3],
        }
    }
}

/// Confidences read off the cues: `(F ∧ ¬C) ∨ ¬M`, `B ∧ M`, `C ∧ F ∧ M`.
pub fn cue_confidence(cues: &CueSet, mask: &Mask) -> ConfidenceTriple {
    ConfidenceTriple {
        front: cues.front.and(&cues.shadow.not()).or(&mask.not()),
        back: cues.back.and(mask),
        shadow: cues.shadow.and(&cues.front).and(mask),
    }
}

impl Denoiser for StubDenoiser {
    fn denoise(&self, req: &DenoiseRequest) -> Result<DenoiseOutput> {
        let fill_only = || {
            req.image
                .zip_map(req.mask, |p, m| if *m { self.fill } else { *p })
        };
        if req.cues.is_empty() {
            return Ok(DenoiseOutput::Final(fill_only()));
        }
        let streams = req
            .cues
            .iter()
            .map(|cues| {
                let confidence = cue_confidence(cues, req.mask);
                let image = match self.mode {
                    StubMode::ConstantFill => fill_only(),
                    StubMode::CopyConfident => {
                        Grid::from_fn(req.image.width(), req.image.height(), |x, y| {
                            if !*req.mask.get(x, y) {
                                *req.image.get(x, y)
                            } else if *confidence.front.get(x, y) {
                                *cues.color.get(x, y)
                            } else {
                                self.fill
                            }
                        })
                    }
                };
                ReferenceStream { image, confidence }
            })
            .collect();
        Ok(DenoiseOutput::PerReference(streams))
    }
}

/// Runs an external program on a request directory and reads back `out.png`.
///
/// The directory holds `image.png`, `mask.png`, optional `hint.png`,
/// `request.json` and one `cues/<ref>/` directory per reference.
#[derive(Clone, Debug)]
pub struct ExternalDenoiser {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub work_dir: PathBuf,
}

#[derive(Serialize)]
struct RequestMeta {
    target: usize,
    references: Vec<usize>,
    seed: u64,
}

impl Denoiser for ExternalDenoiser {
    fn denoise(&self, req: &DenoiseRequest) -> Result<DenoiseOutput> {
        let dir = self.work_dir.join(format!("view_{:03}", req.target));
        let fail = |message: String| Error::Denoiser {
            view: req.target,
            message,
        };
        io::write_rgb(&dir.join("image.png"), req.image)?;
        io::write_mask(&dir.join("mask.png"), req.mask)?;
        if let Some(h) = req.hint {
            io::write_rgb(&dir.join("hint.png"), h)?;
        }
        for c in req.cues {
            write_cues(
                &dir.join("cues").join(c.reference.to_string()),
                c,
                req.target,
            )?;
        }
        io::write_json(
            &dir.join("request.json"),
            &RequestMeta {
                target: req.target,
                references: req.cues.iter().map(|c| c.reference).collect(),
                seed: req.seed,
            },
        )?;
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg(&dir)
            .status()
            .map_err(|e| fail(format!("cannot start {}: {e}", self.program.display())))?;
        if !status.success() {
            return Err(fail(format!(
                "{} exited with {status}",
                self.program.display()
            )));
        }
        let out = io::read_rgb(&dir.join("out.png")).map_err(|e| fail(e.to_string()))?;
        if out.dims() != req.image.dims() {
            return Err(fail("out.png has the wrong size".into()));
        }
        Ok(DenoiseOutput::Final(out))
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub start: Option<usize>,
    pub m: Option<usize>,
    pub mode: PlanMode,
    pub max_references: usize,
    pub cue: CueConfig,
    /// Worker threads for the propagation stage.
    pub jobs: usize,
    pub record_timings: bool,
    /// Precomputed plan used instead of building one.
    pub plan: Option<InpaintPlan>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            start: None,
            m: None,
            mode: PlanMode::Wide,
            max_references: DEFAULT_MAX_REFERENCES,
            cue: CueConfig::default(),
            jobs: 1,
            record_timings: false,
            plan: None,
        }
    }
}

/// A target pixel copied from a reference pixel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FillRecord {
    pub x: usize,
    pub y: usize,
    pub reference: usize,
    pub source: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub stage: u8,
    pub target: usize,
    pub references: Vec<usize>,
    /// Whether each reference was already inpainted when it was read.
    pub references_inpainted: Vec<bool>,
    pub hint: Option<usize>,
    pub geometry_version: u64,
    pub filled_pixels: usize,
    pub copied_pixels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub plan: InpaintPlan,
    pub start: usize,
    pub stage1_length: usize,
    pub initial_geometry_version: u64,
    pub final_geometry_version: u64,
    pub events: Vec<Event>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub set: AutoregressiveSet,
    pub report: RunReport,
    /// Copied pixels per view.
    pub fills: BTreeMap<usize, Vec<FillRecord>>,
}

struct Inpainted {
    image: RgbImage,
    elapsed_ms: f64,
    event: Event,
    fills: Vec<FillRecord>,
}

fn inpaint_target(
    set: &AutoregressiveSet,
    target: usize,
    references: &[usize],
    stage: u8,
    denoiser: &dyn Denoiser,
    cfg: &RunConfig,
) -> Result<Inpainted> {
    let started = Instant::now();
    let view = &set.views[target];
    let hint_index = select_hint(target, set);
    let hint = hint_index.map(|h| &set.views[h].image);
    let cues = references
        .iter()
        .map(|&r| assemble_cues(&set.views, r, target, hint, &cfg.cue))
        .collect::<Result<Vec<_>>>()?;
    let seed = substream(cfg.seed, "denoise", target as u64).random();
    let mask = &view.mask;
    let request = DenoiseRequest {
        target,
        image: &view.image,
        mask,
        cues: &cues,
        hint,
        seed,
    };
    let mut fills = Vec::new();
    let combined = match denoiser.denoise(&request)? {
        DenoiseOutput::Final(img) => img,
        DenoiseOutput::PerReference(streams) => {
            if streams.len() != cues.len() {
                return Err(Error::Denoiser {
                    view: target,
                    message: format!("{} streams for {} references", streams.len(), cues.len()),
                });
            }
            let bundle = FusionBundle {
                estimates: streams
                    .iter()
                    .map(|s| (0..3).map(|c| s.image.map(|p| p[c])).collect())
                    .collect(),
                confidences: streams.iter().map(|s| s.confidence.clone()).collect(),
                distances: cues.iter().map(|c| c.distance).collect(),
            };
            let fused = fuse(&bundle)?;
            for y in 0..mask.height() {
                for x in 0..mask.width() {
                    let r = *fused.selection.get(x, y);
                    if *mask.get(x, y) && *fused.level.get(x, y) == LEVEL_FRONT {
                        if let Some(s) = cues[r].source_pixel.get(x, y) {
                            fills.push(FillRecord {
                                x,
                                y,
                                reference: cues[r].reference,
                                source: [s.x, s.y],
                            });
                        }
                    }
                }
            }
            Grid::from_fn(mask.width(), mask.height(), |x, y| {
                [0, 1, 2].map(|c| *fused.fused[c].get(x, y))
            })
        }
    };
    if combined.dims() != view.image.dims() {
        return Err(Error::Denoiser {
            view: target,
            message: "output has the wrong size".into(),
        });
    }
    // pixels outside the mask are never altered
    let image = Grid::from_fn(mask.width(), mask.height(), |x, y| {
        *if *mask.get(x, y) {
            combined.get(x, y)
        } else {
            view.image.get(x, y)
        }
    });
    let event = Event {
        stage,
        target,
        references: references.to_vec(),
        references_inpainted: references.iter().map(|&r| set.views[r].inpainted).collect(),
        hint: hint_index,
        geometry_version: set.geometry_version,
        filled_pixels: mask.count(),
        copied_pixels: fills.len(),
    };
    Ok(Inpainted {
        image,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        event,
        fills,
    })
}

pub fn run(
    views: Vec<View>,
    estimator: &dyn GeometryEstimator,
    denoiser: &dyn Denoiser,
    cfg: &RunConfig,
) -> Result<RunOutcome> {
    let n = views.len();
    if n == 0 {
        return Err(Error::Config("scene has no views".into()));
    }
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64() * 1e3);
        clock = Instant::now();
    };

    let mut set = AutoregressiveSet::new(views);
    refresh_geometry(&mut set, estimator, &vec![false; n])
        .map_err(|e| e.in_stage("initial geometry"))?;
    let initial_version = set.geometry_version;
    lap("initial_geometry", &mut timings);

    let plan = if let Some(plan) = &cfg.plan {
        plan.validate(n).map_err(|e| e.in_stage("plan"))?;
        plan.clone()
    } else {
        let cams = set.cameras().map_err(|e| e.in_stage("plan"))?;
        let d = DistanceMatrix::from_cameras(&cams);
        let start = cfg.start.unwrap_or_else(|| default_start(cfg.seed, n));
        let m = cfg.m.unwrap_or_else(|| default_subset_size(n));
        let flags: Vec<bool> = set.views.iter().map(|v| v.inpainted).collect();
        build_plan(&d, start, m, cfg.mode, cfg.max_references, &flags, cfg.seed)
            .map_err(|e| e.in_stage("plan"))?
    };
    lap("plan", &mut timings);

    let mut events = Vec::new();
    let mut fills = BTreeMap::new();
    for &t in &plan.stage1 {
        if set.views[t].inpainted {
            continue;
        }
        let refs = plan.references.get(&t).map_or(&[][..], Vec::as_slice);
        let done =
            inpaint_target(&set, t, refs, 1, denoiser, cfg).map_err(|e| e.in_stage("stage 1"))?;
        let mut update = BTreeMap::new();
        update.insert(t, done.image);
        set = update_after_inpaint(&set, &update, estimator).map_err(|e| e.in_stage("stage 1"))?;
        timings.insert(format!("view_{t:03}"), done.elapsed_ms);
        events.push(done.event);
        fills.insert(t, done.fills);
    }
    lap("stage1", &mut timings);

    let pending: Vec<usize> = plan
        .stage2
        .iter()
        .copied()
        .filter(|&t| !set.views[t].inpainted)
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<Inpainted>> = pool.install(|| {
        pending
            .par_iter()
            .map(|&t| {
                let refs = plan.references.get(&t).map_or(&[][..], Vec::as_slice);
                inpaint_target(&set, t, refs, 2, denoiser, cfg)
            })
            .collect()
    });
    let mut update = BTreeMap::new();
    for (&t, r) in pending.iter().zip(results) {
        let done = r.map_err(|e| e.in_stage("stage 2"))?;
        update.insert(t, done.image);
        timings.insert(format!("view_{t:03}"), done.elapsed_ms);
        events.push(done.event);
        fills.insert(t, done.fills);
    }
    set = update_after_inpaint(&set, &update, estimator).map_err(|e| e.in_stage("stage 2"))?;
    lap("stage2", &mut timings);

    Ok(RunOutcome {
        report: RunReport {
            start: plan.stage1[0],
            stage1_length: plan.stage1.len(),
            plan,
            initial_geometry_version: initial_version,
            final_geometry_version: set.geometry_version,
            events,
            timings_ms: cfg.record_timings.then_some(timings),
        },
        set,
        fills,
    })
}

/// Writes the completed scene, `report.json` and `fills.json` into `dir`.
pub fn write_outcome(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    io::write_scene(dir, &outcome.set.views)?;
    io::write_json(&dir.join("report.json"), &outcome.report)?;
    io::write_json(&dir.join("fills.json"), &outcome.fills)
}
