//! Wide-baseline view ordering, two-stage inpainting plans and geometry updates.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::camera::{view_distance, Camera};
use crate::error::{Error, Result};
use crate::grid::RgbImage;
use crate::io;
use crate::rng::substream;
use crate::scene::{AutoregressiveSet, DepthMap, View};

pub const DEFAULT_MAX_REFERENCES: usize = 4;

/// Directional view distances, `D[i][j] = view_distance(i, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_cameras(cameras: &[Camera]) -> Self {
        let n = cameras.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    data[i * n + j] = view_distance(&cameras[i], &cameras[j]);
                }
            }
        }
        Self { n, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::Config(format!(
                    "distance row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row[i] != 0.0 {
                return Err(Error::Config(format!(
                    "distance diagonal entry {i} is {}",
                    row[i]
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Config(format!("invalid distance {v} in row {i}")));
            }
            data.extend(row);
        }
        Ok(Self { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.n.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }
}

/// Start view drawn from the run seed when none is given.
pub fn default_start(seed: u64, n: usize) -> usize {
    substream(seed, "start", 0).random_range(0..n)
}

/// Wide-baseline subset size for `n` views: `ceil(n / 4)` clamped to `[3, n]`.
pub fn default_subset_size(n: usize) -> usize {
    n.div_ceil(4).max(3).min(n)
}

fn check_args(d: &DistanceMatrix, start: usize, m: usize) -> Result<()> {
    let n = d.len();
    if start >= n {
        return Err(Error::IndexOutOfRange { index: start, n });
    }
    if m == 0 || m > n {
        return Err(Error::SubsetSize { m, n });
    }
    Ok(())
}

/// Greedy min-max selection: repeatedly add the view farthest from the chosen set.
pub fn greedy_min_max(d: &DistanceMatrix, start: usize, m: usize) -> Result<Vec<usize>> {
    check_args(d, start, m)?;
    let n = d.len();
    let mut chosen = vec![start];
    let mut in_set = vec![false; n];
    in_set[start] = true;
    // running min distance from each candidate to the chosen set
    let mut min_d: Vec<f64> = (0..n).map(|i| d.get(i, start)).collect();
    while chosen.len() < m {
        let mut best: Option<usize> = None;
        for i in (0..n).filter(|&i| !in_set[i]) {
            if best.is_none_or(|b| min_d[i] > min_d[b]) {
                best = Some(i);
            }
        }
        let next = best.expect("m <= n leaves a candidate");
        chosen.push(next);
        in_set[next] = true;
        for i in 0..n {
            min_d[i] = min_d[i].min(d.get(i, next));
        }
    }
    Ok(chosen)
}

/// Orders `members` from `start`, each step appending the member with the smallest
/// mean distance to the ordered prefix.
pub fn order_by_proximity(d: &DistanceMatrix, start: usize, members: &[usize]) -> Vec<usize> {
    let mut sorted = vec![start];
    let mut rest: Vec<usize> = members.iter().copied().filter(|&i| i != start).collect();
    rest.sort_unstable();
    rest.dedup();
    while !rest.is_empty() {
        let mean =
            |i: usize| sorted.iter().map(|&j| d.get(i, j)).sum::<f64>() / sorted.len() as f64;
        let mut best = 0;
        let mut best_mean = mean(rest[0]);
        for (k, &i) in rest.iter().enumerate().skip(1) {
            let v = mean(i);
            if v < best_mean {
                best = k;
                best_mean = v;
            }
        }
        sorted.push(rest.remove(best));
    }
    sorted
}

/// The `m`-view wide-baseline subset, in inpainting order.
pub fn select_wide_baseline(d: &DistanceMatrix, start: usize, m: usize) -> Result<Vec<usize>> {
    let chosen = greedy_min_max(d, start, m)?;
    Ok(order_by_proximity(d, start, &chosen))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    /// One reference per target.
    Narrow,
    Wide,
}

/// Two-stage inpainting order with the references each target conditions on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InpaintPlan {
    pub stage1: Vec<usize>,
    pub stage2: Vec<usize>,
    pub references: BTreeMap<usize, Vec<usize>>,
    pub seed: u64,
    pub m: usize,
    #[serde(rename = "R_max")]
    pub r_max: usize,
}

impl InpaintPlan {
    pub fn num_views(&self) -> usize {
        self.stage1.len() + self.stage2.len()
    }

    /// Checks that both stages partition `0..n` and references are in range.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.stage1.iter().chain(&self.stage2) {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config(format!("view {i} appears twice in the plan")));
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Config(format!("view {i} is missing from the plan")));
        }
        for (t, refs) in &self.references {
            if let Some(&r) = refs.iter().find(|&&r| r >= n || r == *t) {
                return Err(Error::Config(format!("view {t} has invalid reference {r}")));
            }
        }
        Ok(())
    }
}

fn by_distance(d: &DistanceMatrix, target: usize, mut views: Vec<usize>) -> Vec<usize> {
    views.sort_by(|&a, &b| {
        d.get(target, a)
            .total_cmp(&d.get(target, b))
            .then(a.cmp(&b))
    });
    views
}

/// Builds the plan. `inpainted` flags views that need no inpainting from the outset.
pub fn build_plan(
    d: &DistanceMatrix,
    start: usize,
    m: usize,
    mode: PlanMode,
    max_references: usize,
    inpainted: &[bool],
    seed: u64,
) -> Result<InpaintPlan> {
    let n = d.len();
    if inpainted.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} inpainted flags for {n} views",
            inpainted.len()
        )));
    }
    let r_max = match mode {
        PlanMode::Narrow => 1,
        PlanMode::Wide => max_references,
    };
    if r_max == 0 {
        return Err(Error::Config("reference cap must be at least 1".into()));
    }
    let stage1 = select_wide_baseline(d, start, m)?;
    let mut in_stage1 = vec![false; n];
    for &i in &stage1 {
        in_stage1[i] = true;
    }
    let stage2: Vec<usize> = (0..n).filter(|&i| !in_stage1[i]).collect();

    let mut references = BTreeMap::new();
    let mut done = inpainted.to_vec();
    for &t in &stage1 {
        let others = (0..n).filter(|&i| i != t);
        let (ready, pending): (Vec<usize>, Vec<usize>) = others.partition(|&i| done[i]);
        let mut refs = by_distance(d, t, ready);
        refs.extend(by_distance(d, t, pending));
        refs.truncate(r_max);
        references.insert(t, refs);
        done[t] = true;
    }
    for &t in &stage2 {
        let pool = (0..n)
            .filter(|&i| i != t && (in_stage1[i] || inpainted[i]))
            .collect();
        let mut refs = by_distance(d, t, pool);
        refs.truncate(r_max);
        references.insert(t, refs);
    }
    Ok(InpaintPlan {
        stage1,
        stage2,
        references,
        seed,
        m,
        r_max,
    })
}

/// Camera and depth assigned to one view.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewGeometry {
    pub camera: Camera,
    pub depth: DepthMap,
}

/// Source of cameras and depths for the views of a scene.
pub trait GeometryEstimator: Send + Sync {
    /// Geometry for every view not marked `frozen`; entries for frozen views are ignored.
    fn estimate(&self, views: &[View], frozen: &[bool]) -> Result<Vec<Option<ViewGeometry>>>;
}

/// Returns known geometry, optionally with seeded multiplicative depth noise.
#[derive(Clone, Debug)]
pub struct GroundTruthEstimator {
    pub truth: Vec<ViewGeometry>,
    /// Standard deviation of the relative depth noise; 0 disables it.
    pub perturb: f64,
    pub seed: u64,
}

impl GroundTruthEstimator {
    pub fn new(truth: Vec<ViewGeometry>) -> Self {
        Self {
            truth,
            perturb: 0.0,
            seed: 0,
        }
    }

    /// Uses the cameras and depths already attached to `views`.
    pub fn from_views(views: &[View]) -> Result<Self> {
        let truth = views
            .iter()
            .enumerate()
            .map(|(i, v)| {
                Ok(ViewGeometry {
                    camera: v.require_camera(i)?.clone(),
                    depth: v.require_depth(i)?.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self::new(truth))
    }

    pub fn with_perturbation(mut self, perturb: f64, seed: u64) -> Self {
        self.perturb = perturb;
        self.seed = seed;
        self
    }
}

impl GeometryEstimator for GroundTruthEstimator {
    fn estimate(&self, views: &[View], frozen: &[bool]) -> Result<Vec<Option<ViewGeometry>>> {
        if views.len() != self.truth.len() {
            return Err(Error::Config(format!(
                "ground truth covers {} views, scene has {}",
                self.truth.len(),
                views.len()
            )));
        }
        Ok(self
            .truth
            .iter()
            .enumerate()
            .map(|(i, g)| {
                if frozen[i] {
                    return None;
                }
                let mut g = g.clone();
                if self.perturb > 0.0 {
                    let mut rng = substream(self.seed, "depth-noise", i as u64);
                    let values = g.depth.values().map(|&d| {
                        let n: f64 = rng.sample(StandardNormal);
                        d * (1.0 + self.perturb * n).max(1e-3)
                    });
                    g.depth = DepthMap::new(values, g.depth.valid().clone()).expect("same size");
                }
                Some(g)
            })
            .collect())
    }
}

/// Reads `view_NNN/depth.pfm` and `view_NNN/camera.json` from a directory.
#[derive(Clone, Debug)]
pub struct FileEstimator {
    pub dir: PathBuf,
}

impl GeometryEstimator for FileEstimator {
    fn estimate(&self, views: &[View], frozen: &[bool]) -> Result<Vec<Option<ViewGeometry>>> {
        (0..views.len())
            .map(|i| {
                if frozen[i] {
                    return Ok(None);
                }
                let sub = self.dir.join(format!("view_{i:03}"));
                Ok(Some(ViewGeometry {
                    camera: io::read_camera(&sub.join("camera.json"))?,
                    depth: io::read_depth(&sub.join("depth.pfm"))?,
                }))
            })
            .collect()
    }
}

/// Applies estimated geometry to the non-frozen views.
pub fn refresh_geometry(
    set: &mut AutoregressiveSet,
    estimator: &dyn GeometryEstimator,
    frozen: &[bool],
) -> Result<()> {
    let targets: Vec<usize> = (0..set.len()).filter(|&i| !frozen[i]).collect();
    let wrap = |message: String| Error::Estimator {
        views: targets.clone(),
        message,
    };
    let estimates = estimator
        .estimate(&set.views, frozen)
        .map_err(|e| match e {
            // unreadable estimator inputs stay user errors
            Error::NotFound { .. } | Error::Format { .. } => e,
            e => wrap(e.to_string()),
        })?;
    if estimates.len() != set.len() {
        return Err(wrap(format!(
            "returned {} entries for {} views",
            estimates.len(),
            set.len()
        )));
    }
    for (&i, g) in targets.iter().zip(targets.iter().map(|&i| &estimates[i])) {
        let Some(g) = g else {
            return Err(wrap(format!("no geometry for view {i}")));
        };
        let v = &set.views[i];
        if (g.depth.width(), g.depth.height()) != (v.width(), v.height()) {
            return Err(wrap(format!("depth for view {i} has the wrong size")));
        }
        set.views[i].camera = Some(g.camera.clone());
        set.views[i].depth = Some(g.depth.clone());
    }
    Ok(())
}

/// Replaces the given views with their inpainted images, marks them inpainted and
/// re-estimates geometry for those views only. An empty update changes nothing.
pub fn update_after_inpaint(
    set: &AutoregressiveSet,
    inpainted: &BTreeMap<usize, RgbImage>,
    estimator: &dyn GeometryEstimator,
) -> Result<AutoregressiveSet> {
    if inpainted.is_empty() {
        return Ok(set.clone());
    }
    let n = set.len();
    let mut next = set.clone();
    let mut frozen = vec![true; n];
    for (&i, image) in inpainted {
        let v = next
            .views
            .get_mut(i)
            .ok_or(Error::IndexOutOfRange { index: i, n })?;
        if v.inpainted {
            return Err(Error::Config(format!("view {i} is already inpainted")));
        }
        if image.dims() != v.image.dims() {
            return Err(Error::DimensionMismatch(format!(
                "inpainted image for view {i} has the wrong size"
            )));
        }
        v.image = image.clone();
        v.inpainted = true;
        frozen[i] = false;
    }
    refresh_geometry(&mut next, estimator, &frozen)?;
    next.geometry_version += 1;
    Ok(next)
}
