//! Views, depth maps and the containers the autoregressive loop works on.

use serde::{Deserialize, Serialize};

use crate::camera::{view_distance, Camera};
use crate::error::{Error, Result};
use crate::grid::{Grid, Mask, RgbImage};

/// Camera-frame z per pixel plus a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    values: Grid<f64>,
    valid: Mask,
}

impl DepthMap {
    pub fn new(values: Grid<f64>, valid: Mask) -> Result<Self> {
        if !values.same_dims(&valid) {
            return Err(Error::DimensionMismatch(
                "depth values and validity mask differ in size".into(),
            ));
        }
        if let Some(bad) = values
            .iter()
            .zip(valid.iter())
            .position(|(d, v)| *v && !(d.is_finite() && *d > 0.0))
        {
            return Err(Error::Config(format!(
                "depth at index {bad} is marked valid but not positive"
            )));
        }
        Ok(Self { values, valid })
    }

    /// Pixels with finite positive depth are valid.
    pub fn from_values(values: Grid<f64>) -> Self {
        let valid = values.map(|d| d.is_finite() && *d > 0.0);
        Self { values, valid }
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }

    pub fn valid(&self) -> &Mask {
        &self.valid
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Option<f64> {
        self.valid.get(x, y).then(|| *self.values.get(x, y))
    }

    pub fn min_valid(&self) -> Option<f64> {
        self.values
            .iter()
            .zip(self.valid.iter())
            .filter(|(_, v)| **v)
            .map(|(d, _)| *d)
            .reduce(f64::min)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub image: RgbImage,
    /// `true` marks pixels to inpaint.
    pub mask: Mask,
    pub inpainted: bool,
    pub camera: Option<Camera>,
    pub depth: Option<DepthMap>,
}

impl View {
    pub fn new(image: RgbImage, mask: Mask) -> Result<Self> {
        if !image.same_dims(&mask) {
            return Err(Error::DimensionMismatch(
                "image and mask differ in size".into(),
            ));
        }
        Ok(Self {
            image,
            mask,
            inpainted: false,
            camera: None,
            depth: None,
        })
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    /// The mask as seen by consumers: inpainted views have nothing left to fill.
    pub fn effective_mask(&self) -> Mask {
        if self.inpainted {
            Mask::filled(self.width(), self.height(), false)
        } else {
            self.mask.clone()
        }
    }

    pub fn require_camera(&self, index: usize) -> Result<&Camera> {
        self.camera.as_ref().ok_or(Error::MissingGeometry {
            index,
            what: "camera is missing",
        })
    }

    pub fn require_depth(&self, index: usize) -> Result<&DepthMap> {
        self.depth.as_ref().ok_or(Error::MissingGeometry {
            index,
            what: "depth is missing",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphMode {
    /// Every ordered pair of distinct views.
    Complete,
    /// Each view connects to its `k` nearest views.
    Nearest(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub num_views: usize,
    pub edges: Vec<(usize, usize)>,
    pub distances: Vec<f64>,
}

impl SceneGraph {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    /// Edges whose source view is in `views`.
    pub fn edges_from<'a>(
        &'a self,
        views: &'a [usize],
    ) -> impl Iterator<Item = (usize, usize)> + 'a {
        self.edges
            .iter()
            .copied()
            .filter(move |(i, _)| views.contains(i))
    }
}

pub fn build_scene_graph(cameras: &[Camera], mode: GraphMode) -> Result<SceneGraph> {
    let n = cameras.len();
    if n < 2 {
        return Err(Error::TooFewCameras(n));
    }
    let k = match mode {
        GraphMode::Complete => n - 1,
        GraphMode::Nearest(k) if k == 0 => {
            return Err(Error::Config("scene graph k must be positive".into()))
        }
        GraphMode::Nearest(k) => k.min(n - 1),
    };
    let mut edges = Vec::new();
    let mut distances = Vec::new();
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (view_distance(&cameras[i], &cameras[j]), j))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut chosen: Vec<(f64, usize)> = others.into_iter().take(k).collect();
        chosen.sort_by_key(|&(_, j)| j);
        for (d, j) in chosen {
            edges.push((i, j));
            distances.push(d);
        }
    }
    Ok(SceneGraph {
        num_views: n,
        edges,
        distances,
    })
}

/// The evolving set of views, replaced by their inpainted versions as the loop proceeds.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoregressiveSet {
    pub views: Vec<View>,
    pub geometry_version: u64,
}

impl AutoregressiveSet {
    pub fn new(views: Vec<View>) -> Self {
        Self {
            views,
            geometry_version: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn all_inpainted(&self) -> bool {
        self.views.iter().all(|v| v.inpainted)
    }

    pub fn cameras(&self) -> Result<Vec<Camera>> {
        self.views
            .iter()
            .enumerate()
            .map(|(i, v)| v.require_camera(i).cloned())
            .collect()
    }
}
