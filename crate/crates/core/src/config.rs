//! Run configuration. Every field is optional in the JSON document; missing
//! fields take the defaults below.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proposals::AccumulationMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyModel {
    /// ICE unary + histogram unary, histogram/connectivity pairwise terms.
    Full,
    /// Likelihood-map unary only, pairwise from node-value differences.
    Simplified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    pub beta: f64,
    pub theta1: u32,
    pub theta2: u32,
    pub lambda1: f64,
    pub lambda2: f64,
    pub slic_regionsize: usize,
    pub slic_regularizer: f64,
    pub color_bins_per_channel: usize,
    pub bow_sift_dims: usize,
    pub bow_rgb_dims: usize,
    pub knn_weighting_k: usize,
    pub dilation_radius: usize,
    pub clamp_eps: f64,

    /// Blobs smaller than this fraction of the frame are dropped after binarisation.
    pub min_blob_area_fraction: f64,
    pub accumulation_mode: AccumulationMode,
    /// Keep only the best `k` proposals (by G + I) before accumulation.
    pub proposal_top_k: Option<usize>,
    /// Number of merged groups produced by the superpixel-merge proposal generator.
    pub proposal_groups: usize,
    /// Trimap block grids as (rows, cols).
    pub trimap_grids: Vec<(usize, usize)>,
    pub flow_method: Option<String>,
    pub proposal_method: Option<String>,
    pub saliency_method: Option<String>,
    pub encoder: String,
    pub energy: EnergyModel,
    /// Warp temporal overlaps along the forward flow instead of comparing identical coordinates.
    pub temporal_warp: bool,
    /// Pool foreground/background appearance models per frame rather than per sequence.
    pub per_frame_models: bool,
    /// Stride in pixels between dense gradient-descriptor keypoints.
    pub descriptor_stride: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            beta: 0.5,
            theta1: 18,
            theta2: 6,
            lambda1: 3.0,
            lambda2: 2.0,
            slic_regionsize: 20,
            slic_regularizer: 0.1,
            color_bins_per_channel: 16,
            bow_sift_dims: 200,
            bow_rgb_dims: 150,
            knn_weighting_k: 4,
            dilation_radius: 3,
            clamp_eps: 1e-6,
            min_blob_area_fraction: 0.0005,
            accumulation_mode: AccumulationMode::BoundaryOnD,
            proposal_top_k: None,
            proposal_groups: 6,
            trimap_grids: vec![(2, 2), (3, 3), (4, 4)],
            flow_method: None,
            proposal_method: None,
            saliency_method: None,
            encoder: "ice".to_string(),
            energy: EnergyModel::Full,
            temporal_warp: false,
            per_frame_models: false,
            descriptor_stride: 4,
        }
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.theta1 <= self.theta2 {
            return Err(Error::BadThresholds {
                theta1: self.theta1,
                theta2: self.theta2,
            });
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return bad(format!("clamp_eps must lie in (0, 0.5), got {}", self.clamp_eps));
        }
        if self.slic_regionsize < 2 {
            return bad(format!("slic_regionsize must be >= 2, got {}", self.slic_regionsize));
        }
        if !(self.slic_regularizer >= 0.0) {
            return bad("slic_regularizer must be >= 0".into());
        }
        if self.color_bins_per_channel == 0 || self.bow_sift_dims == 0 || self.bow_rgb_dims == 0 {
            return bad("histogram dimensions must be positive".into());
        }
        if self.proposal_groups == 0 {
            return bad("proposal_groups must be >= 1".into());
        }
        if self.descriptor_stride == 0 {
            return bad("descriptor_stride must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.min_blob_area_fraction) {
            return bad("min_blob_area_fraction must lie in [0, 1)".into());
        }
        if self.trimap_grids.iter().any(|&(r, c)| r == 0 || c == 0) {
            return bad("trimap grids must have positive rows and cols".into());
        }
        Ok(())
    }

    /// Largest attainable trimap level: 7 per scale.
    pub fn trimap_max_level(&self) -> u32 {
        7 * self.trimap_grids.len() as u32
    }
}
