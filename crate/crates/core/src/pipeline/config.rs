use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureParams;
use crate::roadmodel::RansacParams;
use crate::stereo::MatcherParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BilateralParams {
    pub sigma_s: f64,
    pub sigma_r: f64,
    pub radius: usize,
}

impl Default for BilateralParams {
    fn default() -> Self {
        Self {
            sigma_s: 3.0,
            sigma_r: 30.0,
            radius: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaneParams {
    /// Smallest gradient magnitude that votes for the vanishing point.
    pub edge_threshold: f64,
    pub min_width: f64,
    pub max_width: f64,
    /// Peak threshold as a fraction of the largest histogram magnitude.
    pub min_peak_fraction: f64,
    pub max_lanes: usize,
    /// Half width in columns of the row-wise box filter applied to the
    /// vanishing-point accumulator before the trajectory search.
    pub vote_spread: usize,
}

impl Default for LaneParams {
    fn default() -> Self {
        Self {
            edge_threshold: 200.0,
            min_width: 4.0,
            max_width: 40.0,
            min_peak_fraction: 0.2,
            max_lanes: 6,
            vote_spread: 15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputParams {
    pub disparity: bool,
    pub overlay: bool,
    pub report: bool,
}

impl Default for OutputParams {
    fn default() -> Self {
        Self {
            disparity: true,
            overlay: true,
            report: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tau: u32,
    pub mu: f64,
    pub d_max: u32,
    pub block_radius: usize,
    pub uniqueness: f64,
    pub lambda_v: f64,
    pub lambda_u: f64,
    pub bilateral: BilateralParams,
    pub features: FeatureParams,
    pub ransac: RansacParams,
    pub lanes: LaneParams,
    pub output: OutputParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: 3,
            mu: 3.0,
            d_max: 64,
            block_radius: 3,
            uniqueness: 0.95,
            lambda_v: 2.0,
            lambda_u: 100.0,
            bilateral: BilateralParams::default(),
            features: FeatureParams::default(),
            ransac: RansacParams::default(),
            lanes: LaneParams::default(),
            output: OutputParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serializable")
    }

    pub fn matcher(&self) -> MatcherParams {
        MatcherParams {
            tau: self.tau,
            d_max: self.d_max,
            block_radius: self.block_radius,
            uniqueness: self.uniqueness,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.d_max < 1 {
            return bad("d_max must be at least 1");
        }
        if self.block_radius < 1 {
            return bad("block_radius must be at least 1");
        }
        if !(self.uniqueness > 0.0 && self.uniqueness <= 1.0) {
            return bad("uniqueness must lie in (0, 1]");
        }
        if !(self.mu >= 0.0) {
            return bad("mu must be non-negative");
        }
        if !(self.lambda_v >= 0.0 && self.lambda_u >= 0.0) {
            return bad("lambda_v and lambda_u must be non-negative");
        }
        let b = &self.bilateral;
        if !(b.sigma_s > 0.0 && b.sigma_r > 0.0) || b.radius < 1 {
            return bad("bilateral needs positive sigmas and radius");
        }
        if self.ransac.iterations < 1 || !(self.ransac.inlier_tol > 0.0) {
            return bad("ransac needs at least one iteration and a positive tolerance");
        }
        let l = &self.lanes;
        if !(l.min_width >= 0.0 && l.min_width < l.max_width) {
            return bad("lane min_width must be below max_width");
        }
        if !(0.0..=1.0).contains(&l.min_peak_fraction) {
            return bad("min_peak_fraction must lie in [0, 1]");
        }
        if l.max_lanes < 1 {
            return bad("max_lanes must be at least 1");
        }
        if !(l.edge_threshold >= 0.0) {
            return bad("edge_threshold must be non-negative");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!((c.tau, c.d_max, c.block_radius), (3, 64, 3));
        assert_eq!((c.mu, c.lambda_v, c.lambda_u, c.uniqueness), (3.0, 2.0, 100.0, 0.95));
        c.validate().unwrap();
    }

    #[test]
    fn partial_json_keeps_defaults() {
        let c = PipelineConfig::from_json(r#"{"tau": 5, "lanes": {"max_lanes": 2}}"#).unwrap();
        assert_eq!(c.tau, 5);
        assert_eq!(c.lanes.max_lanes, 2);
        assert_eq!(c.lanes.max_width, 40.0);
        assert_eq!(c.d_max, 64);
    }

    #[test]
    fn rejects_unknown_and_out_of_domain() {
        assert!(PipelineConfig::from_json(r#"{"taux": 5}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"uniqueness": 1.5}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"lanes": {"min_width": 50}}"#).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
