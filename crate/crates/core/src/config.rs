//! Pipeline parameters and their flat `key = value` file format.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::MatchThresholds;
use crate::plane::RansacParams;
use crate::proposals2d::{FilterParams, PercentileClamp};
use crate::proposals3d::ExtractParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Read { path: String, msg: String },
    #[error("invalid config key `{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

/// Every tunable of the pipeline. Unknown keys are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Soft filter depth range `ε_Δ`, meters.
    pub eps_delta: f64,
    /// Hard filter lower extent `ε_min`, meters.
    pub eps_min: f64,
    /// Hard filter upper extent `ε_max`, meters.
    pub eps_max: f64,
    /// Frequency offset `τ` of the pseudo-average confidence.
    pub tau: f64,
    /// Plane inlier distance `ε_p`, meters.
    pub eps_p: f64,
    /// Color match threshold `ε_I`.
    pub eps_i: f64,
    /// Depth match threshold `ε_Z`, meters.
    pub eps_z: f64,
    /// Ranking threshold `ε` on `c̄`.
    pub eps: f64,
    pub soft_filter: bool,
    pub hard_filter: bool,
    /// Use the `[low, high]` depth percentiles instead of min/max in the
    /// soft filter.
    pub percentile_clamp: bool,
    pub percentile_low: f64,
    pub percentile_high: f64,
    pub ransac_iterations: usize,
    pub ransac_top_k: usize,
    pub ransac_window: usize,
    pub ransac_stride: usize,
    pub ransac_refine_rounds: usize,
    pub keyframe_interval: usize,
    /// Planes closer than this angle and offset count as the same surface.
    pub plane_angle_deg: f64,
    pub plane_offset: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    /// Smallest kept box volume, cubic meters.
    pub min_volume: f64,
    /// Image decimation factor, 1 or 2.
    pub downsample: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            eps_delta: 0.5,
            eps_min: 0.02,
            eps_max: 1.0,
            tau: 10.0,
            eps_p: 0.005,
            eps_i: 0.05,
            eps_z: 0.01,
            eps: 0.25,
            soft_filter: true,
            hard_filter: true,
            percentile_clamp: false,
            percentile_low: 0.05,
            percentile_high: 0.95,
            ransac_iterations: 10_000,
            ransac_top_k: 5,
            ransac_window: 11,
            ransac_stride: 2,
            ransac_refine_rounds: 2,
            keyframe_interval: 10,
            plane_angle_deg: 10.0,
            plane_offset: 0.05,
            dbscan_eps: 0.02,
            dbscan_min_pts: 10,
            min_volume: 1e-6,
            downsample: 1,
            seed: 0,
        }
    }
}

fn invalid(key: &str, msg: &str) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        msg: msg.into(),
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("eps_delta", self.eps_delta),
            ("eps_min", self.eps_min),
            ("eps_max", self.eps_max),
            ("eps_p", self.eps_p),
            ("eps_i", self.eps_i),
            ("eps_z", self.eps_z),
            ("plane_angle_deg", self.plane_angle_deg),
            ("plane_offset", self.plane_offset),
            ("dbscan_eps", self.dbscan_eps),
            ("min_volume", self.min_volume),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(k, "must be a positive number"));
            }
        }
        for (k, v) in [("tau", self.tau), ("eps", self.eps)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(k, "must be a non-negative number"));
            }
        }
        if self.eps_min >= self.eps_max {
            return Err(invalid("eps_min", "must be below eps_max"));
        }
        if !(0.0..1.0).contains(&self.percentile_low)
            || !(0.0..=1.0).contains(&self.percentile_high)
            || self.percentile_low >= self.percentile_high
        {
            return Err(invalid("percentile_low", "need 0 <= low < high <= 1"));
        }
        for (k, v) in [
            ("ransac_iterations", self.ransac_iterations),
            ("ransac_top_k", self.ransac_top_k),
            ("ransac_window", self.ransac_window),
            ("ransac_stride", self.ransac_stride),
            ("keyframe_interval", self.keyframe_interval),
            ("dbscan_min_pts", self.dbscan_min_pts),
        ] {
            if v == 0 {
                return Err(invalid(k, "must be at least 1"));
            }
        }
        if self.ransac_window < 3 {
            return Err(invalid("ransac_window", "must be at least 3"));
        }
        if !matches!(self.downsample, 1 | 2) {
            return Err(invalid("downsample", "must be 1 or 2"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Read {
            path: "<config>".into(),
            msg: e.to_string(),
        })?;
        let c: Self = serde_path_to_error::deserialize(de).map_err(|e| invalid(&e.path().to_string(), &e.inner().to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn filter_params(&self) -> FilterParams {
        FilterParams {
            eps_delta: self.eps_delta,
            eps_min: self.eps_min,
            eps_max: self.eps_max,
            percentile_clamp: self.percentile_clamp.then_some(PercentileClamp {
                low: self.percentile_low,
                high: self.percentile_high,
            }),
            soft_filter: self.soft_filter,
            hard_filter: self.hard_filter,
        }
    }

    pub fn ransac_params(&self) -> RansacParams {
        RansacParams {
            iterations: self.ransac_iterations,
            eps_p: self.eps_p,
            top_k: self.ransac_top_k,
            window: self.ransac_window,
            stride: self.ransac_stride,
            refine_rounds: self.ransac_refine_rounds,
            distinct_angle_deg: self.plane_angle_deg,
            distinct_offset: self.plane_offset,
            seed: self.seed,
        }
    }

    pub fn match_thresholds(&self) -> MatchThresholds {
        MatchThresholds {
            eps_i: self.eps_i,
            eps_z: self.eps_z,
        }
    }

    pub fn extract_params(&self) -> ExtractParams {
        ExtractParams {
            tau: self.tau,
            eps: self.eps,
            eps_p: self.eps_p,
            group_angle_deg: self.plane_angle_deg,
            group_offset: self.plane_offset,
            dbscan_eps: self.dbscan_eps,
            dbscan_min_pts: self.dbscan_min_pts,
            min_volume: self.min_volume,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        let text = c.to_toml_string();
        assert!(text.contains("eps_delta = 0.5"));
        assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let c = PipelineConfig::from_toml_str("tau = 5.0\ndownsample = 2\n").unwrap();
        assert_eq!(c.tau, 5.0);
        assert_eq!(c.downsample, 2);
        assert_eq!(c.eps, 0.25);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::from_toml_str("downsample = 3").is_err());
        assert!(PipelineConfig::from_toml_str("eps_p = -1.0").is_err());
        assert!(PipelineConfig::from_toml_str("bogus = 1").is_err());
        let e = PipelineConfig::from_toml_str("dbscan_eps = \"x\"").unwrap_err();
        assert!(e.to_string().contains("dbscan_eps"), "{e}");
    }
}
