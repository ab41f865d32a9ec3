//! TOML experiment configuration with command-line overrides; flags win.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    RandomTensor,
    ImplicitMap,
    DerivVerify,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: Scenario,
    #[serde(default)]
    pub shape: ShapeCfg,
    #[serde(default)]
    pub precondition: PrecondCfg,
    #[serde(default)]
    pub data: DataCfg,
    #[serde(default)]
    pub fit: FitCfg,
    #[serde(default)]
    pub sketch: SketchCfg,
    #[serde(default)]
    pub map: MapCfg,
    #[serde(default)]
    pub rng: RngCfg,
    #[serde(default)]
    pub output: OutputCfg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeCfg {
    /// Highest derivative order (number of symmetric input slots).
    pub k: usize,
    /// Input dimension per slot.
    pub n: usize,
    /// Output dimension.
    pub m: usize,
}

impl Default for ShapeCfg {
    fn default() -> Self {
        Self { k: 3, n: 12, m: 10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecondCfg {
    /// Diagonal preconditioner decay: `C[i, i] = (i + 1)^{-power_law}`.
    pub power_law: f64,
}

impl Default for PrecondCfg {
    fn default() -> Self {
        Self { power_law: 2.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataCfg {
    pub n_s: usize,
    pub n_t: usize,
    pub validation_fraction: f64,
}

impl Default for DataCfg {
    fn default() -> Self {
        Self {
            n_s: 400,
            n_t: 500,
            validation_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitCfg {
    /// "tr-rmgn" or "mc-sgd".
    pub optimizer: String,
    pub n_chunk: usize,
    pub ratio_cap: f64,
    pub tau: f64,
    pub max_stages: usize,
    pub tr_max_iters: usize,
    pub sgd_max_iters: usize,
}

impl Default for FitCfg {
    fn default() -> Self {
        Self {
            optimizer: "mc-sgd".into(),
            n_chunk: 1,
            ratio_cap: 2.0,
            tau: 10.0,
            max_stages: 100,
            tr_max_iters: 100,
            sgd_max_iters: 2000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SketchCfg {
    pub epsilon: f64,
    pub patience: usize,
}

impl Default for SketchCfg {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            patience: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapCfg {
    pub dim_in: usize,
    pub dim_out: usize,
    pub gamma: f64,
}

impl Default for MapCfg {
    fn default() -> Self {
        Self {
            dim_in: 24,
            dim_out: 18,
            gamma: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngCfg {
    pub seed: u64,
}

impl Default for RngCfg {
    fn default() -> Self {
        Self { seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputCfg {
    pub dir: String,
}

impl Default for OutputCfg {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, String> {
        let config: Config = toml::from_str(text).map_err(|e| e.to_string())?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("shape.k", self.shape.k),
            ("shape.n", self.shape.n),
            ("shape.m", self.shape.m),
            ("data.n_s", self.data.n_s),
            ("data.n_t", self.data.n_t),
            ("fit.n_chunk", self.fit.n_chunk),
            ("map.dim_in", self.map.dim_in),
            ("map.dim_out", self.map.dim_out),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.data.validation_fraction) {
            return Err("data.validation_fraction must lie in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.sketch.epsilon) {
            return Err("sketch.epsilon must lie in (0, 1)".into());
        }
        match self.fit.optimizer.as_str() {
            "tr-rmgn" | "mc-sgd" => {}
            other => return Err(format!("unknown optimizer {other:?}")),
        }
        Ok(())
    }

    /// Hash of the effective configuration (after flag overrides), embedded
    /// in every emitted artifact. The output location does not define the
    /// experiment and is excluded.
    pub fn hash(&self) -> String {
        let mut canonical_cfg = self.clone();
        canonical_cfg.output.dir = String::new();
        let canonical = serde_json::to_string(&canonical_cfg).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}
