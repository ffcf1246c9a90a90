use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Large-scale reference numbers, shown next to local results for context.
/// Never used as thresholds.
pub mod reference {
    pub const PRETEXT_ACCURACY: f64 = 0.384;
    pub const PRETEXT_TRAIN_ACCURACY: f64 = 0.395;
    pub const PRETEXT_VAL_ACCURACY: f64 = 0.403;
    pub const PRETEXT_CHANCE: f64 = 0.125;
    pub const ABSLOC_TOP_DECILE_RMSE_RAW: f64 = 0.255;
    pub const ABSLOC_CHANCE_RMSE: f64 = 0.371;
    pub const ABSLOC_TOP_DECILE_RMSE_PROJECTED: f64 = 0.321;
    pub const PURITY_AUC: [f64; 2] = [0.41, 0.38];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub checkpoint_sha256: Option<String>,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(checkpoint: Option<&[u8]>, config_text: &str, seed: u64) -> Self {
        Self {
            checkpoint_sha256: checkpoint.map(sha256_hex),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
        }
    }

    /// `# key: value` lines for CSV headers.
    pub fn csv_comment(&self) -> String {
        format!(
            "# checkpoint_sha256: {}\n# config_sha256: {}\n# seed: {}\n",
            self.checkpoint_sha256.as_deref().unwrap_or("none"),
            self.config_sha256,
            self.seed
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
