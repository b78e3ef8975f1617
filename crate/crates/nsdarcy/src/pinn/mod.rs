//! The deep-learning phase: residual networks with a boundary-enforcing
//! ansatz, the Monte-Carlo log-residual loss, exact input derivatives with
//! reverse-mode parameter gradients, and Adam training.

pub mod adam;
pub mod ansatz;
pub mod loss;
pub mod residual;
pub mod resnet;
pub mod sample;
pub mod train;

pub use ansatz::{ansatz_eval, AnsatzField, AnsatzSpec, PinnModel};
pub use loss::{log_loss, loss_and_grads, LossParts, ModelGrads};
pub use resnet::{NetOutput, PinnError, ResNetParams};
pub use sample::{sample_batch, SampleBatch};
pub use train::{evaluate_loss, init_model, train, train_with_callback, PinnConfig, TrainRecord};

use serde::{Deserialize, Serialize};
use std::path::Path;

/// On-disk snapshot of a trained model with its configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: PinnConfig,
    pub model: PinnModel,
}

pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, model: &PinnModel, config: &PinnConfig) -> std::io::Result<()> {
    let ck = Checkpoint {
        version: CHECKPOINT_VERSION,
        config: config.clone(),
        model: model.clone(),
    };
    std::fs::write(path, serde_json::to_string(&ck).expect("serializable checkpoint"))
}

pub fn load_checkpoint(path: &Path) -> std::io::Result<Checkpoint> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_roundtrip() {
        let cfg = PinnConfig {
            width: 4,
            depth_fluid: 1,
            depth_darcy: 1,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = init_model(&cfg, &mut rng);
        let dir = std::env::temp_dir().join("nsdarcy_ck_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ck.json");
        save_checkpoint(&path, &model, &cfg).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.version, CHECKPOINT_VERSION);
        assert_eq!(ck.model.net_u.w[0], model.net_u.w[0]);
        assert_eq!(ck.config.width, 4);
    }
}
