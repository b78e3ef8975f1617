//! The training loop: sample fresh points each epoch, evaluate the log loss,
//! back-propagate, and take one Adam step with the exponentially decaying
//! learning rate.

use crate::pinn::adam::{model_param_count, param_grad_pairs, AdamState};
use crate::pinn::ansatz::PinnModel;
use crate::pinn::loss::{loss_and_grads, LossParts};
use crate::pinn::resnet::{PinnError, ResNetParams};
use crate::pinn::sample::sample_batch;
use crate::problems::Problem;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Training hyperparameters. Defaults follow the 2D experiment setup: width
/// 50 nets (depth 5 fluid, depth 6 Darcy), loss weights (200, 1), batch
/// sizes 1024/1024/256, initial rate 5e-3 decaying by 0.01^(1/10000) per
/// epoch.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PinnConfig {
    pub width: usize,
    pub depth_fluid: usize,
    pub depth_darcy: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub eta: f64,
    pub decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub head_init_scale: f64,
}

impl Default for PinnConfig {
    fn default() -> Self {
        PinnConfig {
            width: 50,
            depth_fluid: 5,
            depth_darcy: 6,
            gamma1: 200.0,
            gamma2: 1.0,
            n1: 1024,
            n2: 1024,
            n3: 256,
            eta: 5e-3,
            decay: 0.01f64.powf(1.0 / 10000.0),
            epochs: 200,
            seed: 0,
            head_init_scale: 1e-2,
        }
    }
}

/// One epoch of the recorded loss history.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch: usize,
    pub loss: f64,
    pub i1: f64,
    pub lr: f64,
    pub seconds: f64,
}

/// Fresh networks for a configuration.
pub fn init_model(cfg: &PinnConfig, rng: &mut ChaCha8Rng) -> PinnModel {
    PinnModel {
        net_u: ResNetParams::init(cfg.width, cfg.depth_fluid, 2, cfg.head_init_scale, rng),
        net_p: ResNetParams::init(cfg.width, cfg.depth_fluid, 1, cfg.head_init_scale, rng),
        net_phi: ResNetParams::init(cfg.width, cfg.depth_darcy, 1, cfg.head_init_scale, rng),
    }
}

/// Train on a problem; deterministic for a given seed.
pub fn train(prob: &Problem, cfg: &PinnConfig) -> Result<(PinnModel, Vec<TrainRecord>), PinnError> {
    train_with_callback(prob, cfg, |_, _| {})
}

/// Train with a per-epoch observer called after each parameter update with
/// the number of completed epochs.
pub fn train_with_callback(
    prob: &Problem,
    cfg: &PinnConfig,
    mut after_epoch: impl FnMut(usize, &PinnModel),
) -> Result<(PinnModel, Vec<TrainRecord>), PinnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = init_model(cfg, &mut rng);
    let mut adam = AdamState::new(model_param_count(&model));
    let mut history = Vec::with_capacity(cfg.epochs);
    let iface = prob.interface_segment();
    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let batch = sample_batch(
            &prob.fluid_rect,
            &prob.porous_rect,
            iface,
            (cfg.n1, cfg.n2, cfg.n3),
            &mut rng,
        );
        let (parts, grads) = loss_and_grads(
            &model,
            &prob.ansatz,
            &prob.params,
            &prob.data,
            &batch,
            (cfg.gamma1, cfg.gamma2),
            true,
        );
        if !parts.loss.is_finite() {
            return Err(PinnError::NonFiniteLoss { epoch });
        }
        let lr = cfg.eta * cfg.decay.powi(epoch as i32);
        adam.step(param_grad_pairs(&mut model, &grads.unwrap()), lr);
        history.push(TrainRecord {
            epoch: epoch + 1,
            loss: parts.loss,
            i1: parts.i1,
            lr,
            seconds: t0.elapsed().as_secs_f64(),
        });
        after_epoch(epoch + 1, &model);
    }
    Ok((model, history))
}

/// Loss of a model on a fresh batch, without training.
pub fn evaluate_loss(prob: &Problem, cfg: &PinnConfig, model: &PinnModel, seed: u64) -> LossParts {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = sample_batch(
        &prob.fluid_rect,
        &prob.porous_rect,
        prob.interface_segment(),
        (cfg.n1, cfg.n2, cfg.n3),
        &mut rng,
    );
    loss_and_grads(
        model,
        &prob.ansatz,
        &prob.params,
        &prob.data,
        &batch,
        (cfg.gamma1, cfg.gamma2),
        false,
    )
    .0
}
