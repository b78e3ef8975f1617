//! The hybrid method: train the networks briefly, interpolate the learned
//! velocity onto the finite element space, and hand it to Newton as the
//! initial guess.

use crate::fespace::{try_nodal_interpolate_vector, FEFunction, Spaces};
use crate::pinn::{ansatz_eval, train, PinnConfig, PinnModel, TrainRecord};
use crate::problems::Problem;
use crate::solver::{build_operators, CoupledState, IterationHistory, NewtonConfig, Operators, SolverError};
use std::fmt;

#[derive(Debug)]
pub enum IntDeepError {
    Training(crate::pinn::PinnError),
    Solver(SolverError),
}

impl fmt::Display for IntDeepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntDeepError::Training(e) => write!(f, "training phase: {e}"),
            IntDeepError::Solver(e) => write!(f, "iteration phase: {e}"),
        }
    }
}

impl std::error::Error for IntDeepError {}

/// Diagnostics of the learning phase retained alongside the solve.
pub struct DlMetadata {
    pub model: PinnModel,
    pub loss_history: Vec<TrainRecord>,
    pub seed: u64,
    pub epochs: usize,
}

/// Interpolate the learned velocity ansatz at every velocity Lagrange node.
pub fn interpolate_dl_velocity(
    spaces: &Spaces,
    prob: &Problem,
    model: &PinnModel,
) -> FEFunction {
    try_nodal_interpolate_vector(&spaces.velocity, |p| {
        let (fluid, _) = ansatz_eval(model, &prob.ansatz, p, 0);
        Some([fluid.u[0].v, fluid.u[1].v])
    })
    .expect("ansatz evaluates everywhere")
}

/// Train briefly, interpolate, then run Newton from the interpolant.
///
/// Training happens once per problem; the same model can seed every mesh of
/// a refinement study through [`int_deep_solve_with_model`].
pub fn int_deep_solve(
    prob: &Problem,
    spaces: &Spaces,
    pinn_cfg: &PinnConfig,
    newton_cfg: &NewtonConfig,
) -> Result<(CoupledState, IterationHistory, bool, DlMetadata), IntDeepError> {
    let (model, loss_history) = train(prob, pinn_cfg).map_err(IntDeepError::Training)?;
    let ops = build_operators(spaces, &prob.params, &prob.data);
    let (state, history, converged) =
        int_deep_solve_with_model(prob, &ops, &model, newton_cfg).map_err(IntDeepError::Solver)?;
    Ok((
        state,
        history,
        converged,
        DlMetadata {
            model,
            loss_history,
            seed: pinn_cfg.seed,
            epochs: pinn_cfg.epochs,
        },
    ))
}

/// The iteration phase alone, reusing a trained model (one training can seed
/// all meshes of a study).
pub fn int_deep_solve_with_model(
    prob: &Problem,
    ops: &Operators,
    model: &PinnModel,
    newton_cfg: &NewtonConfig,
) -> Result<(CoupledState, IterationHistory, bool), SolverError> {
    let u0 = interpolate_dl_velocity(&ops.spaces, prob, model);
    ops.newton_solve(&u0, newton_cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::build_spaces;
    use crate::problems::manufactured;
    use std::sync::Arc;

    /// Zero training epochs with a zero-initialized head degenerate to the
    /// interpolated boundary extension.
    #[test]
    fn zero_epochs_zero_head_is_extension_interpolant() {
        let prob = manufactured(1.0, 1.0);
        let mesh = Arc::new(prob.mesh(2).unwrap());
        let spaces = build_spaces(&mesh);
        let cfg = PinnConfig {
            width: 8,
            depth_fluid: 2,
            depth_darcy: 2,
            epochs: 0,
            head_init_scale: 0.0,
            seed: 5,
            ..Default::default()
        };
        let (model, history) = train(&prob, &cfg).unwrap();
        assert!(history.is_empty());
        let u0 = interpolate_dl_velocity(&spaces, &prob, &model);
        let exact = prob.exact.as_ref().unwrap();
        for (n, coord) in spaces.velocity.node_coords.iter().enumerate() {
            let g = exact.velocity(*coord);
            assert!((u0.coeffs[2 * n] - g[0]).abs() < 1e-13);
            assert!((u0.coeffs[2 * n + 1] - g[1]).abs() < 1e-13);
        }
    }

    /// The hybrid pipeline runs end to end on a small configuration and the
    /// final accuracy is Newton's, not the learning phase's.
    #[test]
    fn end_to_end_matches_classical_newton() {
        let prob = manufactured(1.0, 1.0);
        let mesh = Arc::new(prob.mesh(3).unwrap());
        let spaces = build_spaces(&mesh);
        let cfg = PinnConfig {
            width: 10,
            depth_fluid: 2,
            depth_darcy: 2,
            n1: 64,
            n2: 64,
            n3: 16,
            epochs: 30,
            seed: 1,
            ..Default::default()
        };
        let newton_cfg = NewtonConfig::default();
        let (state, history, converged, meta) =
            int_deep_solve(&prob, &spaces, &cfg, &newton_cfg).unwrap();
        assert!(converged, "aborted: {:?}", history.aborted);
        assert_eq!(meta.loss_history.len(), 30);
        // Reference: Newton from the Stokes-Darcy initializer.
        let ops = build_operators(&spaces, &prob.params, &prob.data);
        let sd = ops.solve_stokes_darcy().unwrap();
        let (reference, _, conv_ref) = ops.newton_solve(&sd.velocity, &newton_cfg).unwrap();
        assert!(conv_ref);
        let scale = reference
            .velocity
            .coeffs
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let worst = state
            .velocity
            .coeffs
            .iter()
            .zip(&reference.velocity.coeffs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        // Both converged to the same discrete solution within 10 eps.
        assert!(worst < 10.0 * newton_cfg.eps * scale, "drift {worst}");
    }
}
