//! The experiment driver behind the `nsdarcy` binary: configuration
//! resolution, the six subcommands, and their artifacts (CSV tables, VTK
//! fields, JSON manifests).

use crate::analysis::{
    convergence_order, discrete_max_error, rel_h1_error_scalar, rel_h1_error_vector,
    rel_l2_error_scalar, rel_l2_error_vector, ErrorReport,
};
use crate::fespace::{build_spaces, Spaces};
use crate::intdeep::{int_deep_solve_with_model, interpolate_dl_velocity};
use crate::mesh::CoupledMesh;
use crate::pinn::{
    ansatz_eval, load_checkpoint, save_checkpoint, train_with_callback, PinnConfig, PinnModel,
};
use crate::problems::{lid_driven, manufactured, Problem};
use crate::solver::{
    build_operators, initial_constant, CoupledState, IterationHistory, NewtonConfig, Operators,
};
use crate::vtk::write_state_vtk;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration: missing file, unknown preset, parse failure.
    Config(String),
    /// A solve or I/O failure at runtime.
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn io_err(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Resolved run configuration; embedded verbatim into every manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub preset: String,
    pub nu: f64,
    pub kappa: f64,
    pub mesh_k: u32,
    pub newton: NewtonConfig,
    pub pinn: PinnConfig,
    pub seed: u64,
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: "manufactured".into(),
            nu: 1.0,
            kappa: 1.0,
            mesh_k: 6,
            newton: NewtonConfig::default(),
            pinn: PinnConfig::default(),
            seed: 0,
            deterministic: false,
        }
    }
}

impl RunConfig {
    pub fn problem(&self) -> Result<Problem, CliError> {
        match self.preset.as_str() {
            "manufactured" => Ok(manufactured(self.nu, self.kappa)),
            "lid-driven" => Ok(lid_driven(self.nu)),
            other => Err(CliError::Config(format!("unknown problem preset '{other}'"))),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "nsdarcy", about = "Coupled Navier-Stokes/Darcy experiment driver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// JSON configuration file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Mesh refinement level k (cell size pi/2^k or 1/2^k by preset).
    #[arg(long)]
    pub mesh_k: Option<u32>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Training epochs for the learning phase.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Single-flow execution and timing-free CSVs, bitwise reproducible.
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve on a fixed mesh with a chosen initializer.
    SolveFem {
        /// Initial guess: sd, zero, ones, or dl.
        #[arg(long, default_value = "sd")]
        init: String,
    },
    /// Train the networks and emit checkpoint plus error milestones.
    TrainPinn {
        /// Epochs at which max errors are recorded (defaults to table rows).
        #[arg(long, value_delimiter = ',')]
        milestones: Vec<usize>,
    },
    /// The hybrid method end to end: brief training, interpolate, Newton.
    IntDeep,
    /// Mesh sweep producing the error/order table.
    ConvergenceStudy {
        #[arg(long, value_delimiter = ',', default_values_t = [6u32, 7, 8])]
        mesh_ks: Vec<u32>,
    },
    /// Initializer robustness sweep across meshes ("x" marks nonconvergence).
    RobustnessTable {
        #[arg(long, value_delimiter = ',', default_values_t = [6u32, 7, 8])]
        mesh_ks: Vec<u32>,
        /// Rows of the table: any of sd, zero, ones, dl.
        #[arg(long, value_delimiter = ',', default_values = ["sd", "zero", "ones"])]
        inits: Vec<String>,
    },
    /// Lid-driven configuration: fields as VTK plus streamline seeds.
    LidDriven,
}

/// Resolve the configuration from file defaults and flag overrides.
pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read {}: {e}", path.display()))
            })?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.pinn.seed = s;
    }
    if let Some(k) = common.mesh_k {
        cfg.mesh_k = k;
    }
    if let Some(nu) = common.nu {
        cfg.nu = nu;
    }
    if let Some(kappa) = common.kappa {
        cfg.kappa = kappa;
    }
    if let Some(e) = common.epochs {
        cfg.pinn.epochs = e;
    }
    if common.deterministic {
        cfg.deterministic = true;
    }
    cfg.problem()?; // validate the preset early
    Ok(cfg)
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'a str,
    config: &'a RunConfig,
    results: T,
}

fn write_manifest<T: Serialize>(
    dir: &Path,
    command: &str,
    config: &RunConfig,
    results: T,
) -> Result<(), CliError> {
    let manifest = Manifest { command, config, results };
    let text = serde_json::to_string_pretty(&manifest).map_err(io_err)?;
    std::fs::write(dir.join("manifest.json"), text).map_err(io_err)
}

fn history_csv(history: &IterationHistory, deterministic: bool) -> String {
    if !deterministic {
        return history.to_csv();
    }
    // Bitwise-reproducible variant: drop wall times.
    let mut out = String::from("step,e_n,residual,div_residual\n");
    for s in &history.steps {
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e}\n",
            s.step, s.e_n, s.residual, s.div_residual
        ));
    }
    out
}

/// Build (mesh, spaces, operators) for a configuration.
fn setup(cfg: &RunConfig, prob: &Problem, k: u32) -> Result<(Arc<CoupledMesh>, Spaces, Operators), CliError> {
    let _ = cfg;
    let mesh = Arc::new(prob.mesh(k).map_err(io_err)?);
    let spaces = build_spaces(&mesh);
    let ops = build_operators(&spaces, &prob.params, &prob.data);
    Ok((mesh, spaces, ops))
}

/// Run a Newton solve from a named initializer; "dl" consumes the model.
fn run_initializer(
    prob: &Problem,
    ops: &Operators,
    init: &str,
    newton: &NewtonConfig,
    model: Option<&PinnModel>,
) -> Result<(CoupledState, IterationHistory, bool), CliError> {
    match init {
        "sd" => {
            let sd = ops.solve_stokes_darcy().map_err(io_err)?;
            ops.newton_solve(&sd.velocity, newton).map_err(io_err)
        }
        "zero" => {
            let u0 = initial_constant(&ops.spaces, &prob.data, 0.0);
            ops.newton_solve(&u0, newton).map_err(io_err)
        }
        "ones" => {
            let u0 = initial_constant(&ops.spaces, &prob.data, 1.0);
            ops.newton_solve(&u0, newton).map_err(io_err)
        }
        "dl" => {
            let model = model.ok_or_else(|| CliError::Runtime("dl initializer needs a trained model".into()))?;
            int_deep_solve_with_model(prob, ops, model, newton).map_err(io_err)
        }
        other => Err(CliError::Config(format!("unknown initializer '{other}'"))),
    }
}

fn error_report(prob: &Problem, state: &CoupledState, h: f64, iterations: usize) -> ErrorReport {
    let mut report = ErrorReport {
        h,
        iterations,
        ..Default::default()
    };
    if let Some(exact) = &prob.exact {
        report.l2_u = rel_l2_error_vector(&state.velocity, |p| exact.velocity(p));
        report.l2_p = rel_l2_error_scalar(&state.pressure, |p| exact.pressure(p));
        report.l2_phi = rel_l2_error_scalar(&state.head, |p| exact.head(p));
        report.h1_u = rel_h1_error_vector(&state.velocity, |p| exact.velocity_grad(p));
        report.h1_phi = rel_h1_error_scalar(&state.head, |p| exact.head_grad(p));
        let vel = &state.velocity;
        let (mut mu, mut mv) = (0.0f64, 0.0f64);
        for n in 0..vel.map.n_nodes() {
            let p = vel.map.node_coords[n];
            let e = exact.velocity(p);
            mu = mu.max((vel.coeffs[2 * n] - e[0]).abs());
            mv = mv.max((vel.coeffs[2 * n + 1] - e[1]).abs());
        }
        report.max_u = mu;
        report.max_v = mv;
        let pres = &state.pressure;
        report.max_p = (0..pres.map.n_nodes()).fold(0.0f64, |m, n| {
            m.max((pres.coeffs[n] - exact.pressure(pres.map.node_coords[n])).abs())
        });
        let head = &state.head;
        report.max_phi = (0..head.map.n_nodes()).fold(0.0f64, |m, n| {
            m.max((head.coeffs[n] - exact.head(head.map.node_coords[n])).abs())
        });
    }
    report
}

fn report_csv(reports: &[(f64, ErrorReport)]) -> String {
    let mut out = String::from("h,l2_u,l2_p,l2_phi,h1_u,h1_phi,max_u,max_v,max_p,max_phi,iterations\n");
    for (h, r) in reports {
        out.push_str(&format!(
            "{:.8e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{}\n",
            h, r.l2_u, r.l2_p, r.l2_phi, r.h1_u, r.h1_phi, r.max_u, r.max_v, r.max_p, r.max_phi,
            r.iterations
        ));
    }
    out
}

/// Discrete max errors of the learned fields on the reference test grid
/// (mesh vertices at level `k_grid`), with the kappa scaling applied to the
/// reported pressure and head columns.
pub fn dl_max_errors(prob: &Problem, model: &PinnModel, k_grid: u32) -> Result<[f64; 4], CliError> {
    let exact = prob
        .exact
        .as_ref()
        .ok_or_else(|| CliError::Runtime("preset has no closed form to compare against".into()))?;
    let mesh = prob.mesh(k_grid).map_err(io_err)?;
    let kappa = match &prob.params.conductivity {
        crate::assembly::Conductivity::Scalar(k) => *k,
        _ => 1.0,
    };
    let (mut eu, mut ev, mut ep, mut ephi) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut xu, mut xv, mut xp, mut xphi) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for v in &mesh.vertices {
        let p = *v;
        let fluid_side = p[1] >= 0.0 || prob.fluid_rect.contains(p);
        let porous_side = p[1] <= 0.0 || prob.porous_rect.contains(p);
        if fluid_side && prob.fluid_rect.contains(p) {
            let (fluid, _) = ansatz_eval(model, &prob.ansatz, p, 0);
            eu.push(fluid.u[0].v);
            ev.push(fluid.u[1].v);
            ep.push(kappa * fluid.p.v);
            let ex = exact.velocity(p);
            xu.push(ex[0]);
            xv.push(ex[1]);
            xp.push(kappa * exact.pressure(p));
        }
        if porous_side && prob.porous_rect.contains(p) {
            let (_, phi) = ansatz_eval(model, &prob.ansatz, p, 0);
            ephi.push(kappa * phi.v);
            xphi.push(kappa * exact.head(p));
        }
    }
    Ok([
        discrete_max_error(&eu, &xu),
        discrete_max_error(&ev, &xv),
        discrete_max_error(&ep, &xp),
        discrete_max_error(&ephi, &xphi),
    ])
}

/// Interface crossing abscissa: where the vertical velocity component at the
/// interface changes sign between its extreme values.
pub fn interface_crossing(mesh: &CoupledMesh, state: &CoupledState) -> Option<f64> {
    let vel = &state.velocity;
    // Collect interface velocity samples (vertex and midpoint nodes), sorted
    // by x.
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for edge in &mesh.interface_edges {
        let fe = vel.map.tri_to_elem[edge.fluid_tri];
        for k in 0..6 {
            let node = vel.map.elem_nodes[fe][k];
            if !seen.insert(node) {
                continue;
            }
            let p = vel.map.node_coords[node];
            if (p[1] - mesh.vertices[edge.v[0]][1]).abs() < 1e-12 {
                samples.push((p[0], vel.coeffs[2 * node + 1]));
            }
        }
    }
    samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if samples.len() < 3 {
        return None;
    }
    // Sign change between the extreme positive and negative samples.
    let imax = samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())?
        .0;
    let imin = samples
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())?
        .0;
    let (lo, hi) = if imax < imin { (imax, imin) } else { (imin, imax) };
    for w in samples[lo..=hi].windows(2) {
        let (x0, v0) = w[0];
        let (x1, v1) = w[1];
        if v0 == 0.0 {
            return Some(x0);
        }
        if v0 * v1 < 0.0 {
            return Some(x0 + (x1 - x0) * v0 / (v0 - v1));
        }
    }
    None
}

/// Streamline seed points: a coarse grid across both subdomains.
fn streamline_seeds(prob: &Problem) -> String {
    let mut out = String::from("x,y\n");
    for rect in [&prob.fluid_rect, &prob.porous_rect] {
        for j in 1..8 {
            for i in 1..16 {
                let x = rect.x0 + rect.width() * i as f64 / 16.0;
                let y = rect.y0 + rect.height() * j as f64 / 8.0;
                out.push_str(&format!("{x:.6},{y:.6}\n"));
            }
        }
    }
    out
}

/// Execute a parsed command line. Returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match run_inner(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("nsdarcy: {e}");
            e.exit_code()
        }
    }
}

fn run_inner(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.common)?;
    let out_dir = &cli.common.out_dir;
    std::fs::create_dir_all(out_dir).map_err(io_err)?;
    match &cli.command {
        Command::SolveFem { init } => cmd_solve_fem(&cfg, out_dir, init),
        Command::TrainPinn { milestones } => cmd_train_pinn(&cfg, out_dir, milestones),
        Command::IntDeep => cmd_int_deep(&cfg, out_dir),
        Command::ConvergenceStudy { mesh_ks } => cmd_convergence(&cfg, out_dir, mesh_ks),
        Command::RobustnessTable { mesh_ks, inits } => cmd_robustness(&cfg, out_dir, mesh_ks, inits),
        Command::LidDriven => cmd_lid_driven(&cfg, out_dir),
    }
}

#[derive(Serialize)]
struct SolveResults {
    initializer: String,
    converged: bool,
    iterations: usize,
    report: ErrorReport,
}

fn train_model(prob: &Problem, cfg: &RunConfig) -> Result<PinnModel, CliError> {
    let mut pinn = cfg.pinn.clone();
    pinn.seed = cfg.seed;
    crate::pinn::train(prob, &pinn)
        .map(|(model, _)| model)
        .map_err(io_err)
}

fn cmd_solve_fem(cfg: &RunConfig, out_dir: &Path, init: &str) -> Result<(), CliError> {
    let prob = cfg.problem()?;
    let (mesh, _spaces, ops) = setup(cfg, &prob, cfg.mesh_k)?;
    let model = if init == "dl" { Some(train_model(&prob, cfg)?) } else { None };
    let (state, history, converged) =
        run_initializer(&prob, &ops, init, &cfg.newton, model.as_ref())?;
    let report = error_report(&prob, &state, mesh.h, history.iterations());
    std::fs::write(out_dir.join("history.csv"), history_csv(&history, cfg.deterministic))
        .map_err(io_err)?;
    std::fs::write(out_dir.join("error_report.csv"), report_csv(&[(mesh.h, report.clone())]))
        .map_err(io_err)?;
    write_state_vtk(&out_dir.join("solution.vtk"), &mesh, &state).map_err(io_err)?;
    write_manifest(
        out_dir,
        "solve-fem",
        cfg,
        SolveResults {
            initializer: init.to_string(),
            converged,
            iterations: history.iterations(),
            report,
        },
    )
}

#[derive(Serialize)]
struct TrainResults {
    final_loss: f64,
    milestones: Vec<(usize, [f64; 4])>,
}

fn cmd_train_pinn(cfg: &RunConfig, out_dir: &Path, milestones: &[usize]) -> Result<(), CliError> {
    let prob = cfg.problem()?;
    let mut pinn = cfg.pinn.clone();
    pinn.seed = cfg.seed;
    let default_marks: Vec<usize> = [200, 500, 1000, 1500, 2000, 2500, 3000, 3500, 5000, 7500, 10000]
        .iter()
        .copied()
        .filter(|&m| m <= pinn.epochs)
        .collect();
    let marks: Vec<usize> = if milestones.is_empty() {
        if default_marks.is_empty() && pinn.epochs > 0 {
            vec![pinn.epochs]
        } else {
            default_marks
        }
    } else {
        milestones.to_vec()
    };
    let mut recorded: Vec<(usize, [f64; 4])> = Vec::new();
    let grid_k = 8.min(cfg.mesh_k.max(6));
    let has_exact = prob.exact.is_some();
    let (model, history) = {
        let prob_ref = &prob;
        let recorded = &mut recorded;
        train_with_callback(prob_ref, &pinn, |epoch, model| {
            if has_exact && marks.contains(&epoch) {
                if let Ok(errs) = dl_max_errors(prob_ref, model, grid_k) {
                    recorded.push((epoch, errs));
                }
            }
        })
        .map_err(io_err)?
    };
    save_checkpoint(&out_dir.join("checkpoint.json"), &model, &pinn).map_err(io_err)?;
    let mut hist_csv = String::from(if cfg.deterministic {
        "epoch,loss,i1,lr\n"
    } else {
        "epoch,loss,i1,lr,seconds\n"
    });
    for r in &history {
        if cfg.deterministic {
            hist_csv.push_str(&format!("{},{:.12e},{:.12e},{:.6e}\n", r.epoch, r.loss, r.i1, r.lr));
        } else {
            hist_csv.push_str(&format!(
                "{},{:.12e},{:.12e},{:.6e},{:.6}\n",
                r.epoch, r.loss, r.i1, r.lr, r.seconds
            ));
        }
    }
    std::fs::write(out_dir.join("train_history.csv"), hist_csv).map_err(io_err)?;
    let mut mcsv = String::from("epoch,max_u,max_v,kappa_max_p,kappa_max_phi\n");
    for (epoch, e) in &recorded {
        mcsv.push_str(&format!(
            "{epoch},{:.6e},{:.6e},{:.6e},{:.6e}\n",
            e[0], e[1], e[2], e[3]
        ));
    }
    std::fs::write(out_dir.join("milestones.csv"), mcsv).map_err(io_err)?;
    write_manifest(
        out_dir,
        "train-pinn",
        cfg,
        TrainResults {
            final_loss: history.last().map(|r| r.loss).unwrap_or(f64::NAN),
            milestones: recorded,
        },
    )
}

#[derive(Serialize)]
struct IntDeepResults {
    converged: bool,
    iterations: usize,
    e_trace: Vec<f64>,
    report: ErrorReport,
}

fn cmd_int_deep(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let prob = cfg.problem()?;
    let (mesh, _spaces, ops) = setup(cfg, &prob, cfg.mesh_k)?;
    let model = train_model(&prob, cfg)?;
    save_checkpoint(&out_dir.join("checkpoint.json"), &model, &cfg.pinn).map_err(io_err)?;
    let (state, history, converged) =
        int_deep_solve_with_model(&prob, &ops, &model, &cfg.newton).map_err(io_err)?;
    let report = error_report(&prob, &state, mesh.h, history.iterations());
    std::fs::write(out_dir.join("history.csv"), history_csv(&history, cfg.deterministic))
        .map_err(io_err)?;
    write_state_vtk(&out_dir.join("solution.vtk"), &mesh, &state).map_err(io_err)?;
    write_manifest(
        out_dir,
        "int-deep",
        cfg,
        IntDeepResults {
            converged,
            iterations: history.iterations(),
            e_trace: history.steps.iter().map(|s| s.e_n).collect(),
            report,
        },
    )
}

fn cmd_convergence(cfg: &RunConfig, out_dir: &Path, mesh_ks: &[u32]) -> Result<(), CliError> {
    let prob = cfg.problem()?;
    if prob.exact.is_none() {
        return Err(CliError::Config(
            "convergence study needs a preset with a closed-form solution".into(),
        ));
    }
    let mut reports = Vec::new();
    for &k in mesh_ks {
        let (mesh, _spaces, ops) = setup(cfg, &prob, k)?;
        let (state, history, converged) = run_initializer(&prob, &ops, "sd", &cfg.newton, None)?;
        if !converged {
            return Err(CliError::Runtime(format!("Newton did not converge at k={k}")));
        }
        reports.push((mesh.h, error_report(&prob, &state, mesh.h, history.iterations())));
    }
    let hs: Vec<f64> = reports.iter().map(|(h, _)| *h).collect();
    let take = |sel: &dyn Fn(&ErrorReport) -> f64| -> Vec<f64> {
        reports.iter().map(|(_, r)| sel(r)).collect()
    };
    let columns: [(&str, Vec<f64>); 5] = [
        ("l2_u", take(&|r| r.l2_u)),
        ("l2_p", take(&|r| r.l2_p)),
        ("l2_phi", take(&|r| r.l2_phi)),
        ("h1_u", take(&|r| r.h1_u)),
        ("h1_phi", take(&|r| r.h1_phi)),
    ];
    let mut csv = String::from("h,l2_u,order_u,l2_p,order_p,l2_phi,order_phi,h1_u,order_h1u,h1_phi,order_h1phi,iterations\n");
    for (i, (h, r)) in reports.iter().enumerate() {
        let order_at = |errs: &Vec<f64>| -> String {
            if i == 0 {
                "-".into()
            } else {
                format!("{:.4}", convergence_order(&errs[i - 1..=i], &hs[i - 1..=i])[0])
            }
        };
        csv.push_str(&format!(
            "{:.8e},{:.6e},{},{:.6e},{},{:.6e},{},{:.6e},{},{:.6e},{},{}\n",
            h,
            r.l2_u,
            order_at(&columns[0].1),
            r.l2_p,
            order_at(&columns[1].1),
            r.l2_phi,
            order_at(&columns[2].1),
            r.h1_u,
            order_at(&columns[3].1),
            r.h1_phi,
            order_at(&columns[4].1),
            r.iterations
        ));
    }
    std::fs::write(out_dir.join("convergence.csv"), csv).map_err(io_err)?;
    std::fs::write(out_dir.join("error_report.csv"), report_csv(&reports)).map_err(io_err)?;
    #[derive(Serialize)]
    struct ConvergenceResults {
        hs: Vec<f64>,
        orders_l2_u: Vec<f64>,
        orders_l2_p: Vec<f64>,
        orders_l2_phi: Vec<f64>,
        orders_h1_u: Vec<f64>,
        orders_h1_phi: Vec<f64>,
    }
    let results = ConvergenceResults {
        hs: hs.clone(),
        orders_l2_u: convergence_order(&columns[0].1, &hs),
        orders_l2_p: convergence_order(&columns[1].1, &hs),
        orders_l2_phi: convergence_order(&columns[2].1, &hs),
        orders_h1_u: convergence_order(&columns[3].1, &hs),
        orders_h1_phi: convergence_order(&columns[4].1, &hs),
    };
    write_manifest(out_dir, "convergence-study", cfg, results)
}

#[derive(Serialize, Clone)]
struct RobustnessCell {
    init: String,
    mesh_k: u32,
    iterations: usize,
    converged: bool,
}

fn cmd_robustness(
    cfg: &RunConfig,
    out_dir: &Path,
    mesh_ks: &[u32],
    inits: &[String],
) -> Result<(), CliError> {
    let prob = cfg.problem()?;
    let model = if inits.iter().any(|i| i == "dl") {
        // One training per parameter set seeds every mesh.
        Some(train_model(&prob, cfg)?)
    } else {
        None
    };
    let mut cells: Vec<RobustnessCell> = Vec::new();
    for &k in mesh_ks {
        let (_mesh, _spaces, ops) = setup(cfg, &prob, k)?;
        let runs: Vec<RobustnessCell> = if cfg.deterministic {
            inits
                .iter()
                .map(|init| run_cell(&prob, &ops, init, &cfg.newton, model.as_ref(), k))
                .collect::<Result<_, _>>()?
        } else {
            inits
                .par_iter()
                .map(|init| run_cell(&prob, &ops, init, &cfg.newton, model.as_ref(), k))
                .collect::<Result<_, _>>()?
        };
        cells.extend(runs);
    }
    let mut csv = String::from("init");
    for &k in mesh_ks {
        csv.push_str(&format!(",k={k}"));
    }
    csv.push('\n');
    for init in inits {
        csv.push_str(init);
        for &k in mesh_ks {
            let cell = cells
                .iter()
                .find(|c| &c.init == init && c.mesh_k == k)
                .expect("cell computed");
            if cell.converged {
                csv.push_str(&format!(",{}", cell.iterations));
            } else {
                csv.push_str(",x");
            }
        }
        csv.push('\n');
    }
    std::fs::write(out_dir.join("robustness.csv"), csv).map_err(io_err)?;
    write_manifest(out_dir, "robustness-table", cfg, cells)
}

fn run_cell(
    prob: &Problem,
    ops: &Operators,
    init: &str,
    newton: &NewtonConfig,
    model: Option<&PinnModel>,
    mesh_k: u32,
) -> Result<RobustnessCell, CliError> {
    let (_, history, converged) = run_initializer(prob, ops, init, newton, model)?;
    Ok(RobustnessCell {
        init: init.to_string(),
        mesh_k,
        iterations: history.iterations(),
        converged,
    })
}

#[derive(Serialize)]
struct LidDrivenResults {
    converged: bool,
    iterations: usize,
    initializer: String,
    crossing_x: Option<f64>,
}

fn cmd_lid_driven(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    cfg.preset = "lid-driven".into();
    let prob = cfg.problem()?;
    let (mesh, spaces, ops) = setup(&cfg, &prob, cfg.mesh_k)?;
    // Classical initializers first; training only as a fallback.
    let mut chosen = "sd".to_string();
    let mut outcome = run_initializer(&prob, &ops, "sd", &cfg.newton, None)?;
    if !outcome.2 {
        chosen = "ones".into();
        outcome = run_initializer(&prob, &ops, "ones", &cfg.newton, None)?;
    }
    if !outcome.2 {
        chosen = "dl".into();
        let model = train_model(&prob, &cfg)?;
        let u0 = interpolate_dl_velocity(&spaces, &prob, &model);
        outcome = ops.newton_solve(&u0, &cfg.newton).map_err(io_err)?;
    }
    let (state, history, converged) = outcome;
    let crossing = interface_crossing(&mesh, &state);
    write_state_vtk(&out_dir.join("lid_driven.vtk"), &mesh, &state).map_err(io_err)?;
    std::fs::write(out_dir.join("streamline_seeds.csv"), streamline_seeds(&prob)).map_err(io_err)?;
    std::fs::write(out_dir.join("history.csv"), history_csv(&history, cfg.deterministic))
        .map_err(io_err)?;
    write_manifest(
        out_dir,
        "lid-driven",
        &cfg,
        LidDrivenResults {
            converged,
            iterations: history.iterations(),
            initializer: chosen,
            crossing_x: crossing,
        },
    )
}

/// Load a checkpoint and rebuild the model (available to downstream tools).
pub fn model_from_checkpoint(path: &Path) -> Result<(PinnModel, PinnConfig), CliError> {
    let ck = load_checkpoint(path).map_err(|e| CliError::Config(e.to_string()))?;
    Ok((ck.model, ck.config))
}
