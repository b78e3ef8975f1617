//! The monolithic solves: the linear Stokes-Darcy initializer, one Newton
//! step of the coupled nonlinear system, and the Newton iteration with the
//! relative-change stopping rule.
//!
//! Unknown layout is `[velocity; pressure; head]`. Dirichlet rows are
//! replaced by identity rows with the boundary value on the right-hand side;
//! columns are kept, which is how inhomogeneous data enters the interior
//! equations.

use crate::assembly::{
    assemble_af, assemble_ap, assemble_b, assemble_convection_rhs, assemble_interface_coupling,
    assemble_loads, assemble_mass, assemble_oseen_into, mass_norm, ModelParams, ProblemData,
    TripletBuf,
};
use crate::fespace::{dirichlet_values_scalar, dirichlet_values_vector, FEFunction, FieldKind, Spaces};
use crate::linalg::{factorize_with, FactorPerm, LinalgError, SparseMatrix};
use crate::mesh::BoundaryTag;
use std::fmt;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub enum SolverError {
    Linalg(LinalgError),
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::Linalg(e) => write!(f, "linear solver: {e}"),
        }
    }
}

impl std::error::Error for SolverError {}

impl From<LinalgError> for SolverError {
    fn from(e: LinalgError) -> Self {
        SolverError::Linalg(e)
    }
}

/// Newton stopping parameters. The iteration stops once the maximum relative
/// change drops to `eps` or `n_max` steps have been taken.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct NewtonConfig {
    pub eps: f64,
    pub n_max: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { eps: 1e-7, n_max: 20 }
    }
}

/// Coefficient vectors of the three coupled fields on one mesh.
#[derive(Clone, Debug)]
pub struct CoupledState {
    pub velocity: FEFunction,
    pub pressure: FEFunction,
    pub head: FEFunction,
}

/// Per-step record of the Newton iteration.
#[derive(Clone, Debug, serde::Serialize)]
pub struct IterationStep {
    pub step: usize,
    /// Maximum relative L2 change across the fields.
    pub e_n: f64,
    /// Relative algebraic residual of the linear solve.
    pub residual: f64,
    /// max_q |b(u_n, q)| / ||u_n||.
    pub div_residual: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct IterationHistory {
    pub steps: Vec<IterationStep>,
    /// Populated when the iteration stopped on a solver breakdown rather
    /// than the stopping rule; reported as nonconvergence.
    pub aborted: Option<String>,
}

impl IterationHistory {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,e_n,residual,div_residual,seconds\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.6}\n",
                s.step, s.e_n, s.residual, s.div_residual, s.seconds
            ));
        }
        out
    }
}

/// Assembled constant operators of one (spaces, params, data) triple,
/// reusable across Newton steps and initializers.
pub struct Operators {
    pub spaces: Spaces,
    pub params: ModelParams,
    pub a_f: SparseMatrix,
    pub a_p: SparseMatrix,
    pub b: SparseMatrix,
    pub c: SparseMatrix,
    pub ct: SparseMatrix,
    pub mass_u: SparseMatrix,
    pub mass_p: SparseMatrix,
    pub mass_phi: SparseMatrix,
    pub load_fluid: Vec<f64>,
    pub load_porous: Vec<f64>,
    /// Monolithic constant blocks with Dirichlet rows replaced by identity.
    pub constant: SparseMatrix,
    pub constrained: Vec<bool>,
    pub bc_values: Vec<f64>,
    pub n_u: usize,
    pub n_p: usize,
    pub n_phi: usize,
    factor_perm: OnceLock<Arc<FactorPerm>>,
}

impl Operators {
    pub fn n_total(&self) -> usize {
        self.n_u + self.n_p + self.n_phi
    }

    fn factor_perm(&self) -> Result<Arc<FactorPerm>, SolverError> {
        if let Some(p) = self.factor_perm.get() {
            return Ok(p.clone());
        }
        let p = Arc::new(FactorPerm {
            row_of: (0..self.n_total()).collect(),
            order: site_fill_order(&self.spaces),
        });
        let _ = self.factor_perm.set(p.clone());
        Ok(p)
    }

    /// Monolithic constant matrix without Dirichlet row replacement, for
    /// energy-identity checks.
    pub fn monolithic_raw(&self) -> SparseMatrix {
        let n = self.n_total();
        let mut trip = TripletBuf::new(n, n);
        push_block(&mut trip, &self.a_f, 0, 0, 1.0, None);
        push_block(&mut trip, &self.b.transpose(), 0, self.n_u, 1.0, None);
        push_block(&mut trip, &self.c, 0, self.n_u + self.n_p, 1.0, None);
        push_block(&mut trip, &self.b, self.n_u, 0, 1.0, None);
        push_block(&mut trip, &self.ct, self.n_u + self.n_p, 0, -1.0, None);
        push_block(&mut trip, &self.a_p, self.n_u + self.n_p, self.n_u + self.n_p, 1.0, None);
        trip.compress()
    }
}

fn push_block(
    trip: &mut TripletBuf,
    block: &SparseMatrix,
    row_off: usize,
    col_off: usize,
    scale: f64,
    skip_rows: Option<&[bool]>,
) {
    for r in 0..block.nrows {
        if let Some(mask) = skip_rows {
            if mask[row_off + r] {
                continue;
            }
        }
        let (cols, vals) = block.row(r);
        for (c, v) in cols.iter().zip(vals) {
            trip.push(row_off + r, col_off + c, scale * v);
        }
    }
}

/// Assemble all constant blocks, the Dirichlet data and the monolithic
/// constant matrix.
pub fn build_operators(spaces: &Spaces, params: &ModelParams, data: &ProblemData) -> Operators {
    let a_f = assemble_af(spaces, params);
    let a_p = assemble_ap(spaces, params);
    let b = assemble_b(spaces);
    let (c, ct) = assemble_interface_coupling(spaces, params);
    let mass_u = assemble_mass(spaces, FieldKind::VelocityP2);
    let mass_p = assemble_mass(spaces, FieldKind::PressureP1);
    let mass_phi = assemble_mass(spaces, FieldKind::HeadP2);
    let (load_fluid, load_porous) = assemble_loads(spaces, data, params);

    let n_u = spaces.velocity.n_dofs();
    let n_p = spaces.pressure.n_dofs();
    let n_phi = spaces.head.n_dofs();
    let n = n_u + n_p + n_phi;

    let mut constrained = vec![false; n];
    let mut bc_values = vec![0.0; n];
    let g_vel = data.g_velocity.clone();
    for (dof, value) in
        dirichlet_values_vector(&spaces.velocity, BoundaryTag::GammaF, move |p| g_vel(p))
            .expect("outer boundary tag")
    {
        constrained[dof] = true;
        bc_values[dof] = value;
    }
    let g_head = data.g_head.clone();
    for (dof, value) in
        dirichlet_values_scalar(&spaces.head, BoundaryTag::GammaP, move |p| g_head(p))
            .expect("outer boundary tag")
    {
        constrained[n_u + n_p + dof] = true;
        bc_values[n_u + n_p + dof] = value;
    }

    let mut trip = TripletBuf::with_capacity(n, n, a_f.nnz() + 2 * b.nnz() + c.nnz() + ct.nnz() + a_p.nnz() + n);
    push_block(&mut trip, &a_f, 0, 0, 1.0, Some(&constrained));
    push_block(&mut trip, &b.transpose(), 0, n_u, 1.0, Some(&constrained));
    push_block(&mut trip, &c, 0, n_u + n_p, 1.0, Some(&constrained));
    push_block(&mut trip, &b, n_u, 0, 1.0, Some(&constrained));
    push_block(&mut trip, &ct, n_u + n_p, 0, -1.0, Some(&constrained));
    push_block(&mut trip, &a_p, n_u + n_p, n_u + n_p, 1.0, Some(&constrained));
    for (d, &is_c) in constrained.iter().enumerate() {
        if is_c {
            trip.push(d, d, 1.0);
        }
    }
    let constant = trip.compress();

    Operators {
        spaces: spaces.clone(),
        params: params.clone(),
        a_f,
        a_p,
        b,
        c,
        ct,
        mass_u,
        mass_p,
        mass_phi,
        load_fluid,
        load_porous,
        constant,
        constrained,
        bc_values,
        n_u,
        n_p,
        n_phi,
        factor_perm: OnceLock::new(),
    }
}

impl Operators {
    fn split_state(&self, x: &[f64]) -> CoupledState {
        let mut velocity = FEFunction::zero(&self.spaces.velocity);
        let mut pressure = FEFunction::zero(&self.spaces.pressure);
        let mut head = FEFunction::zero(&self.spaces.head);
        velocity.coeffs.copy_from_slice(&x[..self.n_u]);
        pressure.coeffs.copy_from_slice(&x[self.n_u..self.n_u + self.n_p]);
        head.coeffs.copy_from_slice(&x[self.n_u + self.n_p..]);
        // Constrained dofs carry the prescribed data exactly.
        for d in 0..self.n_u {
            if self.constrained[d] {
                velocity.coeffs[d] = self.bc_values[d];
            }
        }
        for d in 0..self.n_phi {
            let g = self.n_u + self.n_p + d;
            if self.constrained[g] {
                head.coeffs[d] = self.bc_values[g];
            }
        }
        CoupledState { velocity, pressure, head }
    }

    fn base_rhs(&self) -> Vec<f64> {
        let n = self.n_total();
        let mut rhs = vec![0.0; n];
        rhs[..self.n_u].copy_from_slice(&self.load_fluid);
        rhs[self.n_u + self.n_p..].copy_from_slice(&self.load_porous);
        rhs
    }

    fn apply_bc_rhs(&self, rhs: &mut [f64]) {
        for (d, &is_c) in self.constrained.iter().enumerate() {
            if is_c {
                rhs[d] = self.bc_values[d];
            }
        }
    }

    fn solve_monolithic(&self, matrix: &SparseMatrix, rhs: &[f64]) -> Result<(Vec<f64>, f64), SolverError> {
        self.solve_monolithic_cached(matrix, rhs, &mut None)
    }

    /// Solve reusing a cached factorization's symbolic structure when the
    /// pattern repeats (Newton steps); falls back to a fresh pivoting
    /// factorization when the frozen pivot sequence degenerates.
    fn solve_monolithic_cached(
        &self,
        matrix: &SparseMatrix,
        rhs: &[f64],
        cache: &mut Option<crate::linalg::Factorization>,
    ) -> Result<(Vec<f64>, f64), SolverError> {
        let refreshed = match cache.take() {
            Some(mut fact) => match fact.refactorize(matrix) {
                Ok(()) => Some(fact),
                Err(_) => None,
            },
            None => None,
        };
        let fact = match refreshed {
            Some(f) => f,
            None => factorize_with(matrix, self.factor_perm()?)?,
        };
        let x = fact.solve_refined(matrix, rhs, 1);
        // Backward-error contract; a failed check aborts the run loudly.
        let mut r = matrix.spmv(&x);
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri -= bi;
        }
        let norm = |v: &[f64]| v.iter().map(|t| t * t).sum::<f64>().sqrt();
        let residual = norm(&r);
        let bound = 1e-10 * (matrix.max_abs() * norm(&x) + norm(rhs));
        if !(residual <= bound) {
            return Err(SolverError::Linalg(LinalgError::ResidualCheck { residual, bound }));
        }
        let _ = &residual;
        let rel = residual / (norm(rhs) + f64::MIN_POSITIVE);
        *cache = Some(fact);
        Ok((x, rel))
    }

    /// Solve the linear Stokes-Darcy system (no convection): the classical
    /// Newton initializer.
    pub fn solve_stokes_darcy(&self) -> Result<CoupledState, SolverError> {
        let mut rhs = self.base_rhs();
        self.apply_bc_rhs(&mut rhs);
        let (x, _) = self.solve_monolithic(&self.constant, &rhs)?;
        Ok(self.split_state(&x))
    }

    /// One Newton step linearized at `prev`.
    pub fn newton_step(&self, prev: &CoupledState) -> Result<CoupledState, SolverError> {
        let (x, _, _) = self.newton_step_inner(prev, &mut None)?;
        Ok(self.split_state(&x))
    }

    fn newton_step_inner(
        &self,
        prev: &CoupledState,
        cache: &mut Option<crate::linalg::Factorization>,
    ) -> Result<(Vec<f64>, f64, f64), SolverError> {
        let n = self.n_total();
        let mut oseen = TripletBuf::with_capacity(n, n, self.spaces.velocity.n_elems() * 216);
        {
            // N1 and N2 land in the same buffer: their sum enters the matrix.
            let mut filtered = FilteredBuf {
                inner: &mut oseen,
                constrained: &self.constrained,
            };
            let mut n1 = TripletBuf::new(self.n_u, self.n_u);
            let mut n2 = TripletBuf::new(self.n_u, self.n_u);
            assemble_oseen_into(&self.spaces, &self.params, &prev.velocity, &mut n1, &mut n2);
            filtered.extend(&n1);
            filtered.extend(&n2);
        }
        let matrix = self.constant.add(&oseen.compress())?;
        let mut rhs = self.base_rhs();
        let conv = assemble_convection_rhs(&self.spaces, &self.params, &prev.velocity);
        for (r, c) in rhs[..self.n_u].iter_mut().zip(&conv) {
            *r += c;
        }
        self.apply_bc_rhs(&mut rhs);
        let (x, rel) = self.solve_monolithic_cached(&matrix, &rhs, cache)?;
        // Discrete divergence residual of the new velocity.
        let div = self.b.spmv(&x[..self.n_u]);
        let div_max = div.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let u_norm = x[..self.n_u].iter().map(|v| v * v).sum::<f64>().sqrt();
        let div_rel = if u_norm > 0.0 { div_max / u_norm } else { div_max };
        Ok((x, rel, div_rel))
    }

    /// Newton iteration from a velocity initial guess.
    ///
    /// The stopping quantity is the maximum relative discrete-L2 change over
    /// the fields, with denominators taken at the previous iterate; a
    /// denominator under 1e-14 switches that field to absolute change. Only
    /// the velocity enters the first step's change (no previous pressure or
    /// head exists). Non-finite or exploding iterates and linear-solver
    /// breakdowns terminate the loop as nonconvergence.
    pub fn newton_solve(
        &self,
        u0: &FEFunction,
        cfg: &NewtonConfig,
    ) -> Result<(CoupledState, IterationHistory, bool), SolverError> {
        assert_eq!(u0.coeffs.len(), self.n_u, "initial guess lives on the velocity space");
        let mut prev = CoupledState {
            velocity: u0.clone(),
            pressure: FEFunction::zero(&self.spaces.pressure),
            head: FEFunction::zero(&self.spaces.head),
        };
        let mut history = IterationHistory::default();
        let mut converged = false;
        let mut cache: Option<crate::linalg::Factorization> = None;
        for step in 1..=cfg.n_max {
            let t0 = Instant::now();
            let (x, rel, div_rel) = match self.newton_step_inner(&prev, &mut cache) {
                Ok(v) => v,
                Err(e) => {
                    history.aborted = Some(e.to_string());
                    break;
                }
            };
            let state = self.split_state(&x);
            let mut e_n = rel_change(&self.mass_u, &state.velocity, &prev.velocity);
            if step > 1 {
                e_n = e_n
                    .max(rel_change(&self.mass_p, &state.pressure, &prev.pressure))
                    .max(rel_change(&self.mass_phi, &state.head, &prev.head));
            }
            history.steps.push(IterationStep {
                step,
                e_n,
                residual: rel,
                div_residual: div_rel,
                seconds: t0.elapsed().as_secs_f64(),
            });
            prev = state;
            if e_n <= cfg.eps {
                converged = true;
                break;
            }
            if !e_n.is_finite() || e_n > 1e12 {
                // The iterate exploded; further steps cannot recover.
                break;
            }
        }
        Ok((prev, history, converged))
    }
}

/// Fill order over monolithic dofs built from the mesh structure: nested
/// dissection of the scalar site graph (one vertex per P2 node of the union
/// mesh), each site expanded as velocity components, then pressure, then
/// head.
///
/// Interleaving pressure right after its neighboring velocities keeps the
/// partial pivots of the zero-diagonal pressure columns local, which
/// preserves the fill bound of the dissection; ordering fields block-by-block
/// instead was measured to inflate fill several-fold.
pub fn site_fill_order(spaces: &Spaces) -> Vec<usize> {
    use std::collections::HashMap;
    let mesh = &spaces.mesh;
    let n_u = spaces.velocity.n_dofs();
    let n_p = spaces.pressure.n_dofs();

    // Site per mesh vertex and per mesh edge (P2 midpoints), shared across
    // fields and regions.
    let mut vertex_site = vec![u32::MAX; mesh.n_vertices()];
    let mut edge_site: HashMap<(usize, usize), u32> = HashMap::new();
    let mut n_sites = 0u32;
    let mut tri_sites: Vec<[u32; 6]> = Vec::with_capacity(mesh.n_triangles());
    for tri in &mesh.triangles {
        let mut sites = [0u32; 6];
        for k in 0..3 {
            let v = tri.v[k];
            if vertex_site[v] == u32::MAX {
                vertex_site[v] = n_sites;
                n_sites += 1;
            }
            sites[k] = vertex_site[v];
        }
        for k in 0..3 {
            let (a, b) = (tri.v[k], tri.v[(k + 1) % 3]);
            let key = if a < b { (a, b) } else { (b, a) };
            let site = *edge_site.entry(key).or_insert_with(|| {
                let s = n_sites;
                n_sites += 1;
                s
            });
            sites[3 + k] = site;
        }
        tri_sites.push(sites);
    }
    // Site graph: each element is a 6-clique; dissect by BFS level sets.
    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(tri_sites.len() * 15);
    for sites in &tri_sites {
        for i in 0..6 {
            for j in (i + 1)..6 {
                edges.push((sites[i], sites[j]));
            }
        }
    }
    let (site_order, group_starts) =
        crate::linalg::ordering::nd_order_groups_from_edges(n_sites as usize, &edges);

    // Dofs per site, velocities first, then pressure, then head.
    let mut site_dofs: Vec<Vec<u32>> = vec![Vec::new(); n_sites as usize];
    let vel = &spaces.velocity;
    for (e, &t) in vel.elems.iter().enumerate() {
        for k in 0..vel.kind.nodes_per_elem() {
            let node = vel.elem_nodes[e][k];
            let site = tri_sites[t][k] as usize;
            let d0 = vel.dof(node, 0) as u32;
            if !site_dofs[site].contains(&d0) {
                site_dofs[site].push(d0);
                site_dofs[site].push(vel.dof(node, 1) as u32);
            }
        }
    }
    let pres = &spaces.pressure;
    for (e, &t) in pres.elems.iter().enumerate() {
        for k in 0..3 {
            let node = pres.elem_nodes[e][k];
            let site = tri_sites[t][k] as usize;
            let dof = (n_u + node) as u32;
            if !site_dofs[site].contains(&dof) {
                site_dofs[site].push(dof);
            }
        }
    }
    let head = &spaces.head;
    for (e, &t) in head.elems.iter().enumerate() {
        for k in 0..head.kind.nodes_per_elem() {
            let node = head.elem_nodes[e][k];
            let site = tri_sites[t][k] as usize;
            let dof = (n_u + n_p + node) as u32;
            if !site_dofs[site].contains(&dof) {
                site_dofs[site].push(dof);
            }
        }
    }
    // Emit per dissection group: every velocity of the group before any of
    // its pressures, so each eliminated pressure column has a Schur-filled
    // diagonal and threshold pivoting stays put. Heads are independent and
    // close each group.
    let mut order = Vec::with_capacity(spaces.velocity.n_dofs() + n_p + spaces.head.n_dofs());
    for g in group_starts.windows(2) {
        let sites = &site_order[g[0]..g[1]];
        for &s in sites {
            for &d in &site_dofs[s] {
                if (d as usize) < n_u {
                    order.push(d as usize);
                }
            }
        }
        for &s in sites {
            for &d in &site_dofs[s] {
                if (d as usize) >= n_u {
                    order.push(d as usize);
                }
            }
        }
    }
    order
}

struct FilteredBuf<'a> {
    inner: &'a mut TripletBuf,
    constrained: &'a [bool],
}

impl FilteredBuf<'_> {
    fn extend(&mut self, block: &TripletBuf) {
        block.for_each(|r, c, v| {
            if !self.constrained[r] {
                self.inner.push(r, c, v);
            }
        });
    }
}

fn rel_change(mass: &SparseMatrix, new: &FEFunction, old: &FEFunction) -> f64 {
    let diff: Vec<f64> = new
        .coeffs
        .iter()
        .zip(&old.coeffs)
        .map(|(a, b)| a - b)
        .collect();
    let dn = mass_norm(mass, &diff);
    let on = mass_norm(mass, &old.coeffs);
    if on < 1e-14 {
        dn
    } else {
        dn / on
    }
}

/// Constant-componentwise velocity initializer with Dirichlet dofs
/// overwritten by the boundary data.
pub fn initial_constant(spaces: &Spaces, data: &ProblemData, value: f64) -> FEFunction {
    let mut u0 = FEFunction::constant(&spaces.velocity, value);
    let g = data.g_velocity.clone();
    for (dof, v) in dirichlet_values_vector(&spaces.velocity, BoundaryTag::GammaF, move |p| g(p))
        .expect("outer boundary tag")
    {
        u0.coeffs[dof] = v;
    }
    u0
}

/// Convenience wrappers matching the operation contracts.
pub fn solve_stokes_darcy(
    spaces: &Spaces,
    params: &ModelParams,
    data: &ProblemData,
) -> Result<CoupledState, SolverError> {
    build_operators(spaces, params, data).solve_stokes_darcy()
}

pub fn newton_step(
    spaces: &Spaces,
    params: &ModelParams,
    data: &ProblemData,
    prev: &CoupledState,
) -> Result<CoupledState, SolverError> {
    build_operators(spaces, params, data).newton_step(prev)
}

pub fn newton_solve(
    spaces: &Spaces,
    params: &ModelParams,
    data: &ProblemData,
    u0: &FEFunction,
    cfg: &NewtonConfig,
) -> Result<(CoupledState, IterationHistory, bool), SolverError> {
    build_operators(spaces, params, data).newton_solve(u0, cfg)
}
