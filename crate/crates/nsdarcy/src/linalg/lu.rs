//! Sparse LU factorization with threshold partial pivoting: left-looking with
//! supernode fusion, over a fill-reducing symmetric permutation.
//!
//! Partial pivoting is not optional here: the monolithic saddle-point systems
//! carry an exactly zero pressure diagonal block. The threshold strongly
//! prefers the diagonal (which the caller's ordering keeps numerically
//! nonzero through Schur fill), and one pass of iterative refinement covers
//! the accuracy lost to the permissive threshold; the backward-error check
//! in `solve_checked` guards the result.
//!
//! Consecutive columns whose patterns nest are packed into supernodes with a
//! shared external row list, so the dominant scatter update touches each row
//! once per supernode instead of once per column.

use super::ordering::{fill_reducing_order_matched, max_transversal};
use super::sparse::{LinalgError, SparseMatrix};
use std::sync::Arc;

const PIVOT_TOL: f64 = 1e-8;
/// Cap on supernode width; keeps the dense blocks register-friendly.
const MAX_SNODE: usize = 16;

/// Structural analysis of a matrix: the row matching that makes the diagonal
/// structurally nonzero and the fill-reducing symmetric order of the matched
/// pattern. Reusable across factorizations with the same pattern.
pub struct FactorPerm {
    /// Original row matched to each column.
    pub row_of: Vec<usize>,
    /// Fill order: position `p` holds matched index `order[p]`.
    pub order: Vec<usize>,
}

/// Compute the row matching and fill-reducing order for a pattern.
pub fn analyze(a: &SparseMatrix) -> Result<Arc<FactorPerm>, LinalgError> {
    assert_eq!(a.nrows, a.ncols, "LU needs a square matrix");
    let row_of = max_transversal(a).map_err(|column| LinalgError::SingularPivot { column })?;
    let mut row_to_pos = vec![0usize; a.nrows];
    for (j, &r) in row_of.iter().enumerate() {
        row_to_pos[r] = j;
    }
    let order = fill_reducing_order_matched(a, &row_to_pos);
    Ok(Arc::new(FactorPerm { row_of, order }))
}

/// The lower factor packed by supernodes.
///
/// Supernode `s` covers columns `cols[s]..cols[s+1]` (pivot positions). Its
/// values hold a dense `w x w` internal block (column-major; strict lower
/// part meaningful, unit diagonal implicit) followed by a dense
/// `ext_len x w` external block (column-major), over the shared external row
/// list.
struct SnodeStore {
    cols: Vec<u32>,
    ext_ptr: Vec<usize>,
    ext_rows: Vec<u32>,
    val_ptr: Vec<usize>,
    vals: Vec<f64>,
    /// Supernode id per column position.
    snode_of: Vec<u32>,
    /// Pivot row (pre-remap numbering) per column position.
    pivot_rows: Vec<u32>,
}

impl SnodeStore {
    fn n_snodes(&self) -> usize {
        self.cols.len() - 1
    }

    fn width(&self, s: usize) -> usize {
        (self.cols[s + 1] - self.cols[s]) as usize
    }

    fn ext(&self, s: usize) -> &[u32] {
        &self.ext_rows[self.ext_ptr[s]..self.ext_ptr[s + 1]]
    }

    fn blocks(&self, s: usize) -> (&[f64], &[f64]) {
        let w = self.width(s);
        let lo = self.val_ptr[s];
        let internal = &self.vals[lo..lo + w * w];
        let ext_len = self.ext_ptr[s + 1] - self.ext_ptr[s];
        let external = &self.vals[lo + w * w..lo + w * w + ext_len * w];
        (internal, external)
    }
}

/// LU factors of a permuted matrix, reusable across right-hand sides.
pub struct Factorization {
    n: usize,
    perm: Arc<FactorPerm>,
    /// Source row in `b` feeding factored row `p`: row_of[order[p]].
    row_src: Vec<usize>,
    /// Row pivots: permuted row i was eliminated at pivot position pinv[i].
    pinv: Vec<u32>,
    lower: SnodeStore,
    /// Upper factor, per-column, row positions strictly above the diagonal.
    upper_ptr: Vec<usize>,
    upper_idx: Vec<u32>,
    upper_val: Vec<f64>,
    udiag: Vec<f64>,
}

/// The matrix in compressed sparse column form after the row matching and
/// symmetric permutation.
struct PermutedCsc {
    ptr: Vec<usize>,
    idx: Vec<u32>,
    val: Vec<f64>,
}

fn permuted_csc(a: &SparseMatrix, perm: &FactorPerm) -> PermutedCsc {
    let n = a.nrows;
    let mut inv_order = vec![0u32; n];
    for (k, &v) in perm.order.iter().enumerate() {
        inv_order[v] = k as u32;
    }
    // Final row of original row r: inv_order[pos_of_row[r]].
    let mut final_row = vec![0u32; n];
    for (j, &r) in perm.row_of.iter().enumerate() {
        final_row[r] = inv_order[j];
    }
    let mut counts = vec![0usize; n + 1];
    for &c in &a.col_idx {
        counts[inv_order[c] as usize + 1] += 1;
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let mut next = counts.clone();
    let mut idx = vec![0u32; a.nnz()];
    let mut val = vec![0.0f64; a.nnz()];
    for r in 0..n {
        let pr = final_row[r];
        let (cols, vals) = a.row(r);
        for (c, v) in cols.iter().zip(vals) {
            let pc = inv_order[*c] as usize;
            let p = next[pc];
            idx[p] = pr;
            val[p] = *v;
            next[pc] += 1;
        }
    }
    PermutedCsc { ptr: counts, idx, val }
}

/// Per-column scratch describing an eliminated column before it is packed
/// into a supernode.
struct PendingCol {
    pivot_row: u32,
    /// Tail rows sorted ascending (pre-remap numbering), pivot excluded.
    rows: Vec<u32>,
    vals: Vec<f64>,
}

/// Factorize with a precomputed structural analysis.
pub fn factorize_with(a: &SparseMatrix, perm: Arc<FactorPerm>) -> Result<Factorization, LinalgError> {
    assert_eq!(a.nrows, a.ncols, "LU needs a square matrix");
    let n = a.nrows;
    let m = permuted_csc(a, &perm);

    let mut lower = SnodeStore {
        cols: vec![0],
        ext_ptr: vec![0],
        ext_rows: Vec::with_capacity(a.nnz()),
        val_ptr: vec![0],
        vals: Vec::with_capacity(a.nnz() * 2),
        snode_of: vec![0; n],
        pivot_rows: vec![0; n],
    };
    let mut upper_ptr = Vec::with_capacity(n + 1);
    upper_ptr.push(0usize);
    let mut upper_idx: Vec<u32> = Vec::with_capacity(a.nnz());
    let mut upper_val: Vec<f64> = Vec::with_capacity(a.nnz());
    let mut udiag = vec![0.0f64; n];
    let mut pinv = vec![u32::MAX; n];

    // Workspaces.
    let mut x = vec![0.0f64; n];
    let mut visit = vec![u32::MAX; n];
    let mut pattern: Vec<u32> = Vec::with_capacity(1024);
    let mut dfs_stack: Vec<(u32, u32)> = Vec::new(); // (column position, child index)
    let mut pivotal: Vec<u32> = Vec::new();
    let mut xi_buf = [0.0f64; MAX_SNODE];
    let mut pending: Vec<PendingCol> = Vec::new();

    // Pack the open run of pending columns into one supernode.
    let pack_cols = |lower: &mut SnodeStore, pending: &mut Vec<PendingCol>| {
        if pending.is_empty() {
            return;
        }
        let w = pending.len();
        let first = *lower.cols.last().unwrap() as usize;
        let sid = lower.n_snodes() as u32;
        for i in 0..w {
            lower.snode_of[first + i] = sid;
        }
        let ext_start = lower.ext_rows.len();
        {
            let last = pending.last().unwrap();
            lower.ext_rows.extend_from_slice(&last.rows);
        }
        let ext_len = lower.ext_rows.len() - ext_start;
        let val_start = lower.vals.len();
        lower.vals.resize(val_start + w * w + ext_len * w, 0.0);
        let internal_rows: Vec<u32> = pending.iter().map(|c| c.pivot_row).collect();
        for (t, col) in pending.iter().enumerate() {
            let int_base = val_start + t * w;
            let ext_base = val_start + w * w;
            let ext = &lower.ext_rows[ext_start..ext_start + ext_len];
            let mut ei = 0usize;
            for (r, v) in col.rows.iter().zip(&col.vals) {
                if ei < ext_len && *r == ext[ei] {
                    lower.vals[ext_base + ei * w + t] = *v;
                    ei += 1;
                } else {
                    let t2 = internal_rows[t + 1..]
                        .iter()
                        .position(|pv| pv == r)
                        .map(|k| t + 1 + k)
                        .expect("nested supernode pattern");
                    lower.vals[int_base + t2] = *v;
                }
            }
            debug_assert_eq!(ei, ext_len);
        }
        lower.cols.push((first + w) as u32);
        lower.ext_ptr.push(lower.ext_rows.len());
        lower.val_ptr.push(lower.vals.len());
        pending.clear();
    };

    let mut t_dfs = 0.0f64;
    let mut t_num = 0.0f64;
    let mut t_store = 0.0f64;
    let stats = std::env::var("LU_STATS").is_ok();
    for k in 0..n {
        let stamp = k as u32;
        let lo = m.ptr[k];
        let hi = m.ptr[k + 1];
        let packed_end = *lower.cols.last().unwrap() as usize;
        let t0 = if stats { Some(std::time::Instant::now()) } else { None };

        // Reach of the column pattern through eliminated columns. Children
        // of a packed column are the later internal pivots of its supernode
        // plus the shared external rows; children of a still-pending column
        // are its tail rows.
        pattern.clear();
        for &i0 in &m.idx[lo..hi] {
            if visit[i0 as usize] == stamp {
                continue;
            }
            visit[i0 as usize] = stamp;
            pattern.push(i0);
            if pinv[i0 as usize] == u32::MAX {
                continue;
            }
            dfs_stack.clear();
            dfs_stack.push((pinv[i0 as usize], 0));
            while let Some(&(pos, ci0)) = dfs_stack.last() {
                let pos = pos as usize;
                // Children of this column: later internal pivots of its
                // supernode followed by the shared external rows (or the
                // plain tail for a still-pending column).
                let (ints, ext): (&[u32], &[u32]) = if pos >= packed_end {
                    (&[], &pending[pos - packed_end].rows)
                } else {
                    let s = lower.snode_of[pos] as usize;
                    let s_end = lower.cols[s + 1] as usize;
                    (&lower.pivot_rows[pos + 1..s_end], lower.ext(s))
                };
                let total = ints.len() + ext.len();
                let mut ci = ci0 as usize;
                let mut pushed = false;
                while ci < total {
                    let r = if ci < ints.len() { ints[ci] } else { ext[ci - ints.len()] };
                    ci += 1;
                    let ru = r as usize;
                    if visit[ru] != stamp {
                        visit[ru] = stamp;
                        pattern.push(r);
                        if pinv[ru] != u32::MAX {
                            let top = dfs_stack.len() - 1;
                            dfs_stack[top].1 = ci as u32;
                            dfs_stack.push((pinv[ru], 0));
                            pushed = true;
                            break;
                        }
                    }
                }
                if !pushed {
                    dfs_stack.pop();
                }
            }
        }

        if let Some(t0) = t0 {
            t_dfs += t0.elapsed().as_secs_f64();
        }
        let t0 = if stats { Some(std::time::Instant::now()) } else { None };
        // Numeric: scatter the column, eliminate in ascending pivot order,
        // fusing whole supernode runs.
        for p in lo..hi {
            x[m.idx[p] as usize] = m.val[p];
        }
        pivotal.clear();
        for &r in &pattern {
            let pk = pinv[r as usize];
            if pk != u32::MAX {
                pivotal.push(pk);
            }
        }
        pivotal.sort_unstable();
        let mut t = 0usize;
        while t < pivotal.len() {
            let start_pos = pivotal[t] as usize;
            if start_pos >= packed_end {
                // Pending column: plain single-column update.
                let col = &pending[start_pos - packed_end];
                let xv = x[col.pivot_row as usize];
                if xv != 0.0 {
                    unsafe {
                        for (r, v) in col.rows.iter().zip(&col.vals) {
                            *x.get_unchecked_mut(*r as usize) -= v * xv;
                        }
                    }
                }
                t += 1;
                continue;
            }
            let s = lower.snode_of[start_pos] as usize;
            let s_first = lower.cols[s] as usize;
            let s_last = lower.cols[s + 1] as usize - 1;
            let mut run_len = 1usize;
            while t + run_len < pivotal.len()
                && (pivotal[t + run_len] as usize) == start_pos + run_len
                && start_pos + run_len <= s_last
            {
                run_len += 1;
            }
            let (internal, external) = lower.blocks(s);
            let w = lower.width(s);
            let off0 = start_pos - s_first;
            // Internal unit-lower solve over the run.
            for ti in 0..run_len {
                let row = lower.pivot_rows[start_pos + ti];
                let xv = x[row as usize];
                xi_buf[ti] = xv;
                if xv != 0.0 {
                    for t2 in (ti + 1)..run_len {
                        let r2 = lower.pivot_rows[start_pos + t2];
                        x[r2 as usize] -= internal[(off0 + ti) * w + off0 + t2] * xv;
                    }
                }
            }
            // Fused external update: one pass over the shared row list.
            let ext = lower.ext(s);
            if run_len == 1 {
                let xv = xi_buf[0];
                if xv != 0.0 {
                    unsafe {
                        for (i, r) in ext.iter().enumerate() {
                            *x.get_unchecked_mut(*r as usize) -=
                                external.get_unchecked(i * w + off0) * xv;
                        }
                    }
                }
            } else {
                unsafe {
                    for (i, r) in ext.iter().enumerate() {
                        let row = external.get_unchecked(i * w + off0..i * w + off0 + run_len);
                        let mut acc = 0.0;
                        for ti in 0..run_len {
                            acc += row.get_unchecked(ti) * xi_buf[ti];
                        }
                        *x.get_unchecked_mut(*r as usize) -= acc;
                    }
                }
            }
            t += run_len;
        }

        if let Some(t0) = t0 {
            t_num += t0.elapsed().as_secs_f64();
        }
        let t0 = if stats { Some(std::time::Instant::now()) } else { None };
        // Pivot: largest unpivoted magnitude, keeping the diagonal when it is
        // within the threshold.
        let mut best = -1.0f64;
        let mut ipiv = u32::MAX;
        for &r in &pattern {
            if pinv[r as usize] == u32::MAX {
                let a_abs = x[r as usize].abs();
                if a_abs > best {
                    best = a_abs;
                    ipiv = r;
                }
            }
        }
        if !(best > 0.0) || !best.is_finite() {
            return Err(LinalgError::SingularPivot { column: perm.order[k] });
        }
        if visit[k] == stamp && pinv[k] == u32::MAX && x[k].abs() >= PIVOT_TOL * best {
            ipiv = k as u32;
        }
        let pivot = x[ipiv as usize];

        // Upper entries at ascending positions.
        for &pos in &pivotal {
            let row = if (pos as usize) >= packed_end {
                pending[pos as usize - packed_end].pivot_row
            } else {
                lower.pivot_rows[pos as usize]
            };
            upper_idx.push(pos);
            upper_val.push(x[row as usize]);
            x[row as usize] = 0.0;
        }
        upper_ptr.push(upper_idx.len());
        udiag[k] = pivot;
        pinv[ipiv as usize] = k as u32;
        lower.pivot_rows[k] = ipiv;

        let mut tail_rows: Vec<u32> = Vec::with_capacity(pattern.len());
        for &r in &pattern {
            if pinv[r as usize] == u32::MAX {
                tail_rows.push(r);
            }
        }
        tail_rows.sort_unstable();
        let inv_pivot = 1.0 / pivot;
        let tail_vals: Vec<f64> = tail_rows
            .iter()
            .map(|&r| {
                let v = x[r as usize] * inv_pivot;
                x[r as usize] = 0.0;
                v
            })
            .collect();
        x[ipiv as usize] = 0.0;

        // Supernode membership: the previous pending tail must be exactly
        // {this pivot} + this tail.
        let extends = match pending.last() {
            Some(prev) if pending.len() < MAX_SNODE => {
                prev.rows.len() == tail_rows.len() + 1 && {
                    let mut pi = 0usize;
                    let mut ok = true;
                    let mut skipped = false;
                    for &r in &prev.rows {
                        if r == ipiv && !skipped {
                            skipped = true;
                            continue;
                        }
                        if pi >= tail_rows.len() || tail_rows[pi] != r {
                            ok = false;
                            break;
                        }
                        pi += 1;
                    }
                    ok && skipped && pi == tail_rows.len()
                }
            }
            _ => false,
        };
        if !extends {
            pack_cols(&mut lower, &mut pending);
        }
        pending.push(PendingCol {
            pivot_row: ipiv,
            rows: tail_rows,
            vals: tail_vals,
        });
        if pending.len() == MAX_SNODE {
            pack_cols(&mut lower, &mut pending);
        }
        if let Some(t0) = t0 {
            t_store += t0.elapsed().as_secs_f64();
        }
    }
    if stats {
        let widths: Vec<usize> = (0..lower.n_snodes()).map(|s| lower.width(s)).collect();
        let avg_w = widths.iter().sum::<usize>() as f64 / widths.len().max(1) as f64;
        eprintln!("dfs {t_dfs:.2}s numeric {t_num:.2}s store {t_store:.2}s, avg snode width {avg_w:.2}");
    }
    pack_cols(&mut lower, &mut pending);

    // Remap row ids into pivot positions.
    for r in lower.ext_rows.iter_mut() {
        *r = pinv[*r as usize];
    }
    for k in 0..n {
        lower.pivot_rows[k] = k as u32; // after remap, pivot of column k is k
    }

    let row_src: Vec<usize> = perm.order.iter().map(|&j| perm.row_of[j]).collect();
    Ok(Factorization {
        n,
        perm,
        row_src,
        pinv,
        lower,
        upper_ptr,
        upper_idx,
        upper_val,
        udiag,
    })
}

/// Analyze and factorize in one call.
pub fn factorize(a: &SparseMatrix) -> Result<Factorization, LinalgError> {
    let perm = analyze(a)?;
    factorize_with(a, perm)
}

impl Factorization {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn perm(&self) -> Arc<FactorPerm> {
        self.perm.clone()
    }

    /// Numeric-only refactorization of a matrix with the same sparsity
    /// pattern: reuses the symbolic structure and pivot sequence in place.
    /// Fails on a vanishing pivot, in which case the caller should fall back
    /// to a fresh factorization with pivoting.
    pub fn refactorize(&mut self, a: &SparseMatrix) -> Result<(), LinalgError> {
        assert_eq!(a.nrows, self.n, "pattern mismatch");
        let n = self.n;
        let m = permuted_csc(a, &self.perm);
        // Position of each permuted row: the stored pivot sequence.
        let mut x = vec![0.0f64; n];
        let mut xi_buf = [0.0f64; MAX_SNODE];
        let lower = &mut self.lower;
        for k in 0..n {
            // Scatter the column in position space.
            for p in m.ptr[k]..m.ptr[k + 1] {
                x[self.pinv[m.idx[p] as usize] as usize] = m.val[p];
            }
            // Updates at the stored upper pattern (ascending positions).
            let positions = &self.upper_idx[self.upper_ptr[k]..self.upper_ptr[k + 1]];
            let mut t = 0usize;
            while t < positions.len() {
                let start_pos = positions[t] as usize;
                let s = lower.snode_of[start_pos] as usize;
                let s_first = lower.cols[s] as usize;
                let s_last = lower.cols[s + 1] as usize - 1;
                let mut run_len = 1usize;
                while t + run_len < positions.len()
                    && (positions[t + run_len] as usize) == start_pos + run_len
                    && start_pos + run_len <= s_last
                {
                    run_len += 1;
                }
                let w = lower.width(s);
                let off0 = start_pos - s_first;
                let lo = lower.val_ptr[s];
                let ext_start = lower.ext_ptr[s];
                let ext_len = lower.ext_ptr[s + 1] - ext_start;
                // Runs are complete supernode suffixes, except in column k's
                // own supernode where the internal updates must continue
                // through k's diagonal and tail slots (all part of k's
                // pattern).
                let int_end = if s == lower.snode_of[k] as usize {
                    s_last + 1 - start_pos
                } else {
                    run_len
                };
                for ti in 0..run_len {
                    let xv = x[start_pos + ti];
                    xi_buf[ti] = xv;
                    if xv != 0.0 {
                        let col_base = lo + (off0 + ti) * w;
                        for t2 in (ti + 1)..int_end {
                            x[start_pos + t2] -= lower.vals[col_base + off0 + t2] * xv;
                        }
                    }
                }
                let ext = &lower.ext_rows[ext_start..ext_start + ext_len];
                let ebase = lo + w * w;
                if run_len == 1 {
                    let xv = xi_buf[0];
                    if xv != 0.0 {
                        unsafe {
                            for (i, r) in ext.iter().enumerate() {
                                *x.get_unchecked_mut(*r as usize) -=
                                    lower.vals.get_unchecked(ebase + i * w + off0) * xv;
                            }
                        }
                    }
                } else {
                    unsafe {
                        for (i, r) in ext.iter().enumerate() {
                            let base = ebase + i * w + off0;
                            let mut acc = 0.0;
                            for ti in 0..run_len {
                                acc += lower.vals.get_unchecked(base + ti) * xi_buf[ti];
                            }
                            *x.get_unchecked_mut(*r as usize) -= acc;
                        }
                    }
                }
                t += run_len;
            }
            // Extract U values, the pivot and the scaled L column in place.
            for p in self.upper_ptr[k]..self.upper_ptr[k + 1] {
                let pos = self.upper_idx[p] as usize;
                self.upper_val[p] = x[pos];
                x[pos] = 0.0;
            }
            let pivot = x[k];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(LinalgError::SingularPivot { column: self.perm.order[k] });
            }
            self.udiag[k] = pivot;
            x[k] = 0.0;
            let inv_pivot = 1.0 / pivot;
            let s = lower.snode_of[k] as usize;
            let s_first = lower.cols[s] as usize;
            let w = lower.width(s);
            let off = k - s_first;
            let s_last = lower.cols[s + 1] as usize - 1;
            let col_base = lower.val_ptr[s] + off * w;
            for t2 in (off + 1)..=(s_last - s_first) {
                let pos = s_first + t2;
                lower.vals[col_base + t2] = x[pos] * inv_pivot;
                x[pos] = 0.0;
            }
            let ext_start = lower.ext_ptr[s];
            let ext_len = lower.ext_ptr[s + 1] - ext_start;
            let ebase = lower.val_ptr[s] + w * w;
            for i in 0..ext_len {
                let pos = lower.ext_rows[ext_start + i] as usize;
                lower.vals[ebase + i * w + off] = x[pos] * inv_pivot;
                x[pos] = 0.0;
            }
        }
        Ok(())
    }

    /// Number of stored factor entries, a fill-in diagnostic.
    pub fn factor_nnz(&self) -> usize {
        self.lower.vals.len() + self.upper_idx.len()
    }

    /// Solve with a fixed number of iterative-refinement passes: the
    /// permissive pivot threshold trades stability for structure, and
    /// refinement wins it back at the cost of extra triangular solves.
    pub fn solve_refined(&self, a: &SparseMatrix, b: &[f64], passes: usize) -> Vec<f64> {
        let mut x = self.solve(b);
        for _ in 0..passes {
            let mut r = b.to_vec();
            a.spmv_acc(&x, -1.0, &mut r);
            let dx = self.solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        x
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut t = vec![0.0f64; n];
        for p in 0..n {
            t[self.pinv[p] as usize] = b[self.row_src[p]];
        }
        // Unit lower solve over supernodes.
        for s in 0..self.lower.n_snodes() {
            let first = self.lower.cols[s] as usize;
            let w = self.lower.width(s);
            let (internal, external) = self.lower.blocks(s);
            for off in 0..w {
                let xv = t[first + off];
                if xv != 0.0 {
                    for off2 in (off + 1)..w {
                        t[first + off2] -= internal[off * w + off2] * xv;
                    }
                }
            }
            let ext = self.lower.ext(s);
            unsafe {
                for (i, r) in ext.iter().enumerate() {
                    let mut acc = 0.0;
                    for off in 0..w {
                        acc += external.get_unchecked(i * w + off) * t.get_unchecked(first + off);
                    }
                    *t.get_unchecked_mut(*r as usize) -= acc;
                }
            }
        }
        // Upper solve; diagonal kept separately, entries strictly above.
        for j in (0..n).rev() {
            t[j] /= self.udiag[j];
            let xj = t[j];
            if xj != 0.0 {
                let lo = self.upper_ptr[j];
                let hi = self.upper_ptr[j + 1];
                unsafe {
                    for p in lo..hi {
                        let i = *self.upper_idx.get_unchecked(p) as usize;
                        *t.get_unchecked_mut(i) -= self.upper_val.get_unchecked(p) * xj;
                    }
                }
            }
        }
        let mut xout = vec![0.0f64; n];
        for j in 0..n {
            xout[self.perm.order[j]] = t[j];
        }
        xout
    }
}

/// Factor + solve in one call.
pub fn lu_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let f = factorize(a)?;
    Ok(f.solve_refined(a, b, 1))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve and verify the backward-error contract
/// `||Ax - b|| <= 1e-10 (||A||_max ||x|| + ||b||)`; a failed check aborts the
/// run loudly.
pub fn solve_checked(a: &SparseMatrix, fact: &Factorization, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let x = fact.solve_refined(a, b, 1);
    let mut r = a.spmv(&x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri -= bi;
    }
    let residual = norm2(&r);
    let bound = 1e-10 * (a.max_abs() * norm2(&x) + norm2(b));
    if !(residual <= bound) {
        return Err(LinalgError::ResidualCheck { residual, bound });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain dense LU with partial pivoting, the independent oracle.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
        let n = b.len();
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())?;
            if a[piv][k].abs() < 1e-300 {
                return None;
            }
            a.swap(k, piv);
            b.swap(k, piv);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..n {
                acc -= a[i][j] * x[j];
            }
            x[i] = acc / a[i][i];
        }
        Some(x)
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    #[test]
    fn identity_solve() {
        let eye =
            SparseMatrix::from_triplets(4, 4, &(0..4).map(|i| (i, i, 1.0)).collect::<Vec<_>>()).unwrap();
        let b = vec![1.0, -2.0, 3.0, 0.5];
        assert_eq!(lu_solve(&eye, &b).unwrap(), b);
    }

    #[test]
    fn antidiagonal_forces_pivoting() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let x = lu_solve(&a, &[1.0, 2.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14);
        assert!((x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_spd_matches_dense_oracle() {
        let n = 50;
        let mut state = 987654321u64;
        let mut trip = Vec::new();
        let mut diag = vec![1.0f64; n];
        for i in 0..n {
            for j in (i + 1)..n {
                if (i * 31 + j * 17) % 11 == 0 {
                    let v = lcg(&mut state);
                    trip.push((i, j, v));
                    trip.push((j, i, v));
                    diag[i] += v.abs();
                    diag[j] += v.abs();
                }
            }
        }
        for (i, d) in diag.iter().enumerate() {
            trip.push((i, i, *d));
        }
        let a = SparseMatrix::from_triplets(n, n, &trip).unwrap();
        let b: Vec<f64> = (0..n).map(|_| lcg(&mut state)).collect();
        let x = lu_solve(&a, &b).unwrap();
        let x_ref = dense_solve(a.to_dense(), b.clone()).unwrap();
        let scale = x_ref.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (xi, ri) in x.iter().zip(&x_ref) {
            assert!((xi - ri).abs() < 1e-10 * scale, "{xi} vs {ri}");
        }
    }

    #[test]
    fn random_unsymmetric_matches_dense_oracle() {
        let n = 60;
        let mut state = 55555u64;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 2.0 + lcg(&mut state)));
            for j in 0..n {
                if i != j && (i * 7 + j * 13) % 9 == 0 {
                    trip.push((i, j, lcg(&mut state)));
                }
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &trip).unwrap();
        let b: Vec<f64> = (0..n).map(|_| lcg(&mut state)).collect();
        let x = lu_solve(&a, &b).unwrap();
        let x_ref = dense_solve(a.to_dense(), b.clone()).unwrap();
        let scale = x_ref.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (xi, ri) in x.iter().zip(&x_ref) {
            assert!((xi - ri).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn saddle_point_zero_diagonal_block() {
        // [K B^T; B 0] with K SPD: every pressure row has a zero diagonal.
        let trip = vec![
            (0, 0, 4.0),
            (1, 1, 3.0),
            (0, 1, 1.0),
            (1, 0, 1.0),
            (0, 2, 1.0),
            (2, 0, 1.0),
            (1, 2, -1.0),
            (2, 1, -1.0),
        ];
        let a = SparseMatrix::from_triplets(3, 3, &trip).unwrap();
        let b = vec![1.0, 0.0, 2.0];
        let x = lu_solve(&a, &b).unwrap();
        let r = a.spmv(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_reports_column() {
        let a = SparseMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 0.0)]).unwrap();
        match lu_solve(&a, &[1.0, 1.0, 1.0]) {
            Err(LinalgError::SingularPivot { column }) => assert_eq!(column, 2),
            other => panic!("expected singular pivot, got {other:?}"),
        }
    }

    #[test]
    fn reuse_factorization_multiple_rhs() {
        let a = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 2.0), (1, 1, 5.0), (2, 2, 1.0), (0, 2, 1.0), (2, 0, 1.0)],
        )
        .unwrap();
        let f = factorize(&a).unwrap();
        for b in [[2.0, 5.0, 2.0], [0.0, 1.0, 0.0]] {
            let x = f.solve(&b);
            let r = a.spmv(&x);
            for (ri, bi) in r.iter().zip(&b) {
                assert!((ri - bi).abs() < 1e-13);
            }
        }
    }

    /// A matrix large enough to exercise supernode packing against the dense
    /// oracle: 2D grid Laplacian plus an unsymmetric perturbation.
    #[test]
    fn grid_system_matches_dense_oracle() {
        let nx = 12;
        let n = nx * nx;
        let id = |i: usize, j: usize| j * nx + i;
        let mut state = 13u64;
        let mut trip = Vec::new();
        for j in 0..nx {
            for i in 0..nx {
                trip.push((id(i, j), id(i, j), 4.0 + 0.1 * lcg(&mut state)));
                if i + 1 < nx {
                    trip.push((id(i, j), id(i + 1, j), -1.0 + 0.2 * lcg(&mut state)));
                    trip.push((id(i + 1, j), id(i, j), -1.0 + 0.2 * lcg(&mut state)));
                }
                if j + 1 < nx {
                    trip.push((id(i, j), id(i, j + 1), -1.0 + 0.2 * lcg(&mut state)));
                    trip.push((id(i, j + 1), id(i, j), -1.0 + 0.2 * lcg(&mut state)));
                }
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &trip).unwrap();
        let b: Vec<f64> = (0..n).map(|_| lcg(&mut state)).collect();
        let x = lu_solve(&a, &b).unwrap();
        let x_ref = dense_solve(a.to_dense(), b.clone()).unwrap();
        let scale = x_ref.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (xi, ri) in x.iter().zip(&x_ref) {
            assert!((xi - ri).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn refactorize_matches_fresh_factorization() {
        let n = 40;
        let mut state = 424242u64;
        let mut pattern = Vec::new();
        for i in 0..n {
            pattern.push((i, i));
            for j in 0..n {
                if i != j && (i * 13 + j * 7) % 11 == 0 {
                    pattern.push((i, j));
                }
            }
        }
        let mut make = |pattern: &[(usize, usize)]| {
            let trip: Vec<(usize, usize, f64)> = pattern
                .iter()
                .map(|&(i, j)| {
                    (i, j, if i == j { 4.0 + lcg(&mut state) } else { lcg(&mut state) })
                })
                .collect();
            SparseMatrix::from_triplets(n, n, &trip).unwrap()
        };
        let a1 = make(&pattern);
        let a2 = make(&pattern);
        let mut state2 = 777u64;
        let b: Vec<f64> = (0..n).map(|_| lcg(&mut state2)).collect();
        let mut f = factorize(&a1).unwrap();
        f.refactorize(&a2).unwrap();
        let x = f.solve_refined(&a2, &b, 1);
        let x_ref = factorize(&a2).unwrap().solve_refined(&a2, &b, 1);
        let scale = x_ref.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for (xi, ri) in x.iter().zip(&x_ref) {
            assert!((xi - ri).abs() < 1e-10 * scale, "{xi} vs {ri}");
        }
    }

    #[test]
    fn residual_contract_enforced() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let f = factorize(&a).unwrap();
        let x = solve_checked(&a, &f, &[1.0, 2.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
    }
}
