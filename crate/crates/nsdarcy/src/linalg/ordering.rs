//! Fill-reducing column ordering by nested dissection with BFS level-set
//! separators.
//!
//! The factorization cost of the monolithic saddle-point systems is dominated
//! by fill-in, and the matrices come from 2D meshes where level-set separators
//! are close to optimal. The ordering depends only on the sparsity pattern and
//! is fully deterministic: BFS starts from the minimum-degree vertex of each
//! part (smallest index on ties) and neighbor lists are kept sorted.

use super::sparse::SparseMatrix;

const LEAF: usize = 64;

/// Symmetric adjacency (pattern of A + A^T, no diagonal), CSR-like.
struct Adjacency {
    ptr: Vec<usize>,
    idx: Vec<u32>,
}

/// Adjacency of the row-permuted matrix: entry (r, c) contributes the edge
/// (row_of_orig[r], c), so the ordering sees the matched diagonal structure.
fn build_adjacency(a: &SparseMatrix, row_to_pos: &[usize]) -> Adjacency {
    let n = a.nrows;
    let mut counts = vec![0usize; n + 1];
    for r in 0..n {
        let (cols, _) = a.row(r);
        let pr = row_to_pos[r];
        for &c in cols {
            if c != pr {
                counts[pr + 1] += 1;
                counts[c + 1] += 1;
            }
        }
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let mut next = counts.clone();
    let mut idx = vec![0u32; counts[n]];
    for r in 0..n {
        let (cols, _) = a.row(r);
        let pr = row_to_pos[r];
        for &c in cols {
            if c != pr {
                idx[next[pr]] = c as u32;
                next[pr] += 1;
                idx[next[c]] = pr as u32;
                next[c] += 1;
            }
        }
    }
    // Sort and deduplicate each neighbor list.
    let mut ptr = vec![0usize; n + 1];
    let mut w = 0usize;
    for r in 0..n {
        let lo = counts[r];
        let hi = counts[r + 1];
        idx[lo..hi].sort_unstable();
        let start = w;
        let mut last = u32::MAX;
        for k in lo..hi {
            let v = idx[k];
            if v != last {
                idx[w] = v;
                w += 1;
                last = v;
            }
        }
        ptr[r] = start;
        ptr[r + 1] = w;
    }
    idx.truncate(w);
    Adjacency { ptr, idx }
}

impl Adjacency {
    fn neighbors(&self, v: u32) -> &[u32] {
        &self.idx[self.ptr[v as usize]..self.ptr[v as usize + 1]]
    }

    fn degree(&self, v: u32) -> usize {
        self.ptr[v as usize + 1] - self.ptr[v as usize]
    }
}

/// BFS over the vertices of `set` (marked in `in_set` with `stamp`), starting
/// from `start`. Returns (visited vertices in BFS order, level offsets).
fn bfs(
    adj: &Adjacency,
    start: u32,
    stamp: u32,
    in_set: &[u32],
    visited: &mut [u32],
    vstamp: u32,
) -> (Vec<u32>, Vec<usize>) {
    let mut order = vec![start];
    let mut levels = vec![0usize, 1];
    visited[start as usize] = vstamp;
    let mut lo = 0usize;
    loop {
        let hi = order.len();
        for k in lo..hi {
            let v = order[k];
            for &w in adj.neighbors(v) {
                if in_set[w as usize] == stamp && visited[w as usize] != vstamp {
                    visited[w as usize] = vstamp;
                    order.push(w);
                }
            }
        }
        if order.len() == hi {
            break;
        }
        levels.push(order.len());
        lo = hi;
    }
    (order, levels)
}

/// Compute a fill-reducing permutation for the pattern of `a` (+ transpose).
/// `order[k]` is the original index placed at position `k`.
pub fn fill_reducing_order(a: &SparseMatrix) -> Vec<usize> {
    let identity: Vec<usize> = (0..a.nrows).collect();
    fill_reducing_order_matched(a, &identity)
}

/// Fill-reducing permutation of the row-matched pattern: original row `r`
/// sits at position `row_to_pos[r]` before symmetric reordering.
pub fn fill_reducing_order_matched(a: &SparseMatrix, row_to_pos: &[usize]) -> Vec<usize> {
    assert_eq!(a.nrows, a.ncols);
    let adj = build_adjacency(a, row_to_pos);
    nd_order(&adj)
}

/// Nested dissection over an explicit undirected graph given as edge pairs,
/// returning the order together with the boundaries of the emitted groups
/// (leaves and separators). Useful when the caller knows a coarser structure
/// than the raw matrix pattern (for instance one vertex per mesh node) and
/// wants to refine the order within each group.
pub fn nd_order_groups_from_edges(n: usize, edges: &[(u32, u32)]) -> (Vec<usize>, Vec<usize>) {
    let mut counts = vec![0usize; n + 1];
    for &(a, b) in edges {
        if a != b {
            counts[a as usize + 1] += 1;
            counts[b as usize + 1] += 1;
        }
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let mut next = counts.clone();
    let mut idx = vec![0u32; counts[n]];
    for &(a, b) in edges {
        if a != b {
            idx[next[a as usize]] = b;
            next[a as usize] += 1;
            idx[next[b as usize]] = a;
            next[b as usize] += 1;
        }
    }
    let mut ptr = vec![0usize; n + 1];
    let mut w = 0usize;
    for r in 0..n {
        let lo = counts[r];
        let hi = counts[r + 1];
        idx[lo..hi].sort_unstable();
        let start = w;
        let mut last = u32::MAX;
        for k in lo..hi {
            let v = idx[k];
            if v != last {
                idx[w] = v;
                w += 1;
                last = v;
            }
        }
        ptr[r] = start;
        ptr[r + 1] = w;
    }
    idx.truncate(w);
    nd_order_groups(&Adjacency { ptr, idx })
}

fn nd_order(adj: &Adjacency) -> Vec<usize> {
    nd_order_groups(adj).0
}

fn nd_order_groups(adj: &Adjacency) -> (Vec<usize>, Vec<usize>) {
    let n = adj.ptr.len() - 1;
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut group_starts: Vec<usize> = Vec::new();

    enum Work {
        Partition(Vec<u32>),
        Emit(Vec<u32>),
    }

    let mut in_set = vec![0u32; n];
    let mut visited = vec![0u32; n];
    let mut stamp = 0u32;
    let mut vstamp = 0u32;

    let mut stack = vec![Work::Partition((0..n as u32).collect())];
    while let Some(work) = stack.pop() {
        let set = match work {
            Work::Emit(s) => {
                group_starts.push(order.len());
                order.extend(s.iter().map(|&v| v as usize));
                continue;
            }
            Work::Partition(s) => s,
        };
        if set.len() <= LEAF {
            let mut s = set;
            s.sort_unstable();
            group_starts.push(order.len());
            order.extend(s.iter().map(|&v| v as usize));
            continue;
        }
        stamp += 1;
        for &v in &set {
            in_set[v as usize] = stamp;
        }
        // Pseudo-peripheral start: min-degree vertex, then the far end of a BFS.
        let start = *set
            .iter()
            .min_by_key(|&&v| (adj.degree(v), v))
            .unwrap();
        vstamp += 1;
        let (comp, levels) = bfs(&adj, start, stamp, &in_set, &mut visited, vstamp);
        if comp.len() < set.len() {
            // Disconnected: handle this component, queue the rest.
            let rest: Vec<u32> = set
                .iter()
                .copied()
                .filter(|&v| visited[v as usize] != vstamp)
                .collect();
            stack.push(Work::Partition(rest));
            stack.push(Work::Partition(comp));
            continue;
        }
        let far = comp[comp.len() - 1];
        vstamp += 1;
        let (comp, levels) = {
            let (c, l) = bfs(&adj, far, stamp, &in_set, &mut visited, vstamp);
            if l.len() >= levels.len() {
                (c, l)
            } else {
                (comp, levels)
            }
        };
        let n_levels = levels.len() - 1;
        if n_levels < 3 {
            let mut s = comp;
            s.sort_unstable();
            group_starts.push(order.len());
            order.extend(s.iter().map(|&v| v as usize));
            continue;
        }
        // Separator: the smallest BFS level whose cut leaves both sides with
        // at least a quarter of the component.
        let lo_cut = comp.len() / 4;
        let hi_cut = comp.len() - comp.len() / 4;
        let mut m = usize::MAX;
        let mut best_size = usize::MAX;
        for cand in 1..n_levels - 1 {
            if levels[cand] >= lo_cut.max(1) && levels[cand + 1] <= hi_cut {
                let size = levels[cand + 1] - levels[cand];
                if size < best_size {
                    best_size = size;
                    m = cand;
                }
            }
        }
        if m == usize::MAX {
            // No balanced level; fall back to the median level.
            let half = comp.len() / 2;
            m = 1;
            while m + 1 < n_levels - 1 && levels[m + 1] <= half {
                m += 1;
            }
        }
        // Thin the level to the vertices actually adjacent to the far side;
        // the rest of the level joins the near part.
        vstamp += 1;
        for &v in &comp[levels[m + 1]..] {
            visited[v as usize] = vstamp;
        }
        let mut part_a: Vec<u32> = comp[..levels[m]].to_vec();
        let mut sep: Vec<u32> = Vec::new();
        for &v in &comp[levels[m]..levels[m + 1]] {
            let touches_far = adj
                .neighbors(v)
                .iter()
                .any(|&w| in_set[w as usize] == stamp && visited[w as usize] == vstamp);
            if touches_far {
                sep.push(v);
            } else {
                part_a.push(v);
            }
        }
        let part_b: Vec<u32> = comp[levels[m + 1]..].to_vec();
        if part_a.is_empty() || part_b.is_empty() || sep.is_empty() {
            let mut s = comp;
            s.sort_unstable();
            group_starts.push(order.len());
            order.extend(s.iter().map(|&v| v as usize));
            continue;
        }
        sep.sort_unstable();
        part_a.sort_unstable();
        let mut part_b = part_b;
        part_b.sort_unstable();
        stack.push(Work::Emit(sep));
        stack.push(Work::Partition(part_b));
        stack.push(Work::Partition(part_a));
    }
    debug_assert_eq!(order.len(), n);
    group_starts.push(order.len());
    (order, group_starts)
}

/// Maximum transversal with a preference for large entries: returns
/// `row_of[j]`, the row matched to column `j`, so the row-permuted matrix
/// has a structurally nonzero diagonal. Returns the first unmatched column
/// if the matrix is structurally singular.
///
/// Saddle-point blocks rely on this: the pressure diagonal is exactly zero,
/// and without the matching partial pivoting shreds the fill-reducing
/// ordering.
pub fn max_transversal(a: &SparseMatrix) -> Result<Vec<usize>, usize> {
    let n = a.nrows;
    // Column-major pattern with per-column candidate rows sorted by
    // decreasing magnitude (ties by row index: deterministic).
    let mut counts = vec![0usize; n + 1];
    for &c in &a.col_idx {
        counts[c + 1] += 1;
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let mut rows = vec![0u32; a.nnz()];
    let mut vals = vec![0.0f64; a.nnz()];
    {
        let mut next = counts.clone();
        for r in 0..n {
            let (cols, v) = a.row(r);
            for (c, x) in cols.iter().zip(v) {
                let p = next[*c];
                rows[p] = r as u32;
                vals[p] = x.abs();
                next[*c] += 1;
            }
        }
    }
    for j in 0..n {
        let lo = counts[j];
        let hi = counts[j + 1];
        let mut idx: Vec<usize> = (lo..hi).collect();
        idx.sort_by(|&x, &y| {
            vals[y]
                .partial_cmp(&vals[x])
                .unwrap()
                .then(rows[x].cmp(&rows[y]))
        });
        let (r2, v2): (Vec<u32>, Vec<f64>) = idx.iter().map(|&i| (rows[i], vals[i])).unzip();
        rows[lo..hi].copy_from_slice(&r2);
        vals[lo..hi].copy_from_slice(&v2);
    }

    let mut row_owner = vec![u32::MAX; n]; // column owning each row
    let mut col_match = vec![u32::MAX; n]; // row matched to each column
    // Cheap pass: diagonal or best free row.
    for j in 0..n {
        for p in counts[j]..counts[j + 1] {
            let r = rows[p] as usize;
            if row_owner[r] == u32::MAX {
                row_owner[r] = j as u32;
                col_match[j] = r as u32;
                break;
            }
        }
    }
    // Augmenting passes for the rest (iterative Kuhn).
    struct Frame {
        col: u32,
        pos: usize,
        /// Row through which this column was reached; u32::MAX at the root.
        via: u32,
    }
    let mut visited = vec![u32::MAX; n];
    let mut stack: Vec<Frame> = Vec::new();
    for j0 in 0..n {
        if col_match[j0] != u32::MAX {
            continue;
        }
        let stamp = j0 as u32;
        stack.clear();
        stack.push(Frame { col: j0 as u32, pos: counts[j0], via: u32::MAX });
        let mut augmented = false;
        while !stack.is_empty() {
            let top = stack.len() - 1;
            let j = stack[top].col as usize;
            let mut action: Option<u32> = None; // free row found
            let mut descend: Option<(u32, u32)> = None; // (owner col, via row)
            while stack[top].pos < counts[j + 1] {
                let r = rows[stack[top].pos];
                stack[top].pos += 1;
                if visited[r as usize] == stamp {
                    continue;
                }
                visited[r as usize] = stamp;
                if row_owner[r as usize] == u32::MAX {
                    action = Some(r);
                    break;
                }
                descend = Some((row_owner[r as usize], r));
                break;
            }
            if let Some(mut r) = action {
                // Augment along the stacked path.
                for frame in stack.iter().rev() {
                    row_owner[r as usize] = frame.col;
                    col_match[frame.col as usize] = r;
                    if frame.via == u32::MAX {
                        break;
                    }
                    r = frame.via;
                }
                augmented = true;
                break;
            }
            if let Some((owner, via)) = descend {
                stack.push(Frame { col: owner, pos: counts[owner as usize], via });
                continue;
            }
            stack.pop();
        }
        if !augmented {
            return Err(j0);
        }
    }
    Ok(col_match.iter().map(|&r| r as usize).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_laplacian(nx: usize, ny: usize) -> SparseMatrix {
        let id = |i: usize, j: usize| j * nx + i;
        let mut trip = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                trip.push((id(i, j), id(i, j), 4.0));
                if i + 1 < nx {
                    trip.push((id(i, j), id(i + 1, j), -1.0));
                    trip.push((id(i + 1, j), id(i, j), -1.0));
                }
                if j + 1 < ny {
                    trip.push((id(i, j), id(i, j + 1), -1.0));
                    trip.push((id(i, j + 1), id(i, j), -1.0));
                }
            }
        }
        SparseMatrix::from_triplets(nx * ny, nx * ny, &trip).unwrap()
    }

    #[test]
    fn order_is_a_permutation() {
        let a = grid_laplacian(20, 17);
        let ord = fill_reducing_order(&a);
        let mut seen = vec![false; a.nrows];
        for &v in &ord {
            assert!(!seen[v]);
            seen[v] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn order_is_deterministic() {
        let a = grid_laplacian(30, 30);
        assert_eq!(fill_reducing_order(&a), fill_reducing_order(&a));
    }
}
