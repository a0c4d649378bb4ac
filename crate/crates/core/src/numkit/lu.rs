//! Direct sparse LU factorization.
//!
//! The matrix is reordered with reverse Cuthill-McKee so that its sparse part
//! becomes banded, and a handful of dense rows/columns (such as the scalar
//! multiplier coupling of the semismooth Newton systems) are moved into a
//! border. The banded block is factored with partial pivoting; the border is
//! eliminated through a small dense Schur complement.

use std::collections::VecDeque;

use super::sparse::{norm2, SparseMatrix};
use super::NumError;

/// Relative residual every returned solution must satisfy.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

const MAX_REFINEMENT_STEPS: usize = 4;

/// Band storage: row `i` keeps columns `i - kl ..= i + ku + kl`, the extra `kl`
/// columns absorbing fill from row interchanges.
#[derive(Debug, Clone)]
struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
            piv: (0..n).collect(),
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    fn factor(&mut self) -> Result<(), NumError> {
        let n = self.n;
        let reach = self.ku + self.kl;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.at(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.at(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(NumError::Singular { pivot: k });
            }
            self.piv[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.at(k, k);
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == 0.0 {
                    continue;
                }
                let row_k = k * self.width + self.kl - k;
                let row_i = i * self.width + self.kl - i;
                for j in k + 1..=last_col {
                    self.data[row_i + j] -= l * self.data[row_k + j];
                }
            }
        }
        Ok(())
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] -= self.at(i, k) * bk;
                }
            }
        }
        let reach = self.ku + self.kl;
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + reach).min(n - 1) {
                s -= self.at(i, j) * b[j];
            }
            b[i] = s / self.at(i, i);
        }
    }
}

/// Dense LU with partial pivoting, used for the border Schur complement.
#[derive(Debug, Clone)]
struct DenseLu {
    n: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    fn factor(n: usize, mut a: Vec<f64>) -> Result<Self, NumError> {
        let mut piv = vec![0; n];
        for k in 0..n {
            let (p, best) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
            if best == 0.0 {
                return Err(NumError::Singular { pivot: k });
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
            }
            for i in k + 1..n {
                let l = a[i * n + k] / a[k * n + k];
                a[i * n + k] = l;
                for j in k + 1..n {
                    a[i * n + j] -= l * a[k * n + j];
                }
            }
        }
        Ok(Self { n, a, piv })
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            b.swap(k, self.piv[k]);
            for i in k + 1..n {
                b[i] -= self.a[i * n + k] * b[k];
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= self.a[i * n + j] * b[j];
            }
            b[i] = s / self.a[i * n + i];
        }
    }
}

/// Reusable factorization of a square sparse matrix.
#[derive(Debug, Clone)]
pub struct SparseLu {
    matrix: SparseMatrix,
    /// `perm[new] = old`
    perm: Vec<usize>,
    n_band: usize,
    band: BandLu,
    /// B⁻¹C, column-major over the border columns.
    border_solves: Vec<Vec<f64>>,
    /// D as sparse rows over band indices (new numbering).
    border_rows: Vec<Vec<(usize, f64)>>,
    schur: Option<DenseLu>,
}

impl SparseLu {
    pub fn factor(a: &SparseMatrix) -> Result<Self, NumError> {
        if !a.is_square() {
            return Err(NumError::NotSquare {
                rows: a.n_rows(),
                cols: a.n_cols(),
            });
        }
        let n = a.n_rows();
        if n == 0 {
            return Err(NumError::Empty);
        }
        let adjacency = symmetric_adjacency(a);
        let (is_border, mut perm) = border_and_ordering(&adjacency);
        let n_band = perm.len();
        perm.extend((0..n).filter(|&i| is_border[i]));
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        let (mut kl, mut ku) = (0usize, 0usize);
        for (i, j, _) in a.iter() {
            let (ni, nj) = (inv[i], inv[j]);
            if ni < n_band && nj < n_band {
                if ni > nj {
                    kl = kl.max(ni - nj);
                } else {
                    ku = ku.max(nj - ni);
                }
            }
        }
        let mut band = BandLu::zeros(n_band, kl, ku);
        let n_border = n - n_band;
        let mut c_cols = vec![vec![0.0; n_band]; n_border];
        let mut border_rows = vec![Vec::new(); n_border];
        let mut e = vec![0.0; n_border * n_border];
        for (i, j, v) in a.iter() {
            let (ni, nj) = (inv[i], inv[j]);
            match (ni < n_band, nj < n_band) {
                (true, true) => band.set(ni, nj, v),
                (true, false) => c_cols[nj - n_band][ni] = v,
                (false, true) => border_rows[ni - n_band].push((nj, v)),
                (false, false) => e[(ni - n_band) * n_border + (nj - n_band)] = v,
            }
        }
        band.factor()?;
        for col in c_cols.iter_mut() {
            band.solve_in_place(col);
        }
        let schur = if n_border > 0 {
            for r in 0..n_border {
                for c in 0..n_border {
                    let dx: f64 = border_rows[r].iter().map(|&(j, v)| v * c_cols[c][j]).sum();
                    e[r * n_border + c] -= dx;
                }
            }
            Some(DenseLu::factor(n_border, e).map_err(|err| match err {
                NumError::Singular { pivot } => NumError::Singular {
                    pivot: n_band + pivot,
                },
                other => other,
            })?)
        } else {
            None
        };
        Ok(Self {
            matrix: a.clone(),
            perm,
            n_band,
            band,
            border_solves: c_cols,
            border_rows,
            schur,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Lower and upper bandwidth of the reordered band block.
    pub fn bandwidth(&self) -> (usize, usize) {
        (self.band.kl, self.band.ku)
    }

    pub fn border_size(&self) -> usize {
        self.perm.len() - self.n_band
    }

    fn solve_once(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let nb = self.n_band;
        let mut pb: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        let (head, tail) = pb.split_at_mut(nb);
        self.band.solve_in_place(head);
        if let Some(schur) = &self.schur {
            for (r, row) in self.border_rows.iter().enumerate() {
                tail[r] -= row.iter().map(|&(j, v)| v * head[j]).sum::<f64>();
            }
            schur.solve_in_place(tail);
            for (c, xc) in tail.iter().enumerate() {
                if *xc != 0.0 {
                    for (h, s) in head.iter_mut().zip(&self.border_solves[c]) {
                        *h -= s * xc;
                    }
                }
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = pb[new];
        }
        x
    }

    /// Solves `A x = b` with iterative refinement; fails if the relative
    /// residual stays above [`SOLVE_RESIDUAL_TOL`].
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, NumError> {
        if b.len() != self.dim() {
            return Err(NumError::DimensionMismatch {
                expected: self.dim(),
                found: b.len(),
            });
        }
        let b_norm = norm2(b);
        if b_norm == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        let mut x = self.solve_once(b);
        let mut rel = f64::INFINITY;
        for _ in 0..=MAX_REFINEMENT_STEPS {
            let ax = self.matrix.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            rel = norm2(&r) / b_norm;
            if rel <= 1e-14 || !rel.is_finite() {
                break;
            }
            let dx = self.solve_once(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        if !(rel <= SOLVE_RESIDUAL_TOL) {
            return Err(NumError::Inaccurate { residual: rel });
        }
        debug_assert!(rel <= SOLVE_RESIDUAL_TOL);
        Ok(x)
    }
}

/// Solves `A x = b` by direct factorization.
pub fn sparse_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, NumError> {
    if a.n_rows() != b.len() {
        return Err(NumError::DimensionMismatch {
            expected: a.n_rows(),
            found: b.len(),
        });
    }
    SparseLu::factor(a)?.solve(b)
}

/// Picks border nodes (dense rows, or rows whose neighbours end up far apart
/// in the RCM order) and returns the RCM order of the remaining nodes.
fn border_and_ordering(adj: &[Vec<usize>]) -> (Vec<bool>, Vec<usize>) {
    let n = adj.len();
    let median = |mut v: Vec<usize>| -> usize {
        if v.is_empty() {
            return 0;
        }
        v.sort_unstable();
        v[v.len() / 2]
    };
    let degree_cut = 16usize.max(3 * median(adj.iter().map(Vec::len).collect()));
    let mut is_border: Vec<bool> = adj.iter().map(|nb| nb.len() > degree_cut).collect();
    for _ in 0..2 {
        let order = reverse_cuthill_mckee(adj, &is_border);
        let mut pos = vec![usize::MAX; n];
        for (p, &v) in order.iter().enumerate() {
            pos[v] = p;
        }
        let span: Vec<usize> = order
            .iter()
            .map(|&v| {
                adj[v]
                    .iter()
                    .filter(|&&w| !is_border[w])
                    .map(|&w| pos[w].abs_diff(pos[v]))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let span_cut = 16usize.max(4 * median(span.clone()));
        let mut changed = false;
        for (&v, &sp) in order.iter().zip(&span) {
            if sp > span_cut {
                is_border[v] = true;
                changed = true;
            }
        }
        if !changed {
            return (is_border, order);
        }
    }
    let order = reverse_cuthill_mckee(adj, &is_border);
    (is_border, order)
}

fn symmetric_adjacency(a: &SparseMatrix) -> Vec<Vec<usize>> {
    let n = a.n_rows();
    let mut adj = vec![Vec::new(); n];
    for (i, j, _) in a.iter() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for nb in adj.iter_mut() {
        nb.sort_unstable();
        nb.dedup();
    }
    adj
}

/// RCM ordering of the nodes not flagged as border; returns `perm[new] = old`.
fn reverse_cuthill_mckee(adj: &[Vec<usize>], skip: &[bool]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj
        .iter()
        .map(|nb| nb.iter().filter(|&&j| !skip[j]).count())
        .collect();
    let mut visited = skip.to_vec();
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).filter(|&i| !skip[i]).collect();
    by_degree.sort_by_key(|&i| degree[i]);

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(adj, skip, &degree, seed);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(node) = queue.pop_front() {
            order.push(node);
            let mut next: Vec<usize> = adj[node]
                .iter()
                .copied()
                .filter(|&j| !visited[j])
                .collect();
            next.sort_by_key(|&j| degree[j]);
            for j in next {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(adj: &[Vec<usize>], skip: &[bool], degree: &[usize], seed: usize) -> usize {
    let mut current = seed;
    let mut current_ecc = 0;
    for _ in 0..8 {
        let (far, ecc) = farthest(adj, skip, degree, current);
        if ecc <= current_ecc {
            break;
        }
        current = far;
        current_ecc = ecc;
    }
    current
}

fn farthest(adj: &[Vec<usize>], skip: &[bool], degree: &[usize], start: usize) -> (usize, usize) {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut best = (start, 0usize);
    while let Some(v) = queue.pop_front() {
        let d = dist[v];
        if d > best.1 || (d == best.1 && degree[v] < degree[best.0]) {
            best = (v, d);
        }
        for &w in &adj[v] {
            if !skip[w] && dist[w] == usize::MAX {
                dist[w] = d + 1;
                queue.push_back(w);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::sparse::TripletBuilder;
    use crate::numkit::Rng;

    fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.mul_vec(x);
        let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
        norm2(&r) / norm2(b)
    }

    #[test]
    fn identity_solve() {
        let x = sparse_solve(&SparseMatrix::identity(2), &[3.0, -1.0]).unwrap();
        assert_eq!(x, vec![3.0, -1.0]);
    }

    #[test]
    fn diagonal_solve() {
        let a = SparseMatrix::from_dense(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let x = sparse_solve(&a, &[2.0, 8.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn random_spd_residual() {
        let mut rng = Rng::new(11);
        let n = 50;
        let g: Vec<f64> = (0..n * n).map(|_| rng.standard_normal()).collect();
        // A = G Gᵀ + n I
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..n).map(|k| g[i * n + k] * g[j * n + k]).sum();
                dense[i * n + j] = s + if i == j { n as f64 } else { 0.0 };
            }
        }
        let a = SparseMatrix::from_dense(n, n, &dense);
        let b: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let x = sparse_solve(&a, &b).unwrap();
        assert!(residual(&a, &x, &b) <= 1e-10);
    }

    #[test]
    fn needs_pivoting_and_border() {
        // 2-D Laplacian-like block system with a zero diagonal block and a dense coupling row/column.
        let m = 12;
        let n = m * m;
        let dim = 2 * n + 1;
        let mut b = TripletBuilder::new(dim, dim);
        for i in 0..m {
            for j in 0..m {
                let k = i * m + j;
                b.push(k, k, 0.01);
                b.push(k, n + k, 4.0);
                b.push(n + k, k, 4.0);
                for (di, dj) in [(0i64, 1i64), (1, 0), (0, -1), (-1, 0)] {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if ii >= 0 && jj >= 0 && (ii as usize) < m && (jj as usize) < m {
                        let kk = ii as usize * m + jj as usize;
                        b.push(k, n + kk, -1.0);
                        b.push(n + k, kk, -1.0);
                    }
                }
                b.push(dim - 1, n + k, 0.3);
                b.push(n + k, dim - 1, if k % 2 == 0 { 0.5 } else { 0.0 });
            }
        }
        b.push(dim - 1, dim - 1, 1.0);
        let a = b.build();
        let lu = SparseLu::factor(&a).unwrap();
        assert_eq!(lu.border_size(), 1);
        let (kl, ku) = lu.bandwidth();
        assert!(kl < 4 * m && ku < 4 * m, "bandwidth {kl} {ku}");
        let rhs: Vec<f64> = (0..dim).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let x = lu.solve(&rhs).unwrap();
        assert!(residual(&a, &x, &rhs) <= 1e-12);
    }

    #[test]
    fn singular_matrix_reported() {
        let a = SparseMatrix::from_dense(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            sparse_solve(&a, &[1.0, 1.0]),
            Err(NumError::Singular { .. })
        ));
        let z = SparseMatrix::from_dense(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            sparse_solve(&z, &[1.0, 1.0]),
            Err(NumError::Singular { .. })
        ));
    }

    #[test]
    fn dimension_errors() {
        let a = SparseMatrix::from_dense(2, 3, &[1.0; 6]);
        assert!(matches!(
            SparseLu::factor(&a),
            Err(NumError::NotSquare { .. })
        ));
        assert!(matches!(
            sparse_solve(&SparseMatrix::identity(3), &[1.0]),
            Err(NumError::DimensionMismatch { .. })
        ));
    }
}
