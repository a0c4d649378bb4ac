//! Piecewise linear finite elements on the unit square.

use crate::numkit::{SparseMatrix, TripletBuilder};

use super::ControlError;

/// Stiffness, consistent mass and lumped mass over all `(M+1)²` grid nodes,
/// before the Dirichlet boundary is eliminated.
#[derive(Debug, Clone)]
pub struct FullMatrices {
    pub stiffness: SparseMatrix,
    pub mass: SparseMatrix,
    pub lumped: Vec<f64>,
}

/// Discrete operators on the interior nodes of a uniform `M × M` mesh whose
/// cells are each split into two right triangles.
#[derive(Debug, Clone)]
pub struct FemSystem {
    pub cells_per_side: usize,
    pub stiffness: SparseMatrix,
    pub mass: SparseMatrix,
    pub lumped: Vec<f64>,
    /// Desired state sampled at the interior nodes.
    pub y_desired: Vec<f64>,
}

/// Triangles as global node triples; nodes are numbered `iy * (M+1) + ix`.
fn triangles(m: usize) -> impl Iterator<Item = [usize; 3]> {
    let stride = m + 1;
    (0..m).flat_map(move |iy| {
        (0..m).flat_map(move |ix| {
            let v00 = iy * stride + ix;
            let v10 = v00 + 1;
            let v01 = v00 + stride;
            let v11 = v01 + 1;
            [[v00, v10, v11], [v00, v11, v01]]
        })
    })
}

fn node_coords(node: usize, m: usize) -> (f64, f64) {
    let h = 1.0 / m as f64;
    ((node % (m + 1)) as f64 * h, (node / (m + 1)) as f64 * h)
}

pub fn assemble_full(m: usize) -> Result<FullMatrices, ControlError> {
    if m < 2 {
        return Err(ControlError::MeshTooCoarse(m));
    }
    let nodes = (m + 1) * (m + 1);
    let mut k = TripletBuilder::with_capacity(nodes, nodes, 18 * m * m);
    let mut mass = TripletBuilder::with_capacity(nodes, nodes, 18 * m * m);
    let mut lumped = vec![0.0; nodes];
    for tri in triangles(m) {
        let p = tri.map(|v| node_coords(v, m));
        let area = 0.5
            * ((p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1))
                .abs();
        // gradient of the barycentric coordinate of vertex a is (b, c) / (2 area)
        let grads: [(f64, f64); 3] = std::array::from_fn(|a| {
            let (j, l) = ((a + 1) % 3, (a + 2) % 3);
            (p[j].1 - p[l].1, p[l].0 - p[j].0)
        });
        for a in 0..3 {
            lumped[tri[a]] += area / 3.0;
            for b in 0..3 {
                let kab = (grads[a].0 * grads[b].0 + grads[a].1 * grads[b].1) / (4.0 * area);
                k.push(tri[a], tri[b], kab);
                let mab = if a == b { area / 6.0 } else { area / 12.0 };
                mass.push(tri[a], tri[b], mab);
            }
        }
    }
    let mut stiffness = k.build();
    let mut mass = mass.build();
    symmetrize(&mut stiffness);
    symmetrize(&mut mass);
    Ok(FullMatrices {
        stiffness,
        mass,
        lumped,
    })
}

/// Assembly sums in a different order for `(i, j)` and `(j, i)`; average the
/// two so the symmetric flag can be set exactly.
fn symmetrize(a: &mut SparseMatrix) {
    let n = a.n_rows();
    let t = a.transpose();
    let mut b = TripletBuilder::with_capacity(n, n, 2 * a.nnz());
    a.scatter_into(&mut b, 0, 0, 0.5);
    t.scatter_into(&mut b, 0, 0, 0.5);
    let mut s = b.build();
    s.mark_symmetric()
        .expect("average of a matrix and its transpose is symmetric");
    *a = s;
}

fn is_interior(node: usize, m: usize) -> bool {
    let (ix, iy) = (node % (m + 1), node / (m + 1));
    ix > 0 && ix < m && iy > 0 && iy < m
}

/// Index of a full-grid node among the interior unknowns.
fn interior_index(node: usize, m: usize) -> Option<usize> {
    is_interior(node, m).then(|| {
        let (ix, iy) = (node % (m + 1), node / (m + 1));
        (iy - 1) * (m - 1) + (ix - 1)
    })
}

fn restrict(a: &SparseMatrix, m: usize) -> SparseMatrix {
    let n = (m - 1) * (m - 1);
    let mut b = TripletBuilder::with_capacity(n, n, a.nnz());
    for (i, j, v) in a.iter() {
        if let (Some(ii), Some(jj)) = (interior_index(i, m), interior_index(j, m)) {
            b.push(ii, jj, v);
        }
    }
    let mut r = b.build();
    r.mark_symmetric()
        .expect("restriction of a symmetric matrix stays symmetric");
    r
}

impl FemSystem {
    pub fn assemble(m: usize, y_desired: impl Fn(f64, f64) -> f64) -> Result<Self, ControlError> {
        let full = assemble_full(m)?;
        let nodes = (m + 1) * (m + 1);
        let interior: Vec<usize> = (0..nodes).filter(|&v| is_interior(v, m)).collect();
        let lumped = interior.iter().map(|&v| full.lumped[v]).collect();
        let y_desired = interior
            .iter()
            .map(|&v| {
                let (x, y) = node_coords(v, m);
                y_desired(x, y)
            })
            .collect();
        Ok(Self {
            cells_per_side: m,
            stiffness: restrict(&full.stiffness, m),
            mass: restrict(&full.mass, m),
            lumped,
            y_desired,
        })
    }

    /// Mesh with the desired state `sin(πx) exp(y)`.
    pub fn standard(m: usize) -> Result<Self, ControlError> {
        Self::assemble(m, |x, y| (std::f64::consts::PI * x).sin() * y.exp())
    }

    pub fn n(&self) -> usize {
        self.lumped.len()
    }

    pub fn mesh_width(&self) -> f64 {
        1.0 / self.cells_per_side as f64
    }

    /// Coordinates of interior unknown `i`.
    pub fn coords(&self, i: usize) -> (f64, f64) {
        let side = self.cells_per_side - 1;
        let h = self.mesh_width();
        ((i % side + 1) as f64 * h, (i / side + 1) as f64 * h)
    }

    /// `eᵀ M_L |u|`.
    pub fn l1_norm(&self, u: &[f64]) -> f64 {
        self.lumped.iter().zip(u).map(|(w, x)| w * x.abs()).sum()
    }

    /// `(uᵀ M_L u)^{1/2}`.
    pub fn lumped_l2_norm(&self, u: &[f64]) -> f64 {
        self.lumped
            .iter()
            .zip(u)
            .map(|(w, x)| w * x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Values of a nodal field at the interior nodes of a mesh with `target`
    /// cells per side, by piecewise linear interpolation.
    pub fn interpolate_to(&self, field: &[f64], target: usize) -> Vec<f64> {
        let m = self.cells_per_side;
        let side = m - 1;
        let value = |ix: usize, iy: usize| -> f64 {
            if ix == 0 || iy == 0 || ix == m || iy == m {
                0.0
            } else {
                field[(iy - 1) * side + ix - 1]
            }
        };
        let h_t = 1.0 / target as f64;
        let mut out = Vec::with_capacity((target - 1) * (target - 1));
        for jy in 1..target {
            for jx in 1..target {
                let (x, y) = (jx as f64 * h_t * m as f64, jy as f64 * h_t * m as f64);
                let (cx, cy) = ((x.floor() as usize).min(m - 1), (y.floor() as usize).min(m - 1));
                let (sx, sy) = (x - cx as f64, y - cy as f64);
                // lower triangle (v00, v10, v11) when sx ≥ sy, upper (v00, v11, v01) otherwise
                let v = if sx >= sy {
                    value(cx, cy) * (1.0 - sx)
                        + value(cx + 1, cy) * (sx - sy)
                        + value(cx + 1, cy + 1) * sy
                } else {
                    value(cx, cy) * (1.0 - sy)
                        + value(cx, cy + 1) * (sy - sx)
                        + value(cx + 1, cy + 1) * sx
                };
                out.push(v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::sparse::dot;
    use crate::numkit::SparseLu;
    use std::f64::consts::PI;

    #[test]
    fn interior_stencil_is_five_point() {
        let fem = FemSystem::standard(8).unwrap();
        let side = 7;
        let c = 3 * side + 3;
        let k = &fem.stiffness;
        assert!((k.get(c, c) - 4.0).abs() < 1e-14);
        for nb in [c - 1, c + 1, c - side, c + side] {
            assert!((k.get(c, nb) + 1.0).abs() < 1e-14);
        }
        let row_nnz = k.row(c).filter(|&(_, v)| v.abs() > 1e-14).count();
        assert_eq!(row_nnz, 5);
    }

    #[test]
    fn constants_in_kernel_before_elimination() {
        let full = assemble_full(6).unwrap();
        let ones = vec![1.0; 49];
        let r = full.stiffness.mul_vec(&ones);
        assert!(r.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn lumped_mass_sums_to_area() {
        for m in [2, 5, 32] {
            let full = assemble_full(m).unwrap();
            let total: f64 = full.lumped.iter().sum();
            assert!((total - 1.0).abs() < 1e-13);
            let consistent: f64 = full.mass.iter().map(|(_, _, v)| v).sum();
            assert!((consistent - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn default_mesh_has_2048_triangles() {
        assert_eq!(triangles(32).count(), 2048);
        let fem = FemSystem::standard(32).unwrap();
        assert_eq!(fem.n(), 31 * 31);
        assert!(fem.lumped.iter().all(|&w| w > 0.0));
        assert!(fem.stiffness.is_marked_symmetric() && fem.mass.is_marked_symmetric());
    }

    #[test]
    fn rejects_single_cell() {
        assert!(matches!(
            FemSystem::standard(1),
            Err(ControlError::MeshTooCoarse(1))
        ));
    }

    fn smallest_eigenvalue(fem: &FemSystem) -> f64 {
        let lu = SparseLu::factor(&fem.stiffness).unwrap();
        let mut x: Vec<f64> = (0..fem.n())
            .map(|i| {
                let (a, b) = fem.coords(i);
                a * (1.0 - a) * b * (1.0 - b)
            })
            .collect();
        let mut lambda = 0.0;
        for _ in 0..30 {
            let rhs: Vec<f64> = x.iter().zip(&fem.lumped).map(|(a, w)| a * w).collect();
            let y = lu.solve(&rhs).unwrap();
            let ky = fem.stiffness.mul_vec(&y);
            let my: Vec<f64> = y.iter().zip(&fem.lumped).map(|(a, w)| a * w).collect();
            lambda = dot(&y, &ky) / dot(&y, &my);
            let norm = dot(&y, &my).sqrt();
            x = y.iter().map(|v| v / norm).collect();
        }
        lambda
    }

    #[test]
    fn smallest_eigenvalue_approaches_two_pi_squared() {
        let target = 2.0 * PI * PI;
        let mut errs = Vec::new();
        for m in [16, 32, 64] {
            let fem = FemSystem::standard(m).unwrap();
            errs.push((smallest_eigenvalue(&fem) - target).abs() / target);
        }
        assert!(errs[2] <= 0.02, "relative error {}", errs[2]);
        assert!(errs[0] > errs[1] && errs[1] > errs[2]);
    }

    #[test]
    fn interpolation_reproduces_linear_field_on_refinement() {
        let fem = FemSystem::standard(4).unwrap();
        let field: Vec<f64> = (0..fem.n())
            .map(|i| {
                let (x, y) = fem.coords(i);
                (PI * x).sin() * (PI * y).sin()
            })
            .collect();
        let fine = fem.interpolate_to(&field, 8);
        let fine_fem = FemSystem::standard(8).unwrap();
        // coarse nodes reappear unchanged at every other fine node
        for i in 0..fem.n() {
            let (x, y) = fem.coords(i);
            let j = (0..fine_fem.n())
                .find(|&j| {
                    let (a, b) = fine_fem.coords(j);
                    (a - x).abs() < 1e-12 && (b - y).abs() < 1e-12
                })
                .unwrap();
            assert!((fine[j] - field[i]).abs() < 1e-14);
        }
    }
}
