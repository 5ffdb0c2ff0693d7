//! Similarity primitives and PCA feature compression.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::EmbeddingMatrix;

/// Norms at or below this are treated as the zero vector.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("PCA needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("cannot keep {requested} components from {rows} rows of dimension {dim}")]
    TooManyComponents { requested: usize, rows: usize, dim: usize },
    #[error("dimension mismatch: model expects {expected}, input has {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("non-finite input at row {0}")]
    NonFinite(usize),
}

pub fn dot<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> f64 {
    assert_eq!(u.len(), v.len(), "dot of vectors with different dimensions");
    u.iter().zip(v).map(|(&a, &b)| a.into() * b.into()).sum()
}

pub fn norm<T: Copy + Into<f64>>(u: &[T]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity clamped to `[-1, 1]`.
///
/// A zero vector is dissimilar (0) to any non-zero vector and identical (1)
/// to another zero vector, so degenerate frames neither abort a summary nor
/// pass a diversity filter as distinct content.
pub fn cosine_sim<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> f64 {
    let (nu, nv) = (norm(u), norm(v));
    match (nu <= ZERO_NORM, nv <= ZERO_NORM) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0),
    }
}

/// Unit-length copy of `u`; zero vectors stay zero.
pub fn normalized<T: Copy + Into<f64>>(u: &[T]) -> Vec<f64> {
    let n = norm(u);
    if n <= ZERO_NORM {
        return vec![0.0; u.len()];
    }
    u.iter().map(|&x| x.into() / n).collect()
}

/// Anything PCA can read row by row without materializing an `f64` copy.
pub trait RowSource {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn copy_row(&self, i: usize, out: &mut [f64]);
}

impl RowSource for EmbeddingMatrix {
    fn n_rows(&self) -> usize {
        self.rows()
    }

    fn n_cols(&self) -> usize {
        self.dim()
    }

    fn copy_row(&self, i: usize, out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(self.row(i)) {
            *o = v as f64;
        }
    }
}

impl RowSource for [Vec<f64>] {
    fn n_rows(&self) -> usize {
        self.len()
    }

    fn n_cols(&self) -> usize {
        self.first().map_or(0, Vec::len)
    }

    fn copy_row(&self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(&self[i]);
    }
}

impl RowSource for Vec<Vec<f64>> {
    fn n_rows(&self) -> usize {
        self.as_slice().n_rows()
    }

    fn n_cols(&self) -> usize {
        self.as_slice().n_cols()
    }

    fn copy_row(&self, i: usize, out: &mut [f64]) {
        self.as_slice().copy_row(i, out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `L` orthonormal principal directions, by descending variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

const CHUNK_ROWS: usize = 1024;

/// Fits a PCA model from the sample covariance (denominator `n - 1`).
///
/// Each component is signed so that its largest-magnitude coordinate is
/// positive, which makes the fit deterministic for a given input.
pub fn pca_fit<X: RowSource + ?Sized>(x: &X, dims: usize) -> Result<PcaModel, NumericsError> {
    let (n, d) = (x.n_rows(), x.n_cols());
    if n < 2 {
        return Err(NumericsError::TooFewRows(n));
    }
    if dims == 0 || dims > (n - 1).min(d) {
        return Err(NumericsError::TooManyComponents { requested: dims, rows: n, dim: d });
    }

    let mut row = vec![0.0; d];
    let mut mean = vec![0.0; d];
    for i in 0..n {
        x.copy_row(i, &mut row);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite(i));
        }
        for (m, v) in mean.iter_mut().zip(&row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let mut scatter = DMatrix::<f64>::zeros(d, d);
    let mut start = 0;
    while start < n {
        let rows = CHUNK_ROWS.min(n - start);
        // One centered sample per column, so filling is contiguous.
        let mut chunk = DMatrix::<f64>::zeros(d, rows);
        for r in 0..rows {
            x.copy_row(start + r, &mut row);
            for (dst, (v, m)) in chunk.column_mut(r).iter_mut().zip(row.iter().zip(&mean)) {
                *dst = v - m;
            }
        }
        scatter.gemm(1.0, &chunk, &chunk.transpose(), 1.0);
        start += rows;
    }
    let cov = scatter / (n as f64 - 1.0);

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(dims);
    let mut explained_variance = Vec::with_capacity(dims);
    for &k in order.iter().take(dims) {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let lead = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, &c)| if c.abs() > best.1.abs() + 1e-12 { (i, c) } else { best });
        if lead.1 < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        components.push(v);
        explained_variance.push(eig.eigenvalues[k].max(0.0));
    }
    Ok(PcaModel { mean, components, explained_variance })
}

impl PcaModel {
    pub fn dims(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn project_row(&self, row: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = row.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        self.components.iter().map(|c| dot(c.as_slice(), centered.as_slice())).collect()
    }

    /// Maps projected coordinates back into the input space.
    pub fn reconstruct_row(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &w) in self.components.iter().zip(coords) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += w * v;
            }
        }
        out
    }
}

/// Centered projection of every row onto the model's components (`n x L`).
pub fn pca_project<X: RowSource + ?Sized>(
    model: &PcaModel,
    x: &X,
) -> Result<Vec<Vec<f64>>, NumericsError> {
    if x.n_rows() > 0 && x.n_cols() != model.input_dim() {
        return Err(NumericsError::DimMismatch { expected: model.input_dim(), actual: x.n_cols() });
    }
    let mut row = vec![0.0; model.input_dim()];
    Ok((0..x.n_rows())
        .map(|i| {
            x.copy_row(i, &mut row);
            model.project_row(&row)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_basics() {
        assert!((cosine_sim(&[3.0f64, 4.0], &[3.0, 4.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0f64, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine_sim(&[0.0f64, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine_sim(&[0.0f64, 0.0], &[0.0, 0.0]), 1.0);
        assert!((cosine_sim(&[1.0f32, 1.0], &[-1.0, -1.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_query_retrieves_matching_row() {
        let rows = [normalized(&[1.0, 2.0, 0.5]), normalized(&[0.0, 1.0, 0.0]), normalized(&[1.0, 0.0, 0.0])];
        let q = rows[0].clone();
        let best = (0..rows.len())
            .max_by(|&a, &b| dot(&q, &rows[a]).total_cmp(&dot(&q, &rows[b])))
            .unwrap();
        assert_eq!(best, 0);
        assert!((dot(&q, &rows[0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_points_keep_all_variance() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0]).collect();
        let model = pca_fit(&x, 1).unwrap();
        let total: f64 = (0..2)
            .map(|c| {
                let m = x.iter().map(|r| r[c]).sum::<f64>() / 10.0;
                x.iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / 9.0
            })
            .sum();
        assert!((model.explained_variance[0] - total).abs() < 1e-9 * total);
    }

    #[test]
    fn identical_rows_have_zero_variance() {
        let x = vec![vec![1.0, -2.0, 3.0]; 6];
        let model = pca_fit(&x, 1).unwrap();
        assert_eq!(model.mean, vec![1.0, -2.0, 3.0]);
        assert!(model.explained_variance[0].abs() < 1e-12);
        assert!((norm(model.components[0].as_slice()) - 1.0).abs() < 1e-9);
        let proj = pca_project(&model, &x).unwrap();
        assert!(proj.iter().all(|r| r[0].abs() < 1e-12));
    }

    #[test]
    fn mean_projects_to_zero() {
        let x: Vec<Vec<f64>> =
            (0..20).map(|i| vec![(i as f64).sin(), (i as f64 * 0.3).cos(), i as f64 * 0.1]).collect();
        let model = pca_fit(&x, 2).unwrap();
        let p = model.project_row(&model.mean);
        assert!(p.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn full_rank_reconstruction() {
        let x: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let t = i as f64;
                vec![t.sin(), (2.0 * t).cos(), t * 0.5, (t * 0.7).sin() * 3.0]
            })
            .collect();
        let model = pca_fit(&x, 4).unwrap();
        let proj = pca_project(&model, &x).unwrap();
        for (orig, p) in x.iter().zip(&proj) {
            let back = model.reconstruct_row(p);
            for (a, b) in orig.iter().zip(&back) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = vec![vec![1.0, 2.0]];
        assert_eq!(pca_fit(&x, 1), Err(NumericsError::TooFewRows(1)));
        let x = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![0.0, 0.0]];
        assert!(matches!(pca_fit(&x, 3), Err(NumericsError::TooManyComponents { .. })));
        let model = pca_fit(&x, 1).unwrap();
        let wrong = vec![vec![1.0, 2.0, 3.0]];
        assert!(matches!(pca_project(&model, &wrong), Err(NumericsError::DimMismatch { .. })));
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![-(i as f64), 0.1 * i as f64]).collect();
        let model = pca_fit(&x, 1).unwrap();
        let c = &model.components[0];
        let lead = if c[0].abs() > c[1].abs() { c[0] } else { c[1] };
        assert!(lead > 0.0);
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, dim)
            .prop_filter("non-zero", |v| norm(v.as_slice()) > 1e-3)
    }

    proptest! {
        #[test]
        fn cosine_is_scale_invariant(u in vec_strategy(6), v in vec_strategy(6), a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
            let su: Vec<f64> = u.iter().map(|x| x * a).collect();
            let sv: Vec<f64> = v.iter().map(|x| x * b).collect();
            prop_assert!((cosine_sim(&u, &v) - cosine_sim(&su, &sv)).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&cosine_sim(&u, &v)));
        }

        #[test]
        fn dot_ranking_equals_cosine_ranking_on_unit_rows(rows in prop::collection::vec(vec_strategy(5), 2..12), q in vec_strategy(5)) {
            let unit: Vec<Vec<f64>> = rows.iter().map(|r| normalized(r)).collect();
            let q = normalized(&q);
            let rank = |f: &dyn Fn(&[f64]) -> f64| {
                let mut idx: Vec<usize> = (0..unit.len()).collect();
                idx.sort_by(|&a, &b| f(&unit[b]).total_cmp(&f(&unit[a])).then(a.cmp(&b)));
                idx
            };
            let by_dot = rank(&|r| (dot(&q, r) * 1e9).round());
            let by_cos = rank(&|r| (cosine_sim(&q, r) * 1e9).round());
            prop_assert_eq!(by_dot, by_cos);
        }

        #[test]
        fn components_orthonormal_and_variances_match(seed in 0u64..1000) {
            let x: Vec<Vec<f64>> = (0..30)
                .map(|i| (0..6).map(|j| (((i * 7 + j * 13) as u64 ^ seed) as f64 * 0.618).sin() * (j + 1) as f64).collect())
                .collect();
            let model = pca_fit(&x, 4).unwrap();
            for a in 0..4 {
                for b in 0..4 {
                    let d = dot(model.components[a].as_slice(), model.components[b].as_slice());
                    let want = if a == b { 1.0 } else { 0.0 };
                    prop_assert!((d - want).abs() < 1e-9);
                }
            }
            for w in model.explained_variance.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            let proj = pca_project(&model, &x).unwrap();
            for k in 0..4 {
                let var = proj.iter().map(|r| r[k] * r[k]).sum::<f64>() / 29.0;
                prop_assert!((var - model.explained_variance[k]).abs() <= 1e-6 * model.explained_variance[0].max(1.0));
            }
        }
    }
}
