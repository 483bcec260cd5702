//! Orthogonal matching pursuit: greedy atom selection by maximal absolute
//! correlation with the residual, least-squares re-fit over the active
//! support each step. Correlations are maintained through the Gram matrix
//! (`D^T r = D^T y - G_S x_S`), so each step costs O(atoms * support) instead
//! of a fresh mat-vec.

use crate::dictionary::{DictKind, Dictionary};
use crate::error::{Error, Result};
use crate::signal::{SignalKind, SignalMatrix};
use nalgebra::DMatrix;
use rayon::prelude::*;

#[derive(Clone, Debug)]
pub struct OmpOptions {
    /// Maximum atoms per column.
    pub sparsity: usize,
    /// Stop once the residual norm falls to this level.
    pub residual_tol: f64,
    /// Remove per-column means before coding and store them for
    /// reconstruction.
    pub remove_mean: bool,
}

impl Default for OmpOptions {
    fn default() -> Self {
        OmpOptions { sparsity: 8, residual_tol: 1e-6, remove_mean: false }
    }
}

/// Sparse coefficients for a batch of signal columns.
#[derive(Clone, PartialEq, Debug)]
pub struct SparseCode {
    kind: SignalKind,
    coefficients: DMatrix<f64>,
    supports: Vec<Vec<usize>>,
    means: Option<Vec<f64>>,
}

impl SparseCode {
    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn supports(&self) -> &[Vec<usize>] {
        &self.supports
    }

    pub fn means(&self) -> Option<&[f64]> {
        self.means.as_deref()
    }

    pub fn cols(&self) -> usize {
        self.coefficients.ncols()
    }
}

fn check_kinds(signals: &SignalMatrix, dict: &Dictionary) -> Result<()> {
    if dict.kind().signal_kind() != signals.kind() {
        let expected = match signals.kind() {
            SignalKind::Pol => DictKind::Pol,
            SignalKind::Rgb => DictKind::Rgb,
            SignalKind::Mono => DictKind::Mono,
        };
        return Err(Error::KindMismatch { expected, got: dict.kind() });
    }
    if dict.rows() != signals.rows() {
        return Err(Error::DimensionMismatch {
            dict_rows: dict.rows(),
            signal_rows: signals.rows(),
        });
    }
    Ok(())
}

/// Encodes every column of `signals` against `dict`.
pub fn omp_encode(
    signals: &SignalMatrix,
    dict: &Dictionary,
    opts: &OmpOptions,
) -> Result<SparseCode> {
    check_kinds(signals, dict)?;
    if opts.sparsity == 0 {
        return Err(Error::InvalidParameter("sparsity must be at least 1".into()));
    }
    let gram = dict.gram();
    let mut work = signals.data().clone();
    let means = opts.remove_mean.then(|| center_columns(&mut work));
    let picks = encode_columns(&work, dict.atoms(), &gram, opts.sparsity, opts.residual_tol);

    let mut coefficients = DMatrix::zeros(dict.atom_count(), work.ncols());
    for (j, (support, coeffs)) in picks.iter().enumerate() {
        for (&a, &x) in support.iter().zip(coeffs) {
            coefficients[(a, j)] = x;
        }
    }
    Ok(SparseCode {
        kind: signals.kind(),
        coefficients,
        supports: picks.into_iter().map(|(s, _)| s).collect(),
        means,
    })
}

/// `f(P) = D * X` (plus re-added patch means when coding removed them).
pub fn reconstruct(dict: &Dictionary, code: &SparseCode) -> Result<SignalMatrix> {
    if dict.kind().signal_kind() != code.kind {
        return Err(Error::KindMismatch { expected: dict.kind(), got: dict.kind() });
    }
    if dict.atom_count() != code.coefficients.nrows() {
        return Err(Error::DimensionMismatch {
            dict_rows: dict.atom_count(),
            signal_rows: code.coefficients.nrows(),
        });
    }
    let n = code.cols();
    let mut out = DMatrix::zeros(dict.rows(), n);
    for j in 0..n {
        let mut col = out.column_mut(j);
        for &a in &code.supports[j] {
            col.axpy(code.coefficients[(a, j)], &dict.atoms().column(a), 1.0);
        }
        if let Some(means) = &code.means {
            col.add_scalar_mut(means[j]);
        }
    }
    SignalMatrix::new(code.kind, out)
}

pub(crate) fn center_columns(data: &mut DMatrix<f64>) -> Vec<f64> {
    let rows = data.nrows();
    let mut means = Vec::with_capacity(data.ncols());
    for mut col in data.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / rows as f64;
        for v in col.iter_mut() {
            *v -= mean;
        }
        means.push(mean);
    }
    means
}

/// Greedy pursuit over all columns; columns are independent, so the parallel
/// map is bitwise identical for any thread count.
pub(crate) fn encode_columns(
    data: &DMatrix<f64>,
    atoms: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    sparsity: usize,
    residual_tol: f64,
) -> Vec<(Vec<usize>, Vec<f64>)> {
    let correlations = atoms.tr_mul(data); // atoms x n
    let tol2 = residual_tol * residual_tol;
    (0..data.ncols())
        .into_par_iter()
        .map(|j| {
            let y2 = data.column(j).norm_squared();
            let c0: Vec<f64> = correlations.column(j).iter().copied().collect();
            encode_one(y2, &c0, gram, sparsity, tol2)
        })
        .collect()
}

/// Residual energy of one coded column given its pursuit state; clamped at
/// zero against cancellation noise.
#[inline]
fn residual_energy(y2: f64, b: &[f64], x: &[f64]) -> f64 {
    let fit: f64 = b.iter().zip(x).map(|(bi, xi)| bi * xi).sum();
    (y2 - fit).max(0.0)
}

fn encode_one(
    y2: f64,
    c0: &[f64],
    gram: &DMatrix<f64>,
    sparsity: usize,
    tol2: f64,
) -> (Vec<usize>, Vec<f64>) {
    let natoms = c0.len();
    let mut support: Vec<usize> = Vec::new();
    let mut coeffs: Vec<f64> = Vec::new();
    if y2 <= tol2 {
        return (support, coeffs); // zero signal: zero iterations
    }
    let corr_floor = 1e-12 * y2.sqrt().max(1.0);

    let mut in_support = vec![false; natoms];
    let mut c = c0.to_vec(); // current correlations D^T r
    let mut chol: Vec<Vec<f64>> = Vec::new(); // lower-triangular rows of chol(G_SS)
    let mut b: Vec<f64> = Vec::new(); // c0 restricted to the support
    let mut res2 = y2;

    for _ in 0..sparsity.min(natoms) {
        // Most correlated unused atom; ties go to the lowest index.
        let mut best = usize::MAX;
        let mut best_abs = corr_floor;
        for (i, &ci) in c.iter().enumerate() {
            if !in_support[i] && ci.abs() > best_abs {
                best = i;
                best_abs = ci.abs();
            }
        }
        if best == usize::MAX {
            break;
        }

        // Extend chol(G_SS) by the candidate atom; a vanishing pivot means the
        // atom is linearly dependent on the support, so the step is rejected
        // and the column terminates.
        let k = support.len();
        let mut row = Vec::with_capacity(k + 1);
        for (i, li) in chol.iter().enumerate() {
            let mut v = gram[(support[i], best)];
            for m in 0..i {
                v -= li[m] * row[m];
            }
            row.push(v / li[i]);
        }
        let pivot2 = gram[(best, best)] - row.iter().map(|w| w * w).sum::<f64>();
        if pivot2 <= 1e-12 {
            break;
        }
        row.push(pivot2.sqrt());

        let mut b_new = b.clone();
        b_new.push(c0[best]);
        chol.push(row);

        // Least-squares re-fit over the extended support.
        let x_new = solve_chol(&chol, &b_new);
        let res2_new = residual_energy(y2, &b_new, &x_new);
        if res2_new >= res2 {
            chol.pop();
            break;
        }

        support.push(best);
        in_support[best] = true;
        b = b_new;
        coeffs = x_new;
        res2 = res2_new;
        if res2 <= tol2 {
            break;
        }

        // c = c0 - G[:, S] x_S
        for i in 0..natoms {
            let mut v = c0[i];
            for (s, &x) in support.iter().zip(&coeffs) {
                v -= gram[(i, *s)] * x;
            }
            c[i] = v;
        }
    }
    (support, coeffs)
}

/// Solves `(L L^T) x = b` for the packed lower-triangular rows in `chol`.
fn solve_chol(chol: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let k = b.len();
    let mut z = vec![0.0; k];
    for i in 0..k {
        let mut v = b[i];
        for m in 0..i {
            v -= chol[i][m] * z[m];
        }
        z[i] = v / chol[i][i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut v = z[i];
        for m in i + 1..k {
            v -= chol[m][i] * x[m];
        }
        x[i] = v / chol[i][i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::DictionaryMeta;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mono_dictionary(atoms: DMatrix<f64>) -> Dictionary {
        let mut atoms = atoms;
        for mut col in atoms.column_iter_mut() {
            let n = col.norm();
            col /= n;
        }
        Dictionary::new(DictKind::Mono, atoms, DictionaryMeta::default()).unwrap()
    }

    fn random_mono_dictionary(natoms: usize, seed: u64) -> Dictionary {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        mono_dictionary(DMatrix::from_fn(16, natoms, |_, _| rng.random::<f64>() - 0.5))
    }

    fn orthonormal_dictionary(natoms: usize, seed: u64) -> Dictionary {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(16, 16, |_, _| rng.random::<f64>() - 0.5);
        let qr = m.qr();
        let q = qr.q();
        mono_dictionary(q.columns(0, natoms).into_owned())
    }

    fn signals_from(cols: Vec<DVector<f64>>) -> SignalMatrix {
        let n = cols.len();
        let mut m = DMatrix::zeros(16, n);
        for (j, c) in cols.into_iter().enumerate() {
            m.set_column(j, &c);
        }
        SignalMatrix::new(SignalKind::Mono, m).unwrap()
    }

    #[test]
    fn single_atom_signal_recovers_unit_coefficient() {
        let dict = random_mono_dictionary(8, 1);
        let y = dict.atoms().column(3).into_owned();
        let signals = signals_from(vec![y]);
        let code =
            omp_encode(&signals, &dict, &OmpOptions { sparsity: 1, ..Default::default() }).unwrap();
        assert_eq!(code.supports()[0], vec![3]);
        assert!((code.coefficients()[(3, 0)] - 1.0).abs() < 1e-12);
        let rec = reconstruct(&dict, &code).unwrap();
        let err = (rec.data().column(0) - dict.atoms().column(3)).norm();
        assert!(err < 1e-12);
    }

    #[test]
    fn orthonormal_two_term_combination_recovered_exactly() {
        let dict = orthonormal_dictionary(8, 2);
        let y = dict.atoms().column(1) * 2.0 + dict.atoms().column(5) * 3.0;
        let signals = signals_from(vec![y]);
        let code =
            omp_encode(&signals, &dict, &OmpOptions { sparsity: 2, ..Default::default() }).unwrap();
        let mut s = code.supports()[0].clone();
        s.sort_unstable();
        assert_eq!(s, vec![1, 5]);
        assert!((code.coefficients()[(1, 0)] - 2.0).abs() < 1e-10);
        assert!((code.coefficients()[(5, 0)] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn zero_signal_yields_empty_code() {
        let dict = random_mono_dictionary(8, 3);
        let signals = signals_from(vec![DVector::zeros(16)]);
        let code = omp_encode(&signals, &dict, &OmpOptions::default()).unwrap();
        assert!(code.supports()[0].is_empty());
        assert!(code.coefficients().column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_norm_decreases_with_sparsity_budget() {
        let dict = random_mono_dictionary(12, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let y = DVector::from_fn(16, |_, _| rng.random::<f64>() - 0.5);
            let signals = signals_from(vec![y.clone()]);
            let mut prev = f64::INFINITY;
            for sparsity in 1..=6 {
                let code = omp_encode(
                    &signals,
                    &dict,
                    &OmpOptions { sparsity, residual_tol: 0.0, remove_mean: false },
                )
                .unwrap();
                let rec = reconstruct(&dict, &code).unwrap();
                let res = (rec.data().column(0) - &y).norm();
                assert!(res <= prev + 1e-12, "sparsity {sparsity}: {res} > {prev}");
                prev = res;
            }
        }
    }

    #[test]
    fn mean_removal_round_trips() {
        let dict = random_mono_dictionary(8, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = DVector::from_fn(16, |_, _| rng.random::<f64>() + 2.0);
        let signals = signals_from(vec![y.clone()]);
        let code = omp_encode(
            &signals,
            &dict,
            &OmpOptions { sparsity: 8, residual_tol: 1e-12, remove_mean: true },
        )
        .unwrap();
        assert!(code.means().is_some());
        let rec = reconstruct(&dict, &code).unwrap();
        // Mean goes back in; reconstruction error only from the sparse fit.
        let mean = y.iter().sum::<f64>() / 16.0;
        assert!((code.means().unwrap()[0] - mean).abs() < 1e-12);
        assert!(rec.data().column(0).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn constant_column_with_mean_removal_codes_to_zero() {
        let dict = random_mono_dictionary(8, 8);
        let signals = signals_from(vec![DVector::from_element(16, 0.5)]);
        let code = omp_encode(
            &signals,
            &dict,
            &OmpOptions { sparsity: 4, residual_tol: 1e-6, remove_mean: true },
        )
        .unwrap();
        assert!(code.supports()[0].is_empty());
        let rec = reconstruct(&dict, &code).unwrap();
        assert!(rec.data().column(0).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn kind_mismatch_rejected() {
        let dict = random_mono_dictionary(8, 9);
        let signals = SignalMatrix::new(SignalKind::Pol, DMatrix::zeros(64, 2)).unwrap();
        assert!(matches!(
            omp_encode(&signals, &dict, &OmpOptions::default()),
            Err(Error::KindMismatch { .. })
        ));
    }
}
