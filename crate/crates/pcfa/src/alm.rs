//! Low-rank + sparse-noise coding by inexact augmented Lagrange multipliers:
//!
//! ```text
//! min ||J||_* + lambda ||E||_1   s.t.  Y = D X + E,  X = J,  E >= 0
//! ```
//!
//! Alternates singular-value thresholding for `J`, a cached normal-equation
//! solve for `X`, and non-negative soft-thresholding for `E`, with gradient
//! ascent on the multipliers and a growing penalty `mu`.

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::omp::center_columns;
use crate::signal::{SignalKind, SignalMatrix};
use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct AlmOptions {
    /// Weight of the sparse-noise term.
    pub lambda: f64,
    pub max_iter: usize,
    /// Termination bound on `max(||Y - DX - E||_inf, ||X - J||_inf)`.
    pub tol: f64,
    /// Initial penalty; defaults to `1.25 / ||Y||_2`.
    pub mu0: Option<f64>,
    pub rho_mu: f64,
    pub mu_max: f64,
    pub remove_mean: bool,
}

impl AlmOptions {
    pub fn new(lambda: f64) -> Self {
        AlmOptions {
            lambda,
            max_iter: 500,
            tol: 1e-7,
            mu0: None,
            rho_mu: 1.1,
            mu_max: 1e10,
            remove_mean: false,
        }
    }
}

/// Converged iterates of the ALM solver.
#[derive(Clone, Debug)]
pub struct LowRankSolution {
    kind: SignalKind,
    /// Coefficients satisfying the data constraint.
    pub x: DMatrix<f64>,
    /// Low-rank auxiliary; equal to `x` within tolerance at convergence.
    pub j: DMatrix<f64>,
    /// Non-negative sparse residual.
    pub e: DMatrix<f64>,
    pub mu_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    means: Option<Vec<f64>>,
}

impl LowRankSolution {
    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    pub fn means(&self) -> Option<&[f64]> {
        self.means.as_deref()
    }

    /// `D * X` plus re-added means; the noise term is deliberately excluded.
    pub fn reconstruct(&self, dict: &Dictionary) -> Result<SignalMatrix> {
        if dict.kind().signal_kind() != self.kind {
            return Err(Error::KindMismatch { expected: dict.kind(), got: dict.kind() });
        }
        let mut out = dict.atoms() * &self.x;
        if let Some(means) = &self.means {
            for (j, mut col) in out.column_iter_mut().enumerate() {
                col.add_scalar_mut(means[j]);
            }
        }
        SignalMatrix::new(self.kind, out)
    }
}

/// Codes `signals` with the defaults (full inner budget, cold start).
pub fn alm_encode(
    signals: &SignalMatrix,
    dict: &Dictionary,
    lambda: f64,
) -> Result<LowRankSolution> {
    alm_encode_with(signals, dict, &AlmOptions::new(lambda), None)
}

/// Full-control entry point; `warm_start` seeds `X` (and `J`) with a dense
/// coefficient matrix, which is how the reconstruction loop refines OMP
/// output.
pub fn alm_encode_with(
    signals: &SignalMatrix,
    dict: &Dictionary,
    opts: &AlmOptions,
    warm_start: Option<&DMatrix<f64>>,
) -> Result<LowRankSolution> {
    if dict.kind().signal_kind() != signals.kind() {
        return Err(Error::KindMismatch { expected: dict.kind(), got: dict.kind() });
    }
    if dict.rows() != signals.rows() {
        return Err(Error::DimensionMismatch {
            dict_rows: dict.rows(),
            signal_rows: signals.rows(),
        });
    }
    if opts.lambda <= 0.0 {
        return Err(Error::InvalidParameter("alm lambda must be positive".into()));
    }

    let mut y = signals.data().clone();
    let means = opts.remove_mean.then(|| center_columns(&mut y));
    let (atoms, n) = (dict.atom_count(), y.ncols());

    let y_spectral = spectral_norm(&y);
    if y_spectral == 0.0 {
        // Zero input: the zero triple is already optimal and feasible.
        return Ok(LowRankSolution {
            kind: signals.kind(),
            x: DMatrix::zeros(atoms, n),
            j: DMatrix::zeros(atoms, n),
            e: DMatrix::zeros(dict.rows(), n),
            mu_trace: Vec::new(),
            iterations: 0,
            converged: true,
            means,
        });
    }

    let d = dict.atoms();
    let normal = dict.gram() + DMatrix::identity(atoms, atoms);
    let chol = nalgebra::Cholesky::new(normal)
        .ok_or(Error::NonFinite("ALM normal-equation factorization"))?;

    let mut x = match warm_start {
        Some(coeffs) => coeffs.clone(),
        None => DMatrix::zeros(atoms, n),
    };
    if x.nrows() != atoms || x.ncols() != n {
        return Err(Error::ShapeMismatch("warm start shape".into()));
    }
    let mut j = x.clone();
    let mut e = DMatrix::zeros(dict.rows(), n);
    let mut lag_data = DMatrix::zeros(dict.rows(), n); // multiplier of Y = DX + E
    let mut lag_couple = DMatrix::zeros(atoms, n); // multiplier of X = J

    let mut mu = opts.mu0.unwrap_or(1.25 / y_spectral);
    let mut mu_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for k in 0..opts.max_iter {
        iterations = k + 1;
        mu_trace.push(mu);

        // J-step: singular value thresholding of X + lag_couple / mu.
        j = svt(&(&x + &lag_couple / mu), 1.0 / mu);

        // X-step: (D^T D + I) X = D^T (Y - E + lag_data/mu) + J - lag_couple/mu.
        let rhs = d.tr_mul(&(&y - &e + &lag_data / mu)) + &j - &lag_couple / mu;
        x = chol.solve(&rhs);

        // E-step: shrink towards zero, then project onto E >= 0.
        let g = &y - d * &x + &lag_data / mu;
        let shift = opts.lambda / mu;
        e = g.map(|v| (v - shift).max(0.0));

        let data_gap = &y - d * &x - &e;
        let couple_gap = &x - &j;
        lag_data += &data_gap * mu;
        lag_couple += &couple_gap * mu;
        mu = (mu * opts.rho_mu).min(opts.mu_max);

        if data_gap.amax().max(couple_gap.amax()) < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(LowRankSolution {
        kind: signals.kind(),
        x,
        j,
        e,
        mu_trace,
        iterations,
        converged,
        means,
    })
}

/// Shrinks the singular values of `m` by `tau`, dropping the zeroed ones.
fn svt(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let kept = s - tau;
        if kept > 0.0 {
            // out += kept * u_i v_i^T
            let ui = u.column(i);
            let vi = v_t.row(i);
            for c in 0..m.ncols() {
                let w = kept * vi[c];
                let mut col = out.column_mut(c);
                col.axpy(w, &ui, 1.0);
            }
        }
    }
    out
}

/// Largest singular value by power iteration on `Y^T Y`; deterministic start.
fn spectral_norm(y: &DMatrix<f64>) -> f64 {
    let n = y.ncols();
    let fro = y.norm();
    if fro == 0.0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut sigma = 0.0;
    for _ in 0..100 {
        let u = y * &v;
        let w = y.tr_mul(&u);
        let wn = w.norm();
        if wn == 0.0 {
            // start vector orthogonal to the row space; perturb towards the
            // dominant residual direction
            v = y.tr_mul(&y.column_sum()).normalize();
            continue;
        }
        v = w / wn;
        let s = (y * &v).norm();
        if (s - sigma).abs() <= 1e-12 * s.max(1.0) {
            return s;
        }
        sigma = s;
    }
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{DictKind, DictionaryMeta};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pol_dictionary(natoms: usize, seed: u64) -> Dictionary {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::from_fn(64, natoms, |_, _| rng.random::<f64>() - 0.5);
        for mut col in m.column_iter_mut() {
            let n = col.norm();
            col /= n;
        }
        Dictionary::new(DictKind::Pol, m, DictionaryMeta::default()).unwrap()
    }

    #[test]
    fn zero_input_returns_zero_solution() {
        let dict = pol_dictionary(20, 1);
        let signals = SignalMatrix::new(SignalKind::Pol, DMatrix::zeros(64, 30)).unwrap();
        let sol = alm_encode(&signals, &dict, 0.1).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 0);
        assert!(sol.x.amax() == 0.0 && sol.e.amax() == 0.0);
    }

    #[test]
    fn rank_one_clean_data_recovered() {
        let dict = pol_dictionary(24, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DVector::from_fn(24, |_, _| rng.random::<f64>() - 0.5);
        let b = DVector::from_fn(60, |_, _| rng.random::<f64>() + 0.5);
        let x0 = &a * b.transpose();
        let y = SignalMatrix::new(SignalKind::Pol, dict.atoms() * &x0).unwrap();

        let sol = alm_encode(&y, &dict, 0.25).unwrap();
        assert!(sol.converged, "no convergence in {} iterations", sol.iterations);

        let feas = (y.data() - dict.atoms() * &sol.x - &sol.e).norm()
            / y.data().norm().max(1.0);
        assert!(feas <= 1e-6, "feasibility {feas}");
        assert!((&sol.x - &sol.j).norm() / sol.x.norm().max(1.0) <= 1e-6);

        let sv = sol.x.clone().svd(false, false).singular_values;
        assert!(sv[1] / sv[0] < 1e-6, "sigma2/sigma1 = {}", sv[1] / sv[0]);
        assert!(sol.e.iter().all(|&v| v >= 0.0));
        assert!(sol.e.norm() < 1e-5);
    }

    #[test]
    fn mu_schedule_grows_and_is_recorded() {
        let dict = pol_dictionary(16, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = DMatrix::from_fn(64, 20, |_, _| rng.random::<f64>());
        let signals = SignalMatrix::new(SignalKind::Pol, y).unwrap();
        let sol = alm_encode(&signals, &dict, 0.2).unwrap();
        assert_eq!(sol.mu_trace.len(), sol.iterations);
        for w in sol.mu_trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn lambda_must_be_positive() {
        let dict = pol_dictionary(16, 6);
        let signals = SignalMatrix::new(SignalKind::Pol, DMatrix::zeros(64, 5)).unwrap();
        assert!(alm_encode(&signals, &dict, 0.0).is_err());
    }
}
