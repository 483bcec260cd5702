//! K-SVD dictionary learning: alternate OMP sparse coding with per-atom
//! rank-1 updates of the residual restricted to the columns using the atom.
//!
//! Every update (new codes, new atom/coefficient pairs) is accepted only if
//! it does not increase the penalized objective `||Y - DX||_F^2 +
//! lambda * ||X||_1`, so the per-sweep objective trace is non-increasing by
//! construction; greedy recoding alone does not guarantee that.

use crate::dictionary::{training_hash, DictKind, Dictionary, DictionaryMeta};
use crate::error::{Error, Result};
use crate::omp::encode_columns;
use crate::signal::{SignalKind, SignalMatrix};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug)]
pub struct KsvdOptions {
    pub atoms: usize,
    pub sparsity: usize,
    pub sweeps: usize,
    /// L1 weight in the reported (and guarded) objective.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for KsvdOptions {
    fn default() -> Self {
        KsvdOptions { atoms: 256, sparsity: 8, sweeps: 40, lambda: 1e-4, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub dictionary: Dictionary,
    /// Penalized objective evaluated after each sweep.
    pub objective: Vec<f64>,
    /// Set when the training data cannot occupy the dictionary (constant or
    /// near-identical signals); the dictionary is still returned.
    pub degenerate: bool,
}

const RESIDUAL_TOL: f64 = 1e-9;
const DEAD_NORM: f64 = 1e-10;

/// Learns a dictionary of unit-norm atoms from (internally mean-removed)
/// signal columns. Deterministic given the seed.
pub fn ksvd_train(signals: &SignalMatrix, opts: &KsvdOptions) -> Result<TrainOutcome> {
    let n = signals.cols();
    if opts.atoms == 0 || opts.sparsity == 0 || opts.sweeps == 0 {
        return Err(Error::InvalidParameter("atoms, sparsity and sweeps must be positive".into()));
    }
    if opts.atoms > n {
        return Err(Error::InvalidParameter(format!(
            "{} atoms exceed {} training columns",
            opts.atoms, n
        )));
    }
    let hash = training_hash(signals.data());
    let kind = match signals.kind() {
        SignalKind::Pol => DictKind::Pol,
        SignalKind::Rgb => DictKind::Rgb,
        SignalKind::Mono => DictKind::Mono,
    };
    let rows = signals.rows();

    let mut yc = signals.data().clone();
    crate::omp::center_columns(&mut yc);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut atoms, short_init) = init_atoms(&yc, opts.atoms, &mut rng);

    // picks[j] = (support, coefficients) of column j under the current atoms
    let mut picks: Vec<(Vec<usize>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); n];
    let mut objective = Vec::with_capacity(opts.sweeps);
    let mut used_atoms = 0usize;

    for sweep in 0..opts.sweeps {
        // -- sparse coding stage --------------------------------------------
        let gram = atoms.tr_mul(&atoms);
        let candidates = encode_columns(&yc, &atoms, &gram, opts.sparsity, RESIDUAL_TOL);
        for (j, cand) in candidates.into_iter().enumerate() {
            if sweep == 0 {
                picks[j] = cand;
                continue;
            }
            let cand_score = column_score(&yc, &atoms, j, &cand, opts.lambda);
            let prev_score = column_score(&yc, &atoms, j, &picks[j], opts.lambda);
            if cand_score <= prev_score {
                picks[j] = cand;
            }
        }

        // residual R = Yc - D X, rebuilt once per sweep
        let mut residual = yc.clone();
        for (j, (support, coeffs)) in picks.iter().enumerate() {
            let mut col = residual.column_mut(j);
            for (&a, &x) in support.iter().zip(coeffs) {
                col.axpy(-x, &atoms.column(a), 1.0);
            }
        }

        // columns using each atom
        let mut users: Vec<Vec<usize>> = vec![Vec::new(); opts.atoms];
        for (j, (support, _)) in picks.iter().enumerate() {
            for &a in support {
                users[a].push(j);
            }
        }

        // -- atom update stage ----------------------------------------------
        for a in 0..opts.atoms {
            if users[a].is_empty() {
                continue;
            }
            let cols = &users[a];
            // E = R[:, cols] + d_a x_a^T : the error with atom a's
            // contribution restored.
            let mut err = DMatrix::zeros(rows, cols.len());
            let mut x_old = DVector::zeros(cols.len());
            for (i, &j) in cols.iter().enumerate() {
                let (support, coeffs) = &picks[j];
                let pos = support.iter().position(|&s| s == a).expect("indexed user");
                x_old[i] = coeffs[pos];
                let mut e_col = err.column_mut(i);
                e_col.copy_from(&residual.column(j));
                e_col.axpy(x_old[i], &atoms.column(a), 1.0);
            }

            let Some((d_new, x_new)) = dominant_pair(&err, &atoms.column(a).into_owned()) else {
                continue;
            };

            // old contribution = ||R[:,cols]||^2; new = ||E||^2 - ||x_new||^2
            // (exact for x_new = E^T d_new with unit d_new)
            let err2 = err.norm_squared();
            let old_score = cols.iter().map(|&j| residual.column(j).norm_squared()).sum::<f64>()
                + opts.lambda * x_old.iter().map(|v| v.abs()).sum::<f64>();
            let new_score = (err2 - x_new.norm_squared()).max(0.0)
                + opts.lambda * x_new.iter().map(|v| v.abs()).sum::<f64>();
            if new_score > old_score {
                continue;
            }

            atoms.set_column(a, &d_new);
            for (i, &j) in cols.iter().enumerate() {
                let (support, coeffs) = &mut picks[j];
                let pos = support.iter().position(|&s| s == a).expect("indexed user");
                coeffs[pos] = x_new[i];
                let mut r_col = residual.column_mut(j);
                r_col.copy_from(&err.column(i));
                r_col.axpy(-x_new[i], &d_new, 1.0);
            }
        }

        // -- dead-atom replacement ------------------------------------------
        let dead: Vec<usize> = (0..opts.atoms).filter(|&a| users[a].is_empty()).collect();
        used_atoms = opts.atoms - dead.len();
        if !dead.is_empty() {
            let mut by_residual: Vec<usize> = (0..n).collect();
            by_residual.sort_by(|&a, &b| {
                let (ra, rb) = (residual.column(a).norm_squared(), residual.column(b).norm_squared());
                rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
            });
            let mut next = by_residual.into_iter();
            for a in dead {
                for j in next.by_ref() {
                    let col = yc.column(j);
                    let norm = col.norm();
                    if norm > DEAD_NORM {
                        atoms.set_column(a, &(col / norm));
                        break;
                    }
                }
            }
        }

        let l1: f64 = picks.iter().flat_map(|(_, c)| c.iter()).map(|v| v.abs()).sum();
        objective.push(residual.norm_squared() + opts.lambda * l1);
    }

    let dictionary = Dictionary::new(
        kind,
        atoms,
        DictionaryMeta {
            training_hash: hash,
            seed: opts.seed,
            sweeps: opts.sweeps,
            lambda: opts.lambda,
            sparsity: opts.sparsity,
        },
    )?;
    Ok(TrainOutcome { dictionary, objective, degenerate: short_init || used_atoms <= 2 })
}

/// `||y_j - D x||^2 + lambda ||x||_1` for one column under the current atoms.
fn column_score(
    yc: &DMatrix<f64>,
    atoms: &DMatrix<f64>,
    j: usize,
    pick: &(Vec<usize>, Vec<f64>),
    lambda: f64,
) -> f64 {
    let mut r = yc.column(j).into_owned();
    for (&a, &x) in pick.0.iter().zip(&pick.1) {
        r.axpy(-x, &atoms.column(a), 1.0);
    }
    r.norm_squared() + lambda * pick.1.iter().map(|v| v.abs()).sum::<f64>()
}

/// Seeded initialization from distinct training columns, padded with random
/// unit vectors when the data cannot fill the dictionary.
fn init_atoms(yc: &DMatrix<f64>, natoms: usize, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, bool) {
    let rows = yc.nrows();
    let mut order: Vec<usize> = (0..yc.ncols()).collect();
    order.shuffle(rng);

    let mut atoms = DMatrix::zeros(rows, natoms);
    let mut filled = 0;
    for j in order {
        if filled == natoms {
            break;
        }
        let col = yc.column(j);
        let norm = col.norm();
        if norm > DEAD_NORM {
            atoms.set_column(filled, &(col / norm));
            filled += 1;
        }
    }
    let short = filled < natoms;
    while filled < natoms {
        let v = DVector::from_fn(rows, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > DEAD_NORM {
            atoms.set_column(filled, &(v / norm));
            filled += 1;
        }
    }
    (atoms, short)
}

/// Dominant singular pair of `err` by power iteration warm-started at the
/// previous atom; returns a unit `d` (largest-magnitude entry positive) and
/// `x = err^T d`. `None` when the restricted error has no energy.
fn dominant_pair(err: &DMatrix<f64>, start: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    if err.norm_squared() <= DEAD_NORM * DEAD_NORM {
        return None;
    }
    let mut d = start.clone();
    let mut first = err.tr_mul(&d);
    if first.norm() <= 1e-14 * err.norm() {
        // start direction orthogonal to the error: restart from its largest
        // column (deterministic)
        let (mut best, mut best_norm) = (0, 0.0);
        for (i, col) in err.column_iter().enumerate() {
            let n2 = col.norm_squared();
            if n2 > best_norm {
                best = i;
                best_norm = n2;
            }
        }
        d = err.column(best).into_owned().normalize();
        first = err.tr_mul(&d);
    }
    let mut u = first;
    for _ in 0..60 {
        let d_next = (err * &u).normalize();
        let cosine = d_next.dot(&d).abs();
        d = d_next;
        u = err.tr_mul(&d);
        if cosine > 1.0 - 1e-14 {
            break;
        }
    }
    // deterministic sign: largest-|.| entry of d made positive
    let mut lead = 0;
    for (i, v) in d.iter().enumerate() {
        if v.abs() > d[lead].abs() {
            lead = i;
        }
    }
    if d[lead] < 0.0 {
        d.neg_mut();
        u.neg_mut();
    }
    Some((d, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn signals(kind: SignalKind, data: DMatrix<f64>) -> SignalMatrix {
        SignalMatrix::new(kind, data).unwrap()
    }

    #[test]
    fn constant_signals_reach_zero_objective_with_warning() {
        let sm = signals(SignalKind::Mono, DMatrix::from_element(16, 64, 0.4));
        let out = ksvd_train(
            &sm,
            &KsvdOptions { atoms: 8, sparsity: 2, sweeps: 3, ..Default::default() },
        )
        .unwrap();
        assert!(out.degenerate);
        assert!(out.objective[0] <= 1e-12);
        assert_eq!(out.dictionary.atom_count(), 8);
    }

    #[test]
    fn identical_random_columns_collapse_to_one_atom() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let col = DVector::from_fn(16, |_, _| rng.random::<f64>());
        let data = DMatrix::from_fn(16, 40, |r, _| col[r]);
        let out = ksvd_train(
            &signals(SignalKind::Mono, data),
            &KsvdOptions { atoms: 6, sparsity: 2, sweeps: 4, lambda: 0.0, ..Default::default() },
        )
        .unwrap();
        assert!(out.degenerate);
        assert!(*out.objective.last().unwrap() <= 1e-18);
    }

    #[test]
    fn objective_trace_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let data = DMatrix::from_fn(16, 120, |_, _| rng.random::<f64>());
        let out = ksvd_train(
            &signals(SignalKind::Mono, data),
            &KsvdOptions { atoms: 20, sparsity: 3, sweeps: 8, lambda: 1e-4, seed: 5 },
        )
        .unwrap();
        assert_eq!(out.objective.len(), 8);
        for w in out.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-8), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn atoms_stay_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data = DMatrix::from_fn(16, 80, |_, _| rng.random::<f64>());
        let out = ksvd_train(
            &signals(SignalKind::Mono, data),
            &KsvdOptions { atoms: 12, sparsity: 3, sweeps: 5, ..Default::default() },
        )
        .unwrap();
        for col in out.dictionary.atoms().column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let data = DMatrix::from_fn(16, 60, |_, _| rng.random::<f64>());
        let sm = signals(SignalKind::Mono, data);
        let opts = KsvdOptions { atoms: 10, sparsity: 2, sweeps: 4, lambda: 1e-4, seed: 3 };
        let a = ksvd_train(&sm, &opts).unwrap();
        let b = ksvd_train(&sm, &opts).unwrap();
        assert_eq!(a.dictionary.atoms(), b.dictionary.atoms());
        assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn atoms_exceeding_columns_rejected() {
        let sm = signals(SignalKind::Mono, DMatrix::zeros(16, 4));
        assert!(ksvd_train(&sm, &KsvdOptions { atoms: 8, ..Default::default() }).is_err());
    }
}
