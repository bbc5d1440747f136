use admira::atoms::{merge, project, truncate_expansion};
use admira::baselines::{rank_one_pursuit, PursuitConfig, PursuitVariant};
use admira::harness::{degrees_of_freedom, derive_seed};
use admira::matcore::{dot, frobenius_norm, norm2, svd, svd_truncated, DenseMatrix};
use admira::{Atom, AtomExpansion, AtomSet, MeasurementOperator, Operator, OperatorKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DenseMatrix::from_row_major(rows, cols, data).unwrap()
}

fn random_atoms(rng: &mut ChaCha8Rng, rows: usize, cols: usize, t: usize) -> AtomSet {
    let atoms = (0..t)
        .map(|_| {
            let u = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
            let v = (0..cols).map(|_| rng.sample(StandardNormal)).collect();
            Atom::new(u, v).unwrap()
        })
        .collect();
    AtomSet::new_unchecked(atoms)
}

fn low_rank(rng: &mut ChaCha8Rng, rows: usize, cols: usize, r: usize) -> DenseMatrix {
    gaussian(rng, rows, r).matmul(&gaussian(rng, r, cols)).unwrap()
}

fn gram_defect(q: &DenseMatrix) -> f64 {
    let g = q.transpose().matmul(q).unwrap();
    g.sub(&DenseMatrix::identity(g.rows())).max_abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_with_orthonormal_factors(
        rows in 1usize..9, cols in 1usize..9, rank in 1usize..9, seed: u64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = low_rank(&mut rng, rows, cols, rank.min(rows).min(cols));
        let f = svd(&m).unwrap();
        let err = frobenius_norm(&m.sub(&f.reconstruct()));
        prop_assert!(err <= 1e-12 * frobenius_norm(&m).max(1.0));
        prop_assert!(gram_defect(&f.u) <= 1e-12);
        prop_assert!(gram_defect(&f.v) <= 1e-12);
        prop_assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(f.sigma.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn truncated_expansion_matches_dense_truncation(
        rows in 2usize..10, cols in 2usize..10, t in 1usize..7, r in 1usize..4, seed: u64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_atoms(&mut rng, rows, cols, t);
        let coeffs = (0..t).map(|_| rng.sample(StandardNormal)).collect();
        let exp = AtomExpansion::new(rows, cols, set, coeffs).unwrap();
        let dense = exp.assemble();
        let truncated = truncate_expansion(&exp, r).unwrap();
        prop_assert!(truncated.len() <= r);
        let fast = frobenius_norm(&dense.sub(&truncated.assemble()));
        let sigma = svd(&dense).unwrap().sigma;
        let tail = sigma.iter().skip(r).map(|s| s * s).sum::<f64>().sqrt();
        prop_assert!((fast - tail).abs() <= 1e-9 * sigma[0].max(1.0));
        let k = r.min(rows).min(cols);
        let slow = frobenius_norm(&dense.sub(&svd_truncated(&dense, k).unwrap().reconstruct()));
        prop_assert!((fast - slow).abs() <= 1e-9 * sigma[0].max(1.0));
    }

    #[test]
    fn merge_keeps_first_set_and_spans_both(
        rows in 2usize..7, cols in 2usize..7, ta in 0usize..4, tb in 0usize..4,
        repeat in 0usize..3, seed: u64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_atoms(&mut rng, rows, cols, ta);
        let mut b: Vec<Atom> = random_atoms(&mut rng, rows, cols, tb).atoms().to_vec();
        b.extend(a.atoms().iter().take(repeat).cloned());
        let b = AtomSet::new_unchecked(b);
        let merged = merge(&a, &b);
        prop_assert_eq!(&merged.atoms()[..a.len()], a.atoms());
        prop_assert!(merged.len() <= a.len() + b.len() - repeat.min(ta));
        for atom in a.iter().chain(b.iter()) {
            let m = atom.to_matrix();
            let p = project(&merged, &m).unwrap();
            prop_assert!(frobenius_norm(&m.sub(&p)) <= 1e-9);
        }
    }

    #[test]
    fn sampler_adjoint_pairing(
        rows in 1usize..12, cols in 1usize..12, frac in 0.05f64..1.0, seed: u64,
    ) {
        let p = ((rows * cols) as f64 * frac).ceil() as usize;
        let op = Operator::build(OperatorKind::EntrySampler, rows, cols, p, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
        let x = gaussian(&mut rng, rows, cols);
        let y: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let ax = op.apply(&x).unwrap();
        let lhs = dot(&ax, &y);
        let rhs = x.inner(&op.adjoint(&y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (norm2(&ax) * norm2(&y)).max(1e-300));
    }

    #[test]
    fn omp_residual_never_increases(
        n in 4usize..9, r in 1usize..3, extra in 0usize..20, atoms in 1usize..8, seed: u64,
    ) {
        let dr = degrees_of_freedom(n, n, r).unwrap();
        let p = (dr + extra).min(n * n);
        let op = Operator::build(OperatorKind::Gaussian, n, n, p, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 7));
        let b = op.apply(&low_rank(&mut rng, n, n, r)).unwrap();
        let res = rank_one_pursuit(&op, &b, &PursuitConfig::new(atoms, PursuitVariant::Omp))
            .unwrap();
        let mut prev = norm2(&b);
        for e in &res.trace {
            prop_assert!(e.residual_l2 <= prev * (1.0 + 1e-10));
            prev = e.residual_l2;
        }
    }

    #[test]
    fn degrees_of_freedom_is_symmetric(n in 1usize..200, m in 1usize..200, r in 1usize..50) {
        let r = r.min(n).min(m);
        let d = degrees_of_freedom(n, m, r).unwrap();
        prop_assert_eq!(d, degrees_of_freedom(m, n, r).unwrap());
        prop_assert!(d <= n * m);
        prop_assert_eq!(d, r * (n + m - r));
    }
}
