use basil_core::ebayes::{rho_hat, tau_hats};
use basil_core::genesets::{align_genes, filter_gene_sets, AlignPolicy, GeneSetMatrix};
use basil_core::matrixcore::{
    orthonormal_basis, orthonormality_defect, project_onto, standardize_columns, truncated_svd, DataMatrix,
};
use basil_core::posterior::{fit, FitConfig, KChoice, LowRankCovariance};
use basil_core::selection::select_k;
use basil_core::simbench::{generate_random_genesets, generate_synthetic, relative_frobenius_error, SimulationDesign};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-10.0f64..10.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn sized_matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (2..=max_rows, 2..=max_cols).prop_flat_map(|(r, c)| matrix(r, c))
}

fn binary(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(prop::bool::weighted(0.3), rows * cols)
        .prop_map(move |v| DMatrix::from_iterator(rows, cols, v.into_iter().map(|b| if b { 1.0 } else { 0.0 })))
}

// Principal-angle distance between two orthonormal bases: 1 − smallest cosine.
fn subspace_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let s = a.tr_mul(b).singular_values();
    1.0 - s.iter().cloned().fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn residual_non_increasing_in_k(a in sized_matrix(12, 30)) {
        let m = a.nrows().min(a.ncols());
        let mut last = f64::INFINITY;
        for k in 1..=m {
            let svd = truncated_svd(&a, k).unwrap();
            let r = (&a - svd.reconstruct()).norm_squared();
            prop_assert!(r <= last + 1e-9 * a.norm_squared());
            last = r;
        }
    }

    #[test]
    fn gram_svd_matches_dense(a in sized_matrix(20, 40)) {
        let m = a.nrows().min(a.ncols());
        let dense = a.clone().svd(true, true);
        let mut sv: Vec<f64> = dense.singular_values.iter().cloned().collect();
        sv.sort_by(|x, y| y.total_cmp(x));
        let k = (m / 2).max(1);
        let svd = truncated_svd(&a, k).unwrap();
        for l in 0..k {
            prop_assert!((svd.singular_values[l] - sv[l]).abs() <= 1e-8 * sv[0]);
        }
        prop_assert!(orthonormality_defect(&svd.left) < 1e-8);
        prop_assert!(orthonormality_defect(&svd.right) < 1e-8);
        // Compare subspaces only when the k-th gap is well separated.
        if sv[k - 1] - sv.get(k).copied().unwrap_or(0.0) > 1e-3 * sv[0] {
            let mut order: Vec<usize> = (0..dense.singular_values.len()).collect();
            order.sort_by(|&x, &y| dense.singular_values[y].total_cmp(&dense.singular_values[x]));
            let u = dense.u.unwrap().select_columns(&order[..k]);
            prop_assert!(subspace_gap(&svd.left, &u) < 1e-6);
        }
    }

    #[test]
    fn projection_decomposition(c in binary(15, 4), a in matrix(15, 3)) {
        if let Ok(b) = orthonormal_basis(&c) {
            let sum = project_onto(&b, &a, false).unwrap() + project_onto(&b, &a, true).unwrap();
            prop_assert!((sum - &a).amax() <= 1e-12 * a.amax().max(1.0));
        }
    }

    #[test]
    fn standardization_idempotent(a in sized_matrix(10, 6)) {
        let y = DataMatrix::with_default_ids(a).unwrap();
        if let Ok(once) = standardize_columns(&y) {
            let twice = standardize_columns(&once).unwrap();
            prop_assert!((once.values() - twice.values()).amax() < 1e-10);
        }
    }

    #[test]
    fn filter_idempotent(c in binary(30, 6), min_genes in 1usize..12, drop in any::<bool>()) {
        let ids = (0..30).map(|j| format!("g{j}")).collect();
        let sets = (0..6).map(|j| format!("s{j}")).collect();
        let c = GeneSetMatrix::new(c, ids, sets).unwrap();
        if let Ok((once, _)) = filter_gene_sets(&c, min_genes, drop) {
            let (twice, report) = filter_gene_sets(&once, min_genes, drop).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(report.removed_sets.is_empty() && report.removed_genes.is_empty());
        }
    }

    #[test]
    fn alignment_invariant_to_permutation(perm in Just((0..8).collect::<Vec<usize>>()).prop_shuffle()) {
        let genes: Vec<String> = (0..8).map(|j| format!("g{j}")).collect();
        let values = DMatrix::from_fn(3, 8, |i, j| (i * 8 + j) as f64);
        let y = DataMatrix::new(values.clone(), genes.clone()).unwrap();
        let membership = DMatrix::from_fn(8, 2, |j, l| ((j + l) % 2) as f64);
        let c = GeneSetMatrix::new(membership.clone(), genes.clone(), vec!["a".into(), "b".into()]).unwrap();
        let base = align_genes(&y, &c, AlignPolicy::Intersect).unwrap();

        let y_perm = DataMatrix::new(values.select_columns(&perm), perm.iter().map(|&j| genes[j].clone()).collect()).unwrap();
        let c_perm = GeneSetMatrix::new(
            membership.select_rows(&perm),
            perm.iter().map(|&j| genes[j].clone()).collect(),
            vec!["a".into(), "b".into()],
        ).unwrap();
        let permuted = align_genes(&y_perm, &c_perm, AlignPolicy::Intersect).unwrap();
        prop_assert_eq!(base.data.gene_ids(), permuted.data.gene_ids());
        prop_assert_eq!(base.data.gene_ids(), base.gene_sets.gene_ids());
        prop_assert_eq!(base.data.values(), permuted.data.values());
        prop_assert_eq!(base.gene_sets.membership(), permuted.gene_sets.membership());
    }

    #[test]
    fn jic_decomposes(a in matrix(12, 25)) {
        let y = DataMatrix::with_default_ids(a).unwrap();
        let profile = select_k(&y, Some(8)).unwrap();
        for i in 0..profile.k_values.len() {
            let resum = -2.0 * profile.loglik_hat[i] + profile.penalty[i];
            prop_assert!((resum - profile.jic[i]).abs() <= 1e-9 * profile.jic[i].abs().max(1.0));
        }
        let best = profile.jic.iter().cloned().fold(f64::INFINITY, f64::min);
        let first = profile.jic.iter().position(|v| *v == best).unwrap();
        prop_assert_eq!(profile.k_selected, profile.k_values[first]);
    }

    #[test]
    fn rho_at_least_one(lam in sized_matrix(25, 4), s2 in 0.01f64..10.0, budget in 1usize..400, seed in any::<u64>()) {
        let est = rho_hat(&lam, s2, budget, seed).unwrap();
        prop_assert!(est.rho >= 1.0);
    }

    #[test]
    fn tau_pythagoras(a in matrix(14, 30), c in binary(30, 5), s2 in 0.1f64..5.0) {
        let svd = truncated_svd(&a, 3).unwrap();
        if let Ok(basis) = orthonormal_basis(&c) {
            let r = basis.dim_subspace();
            if r > 0 {
                let t = tau_hats(&svd, &basis, s2, 3).unwrap();
                let lhs = t.tau_gamma_sq * (3 * r) as f64 * s2 + t.tau_psi_sq * (3 * (30 - r)) as f64 * s2;
                let rhs = svd.scaled_right().norm_squared() / 14.0;
                prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs);
            }
        }
    }

    #[test]
    fn relative_error_rotation_invariant(a in matrix(20, 3), b in matrix(20, 3), r in matrix(3, 3)) {
        let q = r.qr().q();
        if b.norm() > 1e-3 {
            let base = relative_frobenius_error(&a, &b).unwrap();
            prop_assert!((relative_frobenius_error(&(&a * &q), &b).unwrap() - base).abs() < 1e-10 * base.max(1.0));
            prop_assert!((relative_frobenius_error(&a, &(&b * &q)).unwrap() - base).abs() < 1e-10 * base.max(1.0));
        }
    }

    #[test]
    fn woodbury_matches_dense(l in sized_matrix(40, 6), delta in 0.05f64..5.0, y in matrix(40, 2)) {
        let y = y.rows(0, l.nrows()).into_owned();
        let cov = LowRankCovariance::new(l, delta).unwrap();
        let chol = cov.to_dense().cholesky().unwrap();
        let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        prop_assert!((cov.log_det() - logdet).abs() < 1e-8 * logdet.abs().max(1.0));
        let quads = cov.row_quad_forms(&y.transpose()).unwrap();
        for (i, q) in quads.iter().enumerate() {
            let v = y.column(i).into_owned();
            let dense = v.dot(&chol.solve(&v));
            prop_assert!((q - dense).abs() < 1e-8 * dense.max(1.0));
        }
    }

    #[test]
    fn planted_residual_orthogonal(seed in any::<u64>()) {
        let design = SimulationDesign { n: 20, p: 50, k: 2, q: 5, density: 0.2, min_genes: 3, ..SimulationDesign::high_signal() };
        let c = generate_random_genesets(50, 5, 0.2, 3, seed).unwrap();
        let (_, truth) = generate_synthetic(&design, &c, seed).unwrap();
        prop_assert!(c.membership().tr_mul(&truth.psi0).amax() < 1e-10);
    }

    #[test]
    fn fit_identities(seed in any::<u64>(), k in 1usize..4) {
        let design = SimulationDesign { n: 30, p: 60, k: 3, q: 6, density: 0.15, min_genes: 3, ..SimulationDesign::high_signal() };
        let c = generate_random_genesets(60, 6, 0.15, 3, seed).unwrap();
        let (y, _) = generate_synthetic(&design, &c, seed).unwrap();
        let f = fit(&y, &c, &FitConfig { k: KChoice::Fixed(k), ..FitConfig::default() }).unwrap();
        let d = f.diagnostics;
        prop_assert!(d.max_abs_ct_psi < 1e-8);
        prop_assert!(d.projection_identity < 1e-12);
        prop_assert!(d.left_orthonormality < 1e-8 && d.right_orthonormality < 1e-8);
        prop_assert!(d.sigma_term_c >= 0.0 && d.sigma_term_n >= 0.0);
        prop_assert!(f.hyper.rho >= 1.0);
        prop_assert!(f.sigma_n_sq > 0.0);
        prop_assert_eq!(f.v_n, 1.0 + 30.0 * 60.0);
        if f.r == f.q {
            prop_assert!(d.max_abs_decomposition < 1e-8);
        }
        let bt_psi = f.basis.basis().tr_mul(&f.psi_bar);
        prop_assert!(bt_psi.amax() < 1e-8);
    }
}

#[test]
fn noiseless_factors_span_recovered() {
    // Y = M₀Λ₀ᵀ with orthogonal factor columns: span(M̂) = span(M₀).
    let (n, p, k) = (12, 30, 3);
    let raw = DMatrix::from_fn(n, k, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
    let m0 = raw.qr().q() * (n as f64).sqrt();
    let lam = DMatrix::from_fn(p, k, |i, j| ((i * 5 + j * 13) % 17) as f64 / 4.0 - 2.0);
    let y = &m0 * lam.transpose();
    let svd = truncated_svd(&y, k).unwrap();
    let m_hat = basil_core::matrixcore::pca_factor_estimate(&svd, n).unwrap();
    let gap = subspace_gap(&(m_hat / (n as f64).sqrt()), &(m0 / (n as f64).sqrt()));
    assert!(gap < 1e-6, "{gap}");
}
