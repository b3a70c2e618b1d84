use metalyap::hierarchy::{chain_rule_residual, reduce_via_kronecker, reduce_with_order};
use metalyap::tensor_lift::{enumerate_basis, kron_power, MonomialOrder};
use metalyap::{certify, Certificate, CertifyOptions, Objective, SwitchedSystem};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=4, 1usize..=4)
}

fn order() -> impl Strategy<Value = MonomialOrder> {
    prop_oneof![Just(MonomialOrder::GradedRevLex), Just(MonomialOrder::Lex)]
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selection_rebuilds_kronecker_power(((n, c), x, ord) in dims().prop_flat_map(|(n, c)| (Just((n, c)), point(n), order()))) {
        let basis = enumerate_basis(n, c, ord).unwrap();
        let y = basis.eval(&x);
        let full = kron_power(&x, c).unwrap();
        prop_assert!(rel_err(&basis.apply_w(&y), &full) <= 1e-12);
        prop_assert!(rel_err(&basis.apply_w_plus(&full), &y) <= 1e-12);
    }

    #[test]
    fn pseudoinverse_is_left_inverse((n, c) in dims(), ord in order()) {
        let basis = enumerate_basis(n, c, ord).unwrap();
        let prod = basis.w_plus_dense() * basis.w_dense();
        prop_assert!((prod - DMatrix::identity(basis.len(), basis.len())).amax() <= 1e-14);
    }

    #[test]
    fn monomials_are_homogeneous(((n, c), x) in dims().prop_flat_map(|(n, c)| (Just((n, c)), point(n))), t in -3.0f64..3.0) {
        let basis = enumerate_basis(n, c, MonomialOrder::default()).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| t * v).collect();
        let want = basis.eval(&x) * t.powi(c as i32);
        let got = basis.eval(&scaled);
        prop_assert!((got - &want).amax() <= 1e-12 * want.amax().max(1.0));
    }

    #[test]
    fn reduced_operator_matches_kronecker_sum(
        entries in prop::collection::vec(-1.0f64..1.0, 9),
        c in 1usize..=4,
    ) {
        let sys = SwitchedSystem::new(vec![DMatrix::from_row_slice(3, 3, &entries)]).unwrap();
        let fast = reduce_with_order(&sys, c, MonomialOrder::default()).unwrap();
        let slow = reduce_via_kronecker(&sys, c, MonomialOrder::default()).unwrap();
        prop_assert!((&fast.reduced[0] - &slow.reduced[0]).amax() <= 1e-12);
    }

    #[test]
    fn reduced_operator_satisfies_chain_rule(
        entries in prop::collection::vec(-1.0f64..1.0, 4),
        x in point(2),
        c in 1usize..=6,
    ) {
        let sys = SwitchedSystem::new(vec![DMatrix::from_row_slice(2, 2, &entries)]).unwrap();
        let ops = reduce_with_order(&sys, c, MonomialOrder::default()).unwrap();
        prop_assert!(chain_rule_residual(&ops, &sys, &x, 0).unwrap() <= 1e-10);
    }

    #[test]
    fn induced_map_commutes_with_evaluation(
        entries in prop::collection::vec(-1.5f64..1.5, 4),
        x in point(2),
        c in 1usize..=5,
    ) {
        let basis = enumerate_basis(2, c, MonomialOrder::default()).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &entries);
        let mx = &m * DVector::from_column_slice(&x);
        let want = basis.eval(mx.as_slice());
        let got = basis.induced_map(&m).unwrap() * basis.eval(&x);
        prop_assert!((got - &want).amax() <= 1e-11 * want.amax().max(1.0));
    }
}

fn certificate(c: usize) -> (SwitchedSystem, Certificate) {
    let sys = SwitchedSystem::two_mode_example();
    let cert = certify(&sys, c, Objective::X1, &CertifyOptions::default()).unwrap().into_certificate().unwrap();
    (sys, cert)
}

#[test]
fn certificate_json_round_trip_is_exact() {
    let (sys, cert) = certificate(4);
    let back = Certificate::from_json(&cert.to_json()).unwrap();
    assert_eq!(back.p, cert.p);
    assert_eq!(back.ordering(), cert.ordering());
    assert_eq!(back.margins, cert.margins);
    assert_eq!(back.system_hash, cert.system_hash);
    assert_eq!(back.to_json(), cert.to_json());
    assert!(back.validate(&sys).unwrap().passed);
}

#[test]
fn lyapunov_function_scales_with_degree() {
    let (_, cert) = certificate(3);
    for &(x, t) in &[([0.3, -0.7], 2.0), ([1.1, 0.4], 0.5), ([-0.2, 0.9], -1.5)] {
        let v = cert.eval_v(&x).unwrap();
        let scaled = cert.eval_v(&[t * x[0], t * x[1]]).unwrap();
        assert!((scaled - t.powi(6) * v).abs() <= 1e-12 * scaled.abs());
    }
}

#[test]
fn derivative_matches_finite_difference() {
    let (sys, cert) = certificate(3);
    let h = 1e-6;
    for &x in &[[0.6, -0.2], [-0.4, 0.9]] {
        for i in 0..sys.num_modes() {
            let dx = sys.mode(i) * DVector::from_column_slice(&x);
            let ahead = cert.eval_v(&[x[0] + h * dx[0], x[1] + h * dx[1]]).unwrap();
            let behind = cert.eval_v(&[x[0] - h * dx[0], x[1] - h * dx[1]]).unwrap();
            let fd = (ahead - behind) / (2.0 * h);
            let exact = cert.eval_vdot(&sys, &x, i).unwrap();
            assert!(exact < 0.0);
            assert!((fd - exact).abs() <= 1e-6 * exact.abs(), "mode {i}: {fd} vs {exact}");
        }
    }
}
