//! Lifted operator families.
//!
//! Level `c` of the hierarchy acts on `⊗^c x` through
//! `𝓐_{c,i} = Σ_j I_{n^j} ⊗ A_i ⊗ I_{n^{c-1-j}}`; restricted to the
//! monomial coordinates `y_c(x)` it becomes `B_{c,i} = W⁺ 𝓐_{c,i} W`.
//! [`reduce`] builds `B_{c,i}` by differentiating monomials directly, which
//! never touches the `n^c`-sized space; [`reduce_via_kronecker`] keeps the
//! literal product as a cross-check for small `n^c`.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::system::SwitchedSystem;
use crate::tensor_lift::{enumerate_basis, kron, kron_len, MonomialBasis, MonomialOrder};

/// Row/column cap for dense `n^c × n^c` operators.
pub const DENSE_LIFT_CAP: usize = 1 << 12;

/// `I_n ⊗ A + A ⊗ I_n`, the vectorised generator of `Ẋ = AX + XAᵀ`.
pub fn meta_operator(a: &DMatrix<f64>) -> DMatrix<f64> {
    let id = DMatrix::identity(a.nrows(), a.nrows());
    kron(&id, a) + kron(a, &id)
}

/// Dense `𝓐_c` for a single mode.
pub fn lifted_operator(a: &DMatrix<f64>, c: usize) -> Result<DMatrix<f64>> {
    if c == 0 {
        return Err(Error::InvalidArgument("level must be at least 1".into()));
    }
    let n = a.nrows();
    let dim = kron_len(n, c, DENSE_LIFT_CAP, "dense lifted operator")?;
    let mut out = DMatrix::zeros(dim, dim);
    let mut digits = vec![0usize; c];
    for r in 0..dim {
        let mut rem = r;
        for j in (0..c).rev() {
            digits[j] = rem % n;
            rem /= n;
        }
        // factor j carries weight n^{c-1-j}
        let mut weight = 1usize;
        for j in (0..c).rev() {
            let d = digits[j];
            let base = r - d * weight;
            for l in 0..n {
                out[(r, base + l * weight)] += a[(d, l)];
            }
            weight *= n;
        }
    }
    Ok(out)
}

/// The reduced operators `B_{c,1}, …, B_{c,N}` of one system at one level.
#[derive(Debug, Clone)]
pub struct LiftedOperators {
    pub c: usize,
    pub basis: MonomialBasis,
    pub reduced: Vec<DMatrix<f64>>,
    pub system_hash: String,
}

impl LiftedOperators {
    /// `M(n, c)`.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

/// `B_{c,i}` for a single mode: row `j` holds the coefficients of
/// `d/dt y_j` along `ẋ = A x`.
pub fn reduced_operator(a: &DMatrix<f64>, basis: &MonomialBasis) -> DMatrix<f64> {
    let n = basis.n();
    let m = basis.len();
    let mut b = DMatrix::zeros(m, m);
    let mut shifted = vec![0u32; n];
    for (row, e) in basis.ordering().iter().enumerate() {
        let e = e.exponents();
        for k in 0..n {
            if e[k] == 0 {
                continue;
            }
            let factor = e[k] as f64;
            for l in 0..n {
                let alk = a[(k, l)];
                if alk == 0.0 {
                    continue;
                }
                shifted.copy_from_slice(e);
                shifted[k] -= 1;
                shifted[l] += 1;
                let col = basis.index_of(&shifted).expect("degree preserved");
                b[(row, col)] += factor * alk;
            }
        }
    }
    b
}

/// Reduced operators for every mode, using the default monomial order.
pub fn reduce(system: &SwitchedSystem, c: usize) -> Result<LiftedOperators> {
    reduce_with_order(system, c, MonomialOrder::default())
}

pub fn reduce_with_order(system: &SwitchedSystem, c: usize, order: MonomialOrder) -> Result<LiftedOperators> {
    let basis = enumerate_basis(system.n(), c, order)?;
    Ok(reduce_with_basis(system, basis))
}

pub fn reduce_with_basis(system: &SwitchedSystem, basis: MonomialBasis) -> LiftedOperators {
    let reduced = system.modes().iter().map(|a| reduced_operator(a, &basis)).collect();
    LiftedOperators {
        c: basis.c(),
        basis,
        reduced,
        system_hash: system.digest(),
    }
}

/// `W⁺ 𝓐_{c,i} W` formed literally; limited to `n^c ≤ DENSE_LIFT_CAP`.
pub fn reduce_via_kronecker(system: &SwitchedSystem, c: usize, order: MonomialOrder) -> Result<LiftedOperators> {
    let basis = enumerate_basis(system.n(), c, order)?;
    let w = basis.w_dense();
    let wp = basis.w_plus_dense();
    let reduced = system
        .modes()
        .iter()
        .map(|a| lifted_operator(a, c).map(|big| &wp * big * &w))
        .collect::<Result<Vec<_>>>()?;
    Ok(LiftedOperators {
        c,
        basis,
        reduced,
        system_hash: system.digest(),
    })
}

/// Analytic Jacobian of `x ↦ y_c(x)`, shape `M × n`.
pub fn monomial_jacobian(basis: &MonomialBasis, x: &[f64]) -> DMatrix<f64> {
    let n = basis.n();
    let mut jac = DMatrix::zeros(basis.len(), n);
    for (row, e) in basis.ordering().iter().enumerate() {
        let e = e.exponents();
        for k in 0..n {
            if e[k] == 0 {
                continue;
            }
            let mut v = e[k] as f64;
            for (l, &el) in e.iter().enumerate() {
                let p = if l == k { el - 1 } else { el };
                v *= x[l].powi(p as i32);
            }
            jac[(row, k)] = v;
        }
    }
    jac
}

/// `‖J_y(x) A_i x − B_{c,i} y_c(x)‖ / ‖y_c(x)‖`.
pub fn chain_rule_residual(ops: &LiftedOperators, system: &SwitchedSystem, x: &[f64], i: usize) -> Result<f64> {
    if x.len() != system.n() || ops.basis.n() != system.n() {
        return Err(Error::Dimension(format!(
            "point has length {}, system n = {}, basis n = {}",
            x.len(),
            system.n(),
            ops.basis.n()
        )));
    }
    if i >= system.num_modes() || i >= ops.reduced.len() {
        return Err(Error::InvalidArgument(format!("mode index {i} out of range")));
    }
    let xv = DVector::from_column_slice(x);
    let xdot = system.mode(i) * &xv;
    let y = ops.basis.eval(x);
    let lhs = monomial_jacobian(&ops.basis, x) * xdot;
    let rhs = &ops.reduced[i] * &y;
    Ok((lhs - rhs).norm() / y.norm())
}

/// All sums of `c` eigenvalues of `a`, with repetition.
pub fn eigenvalue_sums(a: &DMatrix<f64>, c: usize) -> Vec<Complex<f64>> {
    let ev = crate::linalg::eigenvalues(a);
    let mut sums = vec![Complex::new(0.0, 0.0)];
    for _ in 0..c {
        let mut next = Vec::with_capacity(sums.len() * ev.len());
        for s in &sums {
            for e in &ev {
                next.push(s + e);
            }
        }
        sums = next;
    }
    sums
}

/// Largest distance from an eigenvalue of `m` to the nearest element of
/// `candidates`.
pub fn spectrum_mismatch(m: &DMatrix<f64>, candidates: &[Complex<f64>]) -> f64 {
    crate::linalg::eigenvalues(m)
        .iter()
        .map(|z| candidates.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a1() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, -0.5, -0.5])
    }

    #[test]
    fn meta_operator_examples() {
        assert_eq!(meta_operator(&DMatrix::zeros(3, 3)), DMatrix::zeros(9, 9));
        assert_eq!(meta_operator(&DMatrix::identity(3, 3)), DMatrix::identity(9, 9) * 2.0);
        #[rustfmt::skip]
        let want = DMatrix::from_row_slice(4, 4, &[
            -1.0,  0.5,  0.5,  0.0,
            -0.5, -1.0,  0.0,  0.5,
            -0.5,  0.0, -1.0,  0.5,
             0.0, -0.5, -0.5, -1.0,
        ]);
        assert_eq!(meta_operator(&a1()), want);
    }

    #[test]
    fn lifted_operator_low_levels() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, -4.0, 5.0, 0.5, 0.0, -1.0, 2.0]);
        assert_eq!(lifted_operator(&a, 1).unwrap(), a);
        assert_eq!(lifted_operator(&a, 2).unwrap(), meta_operator(&a));
        let id = DMatrix::identity(3, 3);
        let three = kron(&kron(&a, &id), &id) + kron(&kron(&id, &a), &id) + kron(&kron(&id, &id), &a);
        assert!((lifted_operator(&a, 3).unwrap() - three).amax() < 1e-15);
    }

    #[test]
    fn lifted_spectrum_of_rotation_decay() {
        let big = lifted_operator(&a1(), 2).unwrap();
        let want = [
            Complex::new(-1.0, 1.0),
            Complex::new(-1.0, -1.0),
            Complex::new(-1.0, 0.0),
            Complex::new(-1.0, 0.0),
        ];
        assert!(spectrum_mismatch(&big, &want) < 1e-8);
    }

    #[test]
    fn level_one_reduction_is_identity_map() {
        let sys = SwitchedSystem::two_mode_example();
        let ops = reduce(&sys, 1).unwrap();
        assert_eq!(ops.reduced[0], *sys.mode(0));
        assert_eq!(ops.reduced[1], *sys.mode(1));
    }

    #[test]
    fn quadratic_reduction_matches_hand_derivation() {
        // d/dt (x1², x1x2, x2²) along ẋ = A1 x, read off by hand
        #[rustfmt::skip]
        let want = DMatrix::from_row_slice(3, 3, &[
            -1.0,  1.0,  0.0,
            -0.5, -1.0,  0.5,
             0.0, -1.0, -1.0,
        ]);
        let sys = SwitchedSystem::new(vec![a1()]).unwrap();
        let ops = reduce(&sys, 2).unwrap();
        assert!((&ops.reduced[0] - &want).amax() < 1e-12);
        let lit = reduce_via_kronecker(&sys, 2, MonomialOrder::default()).unwrap();
        assert!((&lit.reduced[0] - &want).amax() < 1e-12);
    }

    #[test]
    fn range_of_w_is_invariant() {
        let sys = SwitchedSystem::two_mode_example();
        for c in 1..=6 {
            let basis = enumerate_basis(2, c, MonomialOrder::default()).unwrap();
            let w = basis.w_dense();
            let proj = DMatrix::identity(w.nrows(), w.nrows()) - &w * basis.w_plus_dense();
            for a in sys.modes() {
                let big = lifted_operator(a, c).unwrap();
                assert!((&proj * &big * &w).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn residual_examples() {
        let sys = SwitchedSystem::two_mode_example();
        let ops1 = reduce(&sys, 1).unwrap();
        assert_eq!(chain_rule_residual(&ops1, &sys, &[0.3, -0.7], 1).unwrap(), 0.0);
        let ops2 = reduce(&sys, 2).unwrap();
        assert!(chain_rule_residual(&ops2, &sys, &[1.0, 0.0], 0).unwrap() <= 1e-12);
        assert!(chain_rule_residual(&ops2, &sys, &[1.0, 0.0], 5).is_err());
    }

    #[test]
    fn dense_cap() {
        assert!(matches!(lifted_operator(&a1(), 13), Err(Error::SizeLimit { .. })));
    }
}
