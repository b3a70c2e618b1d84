//! Kronecker algebra and the monomial lift `⊗^c x = W_c y_c(x)`.
//!
//! `W_c` is a selection matrix: every Kronecker coordinate of `⊗^c x` is a
//! single degree-`c` monomial, so the basis stores one column index per row
//! instead of a dense 0/1 matrix. Its pseudoinverse is
//! `diag(1 / column counts) · Wᵀ`, applied as a counting scatter.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of Kronecker coordinates (`n^c`) that will be
/// materialised unless a caller raises the cap.
pub const DEFAULT_SIZE_CAP: usize = 1 << 24;

/// `n^c` as an exact integer, or a size-limit error if it exceeds `cap`.
pub fn kron_len(n: usize, c: usize, cap: usize, what: &'static str) -> Result<usize> {
    let requested = (n as u128).checked_pow(c as u32).unwrap_or(u128::MAX);
    if requested > cap as u128 {
        return Err(Error::SizeLimit { what, requested, cap });
    }
    Ok(requested as usize)
}

/// Standard Kronecker product.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// `⊗^c x`, built as `x ⊗ (⊗^{c-1} x)`.
pub fn kron_power(x: &[f64], c: usize) -> Result<DVector<f64>> {
    kron_power_capped(x, c, DEFAULT_SIZE_CAP)
}

pub fn kron_power_capped(x: &[f64], c: usize, cap: usize) -> Result<DVector<f64>> {
    if c == 0 {
        return Err(Error::InvalidArgument("Kronecker power order must be at least 1".into()));
    }
    kron_len(x.len(), c, cap, "Kronecker power")?;
    let mut v = x.to_vec();
    for _ in 1..c {
        let mut next = Vec::with_capacity(v.len() * x.len());
        for &xi in x {
            next.extend(v.iter().map(|&vj| xi * vj));
        }
        v = next;
    }
    Ok(DVector::from_vec(v))
}

/// `binomial(n, k)` in exact integer arithmetic.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of degree-`c` monomials in `n` variables.
pub fn monomial_count(n: usize, c: usize) -> usize {
    binomial((c + n - 1) as u64, (n - 1) as u64) as usize
}

/// Exponents of one monomial `x_1^{e_1} ⋯ x_n^{e_n}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExponentVector(pub Vec<u32>);

impl ExponentVector {
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    /// `c! / (e_1! ⋯ e_n!)`: how many Kronecker coordinates equal this
    /// monomial.
    pub fn multinomial(&self) -> u128 {
        let mut remaining = self.degree() as u64;
        let mut acc = 1u128;
        for &e in &self.0 {
            acc *= binomial(remaining, e as u64);
            remaining -= e as u64;
        }
        acc
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&e, &xi)| xi.powi(e as i32)).product()
    }
}

impl fmt::Display for ExponentVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, &e) in self.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", k + 1)?;
            } else {
                write!(f, "x{}^{e}", k + 1)?;
            }
        }
        if first {
            write!(f, "1")?;
        }
        Ok(())
    }
}

/// How the entries of `y_c(x)` are ordered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonomialOrder {
    /// Graded reverse-lexicographic, largest first. For `n = 2` this is
    /// `x_1^c, x_1^{c-1} x_2, …, x_2^c`.
    #[default]
    GradedRevLex,
    /// Lexicographic, largest first.
    Lex,
}

impl MonomialOrder {
    /// `Greater` when `a` ranks above `b` (equal degrees assumed).
    fn compare(self, a: &[u32], b: &[u32]) -> Ordering {
        match self {
            MonomialOrder::Lex => a.cmp(b),
            // a > b when the last non-zero entry of a - b is negative
            MonomialOrder::GradedRevLex => {
                for k in (0..a.len()).rev() {
                    match b[k].cmp(&a[k]) {
                        Ordering::Equal => continue,
                        other => return other,
                    }
                }
                Ordering::Equal
            }
        }
    }
}

/// All exponent vectors of total degree `c` in `n` variables (unordered).
fn compositions(n: usize, c: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e);
            rec(n, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, c, &mut Vec::with_capacity(n), &mut out);
    out
}

/// The ordered degree-`c` monomials together with the selection matrix
/// `W_c` and its pseudoinverse.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    n: usize,
    c: usize,
    order: MonomialOrder,
    ordering: Vec<ExponentVector>,
    index: HashMap<Vec<u32>, usize>,
    /// Row `r` of `W` has its single 1 in column `selection[r]`.
    selection: Vec<usize>,
    counts: Vec<usize>,
}

/// Builds the degree-`c` basis in `n` variables under the default size cap.
pub fn enumerate_basis(n: usize, c: usize, order: MonomialOrder) -> Result<MonomialBasis> {
    MonomialBasis::with_cap(n, c, order, DEFAULT_SIZE_CAP)
}

impl MonomialBasis {
    pub fn with_cap(n: usize, c: usize, order: MonomialOrder, cap: usize) -> Result<Self> {
        if n == 0 || c == 0 {
            return Err(Error::InvalidArgument(format!("basis needs n >= 1 and c >= 1, got n = {n}, c = {c}")));
        }
        let rows = kron_len(n, c, cap, "monomial lift W")?;
        let mut exps = compositions(n, c as u32);
        exps.sort_by(|a, b| order.compare(b, a));
        let index: HashMap<Vec<u32>, usize> = exps.iter().enumerate().map(|(j, e)| (e.clone(), j)).collect();

        let mut selection = Vec::with_capacity(rows);
        let mut counts = vec![0usize; exps.len()];
        let mut buf = vec![0u32; n];
        for r in 0..rows {
            buf.iter_mut().for_each(|b| *b = 0);
            let mut rem = r;
            for _ in 0..c {
                buf[rem % n] += 1;
                rem /= n;
            }
            let col = index[&buf[..]];
            selection.push(col);
            counts[col] += 1;
        }
        Ok(Self {
            n,
            c,
            order,
            ordering: exps.into_iter().map(ExponentVector).collect(),
            index,
            selection,
            counts,
        })
    }

    /// Rebuilds a basis from a stored ordering (e.g. from a certificate),
    /// checking that it is a permutation of the degree-`c` monomials.
    pub fn from_ordering(n: usize, ordering: Vec<ExponentVector>) -> Result<Self> {
        let c = ordering
            .first()
            .map(|e| e.degree() as usize)
            .ok_or_else(|| Error::InvalidArgument("empty monomial ordering".into()))?;
        let reference = enumerate_basis(n, c, MonomialOrder::default())?;
        if ordering.len() != reference.len()
            || ordering.iter().any(|e| e.0.len() != n || e.degree() as usize != c || !reference.index.contains_key(&e.0))
        {
            return Err(Error::InvalidArgument(format!("ordering is not a permutation of the degree-{c} monomials in {n} variables")));
        }
        let index: HashMap<Vec<u32>, usize> = ordering.iter().enumerate().map(|(j, e)| (e.0.clone(), j)).collect();
        if index.len() != ordering.len() {
            return Err(Error::InvalidArgument("ordering contains duplicates".into()));
        }
        let perm: Vec<usize> = reference.ordering.iter().map(|e| index[&e.0]).collect();
        let selection = reference.selection.iter().map(|&j| perm[j]).collect();
        let mut counts = vec![0; ordering.len()];
        for (j, &cnt) in reference.counts.iter().enumerate() {
            counts[perm[j]] = cnt;
        }
        let order = if ordering == reference.ordering {
            MonomialOrder::GradedRevLex
        } else if ordering == enumerate_basis(n, c, MonomialOrder::Lex)?.ordering {
            MonomialOrder::Lex
        } else {
            // custom permutation: keep the default tag, the ordering itself is authoritative
            MonomialOrder::GradedRevLex
        };
        Ok(Self {
            n,
            c,
            order,
            ordering,
            index,
            selection,
            counts,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> usize {
        self.c
    }

    /// `M(n, c)`.
    pub fn len(&self) -> usize {
        self.ordering.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordering.is_empty()
    }

    pub fn order(&self) -> MonomialOrder {
        self.order
    }

    pub fn ordering(&self) -> &[ExponentVector] {
        &self.ordering
    }

    pub fn index_of(&self, exps: &[u32]) -> Option<usize> {
        self.index.get(exps).copied()
    }

    pub fn selection(&self) -> &[usize] {
        &self.selection
    }

    /// Number of ones in each column of `W`.
    pub fn column_counts(&self) -> &[usize] {
        &self.counts
    }

    /// Dense `n^c × M` copy of `W`.
    pub fn w_dense(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.selection.len(), self.len());
        for (r, &col) in self.selection.iter().enumerate() {
            w[(r, col)] = 1.0;
        }
        w
    }

    /// Dense `M × n^c` copy of `W⁺ = (WᵀW)⁻¹Wᵀ`.
    pub fn w_plus_dense(&self) -> DMatrix<f64> {
        let mut wp = DMatrix::zeros(self.len(), self.selection.len());
        for (r, &col) in self.selection.iter().enumerate() {
            wp[(col, r)] = 1.0 / self.counts[col] as f64;
        }
        wp
    }

    /// `W y`.
    pub fn apply_w(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.selection.len(), self.selection.iter().map(|&col| y[col]))
    }

    /// `W⁺ v`: average of the Kronecker coordinates mapped to each monomial.
    pub fn apply_w_plus(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        for (r, &col) in self.selection.iter().enumerate() {
            out[col] += v[r];
        }
        for (j, &cnt) in self.counts.iter().enumerate() {
            out[j] /= cnt as f64;
        }
        out
    }

    /// `y_c(x)`.
    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        eval_ordering(&self.ordering, x)
    }

    /// The matrix `G` with `y_c(M x) = G y_c(x)` for a linear change of
    /// variables `M` (the symmetric power of `M` in this basis).
    pub fn induced_map(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.n;
        if m.shape() != (n, n) {
            return Err(Error::Dimension(format!("change of variables must be {n}x{n}")));
        }
        let mut g = DMatrix::zeros(self.len(), self.len());
        for (row, e) in self.ordering.iter().enumerate() {
            // expand Π_k (Σ_l M_kl x_l)^{e_k} one linear factor at a time
            let mut poly: HashMap<Vec<u32>, f64> = HashMap::from([(vec![0; n], 1.0)]);
            for (k, &ek) in e.exponents().iter().enumerate() {
                for _ in 0..ek {
                    let mut next: HashMap<Vec<u32>, f64> = HashMap::with_capacity(poly.len() * n);
                    for (mono, coef) in &poly {
                        for l in 0..n {
                            let mkl = m[(k, l)];
                            if mkl == 0.0 {
                                continue;
                            }
                            let mut key = mono.clone();
                            key[l] += 1;
                            *next.entry(key).or_insert(0.0) += coef * mkl;
                        }
                    }
                    poly = next;
                }
            }
            for (mono, coef) in poly {
                g[(row, self.index[&mono])] += coef;
            }
        }
        Ok(g)
    }
}

/// `y_c(x)` for an explicit ordering.
pub fn eval_ordering(ordering: &[ExponentVector], x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(ordering.len(), ordering.iter().map(|e| e.eval(x)))
}

/// `y_c(x)` for `basis`.
pub fn eval_monomials(basis: &MonomialBasis, x: &[f64]) -> Result<DVector<f64>> {
    if x.len() != basis.n() {
        return Err(Error::Dimension(format!("point has length {}, basis expects {}", x.len(), basis.n())));
    }
    Ok(basis.eval(x))
}

/// `W_c` for `n = 2` by the block recursion
/// `W_1 = I_2`, `W_k = [[W_{k-1}, 0], [0, W_{k-1}]]` where the zero blocks
/// are single columns.
pub fn w_recursive_n2(c: usize) -> Result<DMatrix<f64>> {
    if c == 0 {
        return Err(Error::InvalidArgument("level must be at least 1".into()));
    }
    kron_len(2, c, DEFAULT_SIZE_CAP, "monomial lift W")?;
    let mut w = DMatrix::<f64>::identity(2, 2);
    for k in 2..=c {
        let half = w.nrows();
        let mut next = DMatrix::zeros(2 * half, k + 1);
        next.view_mut((0, 0), (half, k)).copy_from(&w);
        next.view_mut((half, 1), (half, k)).copy_from(&w);
        w = next;
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_identity_and_rank_one() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(kron(&i2, &i2), DMatrix::identity(4, 4));
        let v = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        assert_eq!(kron(&v, &v).as_slice(), &[1.0, 2.0, 2.0, 4.0]);
    }

    #[test]
    fn kronecker_sum_diagonal() {
        let a1 = DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, -0.5, -0.5]);
        let i2 = DMatrix::identity(2, 2);
        let s = kron(&a1, &i2) + kron(&i2, &a1);
        // brute force from the definition: (A ⊗ B)[(i,k),(j,l)] = A[i,j] B[k,l]
        for r in 0..4 {
            for c in 0..4 {
                let (i, k, j, l) = (r / 2, r % 2, c / 2, c % 2);
                let want = a1[(i, j)] * i2[(k, l)] + i2[(i, j)] * a1[(k, l)];
                assert_eq!(s[(r, c)], want);
            }
            assert_eq!(s[(r, r)], -1.0);
        }
    }

    #[test]
    fn kron_power_examples() {
        assert_eq!(kron_power(&[1.0, 2.0], 3).unwrap().as_slice(), &[1.0, 2.0, 2.0, 4.0, 2.0, 4.0, 4.0, 8.0]);
        assert_eq!(kron_power(&[3.0, -1.0], 1).unwrap().as_slice(), &[3.0, -1.0]);
        let (x1, x2) = (3.0, 5.0);
        assert_eq!(kron_power(&[x1, x2], 2).unwrap().as_slice(), &[x1 * x1, x1 * x2, x1 * x2, x2 * x2]);
    }

    #[test]
    fn kron_power_respects_cap() {
        assert!(matches!(kron_power_capped(&[1.0; 4], 13, 1 << 20), Err(Error::SizeLimit { .. })));
        assert!(matches!(kron_power(&[1.0; 2], 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn example_two_selection() {
        let b = enumerate_basis(2, 2, MonomialOrder::default()).unwrap();
        let want = DMatrix::from_row_slice(4, 3, &[1., 0., 0., 0., 1., 0., 0., 1., 0., 0., 0., 1.]);
        assert_eq!(b.w_dense(), want);
        assert_eq!(enumerate_basis(2, 1, MonomialOrder::default()).unwrap().w_dense(), DMatrix::identity(2, 2));
    }

    #[test]
    fn three_variable_quadratic_counts() {
        let lex = enumerate_basis(3, 2, MonomialOrder::Lex).unwrap();
        assert_eq!(lex.column_counts(), &[1, 2, 2, 1, 2, 1]);
        let grevlex = enumerate_basis(3, 2, MonomialOrder::GradedRevLex).unwrap();
        assert_eq!(grevlex.len(), 6);
        let mut counts = grevlex.column_counts().to_vec();
        counts.sort();
        assert_eq!(counts, vec![1, 1, 1, 2, 2, 2]);
        let names: Vec<String> = grevlex.ordering().iter().map(|e| e.to_string()).collect();
        assert_eq!(names, ["x1^2", "x1*x2", "x2^2", "x1*x3", "x2*x3", "x3^2"]);
    }

    #[test]
    fn eval_examples() {
        let b = enumerate_basis(2, 2, MonomialOrder::default()).unwrap();
        assert_eq!(eval_monomials(&b, &[1.0, 0.0]).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(eval_monomials(&b, &[2.0, 3.0]).unwrap().as_slice(), &[4.0, 6.0, 9.0]);
        let b13 = enumerate_basis(2, 13, MonomialOrder::default()).unwrap();
        let y = eval_monomials(&b13, &[1.0, 0.0]).unwrap();
        assert_eq!(y.len(), 14);
        assert_eq!(y[0], 1.0);
        assert!(y.iter().skip(1).all(|&v| v == 0.0));
        assert!(matches!(eval_monomials(&b, &[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn recursion_small_levels() {
        assert_eq!(w_recursive_n2(1).unwrap(), DMatrix::identity(2, 2));
        let w2 = w_recursive_n2(2).unwrap();
        assert_eq!(w2, enumerate_basis(2, 2, MonomialOrder::default()).unwrap().w_dense());
        // popcount oracle: Kronecker index r of ⊗³x picks x2 once per set bit
        let w3 = w_recursive_n2(3).unwrap();
        assert_eq!(w3.shape(), (8, 4));
        for r in 0..8usize {
            for col in 0..4 {
                let want = if (r.count_ones() as usize) == col { 1.0 } else { 0.0 };
                assert_eq!(w3[(r, col)], want);
            }
        }
    }

    #[test]
    fn pseudo_inverse_is_left_inverse() {
        for (n, c) in [(2, 5), (3, 3), (4, 2), (2, 13)] {
            let b = enumerate_basis(n, c, MonomialOrder::default()).unwrap();
            // rational arithmetic: row j of W⁺ is 1/counts[j] on the rows selecting j
            let m = b.len();
            let mut numer = vec![vec![0usize; m]; m];
            for &col in b.selection() {
                numer[col][col] += 1;
            }
            for i in 0..m {
                for j in 0..m {
                    let want = if i == j { b.column_counts()[i] } else { 0 };
                    assert_eq!(numer[i][j], want);
                }
            }
            let prod = b.w_plus_dense() * b.w_dense();
            assert!((prod - DMatrix::identity(m, m)).amax() <= 1e-12);
        }
    }

    #[test]
    fn induced_map_commutes_with_evaluation() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0, -1.0, 0.25, 2.0]);
        let x = [0.7, -0.3, 1.1];
        let mx: Vec<f64> = (&m * DVector::from_column_slice(&x)).iter().copied().collect();
        for c in 1..=4 {
            let b = enumerate_basis(3, c, MonomialOrder::default()).unwrap();
            let g = b.induced_map(&m).unwrap();
            let lhs = b.eval(&mx);
            assert!((&lhs - g * b.eval(&x)).amax() < 1e-12 * lhs.amax());
        }
        let b = enumerate_basis(2, 5, MonomialOrder::default()).unwrap();
        assert_eq!(b.induced_map(&DMatrix::identity(2, 2)).unwrap(), DMatrix::identity(6, 6));
    }

    #[test]
    fn stored_ordering_round_trip() {
        let b = enumerate_basis(3, 3, MonomialOrder::Lex).unwrap();
        let again = MonomialBasis::from_ordering(3, b.ordering().to_vec()).unwrap();
        assert_eq!(again.selection(), b.selection());
        assert_eq!(again.order(), MonomialOrder::Lex);
        let mut bad = b.ordering().to_vec();
        bad[0] = bad[1].clone();
        assert!(MonomialBasis::from_ordering(3, bad).is_err());
    }

    #[test]
    fn size_cap_is_enforced() {
        let err = MonomialBasis::with_cap(3, 20, MonomialOrder::default(), DEFAULT_SIZE_CAP).unwrap_err();
        assert!(matches!(err, Error::SizeLimit { .. }));
    }
}
