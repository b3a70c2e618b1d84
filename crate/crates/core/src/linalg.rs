//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

/// Eigenvalues of a general real square matrix.
///
/// Hessenberg reduction followed by the Francis double-shift QR iteration
/// with exceptional shifts. nalgebra's own Schur iteration can cycle
/// forever on matrices with repeated complex pairs (Kronecker sums hit this
/// routinely), so it is not used here.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    assert!(a.is_square(), "eigenvalues need a square matrix");
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    let h = a.clone().hessenberg().h();
    hessenberg_qr(h).expect("QR iteration failed to converge")
}

/// Francis double-shift QR on an upper Hessenberg matrix (1-based indices
/// internally to keep the classical formulation readable).
fn hessenberg_qr(h: DMatrix<f64>) -> Option<Vec<Complex<f64>>> {
    let n = h.nrows();
    let mut a = vec![vec![0.0f64; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            if i <= j + 1 {
                a[i + 1][j + 1] = h[(i, j)];
            }
        }
    }
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let sign = |a: f64, b: f64| if b >= 0.0 { a.abs() } else { -a.abs() };

    let mut anorm = 0.0;
    for i in 1..=n {
        for j in (i.max(2) - 1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n;
    let mut t = 0.0;
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = 1;
            for ll in (2..=nn).rev() {
                let mut s = a[ll - 1][ll - 1].abs() + a[ll][ll].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[ll][ll - 1].abs() + s == s {
                    a[ll][ll - 1] = 0.0;
                    l = ll;
                    break;
                }
            }
            let mut x = a[nn][nn];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
            } else {
                let mut y = a[nn - 1][nn - 1];
                let mut w = a[nn][nn - 1] * a[nn - 1][nn];
                if l == nn - 1 {
                    let p = 0.5 * (y - x);
                    let q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != 0.0 {
                            wr[nn] = x - w / z;
                        }
                        wi[nn - 1] = 0.0;
                        wi[nn] = 0.0;
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn -= 2;
                } else {
                    if its == 60 {
                        return None;
                    }
                    if its % 10 == 0 && its > 0 {
                        // exceptional shift
                        t += x;
                        for i in 1..=nn {
                            a[i][i] -= x;
                        }
                        let s = a[nn][nn - 1].abs() + a[nn - 1][nn - 2].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let (mut p, mut q, mut r);
                    let mut m = nn - 2;
                    loop {
                        let z = a[m][m];
                        r = x - z;
                        let s = y - z;
                        p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - r - s;
                        r = a[m + 2][m + 1];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nn {
                        a[i][i - 2] = 0.0;
                        if i != m + 2 {
                            a[i][i - 3] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nn {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = if k != nn - 1 { a[k + 2][k - 1] } else { 0.0 };
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            let z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                let mut pp = a[k][j] + q * a[k + 1][j];
                                if k != nn - 1 {
                                    pp += r * a[k + 2][j];
                                    a[k + 2][j] -= pp * z;
                                }
                                a[k + 1][j] -= pp * y;
                                a[k][j] -= pp * x;
                            }
                            let mmin = nn.min(k + 3);
                            for i in l..=mmin {
                                let mut pp = x * a[i][k] + y * a[i][k + 1];
                                if k != nn - 1 {
                                    pp += z * a[i][k + 2];
                                    a[i][k + 2] -= pp * r;
                                }
                                a[i][k + 1] -= pp * q;
                                a[i][k] -= pp;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 2 || l >= nn - 1 {
                break;
            }
        }
    }
    Some((1..=n).map(|i| Complex::new(wr[i], wi[i])).collect())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Eigenvalues of the symmetric part of `a`, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let s = symmetrize(a);
    let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_sym_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a)[0]
}

pub fn max_sym_eigenvalue(a: &DMatrix<f64>) -> f64 {
    *sym_eigenvalues(a).last().expect("non-empty matrix")
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// `Bᵀ P + P B`.
pub fn lyapunov_form(b: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let pb = p * b;
    &pb + pb.transpose()
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.singular_values().iter().copied().fold(0.0, f64::max)
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let z = s - a;
    (s, (a - (s - z)) + (b - z))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Double-double accumulator (error-free transformations).
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    hi: f64,
    lo: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.hi, x);
        self.hi = s;
        self.lo += e;
    }

    fn add_product(&mut self, a: f64, b: f64) {
        let (p, e) = two_prod(a, b);
        self.add(p);
        self.lo += e;
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// `yᵀ P y` accumulated in double-double, so the result is accurate to a
/// few ulps unless `|y|ᵀ|P||y| / |yᵀPy|` approaches `1/ε²`.
pub fn quadratic_form(p: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let mut acc = Compensated::default();
    for j in 0..p.ncols() {
        for i in 0..p.nrows() {
            let (h, l) = two_prod(p[(i, j)], y[j]);
            acc.add_product(y[i], h);
            acc.add(y[i] * l);
        }
    }
    acc.value()
}

/// `‖L y‖²` with every row product and the final sum in double-double.
pub fn product_norm_squared(l: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let mut acc = Compensated::default();
    for i in 0..l.nrows() {
        let mut row = Compensated::default();
        for j in 0..l.ncols() {
            row.add_product(l[(i, j)], y[j]);
        }
        let (h, lo) = (row.hi, row.lo);
        acc.add_product(h, h);
        acc.add(2.0 * h * lo);
    }
    acc.value()
}

/// Upper-triangular `R` with `P = RᵀR`, inner products accumulated in
/// double-double so that `RᵀR − P` is dominated by rounding `R` itself.
/// `None` unless `P` is numerically positive definite.
pub fn accurate_cholesky_upper(p: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let m = p.nrows();
    let mut r = DMatrix::<f64>::zeros(m, m);
    for k in 0..m {
        let mut d = Compensated { hi: p[(k, k)], lo: 0.0 };
        for i in 0..k {
            d.add_product(-r[(i, k)], r[(i, k)]);
        }
        let d = d.value();
        if !(d > 0.0 && d.is_finite()) {
            return None;
        }
        let rkk = d.sqrt();
        r[(k, k)] = rkk;
        for j in k + 1..m {
            let mut s = Compensated { hi: p[(k, j)], lo: 0.0 };
            for i in 0..k {
                s.add_product(-r[(i, k)], r[(i, j)]);
            }
            r[(k, j)] = s.value() / rkk;
        }
    }
    Some(r)
}
