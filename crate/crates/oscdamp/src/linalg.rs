//! Dense complex matrix helpers: exponentials, matrix functions and solves.

use faer::prelude::*;
use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Maximum absolute column sum.
pub fn norm1(a: MatRef<'_, c64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let mut s = 0.0;
        for i in 0..a.nrows() {
            s += a[(i, j)].norm();
        }
        best = best.max(s);
    }
    best
}

pub fn max_abs(a: MatRef<'_, c64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            best = best.max(a[(i, j)].norm());
        }
    }
    best
}

pub fn is_finite(a: MatRef<'_, c64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()))
}

pub fn scaled(a: MatRef<'_, c64>, s: c64) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

/// `a + s * b`
pub fn add_scaled(a: MatRef<'_, c64>, s: c64, b: MatRef<'_, c64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + s * b[(i, j)])
}

pub fn identity(n: usize) -> Mat<c64> {
    Mat::identity(n, n)
}

/// Solve `a x = b` by LU with partial pivoting.
pub fn solve(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Result<Mat<c64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    let x = a.partial_piv_lu().solve(b);
    if !is_finite(x.as_ref()) {
        return Err(Error::Numerical("singular linear system".into()));
    }
    Ok(x)
}

pub fn inverse(a: MatRef<'_, c64>) -> Result<Mat<c64>> {
    solve(a, identity(a.nrows()).as_ref())
}

fn pade_low(a: MatRef<'_, c64>, b: &[f64]) -> Result<Mat<c64>> {
    let n = a.nrows();
    let a2 = a * a;
    let mut power = identity(n);
    let mut u_inner = Mat::<c64>::zeros(n, n);
    let mut v = Mat::<c64>::zeros(n, n);
    for j in 0..b.len() / 2 {
        u_inner = add_scaled(u_inner.as_ref(), c64::new(b[2 * j + 1], 0.0), power.as_ref());
        v = add_scaled(v.as_ref(), c64::new(b[2 * j], 0.0), power.as_ref());
        if j + 1 < b.len() / 2 {
            power = &power * &a2;
        }
    }
    let u = a * &u_inner;
    solve((&v - &u).as_ref(), (&v + &u).as_ref())
}

fn pade13(a: MatRef<'_, c64>) -> Result<Mat<c64>> {
    let n = a.nrows();
    let id = identity(n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let r = |x: f64| c64::new(x, 0.0);
    let lin = |c6: f64, c4: f64, c2: f64, c0: f64| {
        Mat::from_fn(n, n, |i, j| {
            r(c6) * a6[(i, j)] + r(c4) * a4[(i, j)] + r(c2) * a2[(i, j)] + r(c0) * id[(i, j)]
        })
    };
    let u_hi = lin(B13[13], B13[11], B13[9], 0.0);
    let u_lo = lin(B13[7], B13[5], B13[3], B13[1]);
    let u = a * (&(&a6 * &u_hi) + &u_lo);
    let v_hi = lin(B13[12], B13[10], B13[8], 0.0);
    let v_lo = lin(B13[6], B13[4], B13[2], B13[0]);
    let v = &(&a6 * &v_hi) + &v_lo;
    solve((&v - &u).as_ref(), (&v + &u).as_ref())
}

/// Matrix exponential by Pade scaling and squaring.
pub fn expm(a: MatRef<'_, c64>) -> Result<Mat<c64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    if !is_finite(a) {
        return Err(Error::NonFinite("matrix exponential argument".into()));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let nrm = norm1(a);
    for &(m, theta) in THETA.iter() {
        if nrm <= theta {
            let b: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return pade_low(a, b);
        }
    }
    let s = (nrm / THETA13).log2().ceil().max(0.0) as i32;
    let a_scaled = scaled(a, c64::new(0.5f64.powi(s), 0.0));
    let mut x = pade13(a_scaled.as_ref())?;
    for _ in 0..s {
        x = &x * &x;
    }
    if !is_finite(x.as_ref()) {
        return Err(Error::Numerical("matrix exponential overflow".into()));
    }
    Ok(x)
}

/// Eigendecomposition `a = V diag(lambda) V^-1`, rejected when `V` is too badly conditioned.
pub struct EigenSystem {
    pub values: Vec<c64>,
    pub vectors: Mat<c64>,
    pub inverse: Mat<c64>,
    pub condition: f64,
}

pub fn eigensystem(a: MatRef<'_, c64>, max_condition: f64) -> Result<EigenSystem> {
    let n = a.nrows();
    let e = a
        .eigen()
        .map_err(|_| Error::Numerical("eigendecomposition did not converge".into()))?;
    let values: Vec<c64> = (0..n).map(|i| e.S()[i]).collect();
    let vectors = e.U().to_owned();
    let inv = inverse(vectors.as_ref())?;
    let condition = norm1(vectors.as_ref()) * norm1(inv.as_ref());
    if !(condition <= max_condition) {
        return Err(Error::Numerical(format!(
            "eigenvector matrix condition number {condition:.3e} exceeds {max_condition:.1e}"
        )));
    }
    Ok(EigenSystem {
        values,
        vectors,
        inverse: inv,
        condition,
    })
}

impl EigenSystem {
    pub fn apply_function(&self, f: impl Fn(c64) -> c64) -> Mat<c64> {
        let n = self.values.len();
        let fv: Vec<c64> = self.values.iter().map(|&l| f(l)).collect();
        let vf = Mat::from_fn(n, n, |i, j| self.vectors[(i, j)] * fv[j]);
        &vf * &self.inverse
    }
}

pub fn eigenvalues(a: MatRef<'_, c64>) -> Result<Vec<c64>> {
    a.eigenvalues()
        .map_err(|_| Error::Numerical("eigenvalue iteration did not converge".into()))
}

/// `[exp(a), phi_1(a), ..., phi_order(a)]` from one augmented exponential,
/// with `phi_j(z) = sum_k z^k / (k + j)!`.
pub fn phi_functions(a: MatRef<'_, c64>, order: usize) -> Result<Vec<Mat<c64>>> {
    let n = a.nrows();
    let big = n * (order + 1);
    let mut aug = Mat::<c64>::zeros(big, big);
    for j in 0..n {
        for i in 0..n {
            aug[(i, j)] = a[(i, j)];
        }
    }
    for b in 0..order {
        for i in 0..n {
            aug[(b * n + i, (b + 1) * n + i)] = c64::new(1.0, 0.0);
        }
    }
    let e = expm(aug.as_ref())?;
    Ok((0..=order)
        .map(|b| e.as_ref().submatrix(0, b * n, n, n).to_owned())
        .collect())
}

/// `phi_order(a) v` for a single vector via an augmented exponential of size `n + order`.
pub fn phi_apply(a: MatRef<'_, c64>, order: usize, v: MatRef<'_, c64>) -> Result<Mat<c64>> {
    let n = a.nrows();
    if order == 0 {
        return Ok(&expm(a)? * v);
    }
    let big = n + order;
    let mut aug = Mat::<c64>::zeros(big, big);
    for j in 0..n {
        for i in 0..n {
            aug[(i, j)] = a[(i, j)];
        }
    }
    for i in 0..n {
        aug[(i, n)] = v[(i, 0)];
    }
    for b in 0..order - 1 {
        aug[(n + b, n + b + 1)] = c64::new(1.0, 0.0);
    }
    let e = expm(aug.as_ref())?;
    Ok(Mat::from_fn(n, 1, |i, _| e[(i, big - 1)]))
}

/// Smallest ladder step for a generator of 1-norm `norm`.
pub fn ladder_base(norm: f64) -> f64 {
    if norm > 0.0 {
        0.5f64.powi((norm / 0.05).log2().ceil().max(0.0) as i32)
    } else {
        1.0
    }
}

/// Number of doubling levels needed to reach `horizon` from `base`.
pub fn ladder_levels(base: f64, horizon: f64) -> usize {
    let mut levels = 1;
    while base * 2f64.powi(levels as i32 - 1) < horizon.max(base) {
        levels += 1;
    }
    levels
}

/// Exponentials `exp(2^j h G)` of one generator, composed to reach any `t >= 0`
/// with the sub-step remainder applied by a short Taylor series.
#[derive(Clone, Debug)]
pub struct ExpLadder {
    generator: Mat<c64>,
    base: f64,
    steps: Vec<Mat<c64>>,
}

impl ExpLadder {
    pub fn new(generator: Mat<c64>, base: f64, levels: usize) -> Result<Self> {
        let mut steps = Vec::with_capacity(levels);
        let mut e = expm(scaled(generator.as_ref(), c64::new(base, 0.0)).as_ref())?;
        for _ in 0..levels {
            let next = &e * &e;
            steps.push(e);
            e = next;
        }
        Ok(Self { generator, base, steps })
    }

    /// Ladder sized for times up to `horizon`.
    pub fn with_horizon(generator: Mat<c64>, horizon: f64) -> Result<Self> {
        let base = ladder_base(norm1(generator.as_ref()));
        Self::new(generator, base, ladder_levels(base, horizon))
    }

    /// `exp(t G) v`
    pub fn apply(&self, v: Mat<c64>, t: f64) -> Mat<c64> {
        let mut v = v;
        let mut rem = t;
        for j in (0..self.steps.len()).rev() {
            let h = self.base * 2f64.powi(j as i32);
            while rem >= h {
                v = &self.steps[j] * &v;
                rem -= h;
            }
        }
        if rem > 0.0 {
            let mut term = v.clone();
            let scale = max_abs(v.as_ref()).max(1e-300);
            for k in 1..30 {
                term = scaled((&self.generator * &term).as_ref(), c64::new(rem / k as f64, 0.0));
                v = &v + &term;
                if max_abs(term.as_ref()) < 1e-17 * scale {
                    break;
                }
            }
        }
        v
    }
}

pub fn column(v: &[c64]) -> Mat<c64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(n: usize, scale: f64) -> Mat<c64> {
        Mat::from_fn(n, n, |i, j| {
            let x = ((7 * i + 3 * j + 1) % 11) as f64 / 11.0 - 0.5;
            let y = ((5 * i + 2 * j + 3) % 13) as f64 / 13.0 - 0.5;
            c64::new(x, y) * scale
        })
    }

    #[test]
    fn expm_of_diagonal() {
        let d = Mat::from_fn(4, 4, |i, j| {
            if i == j {
                c64::new(-(i as f64), 0.5 * i as f64)
            } else {
                c64::new(0.0, 0.0)
            }
        });
        let e = expm(d.as_ref()).unwrap();
        for i in 0..4 {
            let want = c64::new(-(i as f64), 0.5 * i as f64).exp();
            assert!((e[(i, i)] - want).norm() < 1e-14);
        }
    }

    #[test]
    fn expm_matches_eigen_route_across_norms() {
        for &scale in &[1e-3, 0.1, 1.0, 5.0, 30.0] {
            let a = test_matrix(6, scale);
            let e1 = expm(a.as_ref()).unwrap();
            let es = eigensystem(a.as_ref(), 1e8).unwrap();
            let e2 = es.apply_function(|l| l.exp());
            let err = max_abs((&e1 - &e2).as_ref()) / max_abs(e1.as_ref()).max(1.0);
            assert!(err < 1e-10, "scale {scale}: {err}");
        }
    }

    #[test]
    fn expm_group_property() {
        let a = test_matrix(5, 2.0);
        let e1 = expm(a.as_ref()).unwrap();
        let half = expm(scaled(a.as_ref(), c64::new(0.5, 0.0)).as_ref()).unwrap();
        let err = max_abs((&e1 - &(&half * &half)).as_ref());
        assert!(err < 1e-12 * max_abs(e1.as_ref()));
    }

    #[test]
    fn solve_recovers_identity() {
        let n = 8;
        let a = Mat::from_fn(n, n, |i, j| {
            if i == j {
                c64::new(10.0, 1.0)
            } else {
                c64::new(1.0 / (1.0 + i as f64 + j as f64), 0.3)
            }
        });
        let inv = inverse(a.as_ref()).unwrap();
        let r = &(&a * &inv) - &identity(n);
        assert!(max_abs(r.as_ref()) < 1e-13);
    }

    #[test]
    fn phi_functions_scalar() {
        let z = c64::new(-0.7, 0.4);
        let a = Mat::from_fn(1, 1, |_, _| z);
        let phis = phi_functions(a.as_ref(), 2).unwrap();
        let one = c64::new(1.0, 0.0);
        let phi1 = (z.exp() - one) / z;
        let phi2 = (z.exp() - one - z) / (z * z);
        assert!((phis[0][(0, 0)] - z.exp()).norm() < 1e-15);
        assert!((phis[1][(0, 0)] - phi1).norm() < 1e-15);
        assert!((phis[2][(0, 0)] - phi2).norm() < 1e-15);
        let v = column(&[c64::new(2.0, 0.0)]);
        let p2 = phi_apply(a.as_ref(), 2, v.as_ref()).unwrap();
        assert!((p2[(0, 0)] - phi2 * 2.0).norm() < 1e-15);
        let p1 = phi_apply(a.as_ref(), 1, v.as_ref()).unwrap();
        assert!((p1[(0, 0)] - phi1 * 2.0).norm() < 1e-15);
    }

    #[test]
    fn phi_apply_matches_block_route() {
        let a = test_matrix(5, 3.0);
        let v = Mat::from_fn(5, 1, |i, _| c64::new(i as f64, 1.0));
        let phis = phi_functions(a.as_ref(), 2).unwrap();
        let want = &phis[2] * &v;
        let got = phi_apply(a.as_ref(), 2, v.as_ref()).unwrap();
        assert!(max_abs((&want - &got).as_ref()) < 1e-12);
    }

    #[test]
    fn ill_conditioned_eigensystem_rejected() {
        let a = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => c64::new(1.0, 0.0),
            _ => c64::new(0.0, 0.0),
        });
        assert!(eigensystem(a.as_ref(), 1e8).is_err());
    }
}
