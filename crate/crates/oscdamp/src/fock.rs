//! Operators and states on the truncated Fock space `span{|0>, ..., |N_max>}`.

use std::ops::{Add, Mul, Neg, Sub};

use faer::{c64, Mat, MatRef, Side};

use crate::error::{check_finite, Error, Result};
use crate::linalg;
use crate::specialfns::binomial;

const STATE_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-8;
pub const THERMAL_TAIL_TOL: f64 = 1e-12;

/// Complex matrix on the truncated Fock space, `dim = N_max + 1`.
#[derive(Clone, Debug)]
pub struct FockOperator {
    mat: Mat<c64>,
}

impl FockOperator {
    pub fn zeros(dim: usize) -> Self {
        Self { mat: Mat::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mat: Mat::identity(dim, dim) }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> c64) -> Self {
        Self { mat: Mat::from_fn(dim, dim, f) }
    }

    pub fn from_matrix(mat: Mat<c64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                found: mat.ncols(),
            });
        }
        if !linalg::is_finite(mat.as_ref()) {
            return Err(Error::NonFinite("operator entries".into()));
        }
        Ok(Self { mat })
    }

    pub fn from_diagonal(d: &[c64]) -> Self {
        let n = d.len();
        Self::from_fn(n, |i, j| if i == j { d[i] } else { c64::new(0.0, 0.0) })
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self::from_fn(n, |i, j| if i == j { c64::new(d[i], 0.0) } else { c64::new(0.0, 0.0) })
    }

    /// `|psi><phi|`
    pub fn outer(psi: &[c64], phi: &[c64]) -> Result<Self> {
        if psi.len() != phi.len() {
            return Err(Error::DimensionMismatch {
                expected: psi.len(),
                found: phi.len(),
            });
        }
        Ok(Self::from_fn(psi.len(), |i, j| psi[i] * phi[j].conj()))
    }

    /// `|n><n|`
    pub fn projector(n: usize, dim: usize) -> Result<Self> {
        if n >= dim {
            return Err(Error::Domain(format!("level {n} outside dim {dim}")));
        }
        let mut x = Self::zeros(dim);
        x.mat[(n, n)] = c64::new(1.0, 0.0);
        Ok(x)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        self.mat[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: c64) {
        self.mat[(i, j)] = v;
    }

    pub fn as_mat(&self) -> MatRef<'_, c64> {
        self.mat.as_ref()
    }

    pub fn into_mat(self) -> Mat<c64> {
        self.mat
    }

    pub fn trace(&self) -> c64 {
        (0..self.dim()).map(|i| self.mat[(i, i)]).sum()
    }

    pub fn dagger(&self) -> Self {
        Self { mat: self.mat.adjoint().to_owned() }
    }

    pub fn transpose(&self) -> Self {
        Self { mat: self.mat.transpose().to_owned() }
    }

    pub fn scale(&self, s: c64) -> Self {
        Self { mat: linalg::scaled(self.mat.as_ref(), s) }
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(self.mat.as_ref())
    }

    pub fn diagonal(&self) -> Vec<c64> {
        (0..self.dim()).map(|i| self.mat[(i, i)]).collect()
    }

    /// Largest entry of `X - X^dagger`.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.dim();
        let mut r = 0.0f64;
        for j in 0..n {
            for i in 0..=j {
                r = r.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        r
    }

    /// `(X + X^dagger) / 2`
    pub fn hermitian_part(&self) -> Self {
        let n = self.dim();
        Self::from_fn(n, |i, j| (self.mat[(i, j)] + self.mat[(j, i)].conj()) * 0.5)
    }

    /// Eigenvalues of the Hermitian part in nondecreasing order.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        self.hermitian_part()
            .mat
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|_| Error::Numerical("Hermitian eigenvalue iteration failed".into()))
    }

    /// `Some(k)` when every nonzero entry sits on the diagonal `row - col = k`.
    pub fn diagonal_offset(&self) -> Option<isize> {
        let n = self.dim();
        let mut found: Option<isize> = None;
        for j in 0..n {
            for i in 0..n {
                if self.mat[(i, j)] != c64::new(0.0, 0.0) {
                    let k = i as isize - j as isize;
                    match found {
                        None => found = Some(k),
                        Some(f) if f != k => return None,
                        _ => {}
                    }
                }
            }
        }
        Some(found.unwrap_or(0))
    }

    /// Entries on the diagonal `row - col = k`, ordered by `min(row, col)`.
    pub fn sector(&self, k: isize) -> Vec<c64> {
        let n = self.dim();
        let len = sector_len(n, k);
        (0..len)
            .map(|s| {
                let (i, j) = sector_pos(k, s);
                self.mat[(i, j)]
            })
            .collect()
    }

    pub fn set_sector(&mut self, k: isize, values: &[c64]) {
        for (s, v) in values.iter().enumerate() {
            let (i, j) = sector_pos(k, s);
            self.mat[(i, j)] = *v;
        }
    }

    pub fn sector_is_zero(&self, k: isize) -> bool {
        let n = self.dim();
        (0..sector_len(n, k)).all(|s| {
            let (i, j) = sector_pos(k, s);
            self.mat[(i, j)] == c64::new(0.0, 0.0)
        })
    }

    /// Column-stacked vectorisation, `vec(X)[i + j*dim] = X[i, j]`.
    pub fn vectorize(&self) -> Vec<c64> {
        let n = self.dim();
        let mut v = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                v.push(self.mat[(i, j)]);
            }
        }
        v
    }

    pub fn from_vectorized(dim: usize, v: &[c64]) -> Self {
        Self::from_fn(dim, |i, j| v[i + j * dim])
    }

    /// Copy into a larger space, padding with zeros.
    pub fn embed(&self, dim: usize) -> Self {
        let n = self.dim();
        Self::from_fn(dim, |i, j| if i < n && j < n { self.mat[(i, j)] } else { c64::new(0.0, 0.0) })
    }

    /// Leading `dim x dim` block.
    pub fn truncate(&self, dim: usize) -> Self {
        Self::from_fn(dim, |i, j| self.mat[(i, j)])
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            })
        }
    }
}

pub(crate) fn sector_len(dim: usize, k: isize) -> usize {
    dim.saturating_sub(k.unsigned_abs())
}

/// Matrix position of element `s` on diagonal `k`.
pub(crate) fn sector_pos(k: isize, s: usize) -> (usize, usize) {
    if k >= 0 {
        (s + k as usize, s)
    } else {
        (s, s + k.unsigned_abs())
    }
}

impl Add for &FockOperator {
    type Output = FockOperator;
    fn add(self, rhs: &FockOperator) -> FockOperator {
        FockOperator { mat: &self.mat + &rhs.mat }
    }
}

impl Sub for &FockOperator {
    type Output = FockOperator;
    fn sub(self, rhs: &FockOperator) -> FockOperator {
        FockOperator { mat: &self.mat - &rhs.mat }
    }
}

impl Mul for &FockOperator {
    type Output = FockOperator;
    fn mul(self, rhs: &FockOperator) -> FockOperator {
        FockOperator { mat: &self.mat * &rhs.mat }
    }
}

impl Mul<c64> for &FockOperator {
    type Output = FockOperator;
    fn mul(self, rhs: c64) -> FockOperator {
        self.scale(rhs)
    }
}

impl Mul<f64> for &FockOperator {
    type Output = FockOperator;
    fn mul(self, rhs: f64) -> FockOperator {
        self.scale(c64::new(rhs, 0.0))
    }
}

impl Neg for &FockOperator {
    type Output = FockOperator;
    fn neg(self) -> FockOperator {
        self.scale(c64::new(-1.0, 0.0))
    }
}

fn check_positive_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(Error::Domain("dim must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Annihilation operator, `a[m, n] = sqrt(n) delta_{m, n-1}`.
pub fn annihilation(dim: usize) -> Result<FockOperator> {
    check_positive_dim(dim)?;
    Ok(FockOperator::from_fn(dim, |m, n| {
        if m + 1 == n {
            c64::new((n as f64).sqrt(), 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    }))
}

pub fn creation(dim: usize) -> Result<FockOperator> {
    Ok(annihilation(dim)?.dagger())
}

/// `a^dagger a`
pub fn number(dim: usize) -> Result<FockOperator> {
    check_positive_dim(dim)?;
    Ok(FockOperator::from_real_diagonal(
        &(0..dim).map(|n| n as f64).collect::<Vec<_>>(),
    ))
}

/// `(-1)^(a^dagger a)`
pub fn parity(dim: usize) -> Result<FockOperator> {
    check_positive_dim(dim)?;
    Ok(FockOperator::from_real_diagonal(
        &(0..dim).map(|n| if n % 2 == 0 { 1.0 } else { -1.0 }).collect::<Vec<_>>(),
    ))
}

/// Unit-trace, Hermitian, positive semidefinite Fock operator.
#[derive(Clone, Debug)]
pub struct DensityMatrix(FockOperator);

impl DensityMatrix {
    pub fn new(op: FockOperator) -> Result<Self> {
        let tr = op.trace();
        if (tr - c64::new(1.0, 0.0)).norm() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let h = op.hermiticity_residual();
        if h > STATE_TOL {
            return Err(Error::InvalidState(format!("non-Hermitian by {h:.3e}")));
        }
        let min = op.hermitian_eigenvalues()?.first().copied().unwrap_or(0.0);
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self(op))
    }

    /// Rescale to unit trace and symmetrise before validating.
    pub fn normalized(op: &FockOperator) -> Result<Self> {
        let tr = op.trace().re;
        if !(tr > 0.0) {
            return Err(Error::InvalidState(format!("trace {tr} is not positive")));
        }
        Self::new(op.hermitian_part().scale(c64::new(1.0 / tr, 0.0)))
    }

    pub(crate) fn new_unchecked(op: FockOperator) -> Self {
        Self(op)
    }

    pub fn pure(psi: &[c64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        if !(norm > 0.0) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let s = 1.0 / norm.sqrt();
        let v: Vec<c64> = psi.iter().map(|c| c * s).collect();
        Self::new(FockOperator::outer(&v, &v)?)
    }

    pub fn fock(n: usize, dim: usize) -> Result<Self> {
        Self::new(FockOperator::projector(n, dim)?)
    }

    pub fn as_operator(&self) -> &FockOperator {
        &self.0
    }

    pub fn into_operator(self) -> FockOperator {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.0.diagonal().iter().map(|c| c.re).collect()
    }
}

impl AsRef<FockOperator> for DensityMatrix {
    fn as_ref(&self) -> &FockOperator {
        &self.0
    }
}

/// Number of levels needed for the thermal tail `(nu/(nu+1))^dim` to drop below `tol`.
pub fn thermal_required_dim(nu: f64, tol: f64) -> usize {
    if nu <= 0.0 {
        return 1;
    }
    let q = nu / (nu + 1.0);
    (tol.ln() / q.ln()).ceil() as usize + 1
}

/// Truncated and renormalised thermal state with mean occupation `nu`.
pub fn thermal_state(nu: f64, dim: usize) -> Result<DensityMatrix> {
    check_finite("nu", nu)?;
    if nu < 0.0 {
        return Err(Error::Domain(format!("nu = {nu} must be non-negative")));
    }
    check_positive_dim(dim)?;
    let q = nu / (nu + 1.0);
    if q.powi(dim as i32) >= THERMAL_TAIL_TOL {
        return Err(Error::Truncation {
            required: thermal_required_dim(nu, THERMAL_TAIL_TOL),
            reason: format!("thermal tail for nu = {nu} at dim = {dim} exceeds {THERMAL_TAIL_TOL:e}"),
        });
    }
    let mut p: Vec<f64> = (0..dim).map(|n| q.powi(n as i32) / (nu + 1.0)).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    Ok(DensityMatrix::new_unchecked(FockOperator::from_real_diagonal(&p)))
}

/// `Tr{X rho}`
pub fn expectation(x: &FockOperator, rho: &FockOperator) -> Result<c64> {
    rho.check_dim(x.dim())?;
    let n = x.dim();
    let mut s = c64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            s += x.get(i, j) * rho.get(j, i);
        }
    }
    Ok(s)
}

/// Phase-space point with independent `z` and `z*`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint {
    pub z: c64,
    pub z_conj: c64,
}

impl PhasePoint {
    pub fn new(z: c64) -> Self {
        Self { z, z_conj: z.conj() }
    }
}

/// `exp(z a^dagger - z* a)` on `dim` levels.
pub fn displacement(p: PhasePoint, dim: usize) -> Result<FockOperator> {
    let a = annihilation(dim)?;
    let g = &(&a.dagger() * p.z) - &(&a * p.z_conj);
    FockOperator::from_matrix(linalg::expm(g.as_mat())?)
}

/// Phase-space function `Tr{F D(z) 2(-1)^(a^dagger a) D(z)^-1}`.
///
/// Operators that vanish near the truncation edge (states, projectors) are traced
/// exactly against the displaced parity kernel. Operators with weight at the edge are
/// treated as truncations of polynomial observables such as `a^dagger a`: the
/// alternating sum over the displaced diagonal is taken over the levels unaffected by
/// the truncation and Euler-summed beyond them.
pub fn wigner_point(f: &FockOperator, p: PhasePoint) -> Result<c64> {
    let dim = f.dim();
    let r = p.z.norm().max(p.z_conj.norm());
    if !r.is_finite() {
        return Err(Error::NonFinite("phase-space point".into()));
    }
    if !(r * r + 3.0 * r < dim as f64 / 4.0) {
        return Err(Error::Truncation {
            required: (4.0 * (r * r + 3.0 * r)).floor() as usize + 1,
            reason: format!("phase-space point |z| = {r:.3} outside the truncation radius"),
        });
    }
    let big = 2 * dim + 40;
    let a = annihilation(big)?;
    let g = &(&a.dagger() * p.z) - &(&a * p.z_conj);
    let d = linalg::expm(g.as_mat())?;
    let d_inv = linalg::expm(linalg::scaled(g.as_mat(), c64::new(-1.0, 0.0)).as_ref())?;
    let mut usable = 0;
    while usable < dim {
        let leak: f64 = (dim..big)
            .map(|n| d[(n, usable)].norm_sqr() + d_inv[(usable, n)].norm_sqr())
            .sum();
        if leak > 1e-26 {
            break;
        }
        usable += 1;
    }
    let fmax = f.max_abs();
    let mut edge = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            if i >= usable || j >= usable {
                edge = edge.max(f.get(i, j).norm());
            }
        }
    }
    if edge <= 1e-12 * fmax {
        let par = Mat::from_fn(big, dim, |k, n| {
            if k % 2 == 0 {
                d_inv[(k, n)]
            } else {
                -d_inv[(k, n)]
            }
        });
        let kernel = d.as_ref().submatrix(0, 0, dim, big) * &par;
        let mut sum = c64::new(0.0, 0.0);
        for m in 0..dim {
            for n in 0..dim {
                sum += f.get(n, m) * kernel[(m, n)];
            }
        }
        return Ok(sum * 2.0);
    }
    if usable < 8 {
        return Err(Error::Truncation {
            required: 2 * dim,
            reason: "too few levels unaffected by the truncation edge".into(),
        });
    }
    let d_low = d.as_ref().submatrix(0, 0, dim, usable);
    let d_inv_low = d_inv.as_ref().submatrix(0, 0, usable, dim);
    let shifted = &(&d_inv_low * f.as_mat()) * d_low;
    let c: Vec<c64> = (0..usable).map(|m| shifted[(m, m)]).collect();
    let cut = usable - (usable / 2).min(16);
    let mut sum: c64 = (0..cut)
        .map(|m| if m % 2 == 0 { c[m] } else { -c[m] })
        .sum();
    let tail = &c[cut..];
    let tail_sign = if cut % 2 == 0 { 1.0 } else { -1.0 };
    for j in 0..tail.len() {
        let mut diff = c64::new(0.0, 0.0);
        for (i, ci) in tail.iter().enumerate().take(j + 1) {
            let sign = if (j - i) % 2 == 0 { 1.0 } else { -1.0 };
            diff += ci * (sign * binomial(j, i));
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        sum += diff * (tail_sign * sign * 0.5f64.powi(j as i32 + 1));
    }
    Ok(sum * 2.0)
}
