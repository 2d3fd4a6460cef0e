//! Right and left eigenvectors of the Liouvillian (the two damping bases), their
//! duality, expansions of operators in them and the Gaussian generating states.
//!
//! Both eigenvectors of index `(n, k)` live on a single diagonal of the Fock matrix.
//! With `K = |k|` the right eigenvector occupies diagonal `+k` with entries
//! `sqrt((m+K)!/m!) D_m` and the left eigenvector occupies diagonal `-k` with
//! entries `sqrt((m+K)!/m!) E_m`, where `m` counts along the diagonal and
//!
//! ```text
//! D_m = (-1)^n / (nu+1)^(K+1) sum_j C(n+K, n-j) (-1)^j (nu+1)^-j C(m, j) q^(m-j),   q = nu/(nu+1)
//! E_m = n!/(n+K)! (1+nu)^-n sum_j C(n+K, n-j) (-1)^(n+j) nu^(n-j) C(m, j)
//! ```
//!
//! These follow from the Fock-basis rule `<m| :(a^+ a)^j e^(-c a^+ a): |m> = m!/(m-j)! (1-c)^(m-j)`.

use faer::{c64, Mat};

use crate::error::{check_finite, Error, Result};
use crate::fock::{annihilation, number, sector_len, FockOperator};
use crate::liouvillian::{eigenvalue, left_action, OscillatorParams};
use crate::superop::SuperOperator;

/// Tail mass below which a truncated eigenvector or pairing is considered exact.
pub const ADEQUACY_TOL: f64 = 1e-10;

/// Relative tail mass allowed when truncating a single right eigenvector.
const RIGHT_TAIL_TOL: f64 = 1e-13;

/// Phase `c` in `rho_n^(-k) = c (rho_n^(k))^dagger`.
pub const CONJUGATION_PHASE: f64 = 1.0;

const ADAPTIVE_N_CAP: usize = 4096;
const ADAPTIVE_RUN: usize = 8;


/// Right eigenvector, dual left eigenvector and eigenvalue for index `(n, k)`.
#[derive(Clone, Debug)]
pub struct DampingBasisElement {
    pub n: usize,
    pub k: i64,
    pub right: FockOperator,
    pub left: FockOperator,
    pub eigenvalue: c64,
}

/// Parameters of the normally ordered Gaussian
/// `:(1/kappa) exp(-(a^+ - alpha*)(a - alpha)/kappa):` with `alpha*` independent of `alpha`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianAnsatz {
    pub kappa: f64,
    pub alpha: c64,
    pub alpha_conj: c64,
}

impl GaussianAnsatz {
    pub fn new(kappa: f64, alpha: c64, alpha_conj: c64) -> Result<Self> {
        check_finite("kappa", kappa)?;
        for (name, z) in [("alpha", alpha), ("alpha*", alpha_conj)] {
            check_finite(name, z.re)?;
            check_finite(name, z.im)?;
        }
        if kappa <= 0.0 {
            return Err(Error::Domain(format!("kappa = {kappa} must be positive")));
        }
        Ok(Self { kappa, alpha, alpha_conj })
    }

    /// Displaced thermal state with mean thermal occupation `nbar` and displacement `alpha`.
    pub fn displaced_thermal(nbar: f64, alpha: c64) -> Result<Self> {
        Self::new(nbar + 1.0, alpha, alpha.conj())
    }

    /// Parameters after evolving for time `t` under the Liouvillian.
    pub fn evolve(&self, p: &OscillatorParams, t: f64) -> Self {
        let decay = (-p.decay * t).exp();
        let half = (-0.5 * p.decay * t).exp();
        let rot = c64::new(0.0, -p.omega * t).exp();
        Self {
            kappa: p.nu + 1.0 - (p.nu + 1.0 - self.kappa) * decay,
            alpha: self.alpha * rot * half,
            alpha_conj: self.alpha_conj * rot.conj() * half,
        }
    }
}

/// Log-factorial table and the closed-form diagonal profiles.
struct Profiles {
    nu: f64,
    ln_nu: f64,
    ln_nu1: f64,
    ln_q: f64,
    lnf: Vec<f64>,
}

impl Profiles {
    fn new(nu: f64) -> Self {
        Self {
            nu,
            ln_nu: nu.ln(),
            ln_nu1: (nu + 1.0).ln(),
            ln_q: (nu / (nu + 1.0)).ln(),
            lnf: vec![0.0],
        }
    }

    fn ensure(&mut self, n: usize) {
        while self.lnf.len() <= n {
            let i = self.lnf.len();
            let last = self.lnf[i - 1];
            self.lnf.push(last + (i as f64).ln());
        }
    }

    fn ln_binom(&self, n: usize, k: usize) -> f64 {
        self.lnf[n] - self.lnf[k] - self.lnf[n - k]
    }

    /// Sum of `(-1)^j exp(l_j)` without overflow.
    fn signed_sum(terms: &[(f64, f64)]) -> (f64, f64) {
        let top = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return (0.0, f64::NEG_INFINITY);
        }
        (terms.iter().map(|(s, l)| s * (l - top).exp()).sum(), top)
    }

    /// `q^d M_d(x)` for `d <= d_max`, with `M_d(x) = 2F1(-d, -x; K+1; 1 - 1/q)` the Meixner
    /// polynomials, by the three-term recurrence in the degree. Only used with `d_max <= x`,
    /// where the polynomial is the dominant solution and the recurrence is stable.
    fn meixner_scaled(&self, kk: usize, x: usize, d_max: usize) -> Vec<f64> {
        let c = self.nu / (self.nu + 1.0);
        let beta = (kk + 1) as f64;
        let x = x as f64;
        let mut s = Vec::with_capacity(d_max + 1);
        s.push(1.0);
        if d_max >= 1 {
            s.push(c + (c - 1.0) * x / beta);
        }
        for d in 1..d_max {
            let df = d as f64;
            let next = (((c - 1.0) * x + df + (df + beta) * c) * s[d] - df * c * s[d - 1]) / (df + beta);
            s.push(next);
        }
        s
    }

    /// `(ln|q^n M_n(m)|, sign)` for all `n <= n_max`, using the symmetry `M_n(m) = M_m(n)`
    /// so that the recurrence always runs in the smaller index.
    fn meixner_column(&self, kk: usize, m: usize, n_max: usize) -> Vec<(f64, f64)> {
        let low = self.meixner_scaled(kk, m, n_max.min(m));
        let mut out: Vec<(f64, f64)> = low.iter().map(|&v| (v.abs().ln(), v.signum())).collect();
        for n in (m + 1)..=n_max {
            let r = self.meixner_scaled(kk, n, m)[m];
            out.push(((n - m) as f64 * self.ln_q + r.abs().ln(), r.signum()));
        }
        out
    }

    /// Right-eigenvector entries at position `m` of diagonal `K` for all `n <= n_max`.
    fn right_column(&mut self, kk: usize, m: usize, n_max: usize) -> Vec<f64> {
        if self.nu == 0.0 {
            return (0..=n_max).map(|n| self.right_direct(n, kk, m)).collect();
        }
        self.ensure(n_max + kk + m + 1);
        let root = 0.5 * (self.lnf[m + kk] - self.lnf[m]) - (kk + 1) as f64 * self.ln_nu1;
        self.meixner_column(kk, m, n_max)
            .into_iter()
            .enumerate()
            .map(|(n, (ls, sg))| {
                let sign = if n % 2 == 0 { sg } else { -sg };
                let l = self.ln_binom(n + kk, n) + (m as f64 - n as f64) * self.ln_q + ls + root;
                sign * l.exp()
            })
            .collect()
    }

    /// Left-eigenvector entries at position `m` of diagonal `K` for all `n <= n_max`.
    fn left_column(&mut self, kk: usize, m: usize, n_max: usize) -> Vec<f64> {
        if self.nu == 0.0 {
            return (0..=n_max).map(|n| self.left_direct(n, kk, m)).collect();
        }
        self.ensure(n_max + kk + m + 1);
        let root = 0.5 * (self.lnf[m + kk] - self.lnf[m]) - self.lnf[kk];
        self.meixner_column(kk, m, n_max)
            .into_iter()
            .enumerate()
            .map(|(n, (ls, sg))| {
                let sign = if n % 2 == 0 { sg } else { -sg };
                sign * (ls + root).exp()
            })
            .collect()
    }

    fn right(&mut self, n: usize, kk: usize, m: usize) -> f64 {
        self.right_column(kk, m, n)[n]
    }

    fn left(&mut self, n: usize, kk: usize, m: usize) -> f64 {
        self.left_column(kk, m, n)[n]
    }

    /// Direct alternating sum for the right entry; exact at `nu = 0`.
    fn right_direct(&mut self, n: usize, kk: usize, m: usize) -> f64 {
        self.ensure(n + kk + m + 1);
        let jmin = if self.nu == 0.0 { m } else { 0 };
        if jmin > n.min(m) {
            return 0.0;
        }
        let terms: Vec<(f64, f64)> = (jmin..=n.min(m))
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                let mut l = self.ln_binom(n + kk, n - j) - j as f64 * self.ln_nu1 + self.ln_binom(m, j);
                if m > j {
                    l += (m - j) as f64 * self.ln_q;
                }
                (sign, l)
            })
            .collect();
        let (s, top) = Self::signed_sum(&terms);
        let pref = -((kk + 1) as f64) * self.ln_nu1 + 0.5 * (self.lnf[m + kk] - self.lnf[m]);
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        sign * s * (top + pref).exp()
    }

    /// Direct alternating sum for the left entry; exact at `nu = 0`.
    fn left_direct(&mut self, n: usize, kk: usize, m: usize) -> f64 {
        self.ensure(n + kk + m + 1);
        let jmin = if self.nu == 0.0 { n } else { 0 };
        if jmin > n.min(m) {
            return 0.0;
        }
        let terms: Vec<(f64, f64)> = (jmin..=n.min(m))
            .map(|j| {
                let sign = if (n + j) % 2 == 0 { 1.0 } else { -1.0 };
                let mut l = self.ln_binom(n + kk, n - j) + self.ln_binom(m, j);
                if n > j {
                    l += (n - j) as f64 * self.ln_nu;
                }
                (sign, l)
            })
            .collect();
        let (s, top) = Self::signed_sum(&terms);
        let pref = self.lnf[n] - self.lnf[n + kk] - n as f64 * self.ln_nu1
            + 0.5 * (self.lnf[m + kk] - self.lnf[m]);
        s * (top + pref).exp()
    }

    fn right_diag(&mut self, n: usize, kk: usize, len: usize) -> Vec<f64> {
        (0..len).map(|m| self.right(n, kk, m)).collect()
    }

    fn left_diag(&mut self, n: usize, kk: usize, len: usize) -> Vec<f64> {
        (0..len).map(|m| self.left(n, kk, m)).collect()
    }
}

fn check_nu(nu: f64) -> Result<()> {
    check_finite("nu", nu)?;
    if nu < 0.0 {
        return Err(Error::Domain(format!("nu = {nu} must be non-negative")));
    }
    Ok(())
}

/// Smallest `dim` such that the entries of `f(m)` for `m + K >= dim` sum to at most
/// `tol * max(1, sum_m |f(m)|)` (`relative`) or to at most `tol` (absolute).
fn scan_required_dim(kk: usize, tol: f64, relative: bool, mut f: impl FnMut(usize) -> f64) -> usize {
    let mut vals: Vec<f64> = Vec::new();
    let mut peak = 0.0f64;
    let mut falling = 0usize;
    let mut m = 0usize;
    loop {
        let v = f(m).abs();
        if let Some(&prev) = vals.last() {
            if v <= prev {
                falling += 1;
            } else {
                falling = 0;
            }
        }
        peak = peak.max(v);
        vals.push(v);
        if m > 8 && falling >= 8 && v <= 1e-6 * tol * peak.max(1.0) {
            break;
        }
        if m > 200_000 {
            break;
        }
        m += 1;
    }
    let total: f64 = vals.iter().sum();
    let budget = if relative { tol * total.max(1.0) } else { tol };
    let mut tail = 0.0;
    let mut last = vals.len();
    for (i, v) in vals.iter().enumerate().rev() {
        if tail + v > budget {
            break;
        }
        tail += v;
        last = i;
    }
    last + kk
}

/// Smallest `dim` that holds the right eigenvector `(n, k)` up to tail mass [`ADEQUACY_TOL`].
pub fn right_required_dim(n: usize, k: i64, nu: f64) -> Result<usize> {
    check_nu(nu)?;
    let kk = k.unsigned_abs() as usize;
    if nu == 0.0 {
        return Ok(n + kk + 1);
    }
    let mut pr = Profiles::new(nu);
    Ok(scan_required_dim(kk, RIGHT_TAIL_TOL, true, |m| pr.right(n, kk, m)).max(kk + 1))
}

/// Smallest `dim` for which every pairing `Tr{left_m^(k) right_n^(k)}` with `m, n <= n_max`,
/// `|k| <= k_max` is complete to [`ADEQUACY_TOL`].
pub fn pairing_required_dim(n_max: usize, k_max: usize, nu: f64) -> Result<usize> {
    check_nu(nu)?;
    let mut pr = Profiles::new(nu);
    let mut need = n_max + k_max + 1;
    for kk in 0..=k_max {
        for n in 0..=n_max {
            for m in 0..=n_max {
                let d = scan_required_dim(kk, ADEQUACY_TOL, false, |s| {
                    let l = pr.left(m, kk, s);
                    l * pr.right(n, kk, s)
                });
                need = need.max(d);
            }
        }
    }
    Ok(need)
}

fn sector_operator(dim: usize, k: isize, values: &[f64]) -> FockOperator {
    let mut op = FockOperator::zeros(dim);
    let v: Vec<c64> = values.iter().map(|&x| c64::new(x, 0.0)).collect();
    op.set_sector(k, &v);
    op
}

fn check_sector(dim: usize, k: i64) -> Result<usize> {
    let kk = k.unsigned_abs() as usize;
    if dim <= kk {
        return Err(Error::Truncation {
            required: kk + 1,
            reason: format!("diagonal k = {k} does not fit in dim = {dim}"),
        });
    }
    Ok(kk)
}

/// Right eigenvector `rho_n^(k)` of the Liouvillian for thermal occupation `nu`.
pub fn right_eigenvector(n: usize, k: i64, nu: f64, dim: usize) -> Result<FockOperator> {
    check_nu(nu)?;
    let kk = check_sector(dim, k)?;
    let required = right_required_dim(n, k, nu)?;
    if dim < required {
        return Err(Error::Truncation {
            required,
            reason: format!("right eigenvector (n = {n}, k = {k}, nu = {nu}) has tail weight beyond dim = {dim}"),
        });
    }
    let mut pr = Profiles::new(nu);
    let d = pr.right_diag(n, kk, dim - kk);
    Ok(sector_operator(dim, k as isize, &d))
}

/// Left eigenvector `rho-check_n^(k)` of the Liouvillian, a polynomial observable truncated to `dim`.
///
/// At `nu = 0` this is the limit `C(a^+ a, n)` for `k = 0`.
pub fn left_eigenvector(n: usize, k: i64, nu: f64, dim: usize) -> Result<FockOperator> {
    check_nu(nu)?;
    let kk = check_sector(dim, k)?;
    if dim < n + kk + 1 {
        return Err(Error::Truncation {
            required: n + kk + 1,
            reason: format!("left eigenvector (n = {n}, k = {k}) needs levels up to n + |k|"),
        });
    }
    let mut pr = Profiles::new(nu);
    let d = pr.left_diag(n, kk, dim - kk);
    Ok(sector_operator(dim, -k as isize, &d))
}

/// Both eigenvectors and the eigenvalue for index `(n, k)`.
pub fn basis_element(n: usize, k: i64, p: &OscillatorParams, dim: usize) -> Result<DampingBasisElement> {
    p.validate()?;
    Ok(DampingBasisElement {
        n,
        k,
        right: right_eigenvector(n, k, p.nu, dim)?,
        left: left_eigenvector(n, k, p.nu, dim)?,
        eigenvalue: eigenvalue(n, k, p),
    })
}

fn interior_residual(r: &FockOperator, scale: f64) -> f64 {
    let d = r.dim();
    let mut worst = 0.0f64;
    for i in 0..d.saturating_sub(1) {
        for j in 0..d.saturating_sub(1) {
            worst = worst.max(r.get(i, j).norm());
        }
    }
    worst / scale.max(f64::MIN_POSITIVE)
}

impl DampingBasisElement {
    /// Eigen-equation residuals `(|L right - lambda right|, |left L - lambda left|)` on the
    /// levels untouched by the truncation, each relative to the largest entry of the vector.
    /// `l` must be the Liouvillian for `p` on the element's dimension.
    pub fn residuals(&self, l: &SuperOperator, p: &OscillatorParams) -> Result<(f64, f64)> {
        let r = &l.apply(&self.right)? - &(&self.right * self.eigenvalue);
        let lx = &left_action(&self.left, p)? - &(&self.left * self.eigenvalue);
        Ok((
            interior_residual(&r, self.right.max_abs()),
            interior_residual(&lx, self.left.max_abs()),
        ))
    }
}

fn block_index(n: usize, k: i64, n_max: usize, k_max: usize) -> usize {
    (k + k_max as i64) as usize * (n_max + 1) + n
}

/// Gram matrix `Tr{left_m^(k) right_n^(k')}` for `m, n <= n_max`, `|k|, |k'| <= k_max`.
///
/// Rows are indexed by `(k, m)` and columns by `(k', n)`, each as `(k + k_max)(n_max + 1) + n`.
pub fn duality_gram(n_max: usize, k_max: usize, nu: f64, dim: usize) -> Result<Mat<c64>> {
    let required = pairing_required_dim(n_max, k_max, nu)?;
    if dim < required {
        return Err(Error::Truncation {
            required,
            reason: format!("duality pairings for n <= {n_max}, |k| <= {k_max}, nu = {nu} are incomplete at dim = {dim}"),
        });
    }
    let basis = DampingBasis::new(nu, dim, n_max, k_max)?;
    let size = (n_max + 1) * (2 * k_max + 1);
    let mut g = Mat::zeros(size, size);
    for k in -(k_max as i64)..=k_max as i64 {
        let kk = k.unsigned_abs() as usize;
        for m in 0..=n_max {
            for n in 0..=n_max {
                let l = basis.left_diag(m, kk);
                let r = basis.right_diag(n, kk);
                let s: f64 = l.iter().zip(r).map(|(a, b)| a * b).sum();
                g[(block_index(m, k, n_max, k_max), block_index(n, k, n_max, k_max))] = c64::new(s, 0.0);
            }
        }
    }
    Ok(g)
}

/// Precomputed diagonals of both bases for `n <= n_max`, `|k| <= k_max` on `dim` levels.
///
/// Immutable after construction and safe to share between threads.
#[derive(Clone, Debug)]
pub struct DampingBasis {
    nu: f64,
    dim: usize,
    n_max: usize,
    k_max: usize,
    right: Vec<Vec<f64>>,
    left: Vec<Vec<f64>>,
}

impl DampingBasis {
    pub fn new(nu: f64, dim: usize, n_max: usize, k_max: usize) -> Result<Self> {
        check_nu(nu)?;
        if dim == 0 || k_max >= dim {
            return Err(Error::Truncation {
                required: k_max + 1,
                reason: format!("k_max = {k_max} does not fit in dim = {dim}"),
            });
        }
        let mut pr = Profiles::new(nu);
        let mut right = Vec::with_capacity((k_max + 1) * (n_max + 1));
        let mut left = Vec::with_capacity((k_max + 1) * (n_max + 1));
        for kk in 0..=k_max {
            let len = dim - kk;
            let mut r = vec![vec![0.0; len]; n_max + 1];
            let mut l = vec![vec![0.0; len]; n_max + 1];
            for m in 0..len {
                for (n, v) in pr.right_column(kk, m, n_max).into_iter().enumerate() {
                    r[n][m] = v;
                }
                for (n, v) in pr.left_column(kk, m, n_max).into_iter().enumerate() {
                    l[n][m] = v;
                }
            }
            right.extend(r);
            left.extend(l);
        }
        Ok(Self { nu, dim, n_max, k_max, right, left })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Entries of the right eigenvector `(n, +-K)` along its diagonal.
    pub fn right_diag(&self, n: usize, kk: usize) -> &[f64] {
        &self.right[kk * (self.n_max + 1) + n]
    }

    /// Entries of the left eigenvector `(n, +-K)` along its diagonal.
    pub fn left_diag(&self, n: usize, kk: usize) -> &[f64] {
        &self.left[kk * (self.n_max + 1) + n]
    }

    /// Coefficients `alpha_n^(k) = Tr{left_n^(k) X}`.
    pub fn expand(&self, x: &FockOperator) -> Result<Expansion> {
        x.check_dim(self.dim)?;
        let mut coeffs = vec![c64::new(0.0, 0.0); (self.n_max + 1) * (2 * self.k_max + 1)];
        for k in -(self.k_max as i64)..=self.k_max as i64 {
            let kk = k.unsigned_abs() as usize;
            let xs = x.sector(k as isize);
            for n in 0..=self.n_max {
                let l = self.left_diag(n, kk);
                coeffs[block_index(n, k, self.n_max, self.k_max)] =
                    l.iter().zip(&xs).map(|(a, b)| b * *a).sum();
            }
        }
        Ok(Expansion {
            nu: self.nu,
            n_max: self.n_max,
            k_max: self.k_max,
            coeffs,
        })
    }

    /// `sum_{n,k} w_n^(k) alpha_n^(k) rho_n^(k)` restricted to `dim` levels.
    fn combine(&self, e: &Expansion, weight: impl Fn(usize, i64) -> c64) -> Result<FockOperator> {
        if e.n_max > self.n_max || e.k_max > self.k_max || e.nu != self.nu {
            return Err(Error::Domain("expansion does not match this basis".into()));
        }
        let mut out = FockOperator::zeros(self.dim);
        for k in -(e.k_max as i64)..=e.k_max as i64 {
            let kk = k.unsigned_abs() as usize;
            let mut acc = vec![c64::new(0.0, 0.0); sector_len(self.dim, k as isize)];
            for n in 0..=e.n_max {
                let c = e.coefficient(n, k) * weight(n, k);
                if c == c64::new(0.0, 0.0) {
                    continue;
                }
                for (a, r) in acc.iter_mut().zip(self.right_diag(n, kk)) {
                    *a += c * *r;
                }
            }
            out.set_sector(k as isize, &acc);
        }
        Ok(out)
    }

    pub fn reconstruct(&self, e: &Expansion) -> Result<FockOperator> {
        self.combine(e, |_, _| c64::new(1.0, 0.0))
    }

    /// `sum alpha_n^(k) exp(lambda_n^(k) t) rho_n^(k)`
    pub fn evolve(&self, e: &Expansion, p: &OscillatorParams, t: f64) -> Result<FockOperator> {
        p.validate()?;
        check_finite("time", t)?;
        if p.nu != self.nu {
            return Err(Error::Domain("oscillator nu differs from the basis nu".into()));
        }
        self.combine(e, |n, k| (eigenvalue(n, k, p) * t).exp())
    }
}

/// Expansion coefficients `alpha_n^(k)` for `n <= n_max`, `|k| <= k_max`.
#[derive(Clone, Debug)]
pub struct Expansion {
    pub nu: f64,
    pub n_max: usize,
    pub k_max: usize,
    coeffs: Vec<c64>,
}

impl Expansion {
    pub fn coefficient(&self, n: usize, k: i64) -> c64 {
        if n > self.n_max || k.unsigned_abs() as usize > self.k_max {
            return c64::new(0.0, 0.0);
        }
        self.coeffs[block_index(n, k, self.n_max, self.k_max)]
    }
}

/// Coefficients `alpha_n^(k) = Tr{left_n^(k) X}` for `n <= n_max`, `|k| <= k_max`.
pub fn expand(x: &FockOperator, nu: f64, n_max: usize, k_max: usize) -> Result<Expansion> {
    DampingBasis::new(nu, x.dim(), n_max, k_max)?.expand(x)
}

fn occupied_k_max(x: &FockOperator) -> usize {
    let d = x.dim() as isize;
    (0..d)
        .rev()
        .find(|&k| !x.sector_is_zero(k) || !x.sector_is_zero(-k))
        .unwrap_or(0) as usize
}

/// Expansion with `k_max` set by the occupied diagonals of `X` and `n_max` grown until
/// the last [`ADAPTIVE_RUN`] orders each contribute less than `tol * max|X|`.
pub fn expand_adaptive(x: &FockOperator, nu: f64, tol: f64) -> Result<(DampingBasis, Expansion)> {
    check_finite("tolerance", tol)?;
    let k_max = occupied_k_max(x);
    let scale = x.max_abs().max(f64::MIN_POSITIVE);
    let mut n_max = 2 * ADAPTIVE_RUN;
    loop {
        let basis = DampingBasis::new(nu, x.dim(), n_max, k_max)?;
        let e = basis.expand(x)?;
        let mass = |n: usize| -> f64 {
            (-(k_max as i64)..=k_max as i64)
                .map(|k| {
                    let kk = k.unsigned_abs() as usize;
                    let peak = basis.right_diag(n, kk).iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    e.coefficient(n, k).norm() * peak
                })
                .sum()
        };
        if (n_max + 1 - ADAPTIVE_RUN..=n_max).all(|n| mass(n) < tol * scale) {
            return Ok((basis, e));
        }
        if n_max >= ADAPTIVE_N_CAP {
            return Err(Error::Numerical(format!(
                "damping-basis expansion did not converge by n = {ADAPTIVE_N_CAP}"
            )));
        }
        n_max *= 2;
    }
}

/// `exp(L t) X` through the spectral sum truncated at `n_max`, `k_max`.
pub fn evolve_spectral(
    x: &FockOperator,
    p: &OscillatorParams,
    t: f64,
    n_max: usize,
    k_max: usize,
) -> Result<FockOperator> {
    p.validate()?;
    let basis = DampingBasis::new(p.nu, x.dim(), n_max, k_max)?;
    let e = basis.expand(x)?;
    basis.evolve(&e, p, t)
}

/// Coefficient `b_n^(k)` of the Gaussian generating state in the right damping basis.
///
/// Written as a polynomial in `nu + 1 - kappa`, so the point `kappa = nu + 1`, where the
/// Laguerre argument diverges, is evaluated by its limit.
pub fn gaussian_coefficient(g: &GaussianAnsatz, nu: f64, n: usize, k: i64) -> Result<c64> {
    check_nu(nu)?;
    let mut pr = Profiles::new(nu);
    Ok(gaussian_coefficient_with(&mut pr, g, n, k))
}

fn gaussian_coefficient_with(pr: &mut Profiles, g: &GaussianAnsatz, n: usize, k: i64) -> c64 {
    let kk = k.unsigned_abs() as usize;
    pr.ensure(n + kk + 1);
    let delta = pr.nu + 1.0 - g.kappa;
    let y = g.alpha_conj * g.alpha;
    let (ln_y, arg_y) = (y.norm().ln(), y.arg());
    let ln_d = delta.abs().ln();
    let mut sum = c64::new(0.0, 0.0);
    let mut terms = Vec::with_capacity(n + 1);
    for j in 0..=n {
        if (n > j && delta == 0.0) || (j > 0 && y == c64::new(0.0, 0.0)) {
            continue;
        }
        let mut sign = if (n + j) % 2 == 0 { 1.0 } else { -1.0 };
        if delta < 0.0 && (n - j) % 2 == 1 {
            sign = -sign;
        }
        let mut l = pr.ln_binom(n + kk, n - j) - pr.lnf[j];
        if n > j {
            l += (n - j) as f64 * ln_d;
        }
        if j > 0 {
            l += j as f64 * ln_y;
        }
        terms.push((sign, l, j as f64 * arg_y));
    }
    let top = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return sum;
    }
    for (s, l, ph) in &terms {
        sum += c64::new(0.0, *ph).exp() * (s * (l - top).exp());
    }
    let pref = pr.lnf[n] - pr.lnf[n + kk] - n as f64 * pr.ln_nu1 + top;
    let mono = if k > 0 {
        g.alpha.powi(kk as i32)
    } else if k < 0 {
        g.alpha_conj.powi(kk as i32)
    } else {
        c64::new(1.0, 0.0)
    };
    sum * pref.exp() * mono
}

/// The Gaussian generating state `sum_{n,k} b_n^(k) rho_n^(k)` on `dim` levels.
///
/// Orders are added until [`ADAPTIVE_RUN`] consecutive terms each fall below `1e-12`.
pub fn gaussian_state(g: &GaussianAnsatz, nu: f64, dim: usize) -> Result<FockOperator> {
    check_nu(nu)?;
    if dim == 0 {
        return Err(Error::Domain("dim must be positive".into()));
    }
    const TERM_TOL: f64 = 1e-12;
    let mut pr = Profiles::new(nu);
    let mut out = FockOperator::zeros(dim);
    let mut quiet_k = 0;
    for kk in 0..dim {
        let mut column_mass = 0.0f64;
        let signs: &[i64] = if kk == 0 { &[1] } else { &[1, -1] };
        for &sgn in signs {
            let k = sgn * kk as i64;
            let mut acc = vec![c64::new(0.0, 0.0); dim - kk];
            let mut quiet = 0;
            let mut n = 0;
            while quiet < ADAPTIVE_RUN {
                if n > ADAPTIVE_N_CAP {
                    return Err(Error::Numerical(format!(
                        "Gaussian expansion (kappa = {}, nu = {nu}) does not converge",
                        g.kappa
                    )));
                }
                let b = gaussian_coefficient_with(&mut pr, g, n, k);
                let r = pr.right_diag(n, kk, dim - kk);
                let peak = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let mass = b.norm() * peak;
                if !mass.is_finite() {
                    return Err(Error::NonFinite("Gaussian expansion coefficient".into()));
                }
                column_mass = column_mass.max(mass);
                quiet = if mass < TERM_TOL { quiet + 1 } else { 0 };
                for (a, v) in acc.iter_mut().zip(&r) {
                    *a += b * *v;
                }
                n += 1;
            }
            out.set_sector(k as isize, &acc);
        }
        quiet_k = if column_mass < TERM_TOL { quiet_k + 1 } else { 0 };
        if quiet_k >= 2 {
            break;
        }
    }
    Ok(out)
}

/// Refit `(kappa, alpha, alpha*)` from the first and second normally ordered moments of `X`.
pub fn fit_gaussian(x: &FockOperator) -> Result<GaussianAnsatz> {
    let dim = x.dim();
    let tr = x.trace();
    if tr.norm() == 0.0 {
        return Err(Error::Domain("operator has vanishing trace".into()));
    }
    let a = annihilation(dim)?;
    let ad = a.dagger();
    let mean = |op: &FockOperator| -> c64 { (op * x).trace() / tr };
    let alpha = mean(&a);
    let alpha_conj = mean(&ad);
    let kappa = mean(&number(dim)?) - alpha * alpha_conj + 1.0;
    GaussianAnsatz::new(kappa.re, alpha, alpha_conj)
}
