//! Amplitude-damping Liouvillian of a thermally coupled oscillator.

use faer::c64;

use crate::error::{check_finite, Error, Result};
use crate::fock::{annihilation, number, DensityMatrix, FockOperator};
use crate::superop::SuperOperator;

/// Oscillator frequency `omega`, energy decay rate `A` and thermal occupation `nu`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillatorParams {
    pub omega: f64,
    pub decay: f64,
    pub nu: f64,
}

impl OscillatorParams {
    pub fn new(omega: f64, decay: f64, nu: f64) -> Result<Self> {
        let p = Self { omega, decay, nu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("omega", self.omega)?;
        check_finite("decay rate", self.decay)?;
        check_finite("nu", self.nu)?;
        if self.decay <= 0.0 {
            return Err(Error::Domain(format!("decay rate {} must be positive", self.decay)));
        }
        if self.nu < 0.0 {
            return Err(Error::Domain(format!("nu = {} must be non-negative", self.nu)));
        }
        Ok(())
    }
}

/// `L rho = i w [rho, n] - A/2 (nu+1)(n rho - 2 a rho a^+ + rho n)
///          - A/2 nu (a a^+ rho - 2 a^+ rho a + rho a a^+)`
pub fn build_liouvillian(p: &OscillatorParams, dim: usize) -> Result<SuperOperator> {
    p.validate()?;
    let a = annihilation(dim)?;
    let ad = a.dagger();
    let n = number(dim)?;
    let aad = &a * &ad;
    let down = 0.5 * p.decay * (p.nu + 1.0);
    let up = 0.5 * p.decay * p.nu;
    let l = SuperOperator::right(&n)?
        .sub(&SuperOperator::left(&n)?)?
        .scale(c64::new(0.0, p.omega));
    let l = l
        .add_scaled(c64::new(-down, 0.0), &SuperOperator::left(&n)?)?
        .add_scaled(c64::new(-down, 0.0), &SuperOperator::right(&n)?)?
        .add_scaled(c64::new(2.0 * down, 0.0), &SuperOperator::sandwich(&a, &ad)?)?;
    let l = l
        .add_scaled(c64::new(-up, 0.0), &SuperOperator::left(&aad)?)?
        .add_scaled(c64::new(-up, 0.0), &SuperOperator::right(&aad)?)?
        .add_scaled(c64::new(2.0 * up, 0.0), &SuperOperator::sandwich(&ad, &a)?)?;
    Ok(l)
}

/// Action of the Liouvillian from the left, `X L`, defined by `Tr{(X L) rho} = Tr{X (L rho)}`.
pub fn left_action(x: &FockOperator, p: &OscillatorParams) -> Result<FockOperator> {
    p.validate()?;
    let dim = x.dim();
    let a = annihilation(dim)?;
    let ad = a.dagger();
    let n = number(dim)?;
    let aad = &a * &ad;
    let comm = &(&n * x) - &(x * &n);
    let damp = &(&(x * &n) + &(&n * x)) - &(&(&(&ad * x) * &a) * 2.0);
    let pump = &(&(x * &aad) + &(&aad * x)) - &(&(&(&a * x) * &ad) * 2.0);
    let down = 0.5 * p.decay * (p.nu + 1.0);
    let up = 0.5 * p.decay * p.nu;
    Ok(&(&(&comm * c64::new(0.0, p.omega)) - &(&damp * down)) - &(&pump * up))
}

/// `lambda_n^(k) = -i k omega - (n + |k|/2) A`
pub fn eigenvalue(n: usize, k: i64, p: &OscillatorParams) -> c64 {
    c64::new(
        -(n as f64 + 0.5 * k.unsigned_abs() as f64) * p.decay,
        -(k as f64) * p.omega,
    )
}

/// Hamiltonian `H` (in units with hbar = 1) and jump operators `V_j`.
#[derive(Clone, Debug)]
pub struct LindbladSpec {
    pub hamiltonian: FockOperator,
    pub jumps: Vec<FockOperator>,
}

/// `L rho = i [rho, H] + sum_j ([V_j^+, rho V_j] + [V_j^+ rho, V_j])`
pub fn build_lindblad(spec: &LindbladSpec) -> Result<SuperOperator> {
    let h = &spec.hamiltonian;
    let dim = h.dim();
    if h.hermiticity_residual() > 1e-12 * h.max_abs().max(1.0) {
        return Err(Error::Domain("Hamiltonian is not Hermitian".into()));
    }
    let mut l = SuperOperator::right(h)?
        .sub(&SuperOperator::left(h)?)?
        .scale(c64::new(0.0, 1.0));
    for v in &spec.jumps {
        v.check_dim(dim)?;
        let vd = v.dagger();
        let vvd = v * &vd;
        l = l
            .add_scaled(c64::new(2.0, 0.0), &SuperOperator::sandwich(&vd, v)?)?
            .sub(&SuperOperator::left(&vvd)?)?
            .sub(&SuperOperator::right(&vvd)?)?;
    }
    Ok(l)
}

/// Lindblad data reproducing [`build_liouvillian`]: `H = omega a^+ a`,
/// `V_1 = sqrt(A(nu+1)/2) a^+`, `V_2 = sqrt(A nu / 2) a`.
pub fn damping_lindblad_spec(p: &OscillatorParams, dim: usize) -> Result<LindbladSpec> {
    p.validate()?;
    let a = annihilation(dim)?;
    Ok(LindbladSpec {
        hamiltonian: &number(dim)? * p.omega,
        jumps: vec![
            &a.dagger() * (0.5 * p.decay * (p.nu + 1.0)).sqrt(),
            &a * (0.5 * p.decay * p.nu).sqrt(),
        ],
    })
}

/// Generator `rho -> V V^+ rho - 2 V^+ rho V + rho V V^+` (wrong sign of the Lindblad sum).
pub fn non_lindblad_generator(v: &FockOperator) -> Result<SuperOperator> {
    let vd = v.dagger();
    let vvd = v * &vd;
    SuperOperator::left(&vvd)?
        .add(&SuperOperator::right(&vvd)?)?
        .add_scaled(c64::new(-2.0, 0.0), &SuperOperator::sandwich(&vd, v)?)
}

/// Probability of `psi_1 = V^+ psi_0` after one Euler step `dt` of the non-Lindblad
/// generator, starting from `|psi_0><psi_0|`.
///
/// When `psi_1` is orthogonal to `psi_0` and to `psi_2 = V V^+ psi_0` the result is
/// `-2 dt <psi_1|psi_1>`.
pub fn non_lindblad_demo(v: &FockOperator, psi0: &[c64], dt: f64) -> Result<f64> {
    check_finite("dt", dt)?;
    let dim = v.dim();
    if psi0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: psi0.len(),
        });
    }
    let norm0: f64 = psi0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm0 == 0.0 {
        return Err(Error::Domain("zero initial state".into()));
    }
    let psi0: Vec<c64> = psi0.iter().map(|c| c / norm0).collect();
    let vd = v.dagger();
    let psi1: Vec<c64> = (0..dim)
        .map(|i| (0..dim).map(|j| vd.get(i, j) * psi0[j]).sum())
        .collect();
    let norm1: f64 = psi1.iter().map(|c| c.norm_sqr()).sum();
    if norm1 == 0.0 {
        return Err(Error::Domain("V^+ annihilates the initial state".into()));
    }
    let rho0 = DensityMatrix::pure(&psi0)?;
    let g = non_lindblad_generator(v)?;
    let step = rho0.as_operator() + &(&g.apply(rho0.as_operator())? * dt);
    let mut amp = c64::new(0.0, 0.0);
    for i in 0..dim {
        for j in 0..dim {
            amp += psi1[i].conj() * step.get(i, j) * psi1[j];
        }
    }
    Ok(amp.re / norm1)
}

/// Residual of the stationarity recurrence for a diagonal `f(m)`:
/// `(m+1)[(nu+1) f(m+1) - nu f(m)] - m[(nu+1) f(m) - nu f(m-1)]`.
pub fn detailed_balance_residual(f: &[f64], p: &OscillatorParams) -> Result<Vec<f64>> {
    p.validate()?;
    if f.len() < 2 {
        return Err(Error::Domain("need at least two populations".into()));
    }
    let nu = p.nu;
    let flux = |m: usize| -> f64 {
        if m == 0 {
            0.0
        } else {
            m as f64 * ((nu + 1.0) * f[m] - nu * f[m - 1])
        }
    };
    Ok((0..f.len() - 1).map(|m| flux(m + 1) - flux(m)).collect())
}
