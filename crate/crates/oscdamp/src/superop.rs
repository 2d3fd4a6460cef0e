//! Linear maps on Fock operators.
//!
//! Maps that never mix diagonals of the operator they act on (every physical map
//! in this crate) are stored as one block per diagonal offset `k = row - col`.
//! Anything else falls back to the full column-stacked `dim^2 x dim^2` matrix.

use std::sync::OnceLock;

use faer::{c64, Mat, MatRef};

use crate::error::{check_finite, Error, Result};
use crate::fock::{sector_len, sector_pos, FockOperator};
use crate::linalg;

/// Largest `dim` for which a full column-stacked matrix is built.
pub const DENSE_DIM_LIMIT: usize = 48;

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
const ONE: c64 = c64 { re: 1.0, im: 0.0 };

#[derive(Clone, Debug)]
enum Repr {
    Dense(Mat<c64>),
    Banded(Vec<Mat<c64>>),
}

#[derive(Clone, Debug)]
pub struct SuperOperator {
    dim: usize,
    repr: Repr,
}

fn block_index(dim: usize, k: isize) -> usize {
    (k + dim as isize - 1) as usize
}

fn offsets(dim: usize) -> impl Iterator<Item = isize> {
    let d = dim as isize;
    -(d - 1)..d
}

impl SuperOperator {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            repr: Repr::Banded(
                offsets(dim)
                    .map(|k| {
                        let n = sector_len(dim, k);
                        Mat::zeros(n, n)
                    })
                    .collect(),
            ),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            repr: Repr::Banded(
                offsets(dim)
                    .map(|k| linalg::identity(sector_len(dim, k)))
                    .collect(),
            ),
        }
    }

    /// Wrap a column-stacked `dim^2 x dim^2` matrix.
    pub fn from_dense(dim: usize, mat: Mat<c64>) -> Result<Self> {
        if mat.nrows() != dim * dim || mat.ncols() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: mat.nrows(),
            });
        }
        Ok(Self {
            dim,
            repr: Repr::Dense(mat),
        })
    }

    /// `X -> L X R`
    pub fn sandwich(l: &FockOperator, r: &FockOperator) -> Result<Self> {
        let dim = l.dim();
        r.check_dim(dim)?;
        if dim == 0 {
            return Err(Error::Domain("dim must be at least 1".into()));
        }
        match (l.diagonal_offset(), r.diagonal_offset()) {
            (Some(dl), Some(dr)) if dl + dr == 0 || l.max_abs() == 0.0 || r.max_abs() == 0.0 => {
                let mut out = Self::zero(dim);
                if l.max_abs() == 0.0 || r.max_abs() == 0.0 {
                    return Ok(out);
                }
                if let Repr::Banded(blocks) = &mut out.repr {
                    for k in offsets(dim) {
                        let b = &mut blocks[block_index(dim, k)];
                        for s in 0..sector_len(dim, k) {
                            let (i, j) = sector_pos(k, s);
                            let p = i as isize - dl;
                            let q = j as isize + dr;
                            if p < 0 || q < 0 || p >= dim as isize || q >= dim as isize {
                                continue;
                            }
                            let (p, q) = (p as usize, q as usize);
                            b[(s, p.min(q))] += l.get(i, p) * r.get(q, j);
                        }
                    }
                }
                Ok(out)
            }
            _ => {
                Self::check_dense_dim(dim)?;
                let n2 = dim * dim;
                let mat = Mat::from_fn(n2, n2, |row, col| {
                    let (i, j) = (row % dim, row / dim);
                    let (p, q) = (col % dim, col / dim);
                    l.get(i, p) * r.get(q, j)
                });
                Ok(Self {
                    dim,
                    repr: Repr::Dense(mat),
                })
            }
        }
    }

    /// `X -> H X`
    pub fn left(h: &FockOperator) -> Result<Self> {
        Self::sandwich(h, &FockOperator::identity(h.dim()))
    }

    /// `X -> X H`
    pub fn right(h: &FockOperator) -> Result<Self> {
        Self::sandwich(&FockOperator::identity(h.dim()), h)
    }

    fn check_dense_dim(dim: usize) -> Result<()> {
        if dim > DENSE_DIM_LIMIT {
            Err(Error::Domain(format!(
                "map mixes diagonal offsets; full superoperator limited to dim <= {DENSE_DIM_LIMIT}, got {dim}"
            )))
        } else {
            Ok(())
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_banded(&self) -> bool {
        matches!(self.repr, Repr::Banded(_))
    }

    /// Block acting on diagonal `k`, if the map preserves offsets.
    pub fn block(&self, k: isize) -> Option<MatRef<'_, c64>> {
        match &self.repr {
            Repr::Banded(b) if k.unsigned_abs() < self.dim => Some(b[block_index(self.dim, k)].as_ref()),
            _ => None,
        }
    }

    /// Full column-stacked matrix.
    pub fn to_dense(&self) -> Result<Mat<c64>> {
        match &self.repr {
            Repr::Dense(m) => Ok(m.clone()),
            Repr::Banded(blocks) => {
                Self::check_dense_dim(self.dim)?;
                let d = self.dim;
                let mut m = Mat::zeros(d * d, d * d);
                for k in offsets(d) {
                    let b = &blocks[block_index(d, k)];
                    for s in 0..b.nrows() {
                        let (i, j) = sector_pos(k, s);
                        for t in 0..b.ncols() {
                            let (p, q) = sector_pos(k, t);
                            m[(i + j * d, p + q * d)] = b[(s, t)];
                        }
                    }
                }
                Ok(m)
            }
        }
    }

    fn densified(&self) -> Result<Self> {
        Ok(Self {
            dim: self.dim,
            repr: Repr::Dense(self.to_dense()?),
        })
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            })
        } else {
            Ok(())
        }
    }

    fn zip_with(
        &self,
        other: &Self,
        f: impl Fn(MatRef<'_, c64>, MatRef<'_, c64>) -> Mat<c64>,
    ) -> Result<Self> {
        self.check_same(other)?;
        match (&self.repr, &other.repr) {
            (Repr::Banded(a), Repr::Banded(b)) => Ok(Self {
                dim: self.dim,
                repr: Repr::Banded(a.iter().zip(b).map(|(x, y)| f(x.as_ref(), y.as_ref())).collect()),
            }),
            (Repr::Dense(a), Repr::Dense(b)) => Ok(Self {
                dim: self.dim,
                repr: Repr::Dense(f(a.as_ref(), b.as_ref())),
            }),
            _ => self.densified()?.zip_with(&other.densified()?, f),
        }
    }

    /// Combine two maps block by block with a fallible function.
    pub fn zip_blocks(
        &self,
        other: &Self,
        f: impl Fn(MatRef<'_, c64>, MatRef<'_, c64>) -> Result<Mat<c64>>,
    ) -> Result<Self> {
        self.check_same(other)?;
        match (&self.repr, &other.repr) {
            (Repr::Banded(a), Repr::Banded(b)) => Ok(Self {
                dim: self.dim,
                repr: Repr::Banded(
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| f(x.as_ref(), y.as_ref()))
                        .collect::<Result<_>>()?,
                ),
            }),
            (Repr::Dense(a), Repr::Dense(b)) => Ok(Self {
                dim: self.dim,
                repr: Repr::Dense(f(a.as_ref(), b.as_ref())?),
            }),
            _ => self.densified()?.zip_blocks(&other.densified()?, f),
        }
    }

    pub fn map_blocks(&self, f: impl Fn(MatRef<'_, c64>) -> Result<Mat<c64>>) -> Result<Self> {
        let repr = match &self.repr {
            Repr::Dense(m) => Repr::Dense(f(m.as_ref())?),
            Repr::Banded(b) => Repr::Banded(b.iter().map(|m| f(m.as_ref())).collect::<Result<_>>()?),
        };
        Ok(Self { dim: self.dim, repr })
    }

    /// `self + s * other`
    pub fn add_scaled(&self, s: c64, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| linalg::add_scaled(a, s, b))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.add_scaled(ONE, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add_scaled(c64::new(-1.0, 0.0), other)
    }

    pub fn scale(&self, s: c64) -> Self {
        self.map_blocks(|m| Ok(linalg::scaled(m, s)))
            .expect("scaling cannot fail")
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(c64::new(s, 0.0))
    }

    /// `self o other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn apply(&self, x: &FockOperator) -> Result<FockOperator> {
        x.check_dim(self.dim)?;
        let d = self.dim;
        match &self.repr {
            Repr::Dense(m) => {
                let v = linalg::column(&x.vectorize());
                let y = m * &v;
                Ok(FockOperator::from_fn(d, |i, j| y[(i + j * d, 0)]))
            }
            Repr::Banded(blocks) => {
                let mut out = FockOperator::zeros(d);
                for k in offsets(d) {
                    if x.sector_is_zero(k) {
                        continue;
                    }
                    let v = linalg::column(&x.sector(k));
                    let y = &blocks[block_index(d, k)] * &v;
                    out.set_sector(k, &(0..y.nrows()).map(|s| y[(s, 0)]).collect::<Vec<_>>());
                }
                Ok(out)
            }
        }
    }

    /// The operator `Y` with `Tr{Y rho} = Tr{X self(rho)}` for all `rho`.
    pub fn apply_left(&self, x: &FockOperator) -> Result<FockOperator> {
        x.check_dim(self.dim)?;
        let d = self.dim;
        match &self.repr {
            Repr::Dense(m) => {
                let xt = linalg::column(&x.transpose().vectorize());
                let y = m.transpose() * &xt;
                Ok(FockOperator::from_fn(d, |i, j| y[(j + i * d, 0)]))
            }
            Repr::Banded(blocks) => {
                let mut out = FockOperator::zeros(d);
                for k in offsets(d) {
                    if x.sector_is_zero(-k) {
                        continue;
                    }
                    let v = linalg::column(&x.sector(-k));
                    let y = blocks[block_index(d, k)].transpose() * &v;
                    out.set_sector(-k, &(0..y.nrows()).map(|s| y[(s, 0)]).collect::<Vec<_>>());
                }
                Ok(out)
            }
        }
    }

    /// `exp(t * self)`
    pub fn exp(&self, t: f64) -> Result<Self> {
        check_finite("propagation time", t)?;
        self.map_blocks(|m| linalg::expm(linalg::scaled(m, c64::new(t, 0.0)).as_ref()))
    }

    /// `exp(t * self)` through eigendecompositions of the blocks.
    pub fn exp_eig(&self, t: f64) -> Result<Self> {
        check_finite("propagation time", t)?;
        self.map_blocks(|m| {
            let es = linalg::eigensystem(m, 1e10)?;
            Ok(es.apply_function(|l| (l * t).exp()))
        })
    }

    /// `exp(t * self) x`, exponentiating only the diagonals that `x` occupies.
    pub fn propagate(&self, x: &FockOperator, t: f64) -> Result<FockOperator> {
        check_finite("propagation time", t)?;
        x.check_dim(self.dim)?;
        let d = self.dim;
        match &self.repr {
            Repr::Dense(m) => {
                let e = linalg::expm(linalg::scaled(m.as_ref(), c64::new(t, 0.0)).as_ref())?;
                let v = linalg::column(&x.vectorize());
                let y = &e * &v;
                Ok(FockOperator::from_fn(d, |i, j| y[(i + j * d, 0)]))
            }
            Repr::Banded(blocks) => {
                let mut out = FockOperator::zeros(d);
                for k in offsets(d) {
                    if x.sector_is_zero(k) {
                        continue;
                    }
                    let b = &blocks[block_index(d, k)];
                    let e = linalg::expm(linalg::scaled(b.as_ref(), c64::new(t, 0.0)).as_ref())?;
                    let y = &e * &linalg::column(&x.sector(k));
                    out.set_sector(k, &(0..y.nrows()).map(|s| y[(s, 0)]).collect::<Vec<_>>());
                }
                Ok(out)
            }
        }
    }

    /// `Tr{obs exp(j dt self) rho}` for `j = 0..=steps`, touching only the
    /// diagonals that both `rho` and `obs` see.
    pub fn expectation_series(
        &self,
        obs: &FockOperator,
        rho: &FockOperator,
        dt: f64,
        steps: usize,
    ) -> Result<Vec<c64>> {
        check_finite("time step", dt)?;
        obs.check_dim(self.dim)?;
        rho.check_dim(self.dim)?;
        let d = self.dim;
        let mut out = vec![ZERO; steps + 1];
        match &self.repr {
            Repr::Dense(_) => {
                let e = self.exp(dt)?;
                let mut x = rho.clone();
                for slot in out.iter_mut() {
                    *slot = crate::fock::expectation(obs, &x)?;
                    x = e.apply(&x)?;
                }
            }
            Repr::Banded(blocks) => {
                for k in offsets(d) {
                    if rho.sector_is_zero(k) || obs.sector_is_zero(-k) {
                        continue;
                    }
                    let b = &blocks[block_index(d, k)];
                    let e = linalg::expm(linalg::scaled(b.as_ref(), c64::new(dt, 0.0)).as_ref())?;
                    let w = obs.sector(-k);
                    let mut v = linalg::column(&rho.sector(k));
                    for slot in out.iter_mut() {
                        *slot += (0..w.len()).map(|s| w[s] * v[(s, 0)]).sum::<c64>();
                        v = &e * &v;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn eigenvalues(&self) -> Result<Vec<c64>> {
        match &self.repr {
            Repr::Dense(m) => linalg::eigenvalues(m.as_ref()),
            Repr::Banded(blocks) => {
                let mut all = Vec::new();
                for b in blocks {
                    all.extend(linalg::eigenvalues(b.as_ref())?);
                }
                Ok(all)
            }
        }
    }

    /// Largest entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        let diff = self.sub(other)?;
        Ok(diff.max_abs())
    }

    pub fn max_abs(&self) -> f64 {
        match &self.repr {
            Repr::Dense(m) => linalg::max_abs(m.as_ref()),
            Repr::Banded(b) => b.iter().map(|m| linalg::max_abs(m.as_ref())).fold(0.0, f64::max),
        }
    }

    /// Unit-trace null vector, assuming the kernel is one-dimensional.
    pub fn steady_state(&self) -> Result<FockOperator> {
        let d = self.dim;
        let (m, weights): (Mat<c64>, Vec<usize>) = match &self.repr {
            Repr::Banded(b) => (b[block_index(d, 0)].clone(), (0..d).collect()),
            Repr::Dense(m) => (m.clone(), (0..d).map(|i| i + i * d).collect()),
        };
        let n = m.nrows();
        let mut sys = m.clone();
        let mut rhs = Mat::<c64>::zeros(n, 1);
        for j in 0..n {
            sys[(0, j)] = ZERO;
        }
        for &w in &weights {
            sys[(0, w)] = ONE;
        }
        rhs[(0, 0)] = ONE;
        let x = linalg::solve(sys.as_ref(), rhs.as_ref())
            .map_err(|_| Error::Numerical("steady state is not unique".into()))?;
        let resid = linalg::max_abs((&m * &x).as_ref());
        let scale = linalg::max_abs(m.as_ref()) * linalg::max_abs(x.as_ref());
        if !(resid <= 1e-8 * scale.max(1e-300)) {
            return Err(Error::Numerical(format!(
                "steady-state residual {resid:.3e} too large"
            )));
        }
        Ok(match &self.repr {
            Repr::Banded(_) => FockOperator::from_diagonal(&(0..n).map(|s| x[(s, 0)]).collect::<Vec<_>>()),
            Repr::Dense(_) => FockOperator::from_fn(d, |i, j| x[(i + j * d, 0)]),
        })
    }

    /// Matrix acting on one diagonal (`Some(k)`), or the full matrix (`None`).
    pub(crate) fn restricted(&self, sector: Option<isize>) -> Result<Mat<c64>> {
        match (sector, &self.repr) {
            (Some(k), Repr::Banded(b)) => Ok(b[block_index(self.dim, k)].clone()),
            (Some(_), Repr::Dense(_)) => Err(Error::Domain("map does not preserve diagonals".into())),
            (None, _) => self.to_dense(),
        }
    }
}

/// Column representation of `x` within a restriction.
pub(crate) fn restrict_vector(x: &FockOperator, sector: Option<isize>) -> Mat<c64> {
    match sector {
        Some(k) => linalg::column(&x.sector(k)),
        None => linalg::column(&x.vectorize()),
    }
}

pub(crate) fn expand_vector(v: MatRef<'_, c64>, dim: usize, sector: Option<isize>) -> FockOperator {
    match sector {
        Some(k) => {
            let mut x = FockOperator::zeros(dim);
            x.set_sector(k, &(0..v.nrows()).map(|s| v[(s, 0)]).collect::<Vec<_>>());
            x
        }
        None => FockOperator::from_fn(dim, |i, j| v[(i + j * dim, 0)]),
    }
}

/// Trace of a restricted column.
pub(crate) fn restricted_trace(v: MatRef<'_, c64>, dim: usize, sector: Option<isize>) -> c64 {
    match sector {
        Some(0) => (0..v.nrows()).map(|s| v[(s, 0)]).sum(),
        Some(_) => ZERO,
        None => (0..dim).map(|i| v[(i + i * dim, 0)]).sum(),
    }
}

/// Choose the smallest restriction that holds `x` under all `maps`.
pub(crate) fn common_restriction(maps: &[&SuperOperator], x: &FockOperator) -> Option<isize> {
    if maps.iter().all(|m| m.is_banded()) {
        if let Some(k) = x.diagonal_offset() {
            return Some(k);
        }
    }
    None
}

/// Cached propagator `x -> exp(t S) x` for arbitrary `t >= 0`.
///
/// Exponentials over a doubling ladder of step sizes are composed to the requested
/// time, and the sub-step remainder is applied by a short Taylor series.
pub struct Propagator {
    op: SuperOperator,
    base: f64,
    levels: usize,
    ladders: Vec<OnceLock<Result<linalg::ExpLadder>>>,
}

impl Propagator {
    pub fn new(op: SuperOperator, horizon: f64) -> Result<Self> {
        check_finite("propagator horizon", horizon)?;
        let norm = match &op.repr {
            Repr::Dense(m) => linalg::norm1(m.as_ref()),
            Repr::Banded(b) => b.iter().map(|m| linalg::norm1(m.as_ref())).fold(0.0, f64::max),
        };
        let base = linalg::ladder_base(norm);
        let levels = linalg::ladder_levels(base, horizon);
        let count = match &op.repr {
            Repr::Dense(_) => 1,
            Repr::Banded(b) => b.len(),
        };
        Ok(Self {
            op,
            base,
            levels,
            ladders: (0..count).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn operator(&self) -> &SuperOperator {
        &self.op
    }

    fn ladder(&self, slot: usize) -> Result<&linalg::ExpLadder> {
        let cell = self.ladders[slot].get_or_init(|| {
            let generator = match &self.op.repr {
                Repr::Dense(m) => m.clone(),
                Repr::Banded(b) => b[slot].clone(),
            };
            linalg::ExpLadder::new(generator, self.base, self.levels)
        });
        cell.as_ref().map_err(|e| e.clone())
    }

    fn advance(&self, slot: usize, v: Mat<c64>, t: f64) -> Result<Mat<c64>> {
        Ok(self.ladder(slot)?.apply(v, t))
    }

    pub fn propagate(&self, x: &FockOperator, t: f64) -> Result<FockOperator> {
        check_finite("propagation time", t)?;
        if t < 0.0 {
            return Err(Error::Domain("negative propagation time".into()));
        }
        let d = self.op.dim;
        x.check_dim(d)?;
        match &self.op.repr {
            Repr::Dense(_) => {
                let v = self.advance(0, linalg::column(&x.vectorize()), t)?;
                Ok(FockOperator::from_fn(d, |i, j| v[(i + j * d, 0)]))
            }
            Repr::Banded(_) => {
                let mut out = FockOperator::zeros(d);
                for k in offsets(d) {
                    if x.sector_is_zero(k) {
                        continue;
                    }
                    let v = self.advance(block_index(d, k), linalg::column(&x.sector(k)), t)?;
                    out.set_sector(k, &(0..v.nrows()).map(|s| v[(s, 0)]).collect::<Vec<_>>());
                }
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{annihilation, number};
    use proptest::prelude::*;

    fn random_op(dim: usize, seed: u64) -> FockOperator {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        FockOperator::from_fn(dim, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            c64::new(a, b)
        })
    }

    #[test]
    fn sandwich_matches_matrix_products() {
        let dim = 6;
        let a = annihilation(dim).unwrap();
        let x = random_op(dim, 3);
        let s = SuperOperator::sandwich(&a, &a.dagger()).unwrap();
        assert!(s.is_banded());
        let want = &(&a * &x) * &a.dagger();
        assert!((&s.apply(&x).unwrap() - &want).max_abs() < 1e-14);
        let g = random_op(dim, 9);
        let sd = SuperOperator::sandwich(&g, &a).unwrap();
        assert!(!sd.is_banded());
        let want = &(&g * &x) * &a;
        assert!((&sd.apply(&x).unwrap() - &want).max_abs() < 1e-13);
    }

    #[test]
    fn column_stacking_is_kronecker_product() {
        let dim = 3;
        let l = random_op(dim, 1);
        let r = random_op(dim, 2);
        let m = SuperOperator::sandwich(&l, &r).unwrap().to_dense().unwrap();
        for i in 0..dim {
            for j in 0..dim {
                for p in 0..dim {
                    for q in 0..dim {
                        let want = r.get(q, j) * l.get(i, p);
                        assert!((m[(i + j * dim, p + q * dim)] - want).norm() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn banded_and_dense_agree() {
        let dim = 5;
        let a = annihilation(dim).unwrap();
        let n = number(dim).unwrap();
        let s = SuperOperator::sandwich(&a.dagger(), &a)
            .unwrap()
            .add_scaled(c64::new(-0.5, 0.2), &SuperOperator::left(&n).unwrap())
            .unwrap();
        let dense = SuperOperator::from_dense(dim, s.to_dense().unwrap()).unwrap();
        let x = random_op(dim, 5);
        assert!((&s.apply(&x).unwrap() - &dense.apply(&x).unwrap()).max_abs() < 1e-14);
        let e1 = s.exp(0.7).unwrap().apply(&x).unwrap();
        let e2 = dense.exp(0.7).unwrap().apply(&x).unwrap();
        assert!((&e1 - &e2).max_abs() < 1e-12);
        let p = s.propagate(&x, 0.7).unwrap();
        assert!((&e1 - &p).max_abs() < 1e-12);
    }

    #[test]
    fn left_action_is_adjoint_under_trace() {
        let dim = 5;
        let a = annihilation(dim).unwrap();
        let s = SuperOperator::sandwich(&a, &a.dagger())
            .unwrap()
            .add(&SuperOperator::left(&number(dim).unwrap()).unwrap())
            .unwrap();
        let x = random_op(dim, 11);
        let rho = random_op(dim, 12);
        let lhs = crate::fock::expectation(&x, &s.apply(&rho).unwrap()).unwrap();
        let rhs = crate::fock::expectation(&s.apply_left(&x).unwrap(), &rho).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
        let d = SuperOperator::from_dense(dim, s.to_dense().unwrap()).unwrap();
        let rhs2 = crate::fock::expectation(&d.apply_left(&x).unwrap(), &rho).unwrap();
        assert!((lhs - rhs2).norm() < 1e-12);
    }

    #[test]
    fn propagator_ladder_matches_direct_exponential() {
        let dim = 6;
        let a = annihilation(dim).unwrap();
        let s = SuperOperator::sandwich(&a, &a.dagger())
            .unwrap()
            .scale_real(2.0)
            .sub(&SuperOperator::left(&(&a.dagger() * &a)).unwrap())
            .unwrap()
            .sub(&SuperOperator::right(&(&a.dagger() * &a)).unwrap())
            .unwrap();
        let prop = Propagator::new(s.clone(), 10.0).unwrap();
        let x = random_op(dim, 4);
        for &t in &[0.0, 1e-7, 0.3141, 2.0, 7.77, 23.5] {
            let want = s.propagate(&x, t).unwrap();
            let got = prop.propagate(&x, t).unwrap();
            assert!((&want - &got).max_abs() < 1e-9 * want.max_abs().max(1.0), "t = {t}");
        }
    }

    #[test]
    fn exponential_routes_agree() {
        let dim = 5;
        let a = annihilation(dim).unwrap();
        let s = SuperOperator::sandwich(&a, &a.dagger())
            .unwrap()
            .add_scaled(c64::new(0.0, -0.3), &SuperOperator::left(&number(dim).unwrap()).unwrap())
            .unwrap()
            .sub(&SuperOperator::right(&(&a.dagger() * &a)).unwrap().scale_real(0.5))
            .unwrap();
        let e1 = s.exp(1.3).unwrap();
        let e2 = s.exp_eig(1.3).unwrap();
        assert!(e1.max_abs_diff(&e2).unwrap() < 1e-9);
    }

    #[test]
    fn dense_limit_enforced() {
        let dim = DENSE_DIM_LIMIT + 1;
        let g = FockOperator::from_fn(dim, |_, _| c64::new(1.0, 0.0));
        assert!(SuperOperator::sandwich(&g, &g).is_err());
    }

    proptest! {
        #[test]
        fn composition_matches_sequential_application(seed in 0u64..1000) {
            let dim = 4;
            let a = annihilation(dim).unwrap();
            let l1 = SuperOperator::sandwich(&a, &a.dagger()).unwrap();
            let l2 = SuperOperator::left(&random_op(dim, seed).dagger()).unwrap();
            let x = random_op(dim, seed + 7);
            let c = l1.compose(&l2).unwrap();
            let want = l1.apply(&l2.apply(&x).unwrap()).unwrap();
            prop_assert!((&c.apply(&x).unwrap() - &want).max_abs() < 1e-12);
        }
    }
}
