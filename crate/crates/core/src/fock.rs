//! Truncated Fock-space kernel.
//!
//! Every mode of a simulation shares one photon cutoff `n_max`, so a state of
//! `M` modes lives in a space of dimension `(n_max + 1)^M`. Basis index
//! ordering is big-endian in the modes: mode 0 is the most significant digit.
//!
//! Quadrature convention: `x = (a + a†)/2` (vacuum variance 1/4) and
//! `p = -i(a - a†)` (vacuum variance 1), so that `[x, p] = i`. The homodyne
//! estimator works on `x`; displacement generators work on `p`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{domain, Error, Result};

/// Default bound on probability weight discarded by the photon cutoff.
pub const DEFAULT_TRUNCATION_TOLERANCE: f64 = 1e-6;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Maximum photon number kept per mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cutoff(usize);

impl Cutoff {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(domain("photon cutoff must be at least 1"));
        }
        Ok(Cutoff(n_max))
    }

    pub fn n_max(self) -> usize {
        self.0
    }

    /// Number of basis levels per mode, `n_max + 1`.
    pub fn levels(self) -> usize {
        self.0 + 1
    }

    pub fn dim(self, modes: usize) -> usize {
        self.levels().pow(modes as u32)
    }
}

/// Index bookkeeping for a multimode basis.
#[derive(Clone, Copy, Debug)]
struct Layout {
    modes: usize,
    levels: usize,
}

impl Layout {
    fn new(modes: usize, cutoff: Cutoff) -> Self {
        Layout {
            modes,
            levels: cutoff.levels(),
        }
    }

    fn dim(&self) -> usize {
        self.levels.pow(self.modes as u32)
    }

    fn stride(&self, mode: usize) -> usize {
        self.levels.pow((self.modes - 1 - mode) as u32)
    }

    fn digit(&self, index: usize, mode: usize) -> usize {
        (index / self.stride(mode)) % self.levels
    }

    fn check_modes(&self, targets: &[usize]) -> Result<()> {
        for (i, &m) in targets.iter().enumerate() {
            if m >= self.modes {
                return Err(domain(format!(
                    "mode index {m} out of range for a {}-mode state",
                    self.modes
                )));
            }
            if targets[..i].contains(&m) {
                return Err(domain(format!("mode index {m} repeated")));
            }
        }
        Ok(())
    }

    /// Offsets of every local multi-index over `targets` (first target most
    /// significant), relative to a base index whose target digits are zero.
    fn offsets(&self, targets: &[usize]) -> Vec<usize> {
        let local = self.levels.pow(targets.len() as u32);
        (0..local)
            .map(|l| {
                let mut rest = l;
                let mut off = 0;
                for &m in targets.iter().rev() {
                    off += (rest % self.levels) * self.stride(m);
                    rest /= self.levels;
                }
                off
            })
            .collect()
    }

    fn bases(&self, targets: &[usize]) -> Vec<usize> {
        let strides: Vec<usize> = targets.iter().map(|&m| self.stride(m)).collect();
        (0..self.dim())
            .filter(|&i| strides.iter().all(|&s| (i / s) % self.levels == 0))
            .collect()
    }
}

/// Nonzero entries `(row, col, value)` of a row-major `k × k` matrix.
fn nonzeros(op: &[C64], k: usize) -> Vec<(usize, usize, C64)> {
    op.iter()
        .enumerate()
        .filter(|(_, &o)| o != ZERO)
        .map(|(idx, &o)| (idx / k, idx % k, o))
        .collect()
}

/// `out = op · v` on the target modes of a state vector.
fn apply_local_vec(layout: &Layout, op: &[C64], targets: &[usize], v: &[C64]) -> Vec<C64> {
    let offsets = layout.offsets(targets);
    let nz = nonzeros(op, offsets.len());
    let mut out = vec![ZERO; v.len()];
    let mut block = vec![ZERO; offsets.len()];
    for base in layout.bases(targets) {
        let mut occupied = false;
        for (b, &off) in block.iter_mut().zip(&offsets) {
            *b = v[base + off];
            occupied |= *b != ZERO;
        }
        if !occupied {
            continue;
        }
        for &(i, j, o) in &nz {
            out[base + offsets[i]] += o * block[j];
        }
    }
    out
}

/// `op · rho` for a row-major `d × d` matrix, op acting on the row index.
fn apply_local_left(layout: &Layout, op: &[C64], targets: &[usize], rho: &[C64]) -> Vec<C64> {
    let d = layout.dim();
    let offsets = layout.offsets(targets);
    let nz = nonzeros(op, offsets.len());
    let mut out = vec![ZERO; rho.len()];
    for base in layout.bases(targets) {
        for &(i, j, o) in &nz {
            let dst = (base + offsets[i]) * d;
            let src = (base + offsets[j]) * d;
            for c in 0..d {
                out[dst + c] += o * rho[src + c];
            }
        }
    }
    out
}

/// `rho · op†` for a row-major `d × d` matrix.
fn apply_local_right_adjoint(
    layout: &Layout,
    op: &[C64],
    targets: &[usize],
    rho: &[C64],
) -> Vec<C64> {
    let d = layout.dim();
    let offsets = layout.offsets(targets);
    let nz: Vec<_> = nonzeros(op, offsets.len())
        .into_iter()
        .map(|(i, j, o)| (i, j, o.conj()))
        .collect();
    let bases = layout.bases(targets);
    let mut out = vec![ZERO; rho.len()];
    for r in 0..d {
        let row_in = &rho[r * d..(r + 1) * d];
        let row_out = &mut out[r * d..(r + 1) * d];
        for &base in &bases {
            for &(i, j, o) in &nz {
                row_out[base + offsets[i]] += row_in[base + offsets[j]] * o;
            }
        }
    }
    out
}

/// Single-mode operator on the truncated basis `|0⟩..|n_max⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeOperator {
    cutoff: Cutoff,
    entries: Vec<C64>,
}

impl ModeOperator {
    pub fn zeros(cutoff: Cutoff) -> Self {
        let l = cutoff.levels();
        ModeOperator {
            cutoff,
            entries: vec![ZERO; l * l],
        }
    }

    pub fn identity(cutoff: Cutoff) -> Self {
        Self::from_diagonal(cutoff, &vec![1.0; cutoff.levels()]).expect("length matches")
    }

    pub fn from_entries(cutoff: Cutoff, entries: Vec<C64>) -> Result<Self> {
        let l = cutoff.levels();
        if entries.len() != l * l {
            return Err(domain(format!(
                "operator needs {} entries for cutoff {}, got {}",
                l * l,
                cutoff.n_max(),
                entries.len()
            )));
        }
        Ok(ModeOperator { cutoff, entries })
    }

    pub fn from_diagonal(cutoff: Cutoff, diag: &[f64]) -> Result<Self> {
        let l = cutoff.levels();
        if diag.len() != l {
            return Err(domain(format!(
                "diagonal needs {l} entries, got {}",
                diag.len()
            )));
        }
        let mut op = Self::zeros(cutoff);
        for (n, &v) in diag.iter().enumerate() {
            op.entries[n * l + n] = C64::new(v, 0.0);
        }
        Ok(op)
    }

    pub fn annihilation(cutoff: Cutoff) -> Self {
        let l = cutoff.levels();
        let mut op = Self::zeros(cutoff);
        for n in 1..l {
            op.entries[(n - 1) * l + n] = C64::new((n as f64).sqrt(), 0.0);
        }
        op
    }

    pub fn creation(cutoff: Cutoff) -> Self {
        Self::annihilation(cutoff).adjoint()
    }

    pub fn number(cutoff: Cutoff) -> Self {
        let diag: Vec<f64> = (0..cutoff.levels()).map(|n| n as f64).collect();
        Self::from_diagonal(cutoff, &diag).expect("length matches")
    }

    pub fn cutoff(&self) -> Cutoff {
        self.cutoff
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[row * self.cutoff.levels() + col]
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.cutoff.levels()).map(|n| self.get(n, n)).collect()
    }

    pub fn adjoint(&self) -> Self {
        let l = self.cutoff.levels();
        let mut out = Self::zeros(self.cutoff);
        for r in 0..l {
            for c in 0..l {
                out.entries[c * l + r] = self.entries[r * l + c].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &ModeOperator) -> Result<Self> {
        if self.cutoff != rhs.cutoff {
            return Err(domain("operator cutoffs differ"));
        }
        let l = self.cutoff.levels();
        let mut out = Self::zeros(self.cutoff);
        for r in 0..l {
            for k in 0..l {
                let a = self.entries[r * l + k];
                if a == ZERO {
                    continue;
                }
                for c in 0..l {
                    out.entries[r * l + c] += a * rhs.entries[k * l + c];
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, factor: C64) -> Self {
        ModeOperator {
            cutoff: self.cutoff,
            entries: self.entries.iter().map(|&e| e * factor).collect(),
        }
    }

    pub fn add(&self, rhs: &ModeOperator) -> Result<Self> {
        if self.cutoff != rhs.cutoff {
            return Err(domain("operator cutoffs differ"));
        }
        Ok(ModeOperator {
            cutoff: self.cutoff,
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &ModeOperator) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// The operator `op` on mode `mode` of an `modes`-mode register, as a full matrix.
    pub fn embed(&self, mode: usize, modes: usize) -> Result<DMatrix<C64>> {
        let layout = Layout::new(modes, self.cutoff);
        layout.check_modes(&[mode])?;
        let d = layout.dim();
        let mut out = DMatrix::zeros(d, d);
        for c in 0..d {
            let mut e = vec![ZERO; d];
            e[c] = ONE;
            let col = apply_local_vec(&layout, &self.entries, &[mode], &e);
            for (r, v) in col.into_iter().enumerate() {
                out[(r, c)] = v;
            }
        }
        Ok(out)
    }
}

/// Operations that act locally on a subset of modes.
pub trait FockState: Sized + Clone {
    fn mode_count(&self) -> usize;
    fn cutoff(&self) -> Cutoff;

    /// Applies `op` (a row-major matrix over the joint levels of `targets`,
    /// first target most significant): `op·ψ` for vectors, `op·ρ·op†` for
    /// densities.
    fn transform_local(&self, op: &[C64], targets: &[usize]) -> Result<Self>;

    fn transform_mode(&self, op: &ModeOperator, mode: usize) -> Result<Self> {
        if op.cutoff() != self.cutoff() {
            return Err(domain("operator and state cutoffs differ"));
        }
        self.transform_local(op.entries(), &[mode])
    }
}

/// States carrying a total probability weight (norm² or trace).
pub trait Weighted: Sized {
    fn weight(&self) -> f64;

    /// Multiplies the weight by `factor`.
    fn rescaled(&self, factor: f64) -> Self;
}

impl Weighted for FockVector {
    fn weight(&self) -> f64 {
        self.norm_sqr()
    }

    fn rescaled(&self, factor: f64) -> Self {
        self.scaled(factor.sqrt())
    }
}

impl Weighted for FockDensity {
    fn weight(&self) -> f64 {
        self.trace()
    }

    fn rescaled(&self, factor: f64) -> Self {
        self.scaled(factor)
    }
}

impl Weighted for FockEnsemble {
    fn weight(&self) -> f64 {
        self.trace()
    }

    fn rescaled(&self, factor: f64) -> Self {
        let s = factor.sqrt();
        FockEnsemble {
            modes: self.modes,
            cutoff: self.cutoff,
            branches: self.branches.iter().map(|b| b.scaled(s)).collect(),
        }
    }
}

/// Pure state (possibly sub-normalized by truncation or post-selection).
#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    modes: usize,
    cutoff: Cutoff,
    amplitudes: Vec<C64>,
}

impl FockVector {
    pub fn new(modes: usize, cutoff: Cutoff, amplitudes: Vec<C64>) -> Result<Self> {
        if modes < 1 {
            return Err(domain("a state needs at least one mode"));
        }
        let d = cutoff.dim(modes);
        if amplitudes.len() != d {
            return Err(domain(format!(
                "{modes}-mode state at cutoff {} needs {d} amplitudes, got {}",
                cutoff.n_max(),
                amplitudes.len()
            )));
        }
        Ok(FockVector {
            modes,
            cutoff,
            amplitudes,
        })
    }

    pub fn vacuum(modes: usize, cutoff: Cutoff) -> Result<Self> {
        Self::basis(cutoff, &vec![0; modes])
    }

    /// Number state `|n_0, n_1, ...⟩`.
    pub fn basis(cutoff: Cutoff, photons: &[usize]) -> Result<Self> {
        let modes = photons.len();
        if modes < 1 {
            return Err(domain("a state needs at least one mode"));
        }
        let layout = Layout::new(modes, cutoff);
        let mut index = 0;
        for (m, &n) in photons.iter().enumerate() {
            if n > cutoff.n_max() {
                return Err(domain(format!(
                    "{n} photons exceed cutoff {}",
                    cutoff.n_max()
                )));
            }
            index += n * layout.stride(m);
        }
        let mut amplitudes = vec![ZERO; layout.dim()];
        amplitudes[index] = ONE;
        Ok(FockVector {
            modes,
            cutoff,
            amplitudes,
        })
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// Amplitude of `|n_0, n_1, ...⟩`.
    pub fn amplitude(&self, photons: &[usize]) -> C64 {
        let layout = Layout::new(self.modes, self.cutoff);
        let index: usize = photons
            .iter()
            .enumerate()
            .map(|(m, &n)| n * layout.stride(m))
            .sum();
        self.amplitudes[index]
    }

    /// Photon numbers of basis index `index`.
    pub fn photons_of(&self, index: usize) -> Vec<usize> {
        let layout = Layout::new(self.modes, self.cutoff);
        (0..self.modes).map(|m| layout.digit(index, m)).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `1 - Σ|amplitude|²`.
    pub fn norm_deficit(&self) -> f64 {
        1.0 - self.norm_sqr()
    }

    /// Rescales to unit norm, returning the state and its prior squared norm.
    pub fn normalize(&self) -> Result<(Self, f64)> {
        let n = self.norm_sqr();
        if n <= 0.0 {
            return Err(Error::ZeroSuccess);
        }
        let s = 1.0 / n.sqrt();
        Ok((self.scaled(s), n))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        FockVector {
            modes: self.modes,
            cutoff: self.cutoff,
            amplitudes: self.amplitudes.iter().map(|a| a * factor).collect(),
        }
    }

    /// Re-expresses the state at another cutoff, padding with empty levels or
    /// dropping amplitudes above the new cutoff.
    pub fn with_cutoff(&self, cutoff: Cutoff) -> Result<Self> {
        let from = Layout::new(self.modes, self.cutoff);
        let to = Layout::new(self.modes, cutoff);
        let mut amplitudes = vec![ZERO; to.dim()];
        for (i, &a) in self.amplitudes.iter().enumerate() {
            if a == ZERO {
                continue;
            }
            let mut j = 0;
            let mut fits = true;
            for m in 0..self.modes {
                let n = from.digit(i, m);
                if n > cutoff.n_max() {
                    fits = false;
                    break;
                }
                j += n * to.stride(m);
            }
            if fits {
                amplitudes[j] = a;
            }
        }
        FockVector::new(self.modes, cutoff, amplitudes)
    }

    pub fn inner(&self, other: &FockVector) -> Result<C64> {
        self.check_same_shape(other)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn tensor(&self, other: &FockVector) -> Result<Self> {
        if self.cutoff != other.cutoff {
            return Err(domain("cutoffs differ"));
        }
        let mut amplitudes = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amplitudes {
            for b in &other.amplitudes {
                amplitudes.push(a * b);
            }
        }
        Ok(FockVector {
            modes: self.modes + other.modes,
            cutoff: self.cutoff,
            amplitudes,
        })
    }

    pub fn to_density(&self) -> FockDensity {
        let d = self.dim();
        let mut entries = vec![ZERO; d * d];
        for r in 0..d {
            let a = self.amplitudes[r];
            if a == ZERO {
                continue;
            }
            for c in 0..d {
                entries[r * d + c] = a * self.amplitudes[c].conj();
            }
        }
        FockDensity {
            modes: self.modes,
            cutoff: self.cutoff,
            entries,
        }
    }

    pub fn max_abs_diff(&self, other: &FockVector) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Weight outside the sectors with total photon number `<= n_max`.
    pub fn sector_leakage(&self) -> f64 {
        let layout = Layout::new(self.modes, self.cutoff);
        (0..self.dim())
            .filter(|&i| {
                (0..self.modes).map(|m| layout.digit(i, m)).sum::<usize>() > self.cutoff.n_max()
            })
            .map(|i| self.amplitudes[i].norm_sqr())
            .sum()
    }

    /// Applies `op` on `mode` without the unitary-conjugation semantics.
    pub fn apply_mode(&self, op: &ModeOperator, mode: usize) -> Result<Self> {
        self.transform_mode(op, mode)
    }

    fn check_same_shape(&self, other: &FockVector) -> Result<()> {
        if self.modes != other.modes || self.cutoff != other.cutoff {
            return Err(domain("state shapes differ"));
        }
        Ok(())
    }
}

impl FockState for FockVector {
    fn mode_count(&self) -> usize {
        self.modes
    }

    fn cutoff(&self) -> Cutoff {
        self.cutoff
    }

    fn transform_local(&self, op: &[C64], targets: &[usize]) -> Result<Self> {
        let layout = Layout::new(self.modes, self.cutoff);
        layout.check_modes(targets)?;
        let k = self.cutoff.levels().pow(targets.len() as u32);
        if op.len() != k * k {
            return Err(domain("local operator size does not match its target modes"));
        }
        Ok(FockVector {
            modes: self.modes,
            cutoff: self.cutoff,
            amplitudes: apply_local_vec(&layout, op, targets, &self.amplitudes),
        })
    }
}

/// Dense density operator, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FockDensity {
    modes: usize,
    cutoff: Cutoff,
    entries: Vec<C64>,
}

impl FockDensity {
    pub fn new(modes: usize, cutoff: Cutoff, entries: Vec<C64>) -> Result<Self> {
        if modes < 1 {
            return Err(domain("a state needs at least one mode"));
        }
        let d = cutoff.dim(modes);
        if entries.len() != d * d {
            return Err(domain(format!(
                "density of dimension {d} needs {} entries, got {}",
                d * d,
                entries.len()
            )));
        }
        Ok(FockDensity {
            modes,
            cutoff,
            entries,
        })
    }

    pub fn vacuum(modes: usize, cutoff: Cutoff) -> Result<Self> {
        Ok(FockVector::vacuum(modes, cutoff)?.to_density())
    }

    pub fn dim(&self) -> usize {
        self.cutoff.dim(self.modes)
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[row * self.dim() + col]
    }

    pub fn trace(&self) -> f64 {
        let d = self.dim();
        (0..d).map(|i| self.entries[i * d + i].re).sum()
    }

    /// Rescales to unit trace, returning the state and its prior trace.
    pub fn normalize(&self) -> Result<(Self, f64)> {
        let t = self.trace();
        if t <= 0.0 {
            return Err(Error::ZeroSuccess);
        }
        Ok((self.scaled(1.0 / t), t))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        FockDensity {
            modes: self.modes,
            cutoff: self.cutoff,
            entries: self.entries.iter().map(|e| e * factor).collect(),
        }
    }

    pub fn add(&self, other: &FockDensity) -> Result<Self> {
        if self.modes != other.modes || self.cutoff != other.cutoff {
            return Err(domain("state shapes differ"));
        }
        Ok(FockDensity {
            modes: self.modes,
            cutoff: self.cutoff,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn tensor(&self, other: &FockDensity) -> Result<Self> {
        if self.cutoff != other.cutoff {
            return Err(domain("cutoffs differ"));
        }
        let (da, db) = (self.dim(), other.dim());
        let d = da * db;
        let mut entries = vec![ZERO; d * d];
        for ra in 0..da {
            for ca in 0..da {
                let a = self.entries[ra * da + ca];
                if a == ZERO {
                    continue;
                }
                for rb in 0..db {
                    for cb in 0..db {
                        entries[(ra * db + rb) * d + ca * db + cb] = a * other.entries[rb * db + cb];
                    }
                }
            }
        }
        Ok(FockDensity {
            modes: self.modes + other.modes,
            cutoff: self.cutoff,
            entries,
        })
    }

    /// Traces out `mode`.
    pub fn partial_trace(&self, mode: usize) -> Result<Self> {
        if self.modes < 2 {
            return Err(domain("cannot trace out the only mode"));
        }
        let layout = Layout::new(self.modes, self.cutoff);
        layout.check_modes(&[mode])?;
        let reduced = Layout::new(self.modes - 1, self.cutoff);
        let d = layout.dim();
        let dr = reduced.dim();
        let stride = layout.stride(mode);
        let levels = self.cutoff.levels();
        // reduced index -> full index with the traced digit zeroed
        let lift = |i: usize| {
            let high = i / stride;
            let low = i % stride;
            high * stride * levels + low
        };
        let mut entries = vec![ZERO; dr * dr];
        for r in 0..dr {
            let fr = lift(r);
            for c in 0..dr {
                let fc = lift(c);
                let mut acc = ZERO;
                for k in 0..levels {
                    acc += self.entries[(fr + k * stride) * d + fc + k * stride];
                }
                entries[r * dr + c] = acc;
            }
        }
        Ok(FockDensity {
            modes: self.modes - 1,
            cutoff: self.cutoff,
            entries,
        })
    }

    /// Applies the channel `ρ -> Σ_k E_k ρ E_k†` on `mode`.
    pub fn apply_kraus(&self, kraus: &[ModeOperator], mode: usize) -> Result<Self> {
        let mut out: Option<FockDensity> = None;
        for e in kraus {
            let term = self.transform_mode(e, mode)?;
            out = Some(match out {
                None => term,
                Some(acc) => acc.add(&term)?,
            });
        }
        out.ok_or_else(|| domain("empty Kraus set"))
    }

    pub fn max_abs_diff(&self, other: &FockDensity) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..d {
            for c in r..d {
                worst = worst.max((self.entries[r * d + c] - self.entries[c * d + r].conj()).norm());
            }
        }
        worst
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.entries)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.to_matrix();
        let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(h).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Probability of each photon number on `mode`.
    pub fn photon_distribution(&self, mode: usize) -> Result<Vec<f64>> {
        let layout = Layout::new(self.modes, self.cutoff);
        layout.check_modes(&[mode])?;
        let d = self.dim();
        let mut dist = vec![0.0; self.cutoff.levels()];
        for i in 0..d {
            dist[layout.digit(i, mode)] += self.entries[i * d + i].re;
        }
        Ok(dist)
    }
}

impl FockState for FockDensity {
    fn mode_count(&self) -> usize {
        self.modes
    }

    fn cutoff(&self) -> Cutoff {
        self.cutoff
    }

    fn transform_local(&self, op: &[C64], targets: &[usize]) -> Result<Self> {
        let layout = Layout::new(self.modes, self.cutoff);
        layout.check_modes(targets)?;
        let k = self.cutoff.levels().pow(targets.len() as u32);
        if op.len() != k * k {
            return Err(domain("local operator size does not match its target modes"));
        }
        let left = apply_local_left(&layout, op, targets, &self.entries);
        Ok(FockDensity {
            modes: self.modes,
            cutoff: self.cutoff,
            entries: apply_local_right_adjoint(&layout, op, targets, &left),
        })
    }
}

/// Mixed state stored as unnormalized pure branches, `ρ = Σ_b |ψ_b⟩⟨ψ_b|`.
///
/// Channels split branches; local operators act branch by branch. This is
/// the cheap representation for large registers where a dense density does
/// not fit.
#[derive(Clone, Debug, PartialEq)]
pub struct FockEnsemble {
    modes: usize,
    cutoff: Cutoff,
    branches: Vec<FockVector>,
}

impl FockEnsemble {
    pub fn from_vector(v: FockVector) -> Self {
        FockEnsemble {
            modes: v.modes,
            cutoff: v.cutoff,
            branches: vec![v],
        }
    }

    pub fn branches(&self) -> &[FockVector] {
        &self.branches
    }

    pub fn trace(&self) -> f64 {
        self.branches.iter().map(FockVector::norm_sqr).sum()
    }

    pub fn normalize(&self) -> Result<(Self, f64)> {
        let t = self.trace();
        if t <= 0.0 {
            return Err(Error::ZeroSuccess);
        }
        let s = 1.0 / t.sqrt();
        Ok((
            FockEnsemble {
                modes: self.modes,
                cutoff: self.cutoff,
                branches: self.branches.iter().map(|b| b.scaled(s)).collect(),
            },
            t,
        ))
    }

    /// Splits every branch through the Kraus set on `mode`; empty branches are dropped.
    pub fn apply_kraus(&self, kraus: &[ModeOperator], mode: usize) -> Result<Self> {
        let mut branches = Vec::with_capacity(self.branches.len() * kraus.len());
        for b in &self.branches {
            for e in kraus {
                let nb = b.transform_mode(e, mode)?;
                if nb.norm_sqr() > 0.0 {
                    branches.push(nb);
                }
            }
        }
        Ok(FockEnsemble {
            modes: self.modes,
            cutoff: self.cutoff,
            branches,
        })
    }

    pub fn to_density(&self) -> Result<FockDensity> {
        let d = self.cutoff.dim(self.modes);
        let mut acc = FockDensity::new(self.modes, self.cutoff, vec![ZERO; d * d])?;
        for b in &self.branches {
            acc = acc.add(&b.to_density())?;
        }
        Ok(acc)
    }
}

impl FockState for FockEnsemble {
    fn mode_count(&self) -> usize {
        self.modes
    }

    fn cutoff(&self) -> Cutoff {
        self.cutoff
    }

    fn transform_local(&self, op: &[C64], targets: &[usize]) -> Result<Self> {
        let branches = self
            .branches
            .iter()
            .map(|b| b.transform_local(op, targets))
            .collect::<Result<Vec<_>>>()?;
        Ok(FockEnsemble {
            modes: self.modes,
            cutoff: self.cutoff,
            branches,
        })
    }
}

/// Single-mode squeezed vacuum with mean photon number `n_s`, squeezed in `x`.
///
/// Amplitudes `c_{2k} = (-tanh r)^k √((2k)!) / (2^k k! √cosh r)` with
/// `sinh² r = n_s`, truncated at the cutoff.
pub fn sv_fock(n_s: f64, cutoff: Cutoff) -> Result<FockVector> {
    if !(n_s >= 0.0) || !n_s.is_finite() {
        return Err(domain(format!("mean photon number must be >= 0, got {n_s}")));
    }
    let r = n_s.sqrt().asinh();
    let t = r.tanh();
    let mut amplitudes = vec![ZERO; cutoff.levels()];
    let mut c = 1.0 / r.cosh().sqrt();
    let mut k = 0usize;
    while 2 * k <= cutoff.n_max() {
        amplitudes[2 * k] = C64::new(c, 0.0);
        let kf = k as f64;
        c *= -t * ((2.0 * kf + 1.0) * (2.0 * kf + 2.0)).sqrt() / (2.0 * (kf + 1.0));
        k += 1;
    }
    FockVector::new(1, cutoff, amplitudes)
}

/// `(x, p)` with `x = (a + a†)/2`, `p = -i(a - a†)`.
pub fn quadratures(cutoff: Cutoff) -> (ModeOperator, ModeOperator) {
    let a = ModeOperator::annihilation(cutoff);
    let ad = ModeOperator::creation(cutoff);
    let x = a.add(&ad).expect("same cutoff").scale(C64::new(0.5, 0.0));
    let p = a
        .add(&ad.scale(C64::new(-1.0, 0.0)))
        .expect("same cutoff")
        .scale(C64::new(0.0, -1.0));
    (x, p)
}

/// `exp(θ(a†b - ab†))` on the truncated two-mode space, row-major over
/// local index `n_a * levels + n_b`.
///
/// The generator conserves `n_a + n_b`, so it is exponentiated sector by
/// sector. Sectors with total photon number above `n_max` are missing basis
/// states and are only approximate.
pub fn beamsplitter_matrix(theta: f64, cutoff: Cutoff) -> Vec<C64> {
    let l = cutoff.levels();
    let n_max = cutoff.n_max();
    let mut out = vec![ZERO; l * l * l * l];
    for total in 0..=2 * n_max {
        let lo = total.saturating_sub(n_max);
        let hi = total.min(n_max);
        let basis: Vec<usize> = (lo..=hi).collect(); // photons in mode a
        let k = basis.len();
        let mut gen = DMatrix::<f64>::zeros(k, k);
        for (col, &na) in basis.iter().enumerate() {
            let nb = total - na;
            // a†b |na, nb⟩ = √((na+1) nb) |na+1, nb-1⟩
            if nb > 0 && na < n_max {
                gen[(col + 1, col)] += (((na + 1) * nb) as f64).sqrt();
            }
            // -ab† |na, nb⟩ = -√(na (nb+1)) |na-1, nb+1⟩
            if na > 0 && nb < n_max {
                gen[(col - 1, col)] -= ((na * (nb + 1)) as f64).sqrt();
            }
        }
        let block = (gen * theta).exp();
        for (r, &ra) in basis.iter().enumerate() {
            for (c, &ca) in basis.iter().enumerate() {
                let row = ra * l + (total - ra);
                let col = ca * l + (total - ca);
                out[row * l * l + col] = C64::new(block[(r, c)], 0.0);
            }
        }
    }
    out
}

/// Applies `exp(θ(a†b - ab†))` between modes `a` and `b`.
pub fn beamsplitter<S: FockState>(theta: f64, a: usize, b: usize, state: &S) -> Result<S> {
    if a == b {
        return Err(domain("beamsplitter needs two distinct modes"));
    }
    let op = beamsplitter_matrix(theta, state.cutoff());
    state.transform_local(&op, &[a, b])
}

/// Mixing angles of the balanced splitter chain for `m` modes.
///
/// Splitter `k` couples modes `k` and `k + 1` and leaves mode `k` with a
/// fraction `1/(m - k)` of the light reaching it; angles are negative so every
/// output receives amplitude `+1/√m` of the mode-0 input.
pub fn splitter_angles(m: usize) -> Vec<f64> {
    (0..m.saturating_sub(1))
        .map(|k| -(1.0 / ((m - k) as f64)).sqrt().acos())
        .collect()
}

/// Balanced `m × m` network spreading mode 0 evenly over all modes.
pub fn balanced_splitter<S: FockState>(m: usize, state: &S) -> Result<S> {
    if m < 1 {
        return Err(domain("balanced splitter needs at least one mode"));
    }
    if state.mode_count() != m {
        return Err(domain(format!(
            "balanced splitter over {m} modes applied to a {}-mode state",
            state.mode_count()
        )));
    }
    let mut out = state.clone();
    for (k, theta) in splitter_angles(m).into_iter().enumerate() {
        out = beamsplitter(theta, k, k + 1, &out)?;
    }
    Ok(out)
}

/// Kraus operators of the pure-loss channel with transmissivity `eta`:
/// `E_k = Σ_n √(C(n,k) (1-η)^k η^(n-k)) |n-k⟩⟨n|`.
pub fn loss_kraus(eta: f64, cutoff: Cutoff) -> Result<Vec<ModeOperator>> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(domain(format!("transmissivity must lie in [0, 1], got {eta}")));
    }
    let l = cutoff.levels();
    let mut ops = Vec::with_capacity(l);
    for k in 0..l {
        let mut e = ModeOperator::zeros(cutoff);
        for n in k..l {
            let amp = (binomial(n, k) * (1.0 - eta).powi(k as i32) * eta.powi((n - k) as i32)).sqrt();
            e.entries[(n - k) * l + n] = C64::new(amp, 0.0);
        }
        ops.push(e);
    }
    Ok(ops)
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Pure loss on one mode of a density.
pub fn pure_loss(eta: f64, mode: usize, state: &FockDensity) -> Result<FockDensity> {
    let kraus = loss_kraus(eta, state.cutoff())?;
    state.apply_kraus(&kraus, mode)
}

/// Sum of single-mode operators, `Σ_t O_t` with `O_t` acting on mode `m_t`.
#[derive(Clone, Debug)]
pub struct ModeSum {
    cutoff: Cutoff,
    terms: Vec<(usize, ModeOperator)>,
}

impl ModeSum {
    pub fn single(mode: usize, op: ModeOperator) -> Self {
        ModeSum {
            cutoff: op.cutoff(),
            terms: vec![(mode, op)],
        }
    }

    /// `weight · Σ_{m < modes} op_m`.
    pub fn uniform(op: &ModeOperator, modes: usize, weight: f64) -> Self {
        let scaled = op.scale(C64::new(weight, 0.0));
        ModeSum {
            cutoff: op.cutoff(),
            terms: (0..modes).map(|m| (m, scaled.clone())).collect(),
        }
    }

    fn check(&self, modes: usize, cutoff: Cutoff) -> Result<()> {
        if cutoff != self.cutoff {
            return Err(domain("observable and state cutoffs differ"));
        }
        if let Some((m, _)) = self.terms.iter().find(|(m, _)| *m >= modes) {
            return Err(domain(format!(
                "observable acts on mode {m} of a {modes}-mode state"
            )));
        }
        Ok(())
    }

    fn apply_vec(&self, layout: &Layout, v: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; v.len()];
        for (m, op) in &self.terms {
            let part = apply_local_vec(layout, op.entries(), &[*m], v);
            for (o, p) in out.iter_mut().zip(part) {
                *o += p;
            }
        }
        out
    }

    fn apply_left(&self, layout: &Layout, rho: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; rho.len()];
        for (m, op) in &self.terms {
            let part = apply_local_left(layout, op.entries(), &[*m], rho);
            for (o, p) in out.iter_mut().zip(part) {
                *o += p;
            }
        }
        out
    }
}

/// States that yield the first two moments `(Tr ρO, Tr ρO²)` of an observable.
pub trait Measurable {
    fn moments(&self, obs: &ModeSum) -> Result<(C64, C64)>;
}

impl Measurable for FockVector {
    fn moments(&self, obs: &ModeSum) -> Result<(C64, C64)> {
        obs.check(self.modes, self.cutoff)?;
        let layout = Layout::new(self.modes, self.cutoff);
        let once = obs.apply_vec(&layout, &self.amplitudes);
        let twice = obs.apply_vec(&layout, &once);
        let dot = |w: &[C64]| -> C64 {
            self.amplitudes
                .iter()
                .zip(w)
                .map(|(a, b)| a.conj() * b)
                .sum()
        };
        Ok((dot(&once), dot(&twice)))
    }
}

impl Measurable for FockDensity {
    fn moments(&self, obs: &ModeSum) -> Result<(C64, C64)> {
        obs.check(self.modes, self.cutoff)?;
        let layout = Layout::new(self.modes, self.cutoff);
        let d = self.dim();
        let once = obs.apply_left(&layout, &self.entries);
        let twice = obs.apply_left(&layout, &once);
        let tr = |m: &[C64]| -> C64 { (0..d).map(|i| m[i * d + i]).sum() };
        Ok((tr(&once), tr(&twice)))
    }
}

impl Measurable for FockEnsemble {
    fn moments(&self, obs: &ModeSum) -> Result<(C64, C64)> {
        let mut first = ZERO;
        let mut second = ZERO;
        for b in &self.branches {
            let (f, s) = b.moments(obs)?;
            first += f;
            second += s;
        }
        Ok((first, second))
    }
}

pub fn expectation<S: Measurable>(obs: &ModeSum, state: &S) -> Result<C64> {
    Ok(state.moments(obs)?.0)
}

/// `Tr(ρO²) - Tr(ρO)²` for a Hermitian observable.
pub fn variance<S: Measurable>(obs: &ModeSum, state: &S) -> Result<f64> {
    let (first, second) = state.moments(obs)?;
    let var = second - first * first;
    if var.im.abs() > 1e-10 {
        return Err(domain(format!(
            "variance has imaginary part {:.3e}; observable is not Hermitian",
            var.im
        )));
    }
    Ok(var.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cut(n: usize) -> Cutoff {
        Cutoff::new(n).unwrap()
    }

    #[test]
    fn cutoff_rejects_zero() {
        assert!(Cutoff::new(0).is_err());
        assert_eq!(cut(3).levels(), 4);
        assert_eq!(cut(5).dim(4), 1296);
    }

    #[test]
    fn sv_vacuum_and_weights() {
        let v = sv_fock(0.0, cut(6)).unwrap();
        assert_eq!(v, FockVector::vacuum(1, cut(6)).unwrap());

        let s = sv_fock(0.04, cut(10)).unwrap();
        assert!((s.amplitudes()[0].norm_sqr() - 1.0 / 1.04f64.sqrt()).abs() < 1e-12);
        assert!((s.amplitudes()[0].norm_sqr() - 0.980581).abs() < 1e-6);
        assert!(s.amplitudes()[1].norm() == 0.0 && s.amplitudes()[3].norm() == 0.0);
        // second amplitude is negative with the x-squeezing phase
        assert!(s.amplitudes()[2].re < 0.0);
        let n = ModeSum::single(0, ModeOperator::number(cut(10)));
        assert!((expectation(&n, &s).unwrap().re - 0.04).abs() < 1e-8);
    }

    #[test]
    fn sv_rejects_negative() {
        assert!(matches!(sv_fock(-0.1, cut(4)), Err(Error::Domain(_))));
        assert!(sv_fock(f64::NAN, cut(4)).is_err());
    }

    #[test]
    fn quadrature_vacuum_moments() {
        let c = cut(6);
        let (x, p) = quadratures(c);
        let vac = FockVector::vacuum(1, c).unwrap();
        let one = FockVector::basis(c, &[1]).unwrap();
        let xs = ModeSum::single(0, x.clone());
        let ps = ModeSum::single(0, p.clone());
        assert!((variance(&xs, &vac).unwrap() - 0.25).abs() < 1e-15);
        assert!((variance(&ps, &vac).unwrap() - 1.0).abs() < 1e-15);
        let (_, x2) = one.moments(&xs).unwrap();
        assert!((x2.re - 0.75).abs() < 1e-15);

        // [x, p] = i away from the truncation edge
        let xp = x.matmul(&p).unwrap();
        let px = p.matmul(&x).unwrap();
        let comm = xp.add(&px.scale(C64::new(-1.0, 0.0))).unwrap();
        for n in 0..c.n_max() {
            assert!((comm.get(n, n) - C64::new(0.0, 1.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn sv_x_variance_matches_closed_form() {
        let c = cut(12);
        let (x, _) = quadratures(c);
        let s = sv_fock(0.04, c).unwrap();
        let var = variance(&ModeSum::single(0, x), &s).unwrap();
        let expected = (1.04f64.sqrt() - 0.2).powi(2) / 4.0;
        assert!((var - expected).abs() < 1e-8, "{var} vs {expected}");
        assert!((var - 0.168020).abs() < 1e-6);
        // with a guard level the truncated vector's moment is exact
        let guarded = sv_fock(0.04, cut(12)).unwrap().with_cutoff(cut(13)).unwrap();
        let (x13, _) = quadratures(cut(13));
        let gvar = variance(&ModeSum::single(0, x13), &guarded).unwrap();
        let trunc_exact: f64 = (0..=12)
            .map(|n| guarded.amplitudes()[n].norm_sqr() * (2 * n + 1) as f64 / 4.0)
            .sum::<f64>()
            + 2.0 * (0..=10)
                .map(|n| {
                    guarded.amplitudes()[n].re
                        * guarded.amplitudes()[n + 2].re
                        * (((n + 1) * (n + 2)) as f64).sqrt()
                        / 4.0
                })
                .sum::<f64>();
        assert!((gvar - trunc_exact).abs() < 1e-15);
    }

    #[test]
    fn beamsplitter_single_photon() {
        let c = cut(3);
        let psi = FockVector::basis(c, &[1, 0]).unwrap();
        let theta = std::f64::consts::FRAC_PI_4;
        let out = beamsplitter(theta, 0, 1, &psi).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((out.amplitude(&[1, 0]) - C64::new(h, 0.0)).norm() < 1e-14);
        assert!((out.amplitude(&[0, 1]) - C64::new(-h, 0.0)).norm() < 1e-14);

        let twice = beamsplitter(theta, 0, 1, &out).unwrap();
        assert!((twice.amplitude(&[0, 1]).norm() - 1.0).abs() < 1e-14);

        let same = beamsplitter(0.0, 0, 1, &psi).unwrap();
        assert!(same.max_abs_diff(&psi) < 1e-15);
    }

    #[test]
    fn beamsplitter_rejects_bad_modes() {
        let psi = FockVector::vacuum(2, cut(2)).unwrap();
        assert!(beamsplitter(0.3, 0, 0, &psi).is_err());
        assert!(beamsplitter(0.3, 0, 2, &psi).is_err());
    }

    #[test]
    fn hong_ou_mandel() {
        let c = cut(2);
        let psi = FockVector::basis(c, &[1, 1]).unwrap();
        let out = beamsplitter(-std::f64::consts::FRAC_PI_4, 0, 1, &psi).unwrap();
        assert!(out.amplitude(&[1, 1]).norm() < 1e-14);
        assert!((out.amplitude(&[2, 0]).norm_sqr() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn balanced_splitter_single_photon_spreads_evenly() {
        for m in 1..=4 {
            let c = cut(2);
            let mut photons = vec![0; m];
            photons[0] = 1;
            let psi = FockVector::basis(c, &photons).unwrap();
            let out = balanced_splitter(m, &psi).unwrap();
            for k in 0..m {
                let mut target = vec![0; m];
                target[k] = 1;
                let amp = out.amplitude(&target);
                assert!((amp.re - 1.0 / (m as f64).sqrt()).abs() < 1e-13, "m={m} k={k}");
            }
        }
        let psi = FockVector::vacuum(3, cut(2)).unwrap();
        assert!(balanced_splitter(2, &psi).is_err());
        assert!(balanced_splitter(0, &psi).is_err());
    }

    #[test]
    fn balanced_splitter_squeezes_symmetric_quadrature() {
        let c = cut(11);
        let (x, _) = quadratures(c);
        let sv = sv_fock(0.04, cut(10)).unwrap().with_cutoff(c).unwrap();
        let vac = FockVector::vacuum(1, c).unwrap();
        let two = balanced_splitter(2, &sv.tensor(&vac).unwrap()).unwrap();
        let sym = ModeSum::uniform(&x, 2, std::f64::consts::FRAC_1_SQRT_2);
        let single = variance(&ModeSum::single(0, x.clone()), &sv).unwrap();
        assert!((variance(&sym, &two).unwrap() - single).abs() < 1e-9);
        let avg = ModeSum::uniform(&x, 2, 0.5);
        assert!((variance(&avg, &two).unwrap() - single / 2.0).abs() < 1e-9);
    }

    #[test]
    fn loss_on_single_photon() {
        let c = cut(3);
        let rho = FockVector::basis(c, &[1]).unwrap().to_density();
        let out = pure_loss(0.3, 0, &rho).unwrap();
        assert!((out.get(1, 1).re - 0.3).abs() < 1e-15);
        assert!((out.get(0, 0).re - 0.7).abs() < 1e-15);
        let id = pure_loss(1.0, 0, &rho).unwrap();
        assert!(id.max_abs_diff(&rho) < 1e-15);
        assert!(pure_loss(1.1, 0, &rho).is_err());
        assert!(pure_loss(-0.1, 0, &rho).is_err());
    }

    #[test]
    fn loss_halves_sv_photons() {
        let c = cut(10);
        let rho = sv_fock(0.04, c).unwrap().to_density();
        let out = pure_loss(0.5, 0, &rho).unwrap();
        let n = ModeSum::single(0, ModeOperator::number(c));
        assert!((expectation(&n, &out).unwrap().re - 0.02).abs() < 1e-8);
        assert!((out.trace() - rho.trace()).abs() < 1e-12);
    }

    #[test]
    fn state_manipulation() {
        let c = cut(2);
        let rho = FockVector::basis(c, &[1, 0]).unwrap().to_density();
        let red = rho.partial_trace(1).unwrap();
        assert_eq!(red, FockVector::basis(c, &[1]).unwrap().to_density());
        let red0 = rho.partial_trace(0).unwrap();
        assert_eq!(red0, FockVector::vacuum(1, c).unwrap().to_density());
        assert!(rho.partial_trace(2).is_err());

        let v = FockVector::vacuum(1, c).unwrap();
        assert_eq!(v.tensor(&v).unwrap(), FockVector::vacuum(2, c).unwrap());
        let dv = v.to_density();
        assert_eq!(dv.tensor(&dv).unwrap(), FockDensity::vacuum(2, c).unwrap());

        let small = dv.scaled(0.04);
        let (n, t) = small.normalize().unwrap();
        assert!((t - 0.04).abs() < 1e-15);
        assert!((n.trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn expectation_shape_mismatch() {
        let (x, _) = quadratures(cut(3));
        let v = FockVector::vacuum(1, cut(4)).unwrap();
        assert!(variance(&ModeSum::single(0, x.clone()), &v).is_err());
        let w = FockVector::vacuum(1, cut(3)).unwrap();
        assert!(variance(&ModeSum::single(1, x), &w).is_err());
    }

    #[test]
    fn ensemble_matches_density() {
        let c = cut(4);
        let sv = sv_fock(0.1, c).unwrap();
        let vac = FockVector::vacuum(1, c).unwrap();
        let kraus = loss_kraus(0.6, c).unwrap();
        let ens = FockEnsemble::from_vector(sv.tensor(&vac).unwrap())
            .apply_kraus(&kraus, 0)
            .unwrap();
        let ens = balanced_splitter(2, &ens).unwrap();
        let dense = sv.tensor(&vac).unwrap().to_density().apply_kraus(&kraus, 0).unwrap();
        let dense = balanced_splitter(2, &dense).unwrap();
        assert!(ens.to_density().unwrap().max_abs_diff(&dense) < 1e-14);
    }

    fn random_low_photon_density(seed: &[f64], modes: usize, c: Cutoff, max_total: usize) -> FockDensity {
        // mixture of two random pure states in the sector total <= max_total
        let layout = Layout::new(modes, c);
        let d = layout.dim();
        let mut acc = FockDensity::new(modes, c, vec![ZERO; d * d]).unwrap();
        for b in 0..2 {
            let amps: Vec<C64> = (0..d)
                .map(|i| {
                    let total: usize = (0..modes).map(|m| layout.digit(i, m)).sum();
                    if total > max_total {
                        ZERO
                    } else {
                        let s = seed[(i * 2 + b) % seed.len()];
                        let t = seed[(i * 3 + 7 * b + 1) % seed.len()];
                        C64::new(s, t)
                    }
                })
                .collect();
            let (v, _) = FockVector::new(modes, c, amps).unwrap().normalize().unwrap();
            acc = acc.add(&v.to_density().scaled(0.5)).unwrap();
        }
        acc
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn beamsplitter_preserves_photon_sectors(
            theta in -3.2f64..3.2,
            amps in proptest::collection::vec(-1.0f64..1.0, 32),
        ) {
            let c = cut(3);
            let layout = Layout::new(2, c);
            let v: Vec<C64> = (0..16)
                .map(|i| {
                    let total = layout.digit(i, 0) + layout.digit(i, 1);
                    if total <= 3 { C64::new(amps[i], amps[i + 16]) } else { ZERO }
                })
                .collect();
            let psi = FockVector::new(2, c, v).unwrap();
            let out = beamsplitter(theta, 0, 1, &psi).unwrap();
            prop_assert!(out.sector_leakage() <= 1e-12);
            // per-sector weight conserved
            for total in 0..=3 {
                let w = |s: &FockVector| -> f64 {
                    (0..16).filter(|&i| layout.digit(i, 0) + layout.digit(i, 1) == total)
                        .map(|i| s.amplitudes()[i].norm_sqr()).sum()
                };
                prop_assert!((w(&psi) - w(&out)).abs() <= 1e-12);
            }
        }

        #[test]
        fn loss_composition(
            e1 in 0.0f64..=1.0,
            e2 in 0.0f64..=1.0,
            seed in proptest::collection::vec(-1.0f64..1.0, 11),
        ) {
            let c = cut(4);
            let rho = random_low_photon_density(&seed, 1, c, 4);
            let a = pure_loss(e1, 0, &pure_loss(e2, 0, &rho).unwrap()).unwrap();
            let b = pure_loss(e1 * e2, 0, &rho).unwrap();
            prop_assert!(a.max_abs_diff(&b) <= 1e-10);
        }

        #[test]
        fn loss_commutes_with_splitter(
            eta in 0.0f64..=1.0,
            modes in 2usize..=3,
            seed in proptest::collection::vec(-1.0f64..1.0, 13),
        ) {
            let c = cut(3);
            let rho = random_low_photon_density(&seed, modes, c, 3);
            let mut before = rho.clone();
            for m in 0..modes {
                before = pure_loss(eta, m, &before).unwrap();
            }
            let before = balanced_splitter(modes, &before).unwrap();
            let mut after = balanced_splitter(modes, &rho).unwrap();
            for m in 0..modes {
                after = pure_loss(eta, m, &after).unwrap();
            }
            prop_assert!(before.max_abs_diff(&after) <= 1e-10);
        }

        #[test]
        fn channels_keep_density_physical(
            eta in 0.0f64..=1.0,
            theta in -1.6f64..1.6,
            seed in proptest::collection::vec(-1.0f64..1.0, 7),
        ) {
            let c = cut(2);
            let rho = random_low_photon_density(&seed, 2, c, 2);
            let out = beamsplitter(theta, 0, 1, &pure_loss(eta, 1, &rho).unwrap()).unwrap();
            prop_assert!(out.hermiticity_error() <= 1e-12);
            prop_assert!(out.min_eigenvalue() >= -1e-10);
            prop_assert!((out.trace() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn truncation_convergence_of_variance() {
        // Raising the cutoff from 6 to 10 restores the dropped amplitudes; their
        // cross terms with the kept ones bound the change by O(√deficit).
        for &ns in &[0.01, 0.04, 0.1] {
            let run = |n: usize| {
                let c = cut(n + 1);
                let (x, _) = quadratures(c);
                let sv = sv_fock(ns, cut(n)).unwrap();
                let deficit = sv.norm_deficit();
                let rho = pure_loss(0.7, 0, &sv.with_cutoff(c).unwrap().to_density()).unwrap();
                (variance(&ModeSum::single(0, x), &rho).unwrap(), deficit)
            };
            let (v6, d6) = run(6);
            let (v10, _) = run(10);
            assert!((v6 - v10).abs() <= 5.0 * d6.sqrt(), "N_S={ns}: {v6} {v10} {d6}");
            if ns <= 0.01 {
                assert!((v6 - v10).abs() < 1e-6);
            }
        }
    }
}
