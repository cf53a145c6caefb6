//! Noiseless linear amplifier models.
//!
//! The ideal amplifier `g^n` only enters pipelines through the effective
//! channel algebra (`loss η` then `g^n` equals `g_eff^n` then `loss η_eff`).
//! The practical amplifier built from `N` quantum scissors is the
//! sub-normalized Kraus element `T = Π_N g^n`, applied literally with success
//! probability `Tr(TρT)`.

use num_complex::Complex64 as C64;

use crate::error::{domain, Error, Result};
use crate::fock::{beamsplitter, Cutoff, FockState, FockVector, ModeOperator, Weighted};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NlaSpec {
    Ideal { gain: f64 },
    Practical { gain: f64, scissors: usize },
}

impl NlaSpec {
    pub fn ideal(gain: f64) -> Result<Self> {
        check_gain(gain)?;
        Ok(NlaSpec::Ideal { gain })
    }

    pub fn practical(gain: f64, scissors: usize) -> Result<Self> {
        check_gain(gain)?;
        if scissors < 1 {
            return Err(domain("a practical NLA needs at least one quantum scissor"));
        }
        Ok(NlaSpec::Practical { gain, scissors })
    }

    pub fn gain(&self) -> f64 {
        match *self {
            NlaSpec::Ideal { gain } | NlaSpec::Practical { gain, .. } => gain,
        }
    }

    pub fn scissors(&self) -> Option<usize> {
        match *self {
            NlaSpec::Ideal { .. } => None,
            NlaSpec::Practical { scissors, .. } => Some(scissors),
        }
    }
}

fn check_gain(g: f64) -> Result<()> {
    if !(g >= 1.0) || !g.is_finite() {
        return Err(domain(format!("NLA gain must be a finite value >= 1, got {g}")));
    }
    Ok(())
}

fn check_channel(g: f64, eta: f64) -> Result<()> {
    check_gain(g)?;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(domain(format!("transmissivity must lie in (0, 1], got {eta}")));
    }
    Ok(())
}

/// Loss followed by an ideal NLA, re-expressed as an NLA followed by loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveChannel {
    pub g_eff: f64,
    pub eta_eff: f64,
}

impl EffectiveChannel {
    pub fn new(g: f64, eta: f64) -> Result<Self> {
        Ok(EffectiveChannel {
            g_eff: effective_gain(g, eta)?,
            eta_eff: effective_transmissivity(g, eta)?,
        })
    }
}

/// `g_eff = √(1 + (g² - 1) η)`.
pub fn effective_gain(g: f64, eta: f64) -> Result<f64> {
    check_channel(g, eta)?;
    Ok((1.0 + (g * g - 1.0) * eta).sqrt())
}

/// `η_eff = g² η / (1 + (g² - 1) η)`.
pub fn effective_transmissivity(g: f64, eta: f64) -> Result<f64> {
    check_channel(g, eta)?;
    Ok(g * g * eta / (1.0 + (g * g - 1.0) * eta))
}

/// Mean photon number of `g_eff^n` applied to a squeezed vacuum:
/// `√(N'/(N'+1)) = g_eff² √(N/(N+1))`.
pub fn effective_sv_photons(n_s: f64, g_eff: f64) -> Result<f64> {
    if !(n_s >= 0.0) || !n_s.is_finite() {
        return Err(domain(format!("mean photon number must be >= 0, got {n_s}")));
    }
    check_gain(g_eff)?;
    let lambda = g_eff * g_eff * (n_s / (n_s + 1.0)).sqrt();
    if lambda >= 1.0 {
        return Err(Error::UnphysicalGain { lambda });
    }
    Ok(lambda * lambda / (1.0 - lambda * lambda))
}

/// `N! / ((N - n)! N^n)` for `n <= N`, zero above.
pub fn projector_coefficient(scissors: usize, n: usize) -> f64 {
    if n > scissors {
        return 0.0;
    }
    let big_n = scissors as f64;
    (0..n).fold(1.0, |acc, j| acc * (big_n - j as f64) / big_n)
}

fn check_scissors(scissors: usize, cutoff: Cutoff) -> Result<()> {
    if scissors < 1 {
        return Err(domain("a practical NLA needs at least one quantum scissor"));
    }
    if scissors > cutoff.n_max() {
        return Err(domain(format!(
            "cutoff {} cannot hold the {scissors}-photon support of a {scissors}-scissor NLA",
            cutoff.n_max()
        )));
    }
    Ok(())
}

/// `Π_N = (1/(g²+1))^{N/2} Σ_{n<=N} N!/((N-n)! N^n) |n⟩⟨n|`.
pub fn projector_pi(scissors: usize, g: f64, cutoff: Cutoff) -> Result<ModeOperator> {
    check_gain(g)?;
    check_scissors(scissors, cutoff)?;
    let prefactor = (1.0 / (g * g + 1.0)).powf(scissors as f64 / 2.0);
    let diag: Vec<f64> = (0..cutoff.levels())
        .map(|n| prefactor * projector_coefficient(scissors, n))
        .collect();
    ModeOperator::from_diagonal(cutoff, &diag)
}

/// `T = Π_N g^n`.
pub fn nla_operator(scissors: usize, g: f64, cutoff: Cutoff) -> Result<ModeOperator> {
    let pi = projector_pi(scissors, g, cutoff)?;
    let diag: Vec<f64> = pi
        .diagonal()
        .iter()
        .enumerate()
        .map(|(n, d)| d.re * g.powi(n as i32))
        .collect();
    ModeOperator::from_diagonal(cutoff, &diag)
}

/// Reference success scaling `g^{-2N}` for a single amplifier of `N`
/// scissors. Only a comparison line; no operator here attains it.
pub fn reference_success_scaling(g: f64, scissors: usize) -> Result<f64> {
    check_gain(g)?;
    Ok(g.powi(-2 * scissors as i32))
}

/// `g^n` clipped at the cutoff. Unbounded in the untruncated space; only for
/// validating the effective-channel algebra.
pub fn ideal_gain_operator(g: f64, cutoff: Cutoff) -> Result<ModeOperator> {
    check_gain(g)?;
    let diag: Vec<f64> = (0..cutoff.levels()).map(|n| g.powi(n as i32)).collect();
    ModeOperator::from_diagonal(cutoff, &diag)
}

/// Applies `⊗_m T_m` and post-selects: returns the normalized output and the
/// joint probability that every amplifier heralds success.
pub fn apply_practical_nla<S>(state: &S, specs: &[NlaSpec]) -> Result<(S, f64)>
where
    S: FockState + Weighted,
{
    if specs.len() != state.mode_count() {
        return Err(domain(format!(
            "{} NLA specs for a {}-mode state",
            specs.len(),
            state.mode_count()
        )));
    }
    let cutoff = state.cutoff();
    let mut out = state.clone();
    for (mode, spec) in specs.iter().enumerate() {
        let NlaSpec::Practical { gain, scissors } = *spec else {
            return Err(domain(
                "the ideal NLA has zero success probability; use the effective-channel algebra",
            ));
        };
        out = out.transform_mode(&nla_operator(scissors, gain, cutoff)?, mode)?;
    }
    let p = out.weight();
    if !(p > 0.0) {
        return Err(Error::ZeroSuccess);
    }
    Ok((out.rescaled(1.0 / p), p))
}

/// Heralded single-scissor maps extracted from the circuit.
///
/// `direct` is conditioned on a lone click at the detector behind BS₁'s
/// transmitted port, `flipped` on a lone click at the other detector; the
/// latter carries a π phase on `|1⟩` that feed-forward removes. Each herald
/// has half the success probability of the full scissor.
#[derive(Clone, Debug)]
pub struct ScissorKraus {
    pub direct: ModeOperator,
    pub flipped: ModeOperator,
}

impl ScissorKraus {
    /// Kraus element of the scissor with both heralds accepted, `√2 · direct`.
    pub fn combined(&self) -> ModeOperator {
        self.direct.scale(C64::new(std::f64::consts::SQRT_2, 0.0))
    }

    /// Largest entrywise gap between the two heralds once the phase on `|1⟩` is undone.
    pub fn herald_mismatch(&self) -> f64 {
        let cutoff = self.direct.cutoff();
        let l = cutoff.levels();
        // global sign of the flipped herald is fixed by its vacuum entry
        let s0 = if self.flipped.get(0, 0).re < 0.0 { -1.0 } else { 1.0 };
        let mut worst: f64 = 0.0;
        for r in 0..l {
            for c in 0..l {
                let sign = if r % 2 == 1 { -s0 } else { s0 };
                let d = self.direct.get(r, c) - self.flipped.get(r, c) * sign;
                worst = worst.max(d.norm());
            }
        }
        worst
    }
}

/// Circuit-level quantum scissor with gain `g`.
///
/// Modes: 0 is the input, 1 carries the ancilla photon and becomes the
/// output, 2 starts in vacuum. BS₁ (modes 1, 2) transmits the ancilla into
/// mode 2 with probability `γ = 1/(1+g²)`; BS₂ (modes 0, 2) is balanced;
/// modes 0 and 2 are then projected onto a single detected photon with
/// photon-number-resolving detectors.
pub fn scissor_oracle(g: f64, cutoff: Cutoff) -> Result<ScissorKraus> {
    check_gain(g)?;
    // one ancilla photon on top of the input keeps every sector exact
    let circuit = Cutoff::new(cutoff.n_max() + 1)?;
    let gamma = 1.0 / (1.0 + g * g);
    // b† -> √(1-γ) b† + √γ c†
    let theta1 = -gamma.sqrt().asin();
    // a† -> (a† + c†)/√2, c† -> (c† - a†)/√2
    let theta2 = -std::f64::consts::FRAC_PI_4;

    let mut direct = vec![C64::new(0.0, 0.0); cutoff.levels() * cutoff.levels()];
    let mut flipped = direct.clone();
    let l = cutoff.levels();
    for k in 0..l {
        let input = FockVector::basis(circuit, &[k, 1, 0])?;
        let after1 = beamsplitter(theta1, 1, 2, &input)?;
        let out = beamsplitter(theta2, 0, 2, &after1)?;
        for m in 0..l {
            // lone click behind the transmitted ancilla port (mode 2)
            direct[m * l + k] = out.amplitude(&[0, m, 1]);
            flipped[m * l + k] = out.amplitude(&[1, m, 0]);
        }
    }
    Ok(ScissorKraus {
        direct: ModeOperator::from_entries(cutoff, direct)?,
        flipped: ModeOperator::from_entries(cutoff, flipped)?,
    })
}

/// Smallest `‖A - e^{iφ} B‖_max` over global phases, with `φ` fixed by the
/// largest entry of `B`.
pub fn max_diff_up_to_phase(a: &ModeOperator, b: &ModeOperator) -> f64 {
    let (idx, _) = b
        .entries()
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
        .expect("non-empty operator");
    let (bv, av) = (b.entries()[idx], a.entries()[idx]);
    let phase = if bv.norm() == 0.0 || av.norm() == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        (av / bv) / (av / bv).norm()
    };
    a.max_abs_diff(&b.scale(phase))
}
