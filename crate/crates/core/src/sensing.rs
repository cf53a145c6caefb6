//! Sensing pipelines, closed-form sensitivities and Cramér-Rao bounds.
//!
//! The probe is a squeezed vacuum sent through pure loss `η`, spread over `M`
//! nodes by a balanced splitter, optionally amplified, and read out with the
//! estimator `x̄ = (1/M) Σ x_m`. The displacement under test only shifts
//! means, so every pipeline reports `δα = √Var(x̄)` on the undisplaced probe.

use std::fmt;
use std::str::FromStr;

use crate::error::{domain, Error, Result};
use crate::fock::{
    balanced_splitter, binomial, loss_kraus, quadratures, sv_fock, Cutoff, FockEnsemble, FockState,
    FockVector, Measurable, ModeOperator, ModeSum, DEFAULT_TRUNCATION_TOLERANCE,
};
use crate::gaussian::GaussianState;
use crate::nla::{
    apply_practical_nla, effective_gain, effective_sv_photons, effective_transmissivity, NlaSpec,
};

/// Tolerance on `|⟨x_m⟩|` for the unbiased-estimator premise.
pub const MEAN_TOLERANCE: f64 = 1e-10;

/// Declared in the order rows are sorted in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    EntangledIdealNla,
    EntangledNoNla,
    EntangledPracticalNla,
    ProductOptimal,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::EntangledIdealNla,
        Scheme::EntangledNoNla,
        Scheme::EntangledPracticalNla,
        Scheme::ProductOptimal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::EntangledIdealNla => "entangled_ideal_nla",
            Scheme::EntangledNoNla => "entangled_no_nla",
            Scheme::EntangledPracticalNla => "entangled_practical_nla",
            Scheme::ProductOptimal => "product_optimal",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| domain(format!("unknown scheme {s:?}")))
    }
}

/// One sensing scenario.
///
/// For [`Scheme::ProductOptimal`], `n_s` is the total photon number shared
/// by the `M` local squeezers and `eta_local` is their loss (default 1).
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub modes: usize,
    pub n_s: f64,
    pub eta: f64,
    pub nla: Option<NlaSpec>,
    /// Source photon cutoff; `None` picks one from the truncation tolerance.
    pub cutoff: Option<Cutoff>,
    pub scheme: Scheme,
    pub eta_local: f64,
    pub trunc_tolerance: f64,
}

impl ScenarioConfig {
    pub fn new(scheme: Scheme, modes: usize, n_s: f64, eta: f64) -> Result<Self> {
        let cfg = ScenarioConfig {
            modes,
            n_s,
            eta,
            nla: None,
            cutoff: None,
            scheme,
            eta_local: 1.0,
            trunc_tolerance: DEFAULT_TRUNCATION_TOLERANCE,
        };
        cfg.validate_scalars()?;
        Ok(cfg)
    }

    pub fn with_nla(mut self, nla: NlaSpec) -> Self {
        self.nla = Some(nla);
        self
    }

    pub fn with_cutoff(mut self, cutoff: Cutoff) -> Self {
        self.cutoff = Some(cutoff);
        self
    }

    pub fn with_eta_local(mut self, eta_local: f64) -> Self {
        self.eta_local = eta_local;
        self
    }

    fn validate_scalars(&self) -> Result<()> {
        check_modes(self.modes)?;
        check_photons(self.n_s)?;
        check_eta(self.eta)?;
        check_eta(self.eta_local)?;
        if !(self.trunc_tolerance > 0.0) {
            return Err(domain("truncation tolerance must be positive"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_scalars()?;
        match (self.scheme, self.nla) {
            (Scheme::EntangledIdealNla, Some(NlaSpec::Ideal { .. }))
            | (Scheme::EntangledPracticalNla, Some(NlaSpec::Practical { .. }))
            | (Scheme::EntangledNoNla, None)
            | (Scheme::ProductOptimal, None) => {}
            (scheme, nla) => {
                return Err(domain(format!("scheme {scheme} does not take NLA spec {nla:?}")))
            }
        }
        if let (Some(c), Some(NlaSpec::Practical { scissors, .. })) = (self.cutoff, self.nla) {
            if c.n_max() < scissors {
                return Err(domain(format!(
                    "cutoff {} is below the scissor count {scissors}",
                    c.n_max()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityPoint {
    pub scheme: Scheme,
    pub probe_power: f64,
    pub delta_alpha: f64,
    /// Joint herald probability; 1 without NLAs, 0 for the ideal NLA.
    pub p_success: f64,
    /// Set when `p_success` is the zero-probability ideal-NLA idealization.
    pub idealized: bool,
    /// Source photon cutoff of a Fock simulation.
    pub cutoff: Option<usize>,
    /// Source weight dropped by the cutoff that the pipeline could have kept.
    pub trunc_deficit: f64,
}

impl SensitivityPoint {
    fn closed_form(scheme: Scheme, probe_power: f64, delta_alpha: f64) -> Self {
        SensitivityPoint {
            scheme,
            probe_power,
            delta_alpha,
            p_success: 1.0,
            idealized: false,
            cutoff: None,
            trunc_deficit: 0.0,
        }
    }
}

fn check_modes(m: usize) -> Result<()> {
    if m < 1 {
        return Err(domain("need at least one sensor"));
    }
    Ok(())
}

fn check_photons(n: f64) -> Result<()> {
    if !(n >= 0.0) || !n.is_finite() {
        return Err(domain(format!("mean photon number must be >= 0, got {n}")));
    }
    Ok(())
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(domain(format!("transmissivity must lie in (0, 1], got {eta}")));
    }
    Ok(())
}

/// `(√(n+1) + √n)² = e^{2r}`.
fn squeeze_factor(n: f64) -> f64 {
    let s = (n + 1.0).sqrt() + n.sqrt();
    s * s
}

/// `½ √(η / (M e^{2r}) + (1 - η) / M)`.
fn lossy_sv_error(m: usize, n: f64, eta: f64) -> f64 {
    let m = m as f64;
    0.5 * (eta / (m * squeeze_factor(n)) + (1.0 - eta) / m).sqrt()
}

/// rms error of the entangled scheme without amplification.
pub fn delta_alpha_entangled(m: usize, n_s: f64, eta: f64) -> Result<f64> {
    check_modes(m)?;
    check_photons(n_s)?;
    check_eta(eta)?;
    Ok(lossy_sv_error(m, n_s, eta))
}

/// Entangled scheme behind ideal NLAs of gain `g`, through the effective channel.
///
/// The probe power is `N_eff · η_eff`; the success probability is reported
/// as 0 with `idealized` set.
pub fn delta_alpha_ideal_nla(m: usize, n_s: f64, eta: f64, g: f64) -> Result<SensitivityPoint> {
    check_modes(m)?;
    check_photons(n_s)?;
    let g_eff = effective_gain(g, eta)?;
    let eta_eff = effective_transmissivity(g, eta)?;
    let n_eff = effective_sv_photons(n_s, g_eff)?;
    Ok(SensitivityPoint {
        scheme: Scheme::EntangledIdealNla,
        probe_power: n_eff * eta_eff,
        delta_alpha: lossy_sv_error(m, n_eff, eta_eff),
        p_success: 0.0,
        idealized: true,
        cutoff: None,
        trunc_deficit: 0.0,
    })
}

/// `M` identical local squeezers sharing `n_total` photons, each behind loss `eta_local`.
pub fn delta_alpha_product(m: usize, n_total: f64, eta_local: f64) -> Result<f64> {
    check_modes(m)?;
    check_photons(n_total)?;
    check_eta(eta_local)?;
    Ok(lossy_sv_error(m, n_total / m as f64, eta_local))
}

/// `½ [Mη e^{2r} + M(1-η)]^{-1/2}`.
pub fn crlb_entangled(m: usize, n_s: f64, eta: f64) -> Result<f64> {
    check_modes(m)?;
    check_photons(n_s)?;
    check_eta(eta)?;
    let m = m as f64;
    Ok(0.5 / (m * eta * squeeze_factor(n_s) + m * (1.0 - eta)).sqrt())
}

/// Product-state analog of [`crlb_entangled`] with `n_s / M` photons per mode.
pub fn crlb_product(m: usize, n_s: f64, eta: f64) -> Result<f64> {
    check_modes(m)?;
    crlb_entangled(m, n_s / m as f64, eta)
}

/// `10 log₁₀(δ_p² / δ_e²)`.
pub fn advantage_db(delta_p: f64, delta_e: f64) -> f64 {
    10.0 * (delta_p * delta_p / (delta_e * delta_e)).log10()
}

/// `4 Var(Σ p_m)` of a pure Fock state.
///
/// Exact only when the top Fock level of every mode is empty.
pub fn qfi_pure_displacement(state: &FockVector) -> Result<f64> {
    let (_, p) = quadratures(state.cutoff());
    let obs = ModeSum::uniform(&p, state.mode_count(), 1.0);
    let (first, second) = state.moments(&obs)?;
    let w = state.norm_sqr();
    Ok(4.0 * (second.re / w - (first.re / w).powi(2)))
}

/// Gaussian counterpart of [`qfi_pure_displacement`].
pub fn qfi_pure_displacement_gaussian(state: &GaussianState) -> f64 {
    4.0 * state.sum_p_variance_fock()
}

/// Amplification seen by the practical NLAs: gain and the largest total
/// photon number `M·N` that survives them.
fn amplification(cfg: &ScenarioConfig) -> Option<(f64, usize)> {
    match cfg.nla {
        Some(NlaSpec::Practical { gain, scissors }) => Some((gain, cfg.modes * scissors)),
        _ => None,
    }
}

/// Weight with which source sector `n` reaches the detectors: 1 without
/// amplification, otherwise `Σ_{j <= min(n, s)} C(n, j) η^j (1-η)^(n-j) g^(2j)`,
/// the loss-binomial spread over sectors `T̃` keeps, scaled by the gain.
fn sector_weight(n: usize, eta: f64, amp: Option<(f64, usize)>) -> f64 {
    let Some((g, support)) = amp else {
        return 1.0;
    };
    (0..=n.min(support))
        .map(|j| {
            binomial(n, j) * eta.powi(j as i32) * (1.0 - eta).powi((n - j) as i32) * g.powi(2 * j as i32)
        })
        .sum()
}

/// Relative weight of the source sectors above `cutoff`, each counted with
/// the amplification it would receive downstream. Without NLAs this is the
/// plain squeezed-vacuum tail.
pub fn truncation_deficit(
    n_s: f64,
    eta: f64,
    cutoff: Cutoff,
    amp: Option<(f64, usize)>,
) -> Result<f64> {
    check_photons(n_s)?;
    if n_s == 0.0 {
        return Ok(0.0);
    }
    // the tail decays at least like tanh²r per photon pair; extend until negligible
    let mut hi = cutoff.n_max() + 64;
    loop {
        let amps = sv_fock(n_s, Cutoff::new(hi)?)?;
        let terms: Vec<f64> = amps
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(n, a)| a.norm_sqr() * sector_weight(n, eta, amp))
            .collect();
        let kept: f64 = terms[..cutoff.levels()].iter().sum();
        let dropped: f64 = terms[cutoff.levels()..].iter().sum();
        let last = terms[hi - 1].max(terms[hi]);
        if last <= 1e-18 * (kept + dropped) || hi >= 4096 {
            return Ok(dropped / kept);
        }
        hi *= 2;
    }
}

/// Smallest cutoff, no lower than 2 or the scissor count, whose deficit
/// meets the scenario tolerance.
pub fn default_cutoff(cfg: &ScenarioConfig) -> Result<Cutoff> {
    let amp = amplification(cfg);
    let floor = cfg.nla.and_then(|s| s.scissors()).unwrap_or(2);
    let mut n = floor.max(2);
    loop {
        let c = Cutoff::new(n)?;
        if truncation_deficit(cfg.n_s, cfg.eta, c, amp)? < cfg.trunc_tolerance {
            return Ok(c);
        }
        if n > 512 {
            return Err(Error::Truncation {
                deficit: truncation_deficit(cfg.n_s, cfg.eta, c, amp)?,
                tolerance: cfg.trunc_tolerance,
                n_max: n,
            });
        }
        n += 1;
    }
}

/// Lossy squeezed vacuum spread over `m` modes, with source cutoff `c`
/// embedded one level higher so quadrature moments are exact.
pub fn lossy_split_probe(m: usize, n_s: f64, eta: f64, c: Cutoff) -> Result<FockEnsemble> {
    check_modes(m)?;
    let padded = Cutoff::new(c.n_max() + 1)?;
    let source = sv_fock(n_s, c)?.with_cutoff(padded)?;
    let register = if m > 1 {
        source.tensor(&FockVector::vacuum(m - 1, padded)?)?
    } else {
        source
    };
    // loss commutes with the splitter when applied to every output, so it
    // can be applied once to the source
    let lossy = FockEnsemble::from_vector(register).apply_kraus(&loss_kraus(eta, padded)?, 0)?;
    balanced_splitter(m, &lossy)
}

/// Readout statistics of a normalized probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Readout {
    pub delta_alpha: f64,
    pub probe_power: f64,
    /// Largest `|⟨x_m⟩|`.
    pub max_mean: f64,
}

/// Normalizes `state` and measures `x̄` and the total photon number.
pub fn readout<S: Measurable + FockState>(state: &S, weight: f64) -> Result<Readout> {
    if !(weight > 0.0) {
        return Err(Error::ZeroSuccess);
    }
    let c = state.cutoff();
    let m = state.mode_count();
    let (x, _) = quadratures(c);
    let xbar = ModeSum::uniform(&x, m, 1.0 / m as f64);
    let (first, second) = state.moments(&xbar)?;
    let var = second.re / weight - (first.re / weight).powi(2);
    let number = ModeSum::uniform(&ModeOperator::number(c), m, 1.0);
    let power = state.moments(&number)?.0.re / weight;
    let mut max_mean: f64 = 0.0;
    for mode in 0..m {
        let mean = state.moments(&ModeSum::single(mode, x.clone()))?.0.re / weight;
        max_mean = max_mean.max(mean.abs());
    }
    Ok(Readout {
        delta_alpha: var.max(0.0).sqrt(),
        probe_power: power,
        max_mean,
    })
}

fn checked_readout(state: &FockEnsemble) -> Result<Readout> {
    let r = readout(state, state.trace())?;
    if r.max_mean > MEAN_TOLERANCE {
        return Err(domain(format!(
            "probe has nonzero mean quadrature {:.3e}; x̄ would be biased",
            r.max_mean
        )));
    }
    Ok(r)
}

fn resolve_cutoff(cfg: &ScenarioConfig) -> Result<(Cutoff, f64)> {
    let c = match cfg.cutoff {
        Some(c) => c,
        None => default_cutoff(cfg)?,
    };
    let deficit = truncation_deficit(cfg.n_s, cfg.eta, c, amplification(cfg))?;
    if deficit > cfg.trunc_tolerance {
        return Err(Error::Truncation {
            deficit,
            tolerance: cfg.trunc_tolerance,
            n_max: c.n_max(),
        });
    }
    Ok((c, deficit))
}

/// Fock simulation of the entangled scheme behind practical NLAs.
pub fn simulate_practical(cfg: &ScenarioConfig) -> Result<SensitivityPoint> {
    cfg.validate()?;
    let Some(spec @ NlaSpec::Practical { .. }) = cfg.nla else {
        return Err(domain("practical simulation needs a practical NLA spec"));
    };
    let (c, deficit) = resolve_cutoff(cfg)?;
    let probe = lossy_split_probe(cfg.modes, cfg.n_s, cfg.eta, c)?;
    let (amplified, p) = apply_practical_nla(&probe, &vec![spec; cfg.modes])?;
    let r = checked_readout(&amplified)?;
    Ok(SensitivityPoint {
        scheme: Scheme::EntangledPracticalNla,
        probe_power: r.probe_power,
        delta_alpha: r.delta_alpha,
        p_success: p,
        idealized: false,
        cutoff: Some(c.n_max()),
        trunc_deficit: deficit,
    })
}

/// Fock simulation of the entangled scheme without amplification.
pub fn simulate_no_nla_fock(cfg: &ScenarioConfig) -> Result<SensitivityPoint> {
    cfg.validate()?;
    if cfg.nla.is_some() {
        return Err(domain("no-NLA simulation given an NLA spec"));
    }
    let (c, deficit) = resolve_cutoff(cfg)?;
    let probe = lossy_split_probe(cfg.modes, cfg.n_s, cfg.eta, c)?;
    let r = checked_readout(&probe)?;
    Ok(SensitivityPoint {
        scheme: Scheme::EntangledNoNla,
        probe_power: r.probe_power,
        delta_alpha: r.delta_alpha,
        p_success: 1.0,
        idealized: false,
        cutoff: Some(c.n_max()),
        trunc_deficit: deficit,
    })
}

/// Evaluates a scenario with the cheapest faithful model for its scheme.
pub fn evaluate(cfg: &ScenarioConfig) -> Result<SensitivityPoint> {
    cfg.validate()?;
    match cfg.scheme {
        Scheme::EntangledNoNla => Ok(SensitivityPoint::closed_form(
            Scheme::EntangledNoNla,
            cfg.n_s * cfg.eta,
            delta_alpha_entangled(cfg.modes, cfg.n_s, cfg.eta)?,
        )),
        Scheme::EntangledIdealNla => {
            let g = cfg.nla.map(|s| s.gain()).unwrap_or(1.0);
            delta_alpha_ideal_nla(cfg.modes, cfg.n_s, cfg.eta, g)
        }
        Scheme::EntangledPracticalNla => simulate_practical(cfg),
        Scheme::ProductOptimal => Ok(SensitivityPoint::closed_form(
            Scheme::ProductOptimal,
            cfg.n_s * cfg.eta_local,
            delta_alpha_product(cfg.modes, cfg.n_s, cfg.eta_local)?,
        )),
    }
}
