//! Invariant suite behind `cvdqs validate`.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fock::{beamsplitter, Cutoff, FockVector, ModeOperator};
use crate::gaussian::{avg_x_std, loss_gaussian, splitter_gaussian, sv_gaussian};
use crate::nla::{
    apply_practical_nla, effective_sv_photons, ideal_gain_operator, max_diff_up_to_phase,
    nla_operator, scissor_oracle, NlaSpec,
};
use crate::sensing::{
    crlb_entangled, crlb_product, delta_alpha_entangled, delta_alpha_product, simulate_no_nla_fock,
    ScenarioConfig, Scheme,
};
use crate::Error;

const SEED: u64 = 0x5eed_c0de;

/// Scenario and fault-injection knobs for the suite.
#[derive(Clone, Debug)]
pub struct ValidateOptions {
    pub modes: usize,
    pub n_s: f64,
    pub scissors: usize,
    pub cutoff: Option<Cutoff>,
    /// Relative error injected into the `n = 1` coefficient of `T`.
    pub perturb_projector: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            modes: 4,
            n_s: 0.04,
            scissors: 2,
            cutoff: None,
            perturb_projector: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckResult { name, passed, detail }
    }

    fn from_result(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => CheckResult::new(name, passed, detail),
            Err(e) => CheckResult::new(name, false, format!("error: {e}")),
        }
    }
}

/// `nla_operator` with its `n = 1` diagonal entry scaled by `1 + eps`.
pub fn perturbed_nla_operator(
    scissors: usize,
    g: f64,
    cutoff: Cutoff,
    eps: f64,
) -> Result<ModeOperator> {
    let t = nla_operator(scissors, g, cutoff)?;
    let mut diag: Vec<f64> = t.diagonal().iter().map(|z| z.re).collect();
    diag[1] *= 1.0 + eps;
    ModeOperator::from_diagonal(cutoff, &diag)
}

/// Random normalized two-mode state supported on total photon number `<= cutoff`.
fn random_two_mode(rng: &mut ChaCha8Rng, cutoff: Cutoff) -> Result<FockVector> {
    let l = cutoff.levels();
    let amps = (0..l * l)
        .map(|i| {
            if i / l + i % l <= cutoff.n_max() {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok(FockVector::new(2, cutoff, amps)?.normalize()?.0)
}

fn local_both(state: &FockVector, op: &ModeOperator) -> Result<FockVector> {
    state.apply_mode(op, 0)?.apply_mode(op, 1)
}

/// `‖(A⊗A)·BS(θ)ψ - BS(θ)·(A⊗A)ψ‖_max`.
fn commutator_gap(op: &ModeOperator, theta: f64, psi: &FockVector) -> Result<f64> {
    let a = local_both(&beamsplitter(theta, 0, 1, psi)?, op)?;
    let b = beamsplitter(theta, 0, 1, &local_both(psi, op)?)?;
    Ok(a.max_abs_diff(&b))
}

fn engine_equivalence(opts: &ValidateOptions) -> Result<(bool, String)> {
    let mut worst_fock: f64 = 0.0;
    let mut worst_gauss: f64 = 0.0;
    for &eta in &[0.3, 0.5, 1.0] {
        let mut cfg = ScenarioConfig::new(Scheme::EntangledNoNla, opts.modes, opts.n_s, eta)?;
        if let Some(c) = opts.cutoff {
            cfg = cfg.with_cutoff(c);
        }
        let closed = delta_alpha_entangled(opts.modes, opts.n_s, eta)?;
        let fock = simulate_no_nla_fock(&cfg)?.delta_alpha;
        let gauss = avg_x_std(&splitter_gaussian(
            &loss_gaussian(&sv_gaussian(opts.n_s)?, eta)?,
            opts.modes,
        )?);
        worst_fock = worst_fock.max((fock - closed).abs());
        worst_gauss = worst_gauss.max((gauss - closed).abs());
    }
    Ok((
        worst_fock <= 1e-4 && worst_gauss <= 1e-8,
        format!("fock {worst_fock:.2e} (<= 1e-4), gaussian {worst_gauss:.2e} (<= 1e-8)"),
    ))
}

fn ideal_commutation() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let c = Cutoff::new(6)?;
    let mut worst: f64 = 0.0;
    for &g in &[1.0, 1.5, 2.0, 3.0] {
        let op = ideal_gain_operator(g, c)?;
        for _ in 0..8 {
            let psi = random_two_mode(&mut rng, c)?;
            let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            // g^n scales the exact sectors by up to g^6; compare relative to that
            worst = worst.max(commutator_gap(&op, theta, &psi)? / g.powi(6));
        }
    }
    Ok((worst <= 1e-10, format!("max gap {worst:.2e} (<= 1e-10)")))
}

/// `T` fails to commute with the splitter, by the amount the circuit predicts.
fn practical_witness(eps: f64) -> Result<(bool, String)> {
    let c = Cutoff::new(2)?;
    let g = 2.0;
    let psi = FockVector::basis(c, &[1, 1])?;
    let theta = std::f64::consts::FRAC_PI_4;
    let t = perturbed_nla_operator(1, g, c, eps)?;
    let circuit = scissor_oracle(g, c)?.combined();
    let w_t = commutator_gap(&t, theta, &psi)?;
    let w_circuit = commutator_gap(&circuit, theta, &psi)?;
    let gap = (w_t - w_circuit).abs();
    Ok((
        w_t >= 1e-3 && gap <= 1e-12,
        format!("witness {w_t:.6} (>= 1e-3), circuit {w_circuit:.6}, gap {gap:.2e}"),
    ))
}

fn scissor_check(eps: f64) -> Result<(bool, String)> {
    let c = Cutoff::new(3)?;
    let mut worst: f64 = 0.0;
    let mut herald: f64 = 0.0;
    for &g in &[1.0, 1.5, 2.0, 3.0] {
        let k = scissor_oracle(g, c)?;
        let t = perturbed_nla_operator(1, g, c, eps)?;
        worst = worst.max(max_diff_up_to_phase(&k.combined(), &t));
        herald = herald.max(k.herald_mismatch());
    }
    Ok((
        worst <= 1e-12 && herald <= 1e-12,
        format!("max entry gap {worst:.2e} (<= 1e-12), herald mismatch {herald:.2e}"),
    ))
}

fn effective_channel() -> Result<(bool, String)> {
    use crate::fock::{loss_kraus, quadratures, sv_fock, variance, FockState, ModeSum};
    use crate::gaussian::FOCK_P_SCALE;
    use crate::nla::EffectiveChannel;

    let c = Cutoff::new(16)?;
    let (x, p) = quadratures(c);
    let rho = sv_fock(0.04, Cutoff::new(15)?)?.with_cutoff(c)?.to_density();
    let lossy = rho.apply_kraus(&loss_kraus(0.5, c)?, 0)?;
    let mut worst: f64 = 0.0;
    for &g in &[1.0, 1.4, 1.8, 2.0] {
        let (amp, _) = lossy.transform_mode(&ideal_gain_operator(g, c)?, 0)?.normalize()?;
        let vx = variance(&ModeSum::single(0, x.clone()), &amp)?;
        let vp = variance(&ModeSum::single(0, p.clone()), &amp)?;
        let ch = EffectiveChannel::new(g, 0.5)?;
        let pred = loss_gaussian(&sv_gaussian(effective_sv_photons(0.04, ch.g_eff)?)?, ch.eta_eff)?;
        worst = worst
            .max((vx - pred.x_variance(0)).abs())
            .max((vp - FOCK_P_SCALE.powi(2) * pred.p_variance(0)).abs());
    }
    Ok((worst <= 1e-3, format!("max variance gap {worst:.2e} (<= 1e-3)")))
}

fn bound_ordering(opts: &ValidateOptions) -> Result<(bool, String)> {
    let mut ok = true;
    let mut eq_gap: f64 = 0.0;
    for i in 1..=10 {
        let eta = i as f64 / 10.0;
        let ce = crlb_entangled(opts.modes, opts.n_s, eta)?;
        let de = delta_alpha_entangled(opts.modes, opts.n_s, eta)?;
        let cp = crlb_product(opts.modes, opts.n_s, eta)?;
        let dp = delta_alpha_product(opts.modes, opts.n_s, eta)?;
        ok &= ce <= de + 1e-15 && cp <= dp + 1e-15;
        if i == 10 {
            eq_gap = (ce - de).abs().max((cp - dp).abs());
        }
    }
    Ok((ok && eq_gap <= 1e-9, format!("ordered: {ok}, gap at eta=1 {eq_gap:.2e}")))
}

fn vacuum_scaling(opts: &ValidateOptions) -> Result<(bool, String)> {
    let c = Cutoff::new(opts.scissors)?;
    let m = opts.modes.min(3);
    let mut worst: f64 = 0.0;
    for &g in &[1.0, 2.0, 2.2, 3.0] {
        let vac = FockVector::vacuum(m, c)?;
        let spec = NlaSpec::practical(g, opts.scissors)?;
        let (_, p) = apply_practical_nla(&vac, &vec![spec; m])?;
        let want = (g * g + 1.0).powi(-((opts.scissors * m) as i32));
        worst = worst.max((p / want - 1.0).abs());
    }
    Ok((worst <= 1e-12, format!("max relative gap {worst:.2e} over {m} modes")))
}

fn physicality(opts: &ValidateOptions) -> Result<(bool, String)> {
    let ratio = (opts.n_s / (opts.n_s + 1.0)).sqrt();
    if ratio == 0.0 {
        return Ok((true, "vacuum source: every gain is physical".into()));
    }
    let edge = (1.0 / ratio).sqrt();
    let below = effective_sv_photons(opts.n_s, edge * (1.0 - 1e-9)).is_ok();
    let at = matches!(
        effective_sv_photons(opts.n_s, edge),
        Err(Error::UnphysicalGain { .. })
    );
    Ok((below && at, format!("boundary g_eff^2 = {:.5}", edge * edge)))
}

/// Runs every check; the suite passes when all entries pass.
pub fn run(opts: &ValidateOptions) -> Vec<CheckResult> {
    let eps = opts.perturb_projector;
    vec![
        CheckResult::from_result("engine equivalence", engine_equivalence(opts)),
        CheckResult::from_result("ideal gain commutes with splitter", ideal_commutation()),
        CheckResult::from_result("practical NLA non-commutation witness", practical_witness(eps)),
        CheckResult::from_result("scissor oracle", scissor_check(eps)),
        CheckResult::from_result("effective channel equivalence", effective_channel()),
        CheckResult::from_result("bound ordering", bound_ordering(opts)),
        CheckResult::from_result("vacuum success scaling", vacuum_scaling(opts)),
        CheckResult::from_result("physicality boundary", physicality(opts)),
    ]
}
