//! The six entropy-production estimators and the identities that tie them
//! together.
//!
//! | estimator | needs | quantity |
//! |-----------|-------|----------|
//! | Σ₁ | forward | `Δβ·Q^C + H[p(k)]` |
//! | Σ₂ | forward | `Σ_k p(k) D(ρ_f^k ‖ ζ_Q⊗ζ_C)` |
//! | Σ₃ | both | `Σ_k p(k) D(ρ_i^k ‖ ρ̃_f^k)` |
//! | Σ₄ | both | `Σ_γ p(γ) ln(p(γ)/p(γ̃))` |
//! | Σ₅ | both | divergence of the σ histograms |
//! | Σ₆ | forward | `D(ρ_f^QC ‖ ζ_Q⊗ζ_C) + I_f^{QC:D}` |
//!
//! Divergences may be `+∞`; the states responsible are reported alongside.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::protocol::{
    branch_probability, sigma_histogram, SigmaHistogram, TrajectoryTable, SIGMA_TOLERANCE,
};
use crate::statespace::{
    condition, kl_divergence, marginalize, mutual_information, shannon_entropy, support_mismatch,
    GibbsSpec, JointDistribution, Subsystem,
};

/// Where the exchanged heat is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeatSource {
    /// `-Q^Q`, from the atomic populations only.
    #[default]
    Atomic,
    /// `Q^C`, from the photon numbers.
    Cavity,
}

impl FromStr for HeatSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "atomic" => Ok(HeatSource::Atomic),
            "cavity" => Ok(HeatSource::Cavity),
            other => Err(Error::InvalidConfig(format!(
                "unknown heat source `{other}`; expected `atomic` or `cavity`"
            ))),
        }
    }
}

impl fmt::Display for HeatSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeatSource::Atomic => "atomic",
            HeatSource::Cavity => "cavity",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    pub heat_source: HeatSource,
    /// Lower bound applied to the second argument of the backward
    /// divergences.
    pub floor: Option<f64>,
    pub sigma_tol: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            heat_source: HeatSource::Atomic,
            floor: None,
            sigma_tol: SIGMA_TOLERANCE,
        }
    }
}

/// A divergence value together with the states that make it infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub value: f64,
    pub support_mismatch: Vec<String>,
}

impl Divergence {
    fn of(p: &[f64], q: &[f64], floor: Option<f64>, label: impl Fn(usize) -> String) -> Self {
        let floored: Vec<f64>;
        let q = match floor {
            Some(f) => {
                floored = q.iter().map(|&x| x.max(f)).collect();
                &floored
            }
            None => q,
        };
        Divergence {
            value: kl_divergence(p, q),
            support_mismatch: support_mismatch(p, q).into_iter().map(label).collect(),
        }
    }
}

/// Entropy production of one temperature point.
#[derive(Debug, Clone, PartialEq)]
pub struct EpResult {
    pub dbeta_tilde: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// `None` when no backward data were supplied.
    pub sigma3: Option<f64>,
    pub sigma4: Option<f64>,
    pub sigma5: Option<f64>,
    pub sigma6: f64,
    pub heat_c: f64,
    pub mean_info: f64,
    pub asymptote: f64,
    /// Short diagnostics, for instance `sigma4_inf`.
    pub flags: Vec<String>,
    /// Offending states per infinite estimator.
    pub support: Vec<(usize, Vec<String>)>,
}

impl EpResult {
    /// The available estimators as `(i, Σᵢ)`.
    pub fn sigmas(&self) -> Vec<(usize, f64)> {
        [
            Some(self.sigma1),
            Some(self.sigma2),
            self.sigma3,
            self.sigma4,
            self.sigma5,
            Some(self.sigma6),
        ]
        .into_iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|v| (i + 1, v)))
        .collect()
    }

    /// Largest `|Σᵢ - Σⱼ|` over the available estimators.
    pub fn max_pairwise_gap(&self) -> f64 {
        let s = self.sigmas();
        let mut gap: f64 = 0.0;
        for (i, a) in &s {
            for (j, b) in &s {
                if i < j {
                    gap = gap.max((a - b).abs());
                }
            }
        }
        gap
    }
}

/// Mean heat absorbed by the cavity, in quanta.
pub fn heat_c(fwd: &TrajectoryTable, source: HeatSource) -> f64 {
    fwd.iter()
        .map(|(t, p)| match source {
            HeatSource::Cavity => p * (t.m_c as f64 - t.n_c as f64),
            HeatSource::Atomic => -p * (t.m_q as f64 - t.n_q as f64),
        })
        .sum()
}

/// Mean information gained by the readout, `H[p(k)]`.
pub fn mean_info(fwd: &TrajectoryTable) -> Result<f64> {
    Ok(shannon_entropy(&branch_probability(fwd)?))
}

pub fn sigma1(fwd: &TrajectoryTable, gibbs: &GibbsSpec, source: HeatSource) -> Result<f64> {
    Ok(gibbs.delta_beta() * heat_c(fwd, source) + mean_info(fwd)?)
}

pub fn sigma2(fwd: &TrajectoryTable, gibbs: &GibbsSpec) -> Result<f64> {
    let joint = fwd.final_joint();
    let reference = gibbs.reference_product(fwd.dims());
    let mut total = 0.0;
    for k in 0..fwd.dims().demon {
        if let (Some(rho), weight) = condition(&joint, Subsystem::Demon, k) {
            total += weight * kl_divergence(rho.probs(), &reference);
        }
    }
    Ok(total)
}

pub fn sigma3(
    fwd: &TrajectoryTable,
    bwd: &TrajectoryTable,
    floor: Option<f64>,
) -> Result<Divergence> {
    check_pair(fwd, bwd)?;
    let dims = *fwd.dims();
    let pk = branch_probability(fwd)?;
    let mut value = 0.0;
    let mut mismatch = Vec::new();
    for k in 0..dims.demon {
        let w = pk.probs()[k];
        if w <= 0.0 {
            continue;
        }
        let rho_i: Vec<f64> = fwd.initial_in_branch(k).iter().map(|x| x / w).collect();
        let rho_b: Vec<f64> = bwd.initial_in_branch(k).iter().map(|x| x / w).collect();
        let d = Divergence::of(&rho_i, &rho_b, floor, |i| {
            format!("k={k}:({},{})", i / dims.cavity_full, i % dims.cavity_full)
        });
        value += w * d.value;
        mismatch.extend(d.support_mismatch);
    }
    Ok(Divergence {
        value,
        support_mismatch: mismatch,
    })
}

pub fn sigma4(
    fwd: &TrajectoryTable,
    bwd: &TrajectoryTable,
    floor: Option<f64>,
) -> Result<Divergence> {
    check_pair(fwd, bwd)?;
    Ok(Divergence::of(fwd.probs(), bwd.probs(), floor, |i| {
        fwd.trajectory(i).to_string()
    }))
}

pub fn sigma5(hist: &SigmaHistogram, floor: Option<f64>) -> Divergence {
    let p: Vec<f64> = hist.bins.iter().map(|b| b.forward).collect();
    let q: Vec<f64> = hist.bins.iter().map(|b| b.backward).collect();
    Divergence::of(&p, &q, floor, |i| {
        format!("sigma={:.6}", hist.bins[i].sigma)
    })
}

pub fn sigma6(fwd: &TrajectoryTable, gibbs: &GibbsSpec) -> Result<f64> {
    let joint = fwd.final_joint();
    Ok(qc_divergence(&joint, gibbs)? + mutual_information(&joint, &[Subsystem::Demon])?)
}

/// `D(ρ^QC ‖ ζ_Q ⊗ ζ_C)` for the QC marginal of a joint state.
fn qc_divergence(joint: &JointDistribution, gibbs: &GibbsSpec) -> Result<f64> {
    let qc = marginalize(joint, &[Subsystem::Qubit, Subsystem::Cavity])?;
    Ok(kl_divergence(
        qc.probs(),
        &gibbs.reference_product(joint.dims()),
    ))
}

fn mean_photons(joint: &JointDistribution) -> Result<f64> {
    let c = marginalize(joint, &[Subsystem::Cavity])?;
    Ok(c.probs()
        .iter()
        .enumerate()
        .map(|(n, p)| n as f64 * p)
        .sum())
}

/// `Δβ·Q^C - Δ_fb I^{QC:D} - D(ρ_f^QC ‖ ζ_Q⊗ζ_C)` across the feedback gate.
/// Vanishes for an ideal readout.
pub fn feedback_balance_residual(
    pre_fb: &JointDistribution,
    post_fb: &JointDistribution,
    gibbs: &GibbsSpec,
) -> Result<f64> {
    let heat = mean_photons(post_fb)? - mean_photons(pre_fb)?;
    let info_change = mutual_information(post_fb, &[Subsystem::Demon])?
        - mutual_information(pre_fb, &[Subsystem::Demon])?;
    Ok(gibbs.delta_beta() * heat - info_change - qc_divergence(post_fb, gibbs)?)
}

/// Limiting lines of the entropy production: `β_C·δβ̃` for a hot qubit
/// (`δβ̃ > 0`), zero otherwise.
pub fn asymptote(gibbs: &GibbsSpec) -> f64 {
    if gibbs.dbeta_tilde() > 0.0 {
        gibbs.beta_c() * gibbs.dbeta_tilde()
    } else {
        0.0
    }
}

fn check_pair(fwd: &TrajectoryTable, bwd: &TrajectoryTable) -> Result<()> {
    if fwd.dims() != bwd.dims() {
        return Err(Error::LabelMismatch(
            "forward and backward tables index different spaces".into(),
        ));
    }
    if fwd.gibbs() != bwd.gibbs() {
        return Err(Error::LabelMismatch(
            "forward and backward tables use different temperatures".into(),
        ));
    }
    Ok(())
}

/// Every estimator for one temperature point. Without a backward table
/// only Σ₁, Σ₂ and Σ₆ are computed.
pub fn evaluate(
    fwd: &TrajectoryTable,
    bwd: Option<&TrajectoryTable>,
    opts: &EstimatorOptions,
) -> Result<EpResult> {
    let gibbs = fwd.gibbs();
    let mut result = EpResult {
        dbeta_tilde: gibbs.dbeta_tilde(),
        sigma1: sigma1(fwd, gibbs, opts.heat_source)?,
        sigma2: sigma2(fwd, gibbs)?,
        sigma3: None,
        sigma4: None,
        sigma5: None,
        sigma6: sigma6(fwd, gibbs)?,
        heat_c: heat_c(fwd, opts.heat_source),
        mean_info: mean_info(fwd)?,
        asymptote: asymptote(gibbs),
        flags: Vec::new(),
        support: Vec::new(),
    };
    if let Some(bwd) = bwd {
        let hist = sigma_histogram(fwd, bwd, opts.sigma_tol)?;
        let divergences = [
            (3, sigma3(fwd, bwd, opts.floor)?),
            (4, sigma4(fwd, bwd, opts.floor)?),
            (5, sigma5(&hist, opts.floor)),
        ];
        for (i, d) in divergences {
            if d.value.is_infinite() {
                result.flags.push(format!("sigma{i}_inf"));
                result.support.push((i, d.support_mismatch));
            }
            match i {
                3 => result.sigma3 = Some(d.value),
                4 => result.sigma4 = Some(d.value),
                _ => result.sigma5 = Some(d.value),
            }
        }
        if opts.floor.is_some() {
            result.flags.push("floored".into());
        }
    }
    Ok(result)
}
