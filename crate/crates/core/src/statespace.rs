//! Truncated energy basis of the qubit (Q), demon (D) and cavity (C),
//! thermal states, and the classical information measures every estimator
//! is built from.
//!
//! All states handled by this crate are diagonal in the energy basis, so a
//! density operator is just a probability vector and the quantum divergence
//! reduces to the Kullback-Leibler divergence. Energies are measured in
//! quanta of the common transition frequency (`ħω = 1`), so level `n` of
//! either the qubit or the cavity has energy `n`, and inverse temperatures
//! are the dimensionless products `β·ħω`.

use log::warn;

use crate::error::{Error, Result};

/// Deviation from unit mass that is renormalized without comment.
pub const SILENT_TOLERANCE: f64 = 1e-9;
/// Deviation from unit mass that is renormalized with a warning; anything
/// larger is rejected.
pub const WARN_TOLERANCE: f64 = 1e-3;

/// Energy of level `n` in quanta. The qubit gap equals the cavity photon
/// energy, which is what makes `Q^Q = -Q^C` hold along every swap.
#[inline]
pub fn energy(n: usize) -> f64 {
    n as f64
}

/// One of the three parties of the joint system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subsystem {
    Qubit,
    Demon,
    Cavity,
}

impl Subsystem {
    pub const ALL: [Subsystem; 3] = [Subsystem::Qubit, Subsystem::Demon, Subsystem::Cavity];

    fn axis(self) -> usize {
        match self {
            Subsystem::Qubit => 0,
            Subsystem::Demon => 1,
            Subsystem::Cavity => 2,
        }
    }
}

/// Sizes of the truncated Hilbert spaces.
///
/// `cavity_init` bounds the photon numbers drawn from the initial thermal
/// state; `cavity_full` bounds everything reachable afterwards. The feedback
/// adds at most one photon, so `cavity_full > cavity_init` keeps the swap
/// from leaking probability out of the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemDims {
    pub qubit: usize,
    pub demon: usize,
    pub cavity_init: usize,
    pub cavity_full: usize,
}

impl Default for SystemDims {
    fn default() -> Self {
        SystemDims {
            qubit: 2,
            demon: 2,
            cavity_init: 4,
            cavity_full: 5,
        }
    }
}

impl SystemDims {
    pub fn new(qubit: usize, demon: usize, cavity_init: usize, cavity_full: usize) -> Result<Self> {
        if qubit < 2 || demon < 2 || cavity_init < 2 || cavity_full < 2 {
            return Err(Error::InvalidDims(
                "all dimensions must be at least 2".into(),
            ));
        }
        if cavity_full < cavity_init + 1 {
            return Err(Error::InvalidDims(format!(
                "evolved cavity cutoff {cavity_full} must exceed the initial cutoff {cavity_init}"
            )));
        }
        Ok(SystemDims {
            qubit,
            demon,
            cavity_init,
            cavity_full,
        })
    }

    /// Number of joint QDC basis states.
    pub fn joint_len(&self) -> usize {
        self.qubit * self.demon * self.cavity_full
    }

    /// Number of joint QC basis states (evolved cavity cutoff).
    pub fn qc_len(&self) -> usize {
        self.qubit * self.cavity_full
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.qubit, self.demon, self.cavity_full]
    }

    /// Flat index of `|n_Q, n_D, n_C>`.
    #[inline]
    pub fn index(&self, q: usize, d: usize, c: usize) -> usize {
        debug_assert!(q < self.qubit && d < self.demon && c < self.cavity_full);
        (q * self.demon + d) * self.cavity_full + c
    }

    /// Inverse of [`SystemDims::index`].
    #[inline]
    pub fn unindex(&self, i: usize) -> (usize, usize, usize) {
        let c = i % self.cavity_full;
        let qd = i / self.cavity_full;
        (qd / self.demon, qd % self.demon, c)
    }

    /// Flat index of `|n_Q, n_C>` in the QC space.
    #[inline]
    pub fn qc_index(&self, q: usize, c: usize) -> usize {
        q * self.cavity_full + c
    }
}

/// Inverse temperatures of the qubit and the cavity.
///
/// The cavity temperature is always positive; the qubit may sit at negative
/// temperature (population inversion) once `dbeta_tilde > 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsSpec {
    beta_q: f64,
    beta_c: f64,
    dbeta_tilde: f64,
}

impl GibbsSpec {
    /// Builds the Gibbs parameters from the cavity inverse temperature and the relative
    /// inverse temperature `δβ̃ = 1 - β_Q/β_C`.
    pub fn from_dbeta(beta_c: f64, dbeta_tilde: f64) -> Result<Self> {
        check_beta_c(beta_c)?;
        if !dbeta_tilde.is_finite() {
            return Err(Error::OutOfRange {
                name: "dbeta_tilde".into(),
                value: dbeta_tilde,
                range: "finite",
            });
        }
        Ok(GibbsSpec {
            beta_q: beta_c * (1.0 - dbeta_tilde),
            beta_c,
            dbeta_tilde,
        })
    }

    pub fn from_betas(beta_q: f64, beta_c: f64) -> Result<Self> {
        check_beta_c(beta_c)?;
        if !beta_q.is_finite() {
            return Err(Error::OutOfRange {
                name: "beta_q".into(),
                value: beta_q,
                range: "finite",
            });
        }
        Ok(GibbsSpec {
            beta_q,
            beta_c,
            dbeta_tilde: 1.0 - beta_q / beta_c,
        })
    }

    pub fn beta_q(&self) -> f64 {
        self.beta_q
    }

    pub fn beta_c(&self) -> f64 {
        self.beta_c
    }

    pub fn dbeta_tilde(&self) -> f64 {
        self.dbeta_tilde
    }

    /// `Δβ = β_C - β_Q`.
    pub fn delta_beta(&self) -> f64 {
        self.beta_c - self.beta_q
    }

    /// Thermal qubit populations.
    pub fn qubit_prior(&self, dims: &SystemDims) -> Distribution {
        gibbs_distribution(self.beta_q, dims.qubit, true)
            .expect("qubit Gibbs state is always well defined")
    }

    /// Initial cavity populations: thermal over `n < cavity_init`,
    /// renormalized there, and zero above. Length `cavity_full`.
    pub fn cavity_prior(&self, dims: &SystemDims) -> Distribution {
        let mut p = gibbs_distribution(self.beta_c, dims.cavity_init, true)
            .expect("cavity Gibbs state is always well defined")
            .p;
        p.resize(dims.cavity_full, 0.0);
        Distribution {
            p,
            normalized: true,
        }
    }

    /// Cavity reference weights over the evolved space `n < cavity_full`:
    /// the initial truncated partition function extended by exact Boltzmann
    /// factors. Sums to slightly more than one; sharing the partition
    /// function with [`GibbsSpec::cavity_prior`] keeps every thermodynamic
    /// identity exact on the truncated space.
    pub fn cavity_reference(&self, dims: &SystemDims) -> Vec<f64> {
        let log_z = log_partition(self.beta_c, dims.cavity_init);
        (0..dims.cavity_full)
            .map(|n| (-self.beta_c * energy(n) - log_z).exp())
            .collect()
    }

    /// Reference product `ζ_Q ⊗ ζ_C` over the QC space.
    pub fn reference_product(&self, dims: &SystemDims) -> Vec<f64> {
        let q = self.qubit_prior(dims);
        let c = self.cavity_reference(dims);
        let mut out = Vec::with_capacity(dims.qc_len());
        for pq in q.probs() {
            out.extend(c.iter().map(|pc| pq * pc));
        }
        out
    }

    /// Equilibrium free energy of the qubit, `-ln Z / β`.
    pub fn qubit_free_energy(&self, dims: &SystemDims) -> f64 {
        -log_partition(self.beta_q, dims.qubit) / self.beta_q
    }

    /// Equilibrium free energy of the truncated initial cavity state.
    pub fn cavity_free_energy(&self, dims: &SystemDims) -> f64 {
        -log_partition(self.beta_c, dims.cavity_init) / self.beta_c
    }
}

fn check_beta_c(beta_c: f64) -> Result<()> {
    if !(beta_c > 0.0 && beta_c.is_finite()) {
        return Err(Error::OutOfRange {
            name: "beta_c".into(),
            value: beta_c,
            range: "(0, inf)",
        });
    }
    Ok(())
}

/// `ln Σ_{n<levels} exp(-β n)`, evaluated stably for either sign of β.
pub(crate) fn log_partition(beta: f64, levels: usize) -> f64 {
    let exps: Vec<f64> = (0..levels).map(|n| -beta * energy(n)).collect();
    let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + exps.iter().map(|e| (e - max).exp()).sum::<f64>().ln()
}

/// Probability vector over a finite label set.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    p: Vec<f64>,
    normalized: bool,
}

impl Distribution {
    /// Validates and normalizes `p`. Sums within 1e-9 of one are
    /// renormalized silently, within 1e-3 with a warning; anything else is
    /// rejected.
    pub fn new(mut p: Vec<f64>) -> Result<Self> {
        normalize_in_place(&mut p)?;
        Ok(Distribution {
            p,
            normalized: true,
        })
    }

    /// Wraps nonnegative weights without normalizing them (conditional
    /// slices, truncated tails).
    pub fn sub_normalized(p: Vec<f64>) -> Result<Self> {
        check_nonnegative(&p)?;
        Ok(Distribution {
            p,
            normalized: false,
        })
    }

    /// Normalizes arbitrary nonnegative weights with positive total.
    pub fn from_weights(mut p: Vec<f64>) -> Result<Self> {
        check_nonnegative(&p)?;
        let total: f64 = p.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::NotNormalized { sum: total });
        }
        p.iter_mut().for_each(|x| *x /= total);
        Ok(Distribution {
            p,
            normalized: true,
        })
    }

    /// Point mass on `index`.
    pub fn point(len: usize, index: usize) -> Self {
        let mut p = vec![0.0; len];
        p[index] = 1.0;
        Distribution {
            p,
            normalized: true,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }
}

fn check_nonnegative(p: &[f64]) -> Result<()> {
    for (index, &value) in p.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::NegativeProbability { index, value });
        }
    }
    Ok(())
}

/// Applies the normalization policy to `p` in place.
pub(crate) fn normalize_in_place(p: &mut [f64]) -> Result<()> {
    for (index, value) in p.iter_mut().enumerate() {
        if *value < 0.0 && *value > -1e-12 {
            *value = 0.0;
        }
        if !(*value >= 0.0) || !value.is_finite() {
            return Err(Error::NegativeProbability {
                index,
                value: *value,
            });
        }
    }
    let sum: f64 = p.iter().sum();
    let dev = (sum - 1.0).abs();
    if dev > WARN_TOLERANCE + 1e-12 || sum == 0.0 {
        return Err(Error::NotNormalized { sum });
    }
    if dev > SILENT_TOLERANCE {
        warn!("probabilities sum to {sum}; renormalizing");
    }
    if dev > 0.0 {
        p.iter_mut().for_each(|x| *x /= sum);
    }
    Ok(())
}

/// Thermal populations `p(n) ∝ exp(-β n)` over `levels` levels.
///
/// With `truncate_renormalize` the weights are normalized over the kept
/// levels. Without it the populations of the infinite ladder are returned,
/// restricted to the first `levels` entries (a sub-normalized vector);
/// that form needs `β > 0`. An infinite `β` yields the ground state.
pub fn gibbs_distribution(
    beta: f64,
    levels: usize,
    truncate_renormalize: bool,
) -> Result<Distribution> {
    if levels < 2 {
        return Err(Error::InvalidDims(format!(
            "{levels} levels; need at least 2"
        )));
    }
    if beta.is_nan() {
        return Err(Error::OutOfRange {
            name: "beta".into(),
            value: beta,
            range: "not NaN",
        });
    }
    if beta < 0.0 && levels > 2 {
        return Err(Error::NegativeBeta { beta, levels });
    }
    if beta == f64::INFINITY {
        return Ok(Distribution::point(levels, 0));
    }
    if truncate_renormalize {
        let log_z = log_partition(beta, levels);
        let p = (0..levels)
            .map(|n| (-beta * energy(n) - log_z).exp())
            .collect();
        Ok(Distribution {
            p,
            normalized: true,
        })
    } else {
        if beta <= 0.0 {
            return Err(Error::OutOfRange {
                name: "beta".into(),
                value: beta,
                range: "(0, inf] for an untruncated ladder",
            });
        }
        let ground = -(-beta).exp_m1();
        let p = (0..levels)
            .map(|n| ground * (-beta * energy(n)).exp())
            .collect();
        Distribution::sub_normalized(p)
    }
}

/// Mean level index `Σ n p(n)`.
pub fn mean_occupation(d: &Distribution) -> f64 {
    d.p.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn shannon_entropy(d: &Distribution) -> f64 {
    entropy_of(&d.p)
}

pub(crate) fn entropy_of(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Kullback-Leibler divergence `Σ p ln(p/q)` on raw slices.
///
/// `q` need not be normalized. Terms with `p = 0` vanish; any `p > 0` over
/// `q = 0` makes the result `+∞`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi > 0.0 {
                acc += pi * (pi / qi).ln();
            } else {
                return f64::INFINITY;
            }
        }
    }
    acc
}

/// Indices where `p > 0` but `q = 0`: the states that make the divergence
/// infinite.
pub fn support_mismatch(p: &[f64], q: &[f64]) -> Vec<usize> {
    p.iter()
        .zip(q)
        .enumerate()
        .filter(|(_, (&pi, &qi))| pi > 0.0 && qi <= 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Relative entropy `D(p||q)` in nats; `+∞` on support mismatch.
pub fn relative_entropy(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(kl_divergence(&p.p, &q.p))
}

/// Diagonal state of the joint QDC system over the evolved cavity space.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    dims: SystemDims,
    p: Vec<f64>,
}

impl JointDistribution {
    pub fn new(dims: SystemDims, p: Vec<f64>) -> Result<Self> {
        if p.len() != dims.joint_len() {
            return Err(Error::DimensionMismatch {
                expected: dims.joint_len(),
                found: p.len(),
            });
        }
        let d = Distribution::new(p)?;
        Ok(JointDistribution { dims, p: d.p })
    }

    /// `q ⊗ d ⊗ c`; `c` must cover the evolved cavity space.
    pub fn product(
        dims: SystemDims,
        q: &Distribution,
        d: &Distribution,
        c: &Distribution,
    ) -> Result<Self> {
        for (found, expected) in [
            (q.len(), dims.qubit),
            (d.len(), dims.demon),
            (c.len(), dims.cavity_full),
        ] {
            if found != expected {
                return Err(Error::DimensionMismatch { expected, found });
            }
        }
        let mut p = Vec::with_capacity(dims.joint_len());
        for pq in q.probs() {
            for pd in d.probs() {
                p.extend(c.probs().iter().map(|pc| pq * pd * pc));
            }
        }
        JointDistribution::new(dims, p)
    }

    pub fn point(dims: SystemDims, q: usize, d: usize, c: usize) -> Self {
        let mut p = vec![0.0; dims.joint_len()];
        p[dims.index(q, d, c)] = 1.0;
        JointDistribution { dims, p }
    }

    /// Trusted constructor for vectors produced by stochastic maps.
    pub(crate) fn from_raw(dims: SystemDims, p: Vec<f64>) -> Self {
        debug_assert_eq!(p.len(), dims.joint_len());
        JointDistribution { dims, p }
    }

    pub fn dims(&self) -> &SystemDims {
        &self.dims
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn get(&self, q: usize, d: usize, c: usize) -> f64 {
        self.p[self.dims.index(q, d, c)]
    }

    pub fn as_distribution(&self) -> Distribution {
        Distribution {
            p: self.p.clone(),
            normalized: true,
        }
    }
}

fn kept_axes(keep: &[Subsystem]) -> Result<[bool; 3]> {
    if keep.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut mask = [false; 3];
    for s in keep {
        mask[s.axis()] = true;
    }
    Ok(mask)
}

/// Flat index over the kept axes, in canonical Q, D, C order.
fn sub_index(shape: &[usize; 3], mask: &[bool; 3], coords: [usize; 3]) -> usize {
    let mut idx = 0;
    for axis in 0..3 {
        if mask[axis] {
            idx = idx * shape[axis] + coords[axis];
        }
    }
    idx
}

fn sub_len(shape: &[usize; 3], mask: &[bool; 3]) -> usize {
    (0..3).filter(|&a| mask[a]).map(|a| shape[a]).product()
}

fn marginal_of(joint: &JointDistribution, mask: &[bool; 3]) -> Vec<f64> {
    let shape = joint.dims.shape();
    let mut out = vec![0.0; sub_len(&shape, mask)];
    for (i, &p) in joint.p.iter().enumerate() {
        let (q, d, c) = joint.dims.unindex(i);
        out[sub_index(&shape, mask, [q, d, c])] += p;
    }
    out
}

/// Sums out every subsystem not in `keep`. The result is indexed in the
/// canonical Q, D, C order of the kept subsystems, whatever order `keep`
/// lists them in.
pub fn marginalize(joint: &JointDistribution, keep: &[Subsystem]) -> Result<Distribution> {
    let mask = kept_axes(keep)?;
    Ok(Distribution {
        p: marginal_of(joint, &mask),
        normalized: true,
    })
}

/// Conditions on `on = value` and returns the normalized slice over the two
/// remaining subsystems together with the weight of the conditioning event.
/// A zero-weight event yields `None`.
pub fn condition(
    joint: &JointDistribution,
    on: Subsystem,
    value: usize,
) -> (Option<Distribution>, f64) {
    let shape = joint.dims.shape();
    let mut mask = [true; 3];
    mask[on.axis()] = false;
    let mut slice = vec![0.0; sub_len(&shape, &mask)];
    for (i, &p) in joint.p.iter().enumerate() {
        let (q, d, c) = joint.dims.unindex(i);
        let coords = [q, d, c];
        if coords[on.axis()] == value {
            slice[sub_index(&shape, &mask, coords)] += p;
        }
    }
    let weight: f64 = slice.iter().sum();
    if weight <= 0.0 {
        return (None, 0.0);
    }
    slice.iter_mut().for_each(|x| *x /= weight);
    (
        Some(Distribution {
            p: slice,
            normalized: true,
        }),
        weight,
    )
}

/// Mutual information between the subsystems in `side` and the rest,
/// `D(ρ || ρ_side ⊗ ρ_rest)`.
pub fn mutual_information(joint: &JointDistribution, side: &[Subsystem]) -> Result<f64> {
    let mask = kept_axes(side)?;
    let rest = [!mask[0], !mask[1], !mask[2]];
    if !rest.iter().any(|&r| r) {
        return Ok(0.0);
    }
    let shape = joint.dims.shape();
    let a = marginal_of(joint, &mask);
    let b = marginal_of(joint, &rest);
    let mut product = Vec::with_capacity(joint.p.len());
    for i in 0..joint.p.len() {
        let (q, d, c) = joint.dims.unindex(i);
        let coords = [q, d, c];
        product.push(a[sub_index(&shape, &mask, coords)] * b[sub_index(&shape, &rest, coords)]);
    }
    Ok(kl_divergence(&joint.p, &product).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const X: f64 = 0.874_147_845_505_990_2;

    fn dist(v: &[f64]) -> Distribution {
        Distribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn qubit_gibbs_at_cavity_temperature() {
        let d = gibbs_distribution(X, 2, true).unwrap();
        assert_abs_diff_eq!(d.probs()[1], 1.0 / (1.0 + X.exp()), epsilon = 1e-15);
        assert_abs_diff_eq!(d.probs()[1], 0.2944, epsilon = 5e-5);
    }

    #[test]
    fn zero_temperature_is_ground_state() {
        let d = gibbs_distribution(f64::INFINITY, 4, true).unwrap();
        assert_eq!(d.probs(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn truncated_cavity_ground_population() {
        let d = gibbs_distribution(X, 4, true).unwrap();
        let z: f64 = (0..4).map(|n| (-X * n as f64).exp()).sum();
        assert_abs_diff_eq!(d.probs()[0], 1.0 / z, epsilon = 1e-15);
        assert_abs_diff_eq!(d.probs()[0], 0.6010, epsilon = 5e-5);
    }

    #[test]
    fn negative_beta_only_for_two_levels() {
        assert!(gibbs_distribution(-1.0, 2, true).is_ok());
        assert!(matches!(
            gibbs_distribution(-1.0, 3, true),
            Err(Error::NegativeBeta { .. })
        ));
        let inverted = gibbs_distribution(-5.0 * X, 2, true).unwrap();
        assert_abs_diff_eq!(
            inverted.probs()[1],
            0.987_515_930_379_822_8,
            epsilon = 1e-14
        );
    }

    #[test]
    fn untruncated_mean_photon_number() {
        let d = gibbs_distribution(X, 400, false).unwrap();
        assert!(!d.is_normalized());
        let nbar = 1.0 / (X.exp() - 1.0);
        assert_abs_diff_eq!(mean_occupation(&d), nbar, epsilon = 1e-12);
        assert_abs_diff_eq!(mean_occupation(&d), 0.716, epsilon = 5e-4);
        assert_eq!(mean_occupation(&dist(&[1.0, 0.0, 0.0, 0.0])), 0.0);
        assert_eq!(mean_occupation(&dist(&[0.0, 0.0, 1.0])), 2.0);
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(
            shannon_entropy(&dist(&[0.5, 0.5])),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        assert_eq!(shannon_entropy(&dist(&[1.0, 0.0])), 0.0);
        let p = 1.0 / (1.0 + X.exp());
        let h = shannon_entropy(&dist(&[p, 1.0 - p]));
        assert_abs_diff_eq!(h, 0.6061, epsilon = 1e-4);
    }

    #[test]
    fn divergence_examples() {
        let p = dist(&[0.3, 0.7]);
        assert_eq!(relative_entropy(&p, &p).unwrap(), 0.0);
        assert_abs_diff_eq!(
            relative_entropy(&dist(&[1.0, 0.0]), &dist(&[0.5, 0.5])).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        assert_eq!(
            relative_entropy(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap(),
            f64::INFINITY
        );
        assert_eq!(support_mismatch(&[1.0, 0.0], &[0.0, 1.0]), vec![0]);
        assert!(matches!(
            relative_entropy(&dist(&[1.0, 0.0]), &dist(&[1.0, 0.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn normalization_policy() {
        assert!(Distribution::new(vec![0.5, 0.5 + 1e-10]).is_ok());
        let warned = Distribution::new(vec![0.5, 0.499]).unwrap();
        assert_abs_diff_eq!(warned.total(), 1.0, epsilon = 1e-15);
        assert!(matches!(
            Distribution::new(vec![0.5, 0.4]),
            Err(Error::NotNormalized { .. })
        ));
        assert!(matches!(
            Distribution::new(vec![1.5, -0.5]),
            Err(Error::NegativeProbability { .. })
        ));
    }

    fn small_dims() -> SystemDims {
        SystemDims::new(2, 2, 2, 3).unwrap()
    }

    #[test]
    fn dims_invariants() {
        assert!(SystemDims::new(2, 2, 4, 4).is_err());
        assert!(SystemDims::new(1, 2, 4, 5).is_err());
        let dims = SystemDims::default();
        assert_eq!(dims.joint_len(), 20);
        for i in 0..dims.joint_len() {
            let (q, d, c) = dims.unindex(i);
            assert_eq!(dims.index(q, d, c), i);
        }
    }

    #[test]
    fn marginal_and_mutual_information() {
        let dims = small_dims();
        let zq = dist(&[0.7, 0.3]);
        let zc = dist(&[0.5, 0.3, 0.2]);
        let product =
            JointDistribution::product(dims, &zq, &Distribution::point(2, 1), &zc).unwrap();
        let mc = marginalize(&product, &[Subsystem::Cavity]).unwrap();
        for (a, b) in mc.probs().iter().zip(zc.probs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert_eq!(
            marginalize(&product, &Subsystem::ALL).unwrap().probs(),
            product.probs()
        );
        assert!(
            mutual_information(&product, &[Subsystem::Qubit, Subsystem::Cavity])
                .unwrap()
                .abs()
                < 1e-15
        );
        assert!(matches!(
            marginalize(&product, &[]),
            Err(Error::EmptySelection)
        ));

        // Perfectly correlated qubit and demon, cavity in vacuum.
        let mut p = vec![0.0; dims.joint_len()];
        p[dims.index(0, 0, 0)] = 0.5;
        p[dims.index(1, 1, 0)] = 0.5;
        let pair = JointDistribution::new(dims, p).unwrap();
        assert_abs_diff_eq!(
            mutual_information(&pair, &[Subsystem::Qubit, Subsystem::Cavity]).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        assert_eq!(
            marginalize(&pair, &[Subsystem::Qubit]).unwrap().probs(),
            &[0.5, 0.5]
        );
    }

    #[test]
    fn conditioning() {
        let dims = small_dims();
        let zq = dist(&[0.7, 0.3]);
        let zc = dist(&[0.5, 0.3, 0.2]);
        let product =
            JointDistribution::product(dims, &zq, &Distribution::point(2, 1), &zc).unwrap();
        let (slice, w) = condition(&product, Subsystem::Demon, 1);
        assert_eq!(w, 1.0);
        let expected: Vec<f64> = zq
            .probs()
            .iter()
            .flat_map(|a| zc.probs().iter().map(move |b| a * b))
            .collect();
        for (x, y) in slice.unwrap().probs().iter().zip(&expected) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
        let (empty, w0) = condition(&product, Subsystem::Demon, 0);
        assert!(empty.is_none());
        assert_eq!(w0, 0.0);
    }

    fn arb_dist(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, len).prop_filter_map("positive mass", |w| {
            let s: f64 = w.iter().sum();
            (s > 1e-6).then(|| w.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn measures_are_nonnegative(p in arb_dist(6), q in arb_dist(6)) {
            let p = Distribution::new(p).unwrap();
            let q = Distribution::new(q).unwrap();
            prop_assert!(shannon_entropy(&p) >= 0.0);
            prop_assert!(relative_entropy(&p, &q).unwrap() >= -1e-15);
            prop_assert!(relative_entropy(&p, &p).unwrap().abs() < 1e-12);
        }

        #[test]
        fn gibbs_identity(rho in arb_dist(4), beta in 0.05f64..3.0) {
            // β(<E> - F) - S(ρ) = D(ρ || ζ_β)
            let rho = Distribution::new(rho).unwrap();
            let zeta = gibbs_distribution(beta, 4, true).unwrap();
            let mean_e: f64 = rho.probs().iter().enumerate().map(|(n, p)| energy(n) * p).sum();
            let f = -log_partition(beta, 4) / beta;
            let lhs = beta * (mean_e - f) - shannon_entropy(&rho);
            prop_assert!((lhs - relative_entropy(&rho, &zeta).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn mutual_information_matches_entropy_sum(p in arb_dist(12)) {
            let joint = JointDistribution::new(small_dims(), p).unwrap();
            let qc = [Subsystem::Qubit, Subsystem::Cavity];
            let via_entropies = shannon_entropy(&marginalize(&joint, &qc).unwrap())
                + shannon_entropy(&marginalize(&joint, &[Subsystem::Demon]).unwrap())
                - shannon_entropy(&joint.as_distribution());
            let mi = mutual_information(&joint, &qc).unwrap();
            prop_assert!(mi >= 0.0);
            prop_assert!((mi - via_entropies).abs() < 1e-12);
        }

        #[test]
        fn conditionals_reconstruct_joint(p in arb_dist(12)) {
            let dims = small_dims();
            let joint = JointDistribution::new(dims, p).unwrap();
            let mut rebuilt = vec![0.0; dims.joint_len()];
            for k in 0..dims.demon {
                if let (Some(slice), w) = condition(&joint, Subsystem::Demon, k) {
                    for q in 0..dims.qubit {
                        for c in 0..dims.cavity_full {
                            rebuilt[dims.index(q, k, c)] += w * slice.probs()[dims.qc_index(q, c)];
                        }
                    }
                }
            }
            for (a, b) in rebuilt.iter().zip(joint.probs()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
