//! Circuit elements and imperfections as column-stochastic maps on the
//! joint QDC basis.
//!
//! Only populations evolve, so every unitary of the circuit is represented
//! by the permutation it induces on basis states. Failures are mixtures of
//! the ideal permutation with the identity ("left in its initial state").
//!
//! Logical qubit/demon pairs are carried by three atomic levels:
//! `e = (1_Q, 1_D)`, `g = (0_Q, 1_D)`, `f = (0_Q, 0_D)`. The pair
//! `(1_Q, 0_D)` has no atomic encoding and no physical channel ever moves
//! probability into it.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::statespace::{Distribution, JointDistribution, SystemDims};

const STOCHASTIC_TOLERANCE: f64 = 1e-12;

/// Upper bound on the per-run relaxation probability.
pub const MAX_RELAXATION: f64 = 0.04;

/// Column-stochastic matrix over the joint basis; `m[(to, from)]` is the
/// transition probability.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticChannel {
    dims: SystemDims,
    m: DMatrix<f64>,
}

impl StochasticChannel {
    pub fn identity(dims: SystemDims) -> Self {
        let n = dims.joint_len();
        StochasticChannel {
            dims,
            m: DMatrix::identity(n, n),
        }
    }

    /// Builds a channel from its action on each basis state. `action`
    /// returns the reachable `(q, d, c)` states with their probabilities.
    pub fn from_action<F>(dims: SystemDims, mut action: F) -> Result<Self>
    where
        F: FnMut(usize, usize, usize) -> Vec<((usize, usize, usize), f64)>,
    {
        let n = dims.joint_len();
        let mut m = DMatrix::zeros(n, n);
        for from in 0..n {
            let (q, d, c) = dims.unindex(from);
            for ((tq, td, tc), p) in action(q, d, c) {
                m[(dims.index(tq, td, tc), from)] += p;
            }
        }
        StochasticChannel::from_matrix(dims, m)
    }

    /// Wraps a matrix after checking entries lie in `[0, 1]` and columns sum
    /// to one within 1e-12.
    pub fn from_matrix(dims: SystemDims, m: DMatrix<f64>) -> Result<Self> {
        let n = dims.joint_len();
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.nrows().max(m.ncols()),
            });
        }
        for (column, col) in m.column_iter().enumerate() {
            let sum: f64 = col.iter().sum();
            let in_range = col
                .iter()
                .all(|&x| (-STOCHASTIC_TOLERANCE..=1.0 + STOCHASTIC_TOLERANCE).contains(&x));
            if !in_range || (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                return Err(Error::NotStochastic { column, sum });
            }
        }
        Ok(StochasticChannel { dims, m })
    }

    /// A channel whose columns are independent Dirichlet(1) draws.
    pub fn random<R: Rng + ?Sized>(dims: SystemDims, rng: &mut R) -> Self {
        let n = dims.joint_len();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let s: f64 = w.iter().sum();
            for (i, wi) in w.into_iter().enumerate() {
                m[(i, j)] = wi / s;
            }
        }
        StochasticChannel { dims, m }
    }

    /// `(1 - weight)·self + weight·other`.
    pub fn mix(&self, other: &StochasticChannel, weight: f64) -> Result<Self> {
        check_probability("mixing weight", weight)?;
        check_dims(&self.dims, &other.dims)?;
        Ok(StochasticChannel {
            dims: self.dims,
            m: &self.m * (1.0 - weight) + &other.m * weight,
        })
    }

    pub fn dims(&self) -> &SystemDims {
        &self.dims
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Transition probability from basis state `from` to basis state `to`.
    pub fn get(&self, to: usize, from: usize) -> f64 {
        self.m[(to, from)]
    }

    /// True when every entry is 0 or 1 and the map is a bijection.
    pub fn is_permutation(&self) -> bool {
        let n = self.m.nrows();
        let binary = self.m.iter().all(|&x| x == 0.0 || x == 1.0);
        binary
            && (0..n).all(|i| self.m.row(i).sum() == 1.0)
            && (0..n).all(|j| self.m.column(j).sum() == 1.0)
    }

    /// Largest deviation of a column sum from one.
    pub fn stochasticity_defect(&self) -> f64 {
        self.m
            .column_iter()
            .map(|c| (c.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Channel that applies `self` first and then `next`.
    pub fn then(&self, next: &StochasticChannel) -> Result<Self> {
        compose(next, self)
    }
}

fn check_dims(a: &SystemDims, b: &SystemDims) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a.joint_len(),
            found: b.joint_len(),
        });
    }
    Ok(())
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange {
            name: name.into(),
            value: p,
            range: "[0, 1]",
        });
    }
    Ok(())
}

/// Matrix product `after · before`: apply `before`, then `after`.
pub fn compose(after: &StochasticChannel, before: &StochasticChannel) -> Result<StochasticChannel> {
    check_dims(&after.dims, &before.dims)?;
    Ok(StochasticChannel {
        dims: after.dims,
        m: &after.m * &before.m,
    })
}

/// Pushes a joint distribution through a channel.
pub fn apply(c: &StochasticChannel, d: &JointDistribution) -> Result<JointDistribution> {
    check_dims(&c.dims, d.dims())?;
    let v = nalgebra::DVector::from_column_slice(d.probs());
    let out = &c.m * v;
    debug_assert!((out.sum() - 1.0).abs() < 1e-12);
    Ok(JointDistribution::from_raw(c.dims, out.as_slice().to_vec()))
}

/// Time reverse of a permutation channel: its transpose, which is also its
/// inverse.
pub fn time_reverse(c: &StochasticChannel) -> Result<StochasticChannel> {
    if !c.is_permutation() {
        return Err(Error::NotPermutation);
    }
    Ok(StochasticChannel {
        dims: c.dims,
        m: c.m.transpose(),
    })
}

/// Atomic level carrying a logical qubit/demon pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AtomLevel {
    /// `e = |1_Q, 1_D>`
    E,
    /// `g = |0_Q, 1_D>`
    G,
    /// `f = |0_Q, 0_D>`
    F,
}

impl AtomLevel {
    /// Canonical order used by atomic distributions and the confusion
    /// matrix.
    pub const ALL: [AtomLevel; 3] = [AtomLevel::E, AtomLevel::G, AtomLevel::F];

    pub fn index(self) -> usize {
        match self {
            AtomLevel::E => 0,
            AtomLevel::G => 1,
            AtomLevel::F => 2,
        }
    }

    /// Logical `(n_Q, n_D)` pair.
    pub fn logical(self) -> (usize, usize) {
        match self {
            AtomLevel::E => (1, 1),
            AtomLevel::G => (0, 1),
            AtomLevel::F => (0, 0),
        }
    }

    /// Atomic level of a logical pair; `None` for the unencoded `(1, 0)`.
    pub fn from_logical(q: usize, d: usize) -> Option<AtomLevel> {
        match (q, d) {
            (1, 1) => Some(AtomLevel::E),
            (0, 1) => Some(AtomLevel::G),
            (0, 0) => Some(AtomLevel::F),
            _ => None,
        }
    }
}

impl fmt::Display for AtomLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AtomLevel::E => "e",
            AtomLevel::G => "g",
            AtomLevel::F => "f",
        })
    }
}

/// Detection confusion `η(a|b)`: probability that true level `b` is
/// reported as `a`. Stored as `eta[a][b]` in [`AtomLevel::ALL`] order;
/// columns sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionMatrix {
    eta: [[f64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn new(eta: [[f64; 3]; 3]) -> Result<Self> {
        for b in 0..3 {
            let mut sum = 0.0;
            for row in &eta {
                check_probability("confusion entry", row[b])?;
                sum += row[b];
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                return Err(Error::NotStochastic { column: b, sum });
            }
        }
        Ok(ConfusionMatrix { eta })
    }

    pub fn identity() -> Self {
        let mut eta = [[0.0; 3]; 3];
        (0..3).for_each(|i| eta[i][i] = 1.0);
        ConfusionMatrix { eta }
    }

    /// Builds the matrix from its six off-diagonal entries; each diagonal
    /// entry is one minus the rest of its column.
    pub fn from_off_diagonals(off: &[(AtomLevel, AtomLevel, f64)]) -> Result<Self> {
        let mut eta = [[0.0; 3]; 3];
        for &(detected, truth, p) in off {
            if detected == truth {
                return Err(Error::InvalidConfig(format!(
                    "confusion entry ({detected}|{truth}) is diagonal"
                )));
            }
            eta[detected.index()][truth.index()] = p;
        }
        for b in 0..3 {
            let rest: f64 = (0..3).filter(|&a| a != b).map(|a| eta[a][b]).sum();
            eta[b][b] = 1.0 - rest;
        }
        ConfusionMatrix::new(eta)
    }

    /// `η(detected | truth)`.
    pub fn get(&self, detected: AtomLevel, truth: AtomLevel) -> f64 {
        self.eta[detected.index()][truth.index()]
    }

    pub fn set(&mut self, detected: AtomLevel, truth: AtomLevel, p: f64) -> Result<()> {
        if detected == truth {
            return Err(Error::InvalidConfig(
                "diagonal confusion entries are derived".into(),
            ));
        }
        let mut off = Vec::new();
        for a in AtomLevel::ALL {
            for b in AtomLevel::ALL {
                if a != b {
                    let v = if (a, b) == (detected, truth) {
                        p
                    } else {
                        self.get(a, b)
                    };
                    off.push((a, b, v));
                }
            }
        }
        *self = ConfusionMatrix::from_off_diagonals(&off)?;
        Ok(())
    }
}

impl Default for ConfusionMatrix {
    /// Measured field-ionization confusion probabilities.
    fn default() -> Self {
        use AtomLevel::*;
        ConfusionMatrix::from_off_diagonals(&[
            (E, F, 0.01),
            (F, E, 0.0),
            (E, G, 0.05),
            (G, E, 0.02),
            (G, F, 0.05),
            (F, G, 0.02),
        ])
        .expect("default confusion matrix is stochastic")
    }
}

/// Preparation fidelity of the initial cavity Fock state.
#[derive(Debug, Clone, PartialEq)]
pub enum CavityPrep {
    /// Exact Fock states.
    Ideal,
    /// `tables[n]` is the photon-number distribution obtained when aiming
    /// at `|n>`; targets beyond the table are prepared exactly.
    Tables(Vec<Vec<f64>>),
}

impl CavityPrep {
    /// Impurity tables of the one-, two- and three-photon preparations;
    /// the vacuum is exact.
    pub fn realistic() -> Self {
        CavityPrep::Tables(vec![
            vec![1.0],
            vec![0.08, 0.76, 0.16],
            vec![0.0, 0.15, 0.75, 0.10],
            vec![0.0, 0.0, 0.17, 0.73, 0.10],
        ])
    }
}

/// One imperfection, selectable for single-error studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Prep,
    Read,
    Feed,
    Meas,
    CavityPrep,
    Relaxation,
    TwoAtom,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 7] = [
        ErrorKind::Prep,
        ErrorKind::Read,
        ErrorKind::Feed,
        ErrorKind::Meas,
        ErrorKind::CavityPrep,
        ErrorKind::Relaxation,
        ErrorKind::TwoAtom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Prep => "eps_prep",
            ErrorKind::Read => "eps_read",
            ErrorKind::Feed => "eps_feed",
            ErrorKind::Meas => "eps_meas",
            ErrorKind::CavityPrep => "cavity_prep",
            ErrorKind::Relaxation => "relaxation",
            ErrorKind::TwoAtom => "two_atom",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ErrorKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| {
                let names: Vec<_> = ErrorKind::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidConfig(format!(
                    "unknown error `{s}`; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Every imperfection parameter of the apparatus.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    /// Probability that the `g → e` excitation pulse fails.
    pub eps_prep: f64,
    /// Probability that the `g ↔ f` readout pulse fails.
    pub eps_read: f64,
    /// Probability that the atom-cavity population transfer fails.
    pub eps_feed: f64,
    pub detect_confusion: ConfusionMatrix,
    pub cavity_prep: CavityPrep,
    /// One-step decay probability `e → g` and `g → f`.
    pub relax_atom_prob: f64,
    /// Per-photon cavity decay probability.
    pub relax_cavity_prob: f64,
    /// Mean number of atoms per sample.
    pub nbar_atoms: f64,
    /// Atom detection efficiency.
    pub detect_eff: f64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        ErrorModel {
            eps_prep: 0.1,
            eps_read: 0.11,
            eps_feed: 0.03,
            detect_confusion: ConfusionMatrix::default(),
            cavity_prep: CavityPrep::realistic(),
            relax_atom_prob: 0.0,
            relax_cavity_prob: 0.0,
            nbar_atoms: 0.22,
            detect_eff: 0.5,
        }
    }
}

impl ErrorModel {
    /// A flawless apparatus. The atom-number statistics are kept since they
    /// only feed a diagnostic.
    pub fn none() -> Self {
        ErrorModel {
            eps_prep: 0.0,
            eps_read: 0.0,
            eps_feed: 0.0,
            detect_confusion: ConfusionMatrix::identity(),
            cavity_prep: CavityPrep::Ideal,
            relax_atom_prob: 0.0,
            relax_cavity_prob: 0.0,
            ..ErrorModel::default()
        }
    }

    /// Keeps the listed imperfections at their current values and switches
    /// every other one off.
    pub fn only(&self, kinds: &[ErrorKind]) -> Self {
        let mut out = ErrorModel::none();
        out.nbar_atoms = self.nbar_atoms;
        out.detect_eff = self.detect_eff;
        for kind in kinds {
            match kind {
                ErrorKind::Prep => out.eps_prep = self.eps_prep,
                ErrorKind::Read => out.eps_read = self.eps_read,
                ErrorKind::Feed => out.eps_feed = self.eps_feed,
                ErrorKind::Meas => out.detect_confusion = self.detect_confusion,
                ErrorKind::CavityPrep => out.cavity_prep = self.cavity_prep.clone(),
                ErrorKind::Relaxation => {
                    out.relax_atom_prob = self.relax_atom_prob;
                    out.relax_cavity_prob = self.relax_cavity_prob;
                }
                // Reported as a diagnostic only; no dynamical effect.
                ErrorKind::TwoAtom => {}
            }
        }
        out
    }

    pub fn validate(&self, dims: &SystemDims) -> Result<()> {
        check_probability("eps_prep", self.eps_prep)?;
        check_probability("eps_read", self.eps_read)?;
        check_probability("eps_feed", self.eps_feed)?;
        check_probability("detect_eff", self.detect_eff)?;
        for (name, p) in [
            ("relax_atom_prob", self.relax_atom_prob),
            ("relax_cavity_prob", self.relax_cavity_prob),
        ] {
            if !(0.0..=MAX_RELAXATION).contains(&p) {
                return Err(Error::OutOfRange {
                    name: name.into(),
                    value: p,
                    range: "[0, 0.04]",
                });
            }
        }
        if !(self.nbar_atoms > 0.0 && self.nbar_atoms.is_finite()) {
            return Err(Error::OutOfRange {
                name: "nbar_atoms".into(),
                value: self.nbar_atoms,
                range: "(0, inf)",
            });
        }
        if let CavityPrep::Tables(tables) = &self.cavity_prep {
            for (n, row) in tables.iter().enumerate() {
                if row.len() > dims.cavity_full {
                    return Err(Error::InvalidDims(format!(
                        "cavity preparation table for |{n}> exceeds the evolved cutoff"
                    )));
                }
                Distribution::new(row.clone())?;
            }
        }
        Ok(())
    }
}

/// CNOT with negative control: the demon flips iff the qubit is in `0_Q`.
/// On the atom this is the `g ↔ f` π-pulse; `e` is untouched and the
/// cavity is a spectator. The pulse fails with probability `eps_read`,
/// leaving the atom where it was.
pub fn readout_channel(dims: SystemDims, eps_read: f64) -> Result<StochasticChannel> {
    check_probability("eps_read", eps_read)?;
    StochasticChannel::from_action(dims, |q, d, c| {
        if q == 0 && d < 2 {
            vec![((q, 1 - d, c), 1.0 - eps_read), ((q, d, c), eps_read)]
        } else {
            vec![((q, d, c), 1.0)]
        }
    })
}

/// Demon-controlled swap `|e, n> ↔ |g, n+1>` for `n + 1 < cavity_full`.
/// `|g, 0>`, the top `|e, n>` and every `D = 0` state are fixed. Fails with
/// probability `eps_feed`, leaving the state unchanged.
pub fn feedback_channel(eps_feed: f64, dims: SystemDims) -> Result<StochasticChannel> {
    check_probability("eps_feed", eps_feed)?;
    let top = dims.cavity_full - 1;
    StochasticChannel::from_action(dims, |q, d, c| {
        let target = match (q, d) {
            (1, 1) if c < top => Some((0, 1, c + 1)),
            (0, 1) if c > 0 => Some((1, 1, c - 1)),
            _ => None,
        };
        match target {
            Some(t) => vec![(t, 1.0 - eps_feed), ((q, d, c), eps_feed)],
            None => vec![((q, d, c), 1.0)],
        }
    })
}

/// Initial atomic state for qubit level `n_q` with the demon in `1_D`,
/// over [`AtomLevel::ALL`]. `g` is exact; `e` is reached by a pulse that
/// fails with probability `eps_prep`.
pub fn prepare_atom(n_q: usize, eps_prep: f64) -> Result<Distribution> {
    check_probability("eps_prep", eps_prep)?;
    match n_q {
        0 => Ok(Distribution::point(3, AtomLevel::G.index())),
        1 => Distribution::new(vec![1.0 - eps_prep, eps_prep, 0.0]),
        _ => Err(Error::OutOfRange {
            name: "n_Q".into(),
            value: n_q as f64,
            range: "{0, 1}",
        }),
    }
}

/// Photon-number distribution obtained when preparing `|n_c>`, over the
/// evolved cavity space.
pub fn prepare_cavity(
    dims: &SystemDims,
    n_c: usize,
    model: &ErrorModel,
    ideal: bool,
) -> Result<Distribution> {
    if n_c >= dims.cavity_full {
        return Err(Error::OutOfRange {
            name: "n_C".into(),
            value: n_c as f64,
            range: "below the evolved cavity cutoff",
        });
    }
    match (&model.cavity_prep, ideal) {
        (CavityPrep::Tables(tables), false) if n_c < tables.len() => {
            let mut p = tables[n_c].clone();
            p.resize(dims.cavity_full, 0.0);
            Distribution::new(p)
        }
        _ => Ok(Distribution::point(dims.cavity_full, n_c)),
    }
}

/// Final atomic state detection. Acts on the atom only; the unencoded pair
/// `(1_Q, 0_D)` is left untouched.
pub fn detection_channel(
    dims: SystemDims,
    confusion: &ConfusionMatrix,
) -> Result<StochasticChannel> {
    StochasticChannel::from_action(dims, |q, d, c| match AtomLevel::from_logical(q, d) {
        Some(truth) => AtomLevel::ALL
            .iter()
            .filter(|&&a| confusion.get(a, truth) > 0.0)
            .map(|&a| {
                let (mq, md) = a.logical();
                ((mq, md, c), confusion.get(a, truth))
            })
            .collect(),
        None => vec![((q, d, c), 1.0)],
    })
}

/// One-step classical decay: the atom cascades `e → g → f` with
/// probability `relax_atom_prob` per step, and a cavity holding `n` photons
/// loses one with probability `n·relax_cavity_prob`. Atom and cavity decay
/// independently.
pub fn relaxation_channel(model: &ErrorModel, dims: SystemDims) -> Result<StochasticChannel> {
    let (ra, rc) = (model.relax_atom_prob, model.relax_cavity_prob);
    for (name, p) in [("relax_atom_prob", ra), ("relax_cavity_prob", rc)] {
        if !(0.0..=MAX_RELAXATION).contains(&p) {
            return Err(Error::OutOfRange {
                name: name.into(),
                value: p,
                range: "[0, 0.04]",
            });
        }
    }
    StochasticChannel::from_action(dims, |q, d, c| {
        let atom: Vec<((usize, usize), f64)> = match AtomLevel::from_logical(q, d) {
            Some(AtomLevel::E) => vec![((1, 1), 1.0 - ra), ((0, 1), ra)],
            Some(AtomLevel::G) => vec![((0, 1), 1.0 - ra), ((0, 0), ra)],
            _ => vec![((q, d), 1.0)],
        };
        let loss = (c as f64 * rc).min(1.0);
        let cavity: Vec<(usize, f64)> = if c > 0 {
            vec![(c, 1.0 - loss), (c - 1, loss)]
        } else {
            vec![(0, 1.0)]
        };
        atom.iter()
            .flat_map(|&((tq, td), pa)| cavity.iter().map(move |&(tc, pc)| ((tq, td, tc), pa * pc)))
            .filter(|(_, p)| *p > 0.0)
            .collect()
    })
}

fn poisson(mean: f64, n: u32) -> f64 {
    let log_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
    (-mean + n as f64 * mean.ln() - log_fact).exp()
}

/// Probability that a sample with exactly one detected atom actually held
/// two atoms, for Poisson atom numbers of mean `nbar` and detection
/// efficiency `eff`.
pub fn two_atom_probability(nbar: f64, eff: f64) -> Result<f64> {
    if !(nbar > 0.0 && nbar.is_finite()) {
        return Err(Error::OutOfRange {
            name: "nbar".into(),
            value: nbar,
            range: "(0, inf)",
        });
    }
    if !(eff > 0.0 && eff <= 1.0) {
        return Err(Error::OutOfRange {
            name: "detection efficiency".into(),
            value: eff,
            range: "(0, 1]",
        });
    }
    let missed_second = 2.0 * eff * (1.0 - eff) * poisson(nbar, 2);
    Ok(missed_second / (eff * poisson(nbar, 1) + missed_second))
}
