//! Forward and backward two-point-measurement trajectories.
//!
//! A trajectory `γ = (n_Q, k, n_C, m_Q, m_C)` records the initial energy
//! measurement, the demon readout and the final energy measurement. The
//! dynamics factor into temperature-independent transition conditionals
//! and thermal priors, so a sweep computes the conditionals once
//! ([`Simulation::conditionals`]) and reweights them per temperature
//! ([`tables_from_conditionals`]).
//!
//! Both tables share the same index set. Forward initial photon numbers are
//! drawn from `0..cavity_init`; every other cavity index spans the evolved
//! space `0..cavity_full`.

use std::fmt;
use std::str::FromStr;

use log::info;
use rand::Rng;

use crate::channels::{
    apply, compose, detection_channel, feedback_channel, prepare_atom, prepare_cavity,
    readout_channel, relaxation_channel, time_reverse, AtomLevel, CavityPrep, ErrorModel,
    StochasticChannel,
};
use crate::error::{Error, Result};
use crate::statespace::{
    energy, normalize_in_place, Distribution, GibbsSpec, JointDistribution, SystemDims,
    SILENT_TOLERANCE,
};

/// Default σ grouping width in nats.
pub const SIGMA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Flawless apparatus over the full logical QD space.
    Ideal,
    /// Three-level atom with the configured imperfections.
    Physical,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ideal => "ideal",
            Mode::Physical => "physical",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ideal" => Ok(Mode::Ideal),
            "physical" => Ok(Mode::Physical),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode `{other}`; expected `ideal` or `physical`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    SimulatedIdeal,
    SimulatedErrors,
    ExperimentalData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Trajectory {
    pub n_q: usize,
    pub k: usize,
    pub n_c: usize,
    pub m_q: usize,
    pub m_c: usize,
}

impl Trajectory {
    pub fn new(n_q: usize, k: usize, n_c: usize, m_q: usize, m_c: usize) -> Self {
        Trajectory {
            n_q,
            k,
            n_c,
            m_q,
            m_c,
        }
    }
}

impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{},{},{})",
            self.n_q, self.k, self.n_c, self.m_q, self.m_c
        )
    }
}

/// Transition probabilities between initial states `(n_Q, n_C)` and final
/// outcomes `(m_Q, k, m_C)`.
///
/// Forward conditionals `p(m_Q, k, m_C | n_Q, n_C)` are normalized per row
/// and have `cavity_init` photon rows. Backward conditionals
/// `p_b(n_Q, n_C | m_Q, k, m_C)` are normalized per column and have
/// `cavity_full` photon rows. Columns are laid out in joint-basis order with
/// `k` in the demon slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditionals {
    dims: SystemDims,
    direction: Direction,
    p: Vec<f64>,
}

impl Conditionals {
    /// Validates and stores a row-major `rows × joint_len` matrix.
    ///
    /// Forward rows and backward columns are renormalized under the usual
    /// tolerance policy. An all-zero backward column is accepted only for the
    /// unencodable outcome `m_Q = 1, k = 0`, and is replaced by the identity
    /// map that the abstract two-level demon would realize there.
    pub fn new(dims: SystemDims, direction: Direction, mut p: Vec<f64>) -> Result<Self> {
        let rows = Self::row_count(&dims, direction);
        let cols = dims.joint_len();
        if p.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: p.len(),
            });
        }
        match direction {
            Direction::Forward => {
                for r in 0..rows {
                    normalize_in_place(&mut p[r * cols..(r + 1) * cols])?;
                }
            }
            Direction::Backward => {
                for col in 0..cols {
                    let mut column: Vec<f64> = (0..rows).map(|r| p[r * cols + col]).collect();
                    let (m_q, k, m_c) = dims.unindex(col);
                    if column.iter().all(|&x| x == 0.0) && AtomLevel::from_logical(m_q, k).is_none()
                    {
                        info!("backward column ({m_q},{k},{m_c}) is empty; using the identity map");
                        column[m_q * dims.cavity_full + m_c] = 1.0;
                    }
                    normalize_in_place(&mut column)?;
                    for (r, v) in column.into_iter().enumerate() {
                        p[r * cols + col] = v;
                    }
                }
            }
        }
        Ok(Conditionals { dims, direction, p })
    }

    fn row_count(dims: &SystemDims, direction: Direction) -> usize {
        dims.qubit * Self::cavity_rows_for(dims, direction)
    }

    fn cavity_rows_for(dims: &SystemDims, direction: Direction) -> usize {
        match direction {
            Direction::Forward => dims.cavity_init,
            Direction::Backward => dims.cavity_full,
        }
    }

    pub fn dims(&self) -> &SystemDims {
        &self.dims
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Number of photon-number rows per qubit level.
    pub fn cavity_rows(&self) -> usize {
        Self::cavity_rows_for(&self.dims, self.direction)
    }

    /// Row labels `(n_Q, n_C)` in storage order.
    pub fn row_labels(&self) -> Vec<(usize, usize)> {
        let rc = self.cavity_rows();
        (0..self.dims.qubit * rc)
            .map(|r| (r / rc, r % rc))
            .collect()
    }

    /// Column labels `(m_Q, k, m_C)` in storage order.
    pub fn col_labels(&self) -> Vec<(usize, usize, usize)> {
        (0..self.dims.joint_len())
            .map(|i| self.dims.unindex(i))
            .collect()
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn get(&self, n_q: usize, n_c: usize, m_q: usize, k: usize, m_c: usize) -> f64 {
        let row = n_q * self.cavity_rows() + n_c;
        self.p[row * self.dims.joint_len() + self.dims.index(m_q, k, m_c)]
    }
}

/// The forward circuit: preparation, readout, feedback, relaxation and
/// detection.
#[derive(Debug, Clone)]
pub struct Circuit {
    pub dims: SystemDims,
    pub eps_prep: f64,
    pub cavity_prep: CavityPrep,
    pub readout: StochasticChannel,
    pub feedback: StochasticChannel,
    pub relaxation: StochasticChannel,
    pub detection: StochasticChannel,
}

fn require_atomic(dims: &SystemDims) -> Result<()> {
    if dims.qubit != 2 || dims.demon != 2 {
        return Err(Error::InvalidDims(
            "the atomic encoding needs a two-level qubit and a two-level demon".into(),
        ));
    }
    Ok(())
}

/// Embeds an atomic distribution over `[e, g, f]` and a cavity distribution
/// into the joint basis.
fn atom_cavity_state(
    dims: SystemDims,
    atom: &Distribution,
    cavity: &Distribution,
) -> JointDistribution {
    let mut p = vec![0.0; dims.joint_len()];
    for level in AtomLevel::ALL {
        let (q, d) = level.logical();
        let pa = atom.probs()[level.index()];
        for (c, pc) in cavity.probs().iter().enumerate() {
            p[dims.index(q, d, c)] += pa * pc;
        }
    }
    JointDistribution::from_raw(dims, p)
}

impl Circuit {
    pub fn ideal(dims: SystemDims) -> Result<Self> {
        Circuit::physical(dims, &ErrorModel::none())
    }

    pub fn physical(dims: SystemDims, model: &ErrorModel) -> Result<Self> {
        require_atomic(&dims)?;
        model.validate(&dims)?;
        Ok(Circuit {
            dims,
            eps_prep: model.eps_prep,
            cavity_prep: model.cavity_prep.clone(),
            readout: readout_channel(dims, model.eps_read)?,
            feedback: feedback_channel(model.eps_feed, dims)?,
            relaxation: relaxation_channel(model, dims)?,
            detection: detection_channel(dims, &model.detect_confusion)?,
        })
    }

    /// Exact preparation followed by independently drawn random readout,
    /// feedback and detection channels.
    pub fn random<R: Rng + ?Sized>(dims: SystemDims, rng: &mut R) -> Result<Self> {
        require_atomic(&dims)?;
        Ok(Circuit {
            dims,
            eps_prep: 0.0,
            cavity_prep: CavityPrep::Ideal,
            readout: StochasticChannel::random(dims, rng),
            feedback: StochasticChannel::random(dims, rng),
            relaxation: StochasticChannel::identity(dims),
            detection: StochasticChannel::random(dims, rng),
        })
    }

    /// Prepared joint state for the target `(n_Q, n_C)`, demon in `1_D`.
    pub fn initial_state(&self, n_q: usize, n_c: usize) -> Result<JointDistribution> {
        let atom = prepare_atom(n_q, self.eps_prep)?;
        let model = ErrorModel {
            cavity_prep: self.cavity_prep.clone(),
            ..ErrorModel::none()
        };
        let cavity = prepare_cavity(&self.dims, n_c, &model, false)?;
        Ok(atom_cavity_state(self.dims, &atom, &cavity))
    }

    /// The whole circuit after preparation as one channel.
    pub fn composite(&self) -> Result<StochasticChannel> {
        self.readout
            .then(&self.feedback)?
            .then(&self.relaxation)?
            .then(&self.detection)
    }

    pub fn forward_conditionals(&self) -> Result<Conditionals> {
        let dims = self.dims;
        let total = self.composite()?;
        let mut p = Vec::with_capacity(dims.qubit * dims.cavity_init * dims.joint_len());
        for n_q in 0..dims.qubit {
            for n_c in 0..dims.cavity_init {
                let out = apply(&total, &self.initial_state(n_q, n_c)?)?;
                p.extend_from_slice(out.probs());
            }
        }
        Conditionals::new(dims, Direction::Forward, p)
    }

    /// Full-state evolution of the thermal mixture, with the state recorded
    /// after each stage.
    pub fn oracle(&self, gibbs: &GibbsSpec) -> Result<OracleTaps> {
        let dims = self.dims;
        let pq = gibbs.qubit_prior(&dims);
        let pc = gibbs.cavity_prior(&dims);
        let mut init = vec![0.0; dims.joint_len()];
        for n_q in 0..dims.qubit {
            for n_c in 0..dims.cavity_init {
                let w = pq.probs()[n_q] * pc.probs()[n_c];
                let state = self.initial_state(n_q, n_c)?;
                init.iter_mut()
                    .zip(state.probs())
                    .for_each(|(a, b)| *a += w * b);
            }
        }
        let initial = JointDistribution::from_raw(dims, init);
        let post_readout = apply(&self.readout, &initial)?;
        let post_feedback = apply(&self.feedback, &post_readout)?;
        let post_relaxation = apply(&self.relaxation, &post_feedback)?;
        let final_state = apply(&self.detection, &post_relaxation)?;
        Ok(OracleTaps {
            initial,
            post_readout,
            post_feedback,
            final_state,
        })
    }
}

/// Joint states along the oracle evolution.
#[derive(Debug, Clone)]
pub struct OracleTaps {
    pub initial: JointDistribution,
    pub post_readout: JointDistribution,
    /// Immediately after the feedback gate, before relaxation.
    pub post_feedback: JointDistribution,
    pub final_state: JointDistribution,
}

/// A configured apparatus: dimensions, mode and imperfections.
#[derive(Debug, Clone)]
pub struct Simulation {
    dims: SystemDims,
    mode: Mode,
    model: ErrorModel,
    ideal_backward: bool,
}

impl Simulation {
    /// In ideal mode the error model is replaced by [`ErrorModel::none`].
    pub fn new(dims: SystemDims, mode: Mode, model: &ErrorModel) -> Result<Self> {
        require_atomic(&dims)?;
        let model = match mode {
            Mode::Ideal => ErrorModel::none(),
            Mode::Physical => model.clone(),
        };
        model.validate(&dims)?;
        Ok(Simulation {
            dims,
            mode,
            model,
            ideal_backward: false,
        })
    }

    /// Runs the backward protocol without any imperfection.
    pub fn with_ideal_backward(mut self, ideal: bool) -> Self {
        self.ideal_backward = ideal;
        self
    }

    pub fn dims(&self) -> &SystemDims {
        &self.dims
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn model(&self) -> &ErrorModel {
        &self.model
    }

    pub fn circuit(&self) -> Result<Circuit> {
        Circuit::physical(self.dims, &self.model)
    }

    fn provenance(&self) -> Provenance {
        match self.mode {
            Mode::Ideal => Provenance::SimulatedIdeal,
            Mode::Physical => Provenance::SimulatedErrors,
        }
    }

    /// Backward conditionals `p_b(n_Q, n_C | m_Q, k, m_C)`.
    ///
    /// The apparatus is the same as in the forward run: the atom is prepared
    /// in the level encoding `(m_Q, k)`, the time-reversed feedback gate acts
    /// (a failed transfer leaves the state alone), then relaxation and
    /// detection follow and the detected demon value is discarded. The `f`
    /// level is reached from `g` by the readout pulse, which inherits its
    /// failure probability.
    pub fn backward_conditionals(&self) -> Result<Conditionals> {
        let dims = self.dims;
        let model = if self.ideal_backward {
            ErrorModel::none()
        } else {
            self.model.clone()
        };
        let ideal_swap = feedback_channel(0.0, dims)?;
        let reversed =
            time_reverse(&ideal_swap)?.mix(&StochasticChannel::identity(dims), model.eps_feed)?;
        let chain = compose(
            &detection_channel(dims, &model.detect_confusion)?,
            &compose(&relaxation_channel(&model, dims)?, &reversed)?,
        )?;

        let rows = dims.qubit * dims.cavity_full;
        let cols = dims.joint_len();
        let mut p = vec![0.0; rows * cols];
        for col in 0..cols {
            let (m_q, k, m_c) = dims.unindex(col);
            let Some(level) = AtomLevel::from_logical(m_q, k) else {
                p[(m_q * dims.cavity_full + m_c) * cols + col] = 1.0;
                continue;
            };
            let atom = match level {
                AtomLevel::E => Distribution::new(vec![1.0 - model.eps_prep, model.eps_prep, 0.0])?,
                AtomLevel::G => Distribution::point(3, AtomLevel::G.index()),
                AtomLevel::F => Distribution::new(vec![0.0, model.eps_read, 1.0 - model.eps_read])?,
            };
            let cavity = prepare_cavity(&dims, m_c, &model, false)?;
            let out = apply(&chain, &atom_cavity_state(dims, &atom, &cavity))?;
            for i in 0..cols {
                let (n_q, _, n_c) = dims.unindex(i);
                p[(n_q * dims.cavity_full + n_c) * cols + col] += out.probs()[i];
            }
        }
        Conditionals::new(dims, Direction::Backward, p)
    }

    pub fn conditionals(&self) -> Result<(Conditionals, Conditionals)> {
        Ok((
            self.circuit()?.forward_conditionals()?,
            self.backward_conditionals()?,
        ))
    }

    pub fn tables(&self, gibbs: &GibbsSpec) -> Result<(TrajectoryTable, TrajectoryTable)> {
        let (f, b) = self.conditionals()?;
        assemble(&f, &b, gibbs, self.provenance())
    }
}

/// Probability table over the trajectory index set.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    dims: SystemDims,
    direction: Direction,
    gibbs: GibbsSpec,
    provenance: Provenance,
    probs: Vec<f64>,
}

impl TrajectoryTable {
    pub fn new(
        dims: SystemDims,
        direction: Direction,
        gibbs: GibbsSpec,
        provenance: Provenance,
        probs: Vec<f64>,
    ) -> Result<Self> {
        let expected = Self::len_for(&dims);
        if probs.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: probs.len(),
            });
        }
        if let Some((index, &value)) = probs
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0 && v.is_finite()))
        {
            return Err(Error::NegativeProbability { index, value });
        }
        Ok(TrajectoryTable {
            dims,
            direction,
            gibbs,
            provenance,
            probs,
        })
    }

    fn len_for(dims: &SystemDims) -> usize {
        dims.qubit * dims.cavity_full * dims.joint_len()
    }

    pub fn dims(&self) -> &SystemDims {
        &self.dims
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn gibbs(&self) -> &GibbsSpec {
        &self.gibbs
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn index(&self, t: &Trajectory) -> usize {
        (t.n_q * self.dims.cavity_full + t.n_c) * self.dims.joint_len()
            + self.dims.index(t.m_q, t.k, t.m_c)
    }

    pub fn trajectory(&self, i: usize) -> Trajectory {
        let cols = self.dims.joint_len();
        let (row, col) = (i / cols, i % cols);
        let (m_q, k, m_c) = self.dims.unindex(col);
        Trajectory::new(
            row / self.dims.cavity_full,
            k,
            row % self.dims.cavity_full,
            m_q,
            m_c,
        )
    }

    pub fn get(&self, t: &Trajectory) -> f64 {
        self.probs[self.index(t)]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Trajectory, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (self.trajectory(i), p))
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Joint QDC state of the final outcomes, with `k` in the demon slot.
    pub fn final_joint(&self) -> JointDistribution {
        let cols = self.dims.joint_len();
        let mut p = vec![0.0; cols];
        for (i, &x) in self.probs.iter().enumerate() {
            p[i % cols] += x;
        }
        JointDistribution::from_raw(self.dims, p)
    }

    /// Unnormalized QC weights of the initial labels `(n_Q, n_C)` within
    /// branch `k`.
    pub fn initial_in_branch(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.qc_len()];
        for (t, p) in self.iter().filter(|(t, _)| t.k == k) {
            out[self.dims.qc_index(t.n_q, t.n_c)] += p;
        }
        out
    }

    /// Unnormalized QC weights of the final labels `(m_Q, m_C)` within
    /// branch `k`.
    pub fn final_in_branch(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.qc_len()];
        for (t, p) in self.iter().filter(|(t, _)| t.k == k) {
            out[self.dims.qc_index(t.m_q, t.m_c)] += p;
        }
        out
    }
}

/// Reweights conditionals by the thermal priors of `gibbs`, for measured
/// tables.
pub fn tables_from_conditionals(
    fwd: &Conditionals,
    bwd: &Conditionals,
    gibbs: &GibbsSpec,
) -> Result<(TrajectoryTable, TrajectoryTable)> {
    assemble(fwd, bwd, gibbs, Provenance::ExperimentalData)
}

fn assemble(
    fwd: &Conditionals,
    bwd: &Conditionals,
    gibbs: &GibbsSpec,
    provenance: Provenance,
) -> Result<(TrajectoryTable, TrajectoryTable)> {
    if bwd.direction != Direction::Backward {
        return Err(Error::LabelMismatch(
            "expected backward conditionals".into(),
        ));
    }
    if fwd.dims != bwd.dims {
        return Err(Error::LabelMismatch(
            "forward and backward tables index different spaces".into(),
        ));
    }
    let fwd_table = forward_from(fwd, gibbs, provenance)?;
    let pk = branch_probability(&fwd_table)?;
    let bwd_table = backward_from(bwd, gibbs, &pk, provenance)?;
    Ok((fwd_table, bwd_table))
}

/// Forward table alone, for analyses that have no backward data.
pub fn forward_from_conditionals(fwd: &Conditionals, gibbs: &GibbsSpec) -> Result<TrajectoryTable> {
    forward_from(fwd, gibbs, Provenance::ExperimentalData)
}

/// `p(γ) = p(m_Q, k, m_C | n_Q, n_C)·p(n_Q)·p(n_C)`.
fn forward_from(
    fwd: &Conditionals,
    gibbs: &GibbsSpec,
    provenance: Provenance,
) -> Result<TrajectoryTable> {
    if fwd.direction != Direction::Forward {
        return Err(Error::LabelMismatch("expected forward conditionals".into()));
    }
    let dims = fwd.dims;
    let pq = gibbs.qubit_prior(&dims);
    let pc = gibbs.cavity_prior(&dims);
    let mut p = vec![0.0; TrajectoryTable::len_for(&dims)];
    for n_q in 0..dims.qubit {
        for n_c in 0..dims.cavity_init {
            let w = pq.probs()[n_q] * pc.probs()[n_c];
            for col in 0..dims.joint_len() {
                let (m_q, k, m_c) = dims.unindex(col);
                p[(n_q * dims.cavity_full + n_c) * dims.joint_len() + col] =
                    w * fwd.get(n_q, n_c, m_q, k, m_c);
            }
        }
    }
    TrajectoryTable::new(dims, Direction::Forward, *gibbs, provenance, p)
}

/// `p(γ̃) = p_b(n | m, k)·p_b(m_Q)·p_b(m_C)·p(k)`, with the cavity weights
/// extended past the initial cutoff by exact Boltzmann factors.
fn backward_from(
    bwd: &Conditionals,
    gibbs: &GibbsSpec,
    forward_pk: &Distribution,
    provenance: Provenance,
) -> Result<TrajectoryTable> {
    let dims = bwd.dims;
    let sum = forward_pk.total();
    if forward_pk.len() != dims.demon || (sum - 1.0).abs() > SILENT_TOLERANCE {
        return Err(Error::BranchNotNormalized { sum });
    }
    let pq = gibbs.qubit_prior(&dims);
    let zc = gibbs.cavity_reference(&dims);
    let mut p = vec![0.0; TrajectoryTable::len_for(&dims)];
    for n_q in 0..dims.qubit {
        for n_c in 0..dims.cavity_full {
            for col in 0..dims.joint_len() {
                let (m_q, k, m_c) = dims.unindex(col);
                p[(n_q * dims.cavity_full + n_c) * dims.joint_len() + col] = bwd
                    .get(n_q, n_c, m_q, k, m_c)
                    * pq.probs()[m_q]
                    * zc[m_c]
                    * forward_pk.probs()[k];
            }
        }
    }
    TrajectoryTable::new(dims, Direction::Backward, *gibbs, provenance, p)
}

pub fn forward_table(gibbs: &GibbsSpec, model: &ErrorModel, mode: Mode) -> Result<TrajectoryTable> {
    let sim = Simulation::new(SystemDims::default(), mode, model)?;
    Ok(sim.tables(gibbs)?.0)
}

pub fn backward_table(
    gibbs: &GibbsSpec,
    model: &ErrorModel,
    mode: Mode,
    forward_pk: &Distribution,
) -> Result<TrajectoryTable> {
    let sim = Simulation::new(SystemDims::default(), mode, model)?;
    backward_from(
        &sim.backward_conditionals()?,
        gibbs,
        forward_pk,
        sim.provenance(),
    )
}

/// Forward table of an arbitrary circuit.
pub fn forward_table_with(circuit: &Circuit, gibbs: &GibbsSpec) -> Result<TrajectoryTable> {
    forward_from(
        &circuit.forward_conditionals()?,
        gibbs,
        Provenance::SimulatedErrors,
    )
}

/// Final joint state obtained by evolving the thermal mixture directly.
pub fn oracle_full_state(
    gibbs: &GibbsSpec,
    model: &ErrorModel,
    mode: Mode,
) -> Result<JointDistribution> {
    let sim = Simulation::new(SystemDims::default(), mode, model)?;
    Ok(sim.circuit()?.oracle(gibbs)?.final_state)
}

/// `p(k) = Σ_{γ: branch k} p(γ)`.
pub fn branch_probability(t: &TrajectoryTable) -> Result<Distribution> {
    let mut pk = vec![0.0; t.dims.demon];
    for (traj, p) in t.iter() {
        pk[traj.k] += p;
    }
    Distribution::new(pk)
}

/// Stochastic entropy production from the exchanged heats,
/// `β_Q(m_Q - n_Q) + β_C(m_C - n_C) - ln p(k)`. `None` when `p(k) = 0`.
pub fn sigma_of_trajectory(t: &Trajectory, gibbs: &GibbsSpec, pk: &Distribution) -> Option<f64> {
    let p = pk.probs()[t.k];
    if p <= 0.0 {
        return None;
    }
    Some(
        gibbs.beta_q() * (energy(t.m_q) - energy(t.n_q))
            + gibbs.beta_c() * (energy(t.m_c) - energy(t.n_c))
            - p.ln(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaBin {
    /// Smallest σ grouped into the bin.
    pub sigma: f64,
    pub forward: f64,
    pub backward: f64,
}

/// Forward and backward probability of each entropy-production value.
///
/// Bins are keyed by the σ of the forward trajectories that are actually
/// realized. Backward weight of trajectories the forward protocol never
/// produces has no forward key and is kept in `unreached_backward`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaHistogram {
    pub bins: Vec<SigmaBin>,
    pub tolerance: f64,
    pub unreached_backward: f64,
}

pub fn sigma_histogram(
    fwd: &TrajectoryTable,
    bwd: &TrajectoryTable,
    tol: f64,
) -> Result<SigmaHistogram> {
    if !(tol > 0.0) {
        return Err(Error::OutOfRange {
            name: "sigma tolerance".into(),
            value: tol,
            range: "(0, inf)",
        });
    }
    if fwd.dims != bwd.dims {
        return Err(Error::LabelMismatch(
            "forward and backward tables index different spaces".into(),
        ));
    }
    let pk = branch_probability(fwd)?;
    let mut keyed = Vec::new();
    let mut unreached_backward = 0.0;
    for (i, &p) in fwd.probs.iter().enumerate() {
        let pb = bwd.probs[i];
        if p > 0.0 {
            let t = fwd.trajectory(i);
            let sigma =
                sigma_of_trajectory(&t, &fwd.gibbs, &pk).expect("realized branch has p(k) > 0");
            keyed.push((sigma, p, pb));
        } else {
            unreached_backward += pb;
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut bins: Vec<SigmaBin> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (sigma, p, pb) in keyed {
        match bins.last_mut() {
            Some(bin) if sigma - last <= tol => {
                bin.forward += p;
                bin.backward += pb;
            }
            _ => bins.push(SigmaBin {
                sigma,
                forward: p,
                backward: pb,
            }),
        }
        last = sigma;
    }
    Ok(SigmaHistogram {
        bins,
        tolerance: tol,
        unreached_backward,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::ErrorKind;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const X: f64 = 0.874_147_845_505_990_2;

    fn gibbs(dbeta: f64) -> GibbsSpec {
        GibbsSpec::from_dbeta(X, dbeta).unwrap()
    }

    fn ideal(dbeta: f64) -> (TrajectoryTable, TrajectoryTable) {
        Simulation::new(SystemDims::default(), Mode::Ideal, &ErrorModel::default())
            .unwrap()
            .tables(&gibbs(dbeta))
            .unwrap()
    }

    fn physical(model: &ErrorModel, dbeta: f64) -> (TrajectoryTable, TrajectoryTable) {
        Simulation::new(SystemDims::default(), Mode::Physical, model)
            .unwrap()
            .tables(&gibbs(dbeta))
            .unwrap()
    }

    fn excited(beta: f64) -> f64 {
        1.0 / (1.0 + beta.exp())
    }

    #[test]
    fn ideal_swap_branch_probability() {
        let (f, _) = ideal(0.0);
        let g = gibbs(0.0);
        let d = SystemDims::default();
        let expected = g.qubit_prior(&d).probs()[1] * g.cavity_prior(&d).probs()[0];
        assert_abs_diff_eq!(
            f.get(&Trajectory::new(1, 1, 0, 0, 1)),
            expected,
            epsilon = 1e-15
        );
        for (t, p) in f.iter() {
            if t.n_q == 1 && t.k == 0 {
                assert_eq!(p, 0.0);
            }
        }
    }

    #[test]
    fn branch_probability_at_equal_temperatures() {
        let (f, _) = ideal(0.0);
        let pk = branch_probability(&f).unwrap();
        assert_abs_diff_eq!(pk.probs()[1], excited(X), epsilon = 1e-15);
        assert_abs_diff_eq!(pk.probs()[1], 0.2944, epsilon = 5e-5);
        let only_zero = TrajectoryTable::new(
            SystemDims::default(),
            Direction::Forward,
            gibbs(0.0),
            Provenance::SimulatedIdeal,
            {
                let mut p = vec![0.0; f.len()];
                p[f.index(&Trajectory::new(0, 0, 0, 0, 0))] = 1.0;
                p
            },
        )
        .unwrap();
        assert_eq!(branch_probability(&only_zero).unwrap().probs(), &[1.0, 0.0]);
    }

    #[test]
    fn ideal_backward_branches() {
        let sim = Simulation::new(SystemDims::default(), Mode::Ideal, &ErrorModel::none()).unwrap();
        let b = sim.backward_conditionals().unwrap();
        for m_q in 0..2 {
            for m_c in 0..5 {
                for n_q in 0..2 {
                    for n_c in 0..5 {
                        let expected = if (n_q, n_c) == (m_q, m_c) { 1.0 } else { 0.0 };
                        assert_eq!(b.get(n_q, n_c, m_q, 0, m_c), expected);
                    }
                }
            }
        }
        assert_eq!(b.get(1, 0, 0, 1, 1), 1.0);
        assert_eq!(b.get(0, 1, 1, 1, 0), 1.0);
    }

    #[test]
    fn ideal_backward_weights_are_prior_products() {
        let g = gibbs(2.5);
        let (f, b) = ideal(2.5);
        let d = SystemDims::default();
        let pk = branch_probability(&f).unwrap();
        let pq = g.qubit_prior(&d);
        let zc = g.cavity_reference(&d);
        for (t, pb) in b.iter() {
            let conserved = t.n_q + t.n_c == t.m_q + t.m_c;
            let expected = pq.probs()[t.m_q] * zc[t.m_c] * pk.probs()[t.k];
            if pb > 0.0 {
                assert!(conserved);
                assert_abs_diff_eq!(pb, expected, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn sigma_examples() {
        let (f, _) = ideal(0.0);
        let pk = branch_probability(&f).unwrap();
        let g = gibbs(0.0);
        let s = sigma_of_trajectory(&Trajectory::new(1, 1, 0, 0, 1), &g, &pk).unwrap();
        assert_abs_diff_eq!(s, -excited(X).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(s, 1.2229, epsilon = 1e-4);
        let still = sigma_of_trajectory(&Trajectory::new(0, 0, 2, 0, 2), &g, &pk).unwrap();
        assert_abs_diff_eq!(still, -pk.probs()[0].ln(), epsilon = 1e-15);
        let degenerate = Distribution::new(vec![1.0, 0.0]).unwrap();
        assert!(sigma_of_trajectory(&Trajectory::new(1, 1, 0, 0, 1), &g, &degenerate).is_none());
    }

    #[test]
    fn heat_formula_matches_log_ratio_in_ideal_mode() {
        for dbeta in [-6.0, -1.25, 0.0, 0.75, 3.0, 6.0] {
            let (f, b) = ideal(dbeta);
            let pk = branch_probability(&f).unwrap();
            for (t, p) in f.iter().filter(|(_, p)| *p > 0.0) {
                let s = sigma_of_trajectory(&t, f.gibbs(), &pk).unwrap();
                assert_abs_diff_eq!(s, (p / b.get(&t)).ln(), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn fluctuation_relation_per_bin() {
        for dbeta in [-6.0, 0.0, 1.0, 6.0] {
            let (f, b) = ideal(dbeta);
            let h = sigma_histogram(&f, &b, SIGMA_TOLERANCE).unwrap();
            let total: f64 = h.bins.iter().map(|b| b.forward).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            for bin in &h.bins {
                assert_abs_diff_eq!((bin.forward / bin.backward).ln(), bin.sigma, epsilon = 1e-9);
            }
            for w in h.bins.windows(2) {
                assert!(w[1].sigma - w[0].sigma > h.tolerance);
            }
        }
    }

    #[test]
    fn histogram_grouping() {
        let d = SystemDims::default();
        let g = gibbs(0.0);
        let mut pf = vec![0.0; 2 * 5 * 20];
        let mut pb = pf.clone();
        let t0 = TrajectoryTable::new(
            d,
            Direction::Forward,
            g,
            Provenance::SimulatedIdeal,
            pf.clone(),
        )
        .unwrap();
        let single = t0.index(&Trajectory::new(0, 0, 1, 0, 1));
        pf[single] = 1.0;
        pb[single] = 0.5;
        let f = TrajectoryTable::new(
            d,
            Direction::Forward,
            g,
            Provenance::SimulatedIdeal,
            pf.clone(),
        )
        .unwrap();
        let b = TrajectoryTable::new(
            d,
            Direction::Backward,
            g,
            Provenance::SimulatedIdeal,
            pb.clone(),
        )
        .unwrap();
        let h = sigma_histogram(&f, &b, 1e-9).unwrap();
        assert_eq!(h.bins.len(), 1);
        assert_eq!((h.bins[0].forward, h.bins[0].backward), (1.0, 0.5));

        // zero heat in both: same σ = -ln p(0)
        pf[single] = 0.6;
        pf[t0.index(&Trajectory::new(0, 0, 2, 0, 2))] = 0.4;
        let f =
            TrajectoryTable::new(d, Direction::Forward, g, Provenance::SimulatedIdeal, pf).unwrap();
        let h = sigma_histogram(&f, &b, 1e-9).unwrap();
        assert_eq!(h.bins.len(), 1);
        assert_abs_diff_eq!(h.bins[0].forward, 1.0);
        assert!(sigma_histogram(&f, &b, 0.0).is_err());
    }

    #[test]
    fn oracle_matches_tables() {
        let mut noisy = ErrorModel::default();
        noisy.relax_atom_prob = 0.02;
        noisy.relax_cavity_prob = 0.01;
        for (mode, model) in [(Mode::Ideal, ErrorModel::none()), (Mode::Physical, noisy)] {
            let sim = Simulation::new(SystemDims::default(), mode, &model).unwrap();
            for dbeta in [-6.0, 0.0, 4.5] {
                let (f, _) = sim.tables(&gibbs(dbeta)).unwrap();
                let oracle = sim
                    .circuit()
                    .unwrap()
                    .oracle(&gibbs(dbeta))
                    .unwrap()
                    .final_state;
                for (a, b) in f.final_joint().probs().iter().zip(oracle.probs()) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_circuit_leaves_initial_state() {
        let d = SystemDims::default();
        let mut c = Circuit::ideal(d).unwrap();
        c.readout = StochasticChannel::identity(d);
        c.feedback = StochasticChannel::identity(d);
        let taps = c.oracle(&gibbs(1.0)).unwrap();
        assert_eq!(taps.final_state, taps.initial);
        let point = apply(
            &c.composite().unwrap(),
            &JointDistribution::point(d, 1, 1, 2),
        )
        .unwrap();
        assert_eq!(point, JointDistribution::point(d, 1, 1, 2));
    }

    #[test]
    fn physical_without_errors_is_ideal() {
        for dbeta in [-3.0, 0.0, 6.0] {
            let (fi, bi) = ideal(dbeta);
            let (fp, bp) = physical(&ErrorModel::none(), dbeta);
            assert_eq!(fi.probs(), fp.probs());
            assert_eq!(bi.probs(), bp.probs());
        }
    }

    #[test]
    fn physical_mode_respects_atomic_encoding() {
        let (f, b) = physical(&ErrorModel::default(), 1.0);
        assert_abs_diff_eq!(f.total(), 1.0, epsilon = 1e-12);
        for (t, p) in f.iter() {
            if t.m_q == 1 && t.k == 0 {
                assert_eq!(p, 0.0);
            }
            if t.n_c >= 4 {
                assert_eq!(p, 0.0);
            }
        }
        let g = gibbs(1.0);
        let expected: f64 = g.cavity_reference(f.dims()).iter().sum();
        assert_abs_diff_eq!(b.total(), expected, epsilon = 1e-12);
    }

    #[test]
    fn conditionals_reweighting() {
        let d = SystemDims::default();
        let fwd_rows = d.qubit * d.cavity_init;
        let mut ident = vec![0.0; fwd_rows * d.joint_len()];
        for n_q in 0..2 {
            for n_c in 0..4 {
                ident[(n_q * 4 + n_c) * 20 + d.index(n_q, 1, n_c)] = 1.0;
            }
        }
        let fwd = Conditionals::new(d, Direction::Forward, ident).unwrap();
        let bwd = Simulation::new(d, Mode::Ideal, &ErrorModel::none())
            .unwrap()
            .backward_conditionals()
            .unwrap();
        let g = gibbs(-2.0);
        let (f, _) = tables_from_conditionals(&fwd, &bwd, &g).unwrap();
        let pq = g.qubit_prior(&d);
        let pc = g.cavity_prior(&d);
        for n_q in 0..2 {
            for n_c in 0..4 {
                assert_abs_diff_eq!(
                    f.get(&Trajectory::new(n_q, 1, n_c, n_q, n_c)),
                    pq.probs()[n_q] * pc.probs()[n_c],
                    epsilon = 1e-15
                );
            }
        }

        let uniform =
            Conditionals::new(d, Direction::Forward, vec![1.0 / 20.0; fwd_rows * 20]).unwrap();
        let cold = GibbsSpec::from_dbeta(60.0, 0.0).unwrap();
        let (f, _) = tables_from_conditionals(&uniform, &bwd, &cold).unwrap();
        let ground: f64 = f
            .iter()
            .filter(|(t, _)| t.n_q == 0 && t.n_c == 0)
            .map(|(_, p)| p)
            .sum();
        assert_abs_diff_eq!(ground, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_unencodable_backward_column_becomes_identity() {
        let d = SystemDims::default();
        let full = Simulation::new(d, Mode::Physical, &ErrorModel::default())
            .unwrap()
            .backward_conditionals()
            .unwrap();
        let mut values = full.values().to_vec();
        for row in 0..10 {
            for m_c in 0..5 {
                values[row * 20 + d.index(1, 0, m_c)] = 0.0;
            }
        }
        let refilled = Conditionals::new(d, Direction::Backward, values.clone()).unwrap();
        for (a, b) in refilled.values().iter().zip(full.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        values[d.index(0, 1, 0)] = 0.0;
        values[20 + d.index(0, 1, 0)] = 0.0;
        values[5 * 20 + d.index(0, 1, 0)] = 0.0;
        assert!(Conditionals::new(d, Direction::Backward, values).is_err());
    }

    #[test]
    fn backward_table_needs_normalized_branches() {
        let bad = Distribution::sub_normalized(vec![0.3, 0.3]).unwrap();
        assert!(matches!(
            backward_table(&gibbs(0.0), &ErrorModel::none(), Mode::Ideal, &bad),
            Err(Error::BranchNotNormalized { .. })
        ));
        let (f, b) = ideal(1.5);
        let pk = branch_probability(&f).unwrap();
        let direct = backward_table(&gibbs(1.5), &ErrorModel::none(), Mode::Ideal, &pk).unwrap();
        assert_eq!(direct.probs(), b.probs());
        assert_eq!(
            forward_table(&gibbs(1.5), &ErrorModel::default(), Mode::Ideal)
                .unwrap()
                .probs(),
            f.probs()
        );
    }

    #[test]
    fn ideal_backward_flag() {
        let model = ErrorModel::default().only(&[ErrorKind::Read]);
        let sim = Simulation::new(SystemDims::default(), Mode::Physical, &model).unwrap();
        let noisy = sim.backward_conditionals().unwrap();
        let clean = sim
            .clone()
            .with_ideal_backward(true)
            .backward_conditionals()
            .unwrap();
        // a failed readout pulse leaves g, which the swap then excites
        assert_abs_diff_eq!(noisy.get(0, 1, 0, 0, 1), 0.89, epsilon = 1e-15);
        assert_abs_diff_eq!(noisy.get(1, 0, 0, 0, 1), 0.11, epsilon = 1e-15);
        assert_eq!(clean.get(0, 1, 0, 0, 1), 1.0);
    }

    proptest! {
        #[test]
        fn ideal_tables_conserve_quanta(dbeta in -6.0f64..6.0) {
            let (f, b) = ideal(dbeta);
            prop_assert!((f.total() - 1.0).abs() < 1e-9);
            let ext: f64 = f.gibbs().cavity_reference(f.dims()).iter().sum();
            prop_assert!((b.total() - ext).abs() < 1e-9);
            for (t, p) in f.iter() {
                if p > 0.0 {
                    prop_assert_eq!(t.n_q + t.n_c, t.m_q + t.m_c);
                }
            }
        }

        #[test]
        fn error_tables_are_normalized(dbeta in -6.0f64..6.0, eps in 0.0f64..0.3) {
            let model = ErrorModel { eps_read: eps, eps_feed: eps / 2.0, ..ErrorModel::default() };
            let (f, _) = physical(&model, dbeta);
            prop_assert!((f.total() - 1.0).abs() < 1e-9);
            prop_assert!(f.probs().iter().all(|&p| p >= 0.0));
        }
    }
}
