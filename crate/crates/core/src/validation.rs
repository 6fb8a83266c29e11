//! Invariant suite run by `demon-ep validate`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channels::{
    detection_channel, feedback_channel, readout_channel, relaxation_channel, time_reverse,
    two_atom_probability, ErrorKind, ErrorModel, StochasticChannel,
};
use crate::dataio::{kelvin_to_beta_omega, parse_table, write_table, ConditionalTable};
use crate::entropy::{
    evaluate, feedback_balance_residual, sigma2, sigma6, EpResult, EstimatorOptions,
};
use crate::error::Result;
use crate::protocol::{
    branch_probability, forward_table_with, sigma_histogram, sigma_of_trajectory, Circuit, Mode,
    Simulation, TrajectoryTable,
};
use crate::statespace::{gibbs_distribution, mean_occupation, GibbsSpec, SystemDims};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ValidationSettings {
    pub beta_c: f64,
    pub grid: Vec<f64>,
    /// Error model used for the physical-mode checks.
    pub model: ErrorModel,
    /// Number of random circuits in the Σ₂ = Σ₆ check.
    pub seeds: usize,
    /// Swap the feedback direction, as a negative control.
    pub inject_defect: bool,
}

impl ValidationSettings {
    pub fn new(beta_c: f64, grid: Vec<f64>) -> Self {
        ValidationSettings {
            beta_c,
            grid,
            model: ErrorModel::default(),
            seeds: 1000,
            inject_defect: false,
        }
    }
}

fn check(name: &'static str, worst: f64, tol: f64, what: &str) -> Check {
    Check {
        name,
        passed: worst <= tol,
        detail: format!("{what} {worst:.3e} (tolerance {tol:.0e})"),
    }
}

fn flag(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

/// `|e, n> ↔ |g, n-1>`: the feedback swap run the wrong way.
pub fn reversed_feedback(dims: SystemDims) -> Result<StochasticChannel> {
    let top = dims.cavity_full - 1;
    StochasticChannel::from_action(dims, |q, d, c| match (q, d) {
        (1, 1) if c > 0 => vec![((0, 1, c - 1), 1.0)],
        (0, 1) if c < top => vec![((1, 1, c + 1), 1.0)],
        _ => vec![((q, d, c), 1.0)],
    })
}

/// Forward average of `e^{-σ}` with σ from the exchanged heat.
pub fn forward_exp_average(fwd: &TrajectoryTable) -> Result<f64> {
    let pk = branch_probability(fwd)?;
    Ok(fwd
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|(t, p)| {
            p * (-sigma_of_trajectory(&t, fwd.gibbs(), &pk).unwrap_or(f64::INFINITY)).exp()
        })
        .sum())
}

struct Runs {
    ideal: Vec<(TrajectoryTable, TrajectoryTable, EpResult)>,
    physical: Vec<(TrajectoryTable, TrajectoryTable, EpResult)>,
}

fn sweep_tables(
    sim: &Simulation,
    s: &ValidationSettings,
) -> Result<Vec<(TrajectoryTable, TrajectoryTable, EpResult)>> {
    s.grid
        .iter()
        .map(|&d| {
            let (f, b) = sim.tables(&GibbsSpec::from_dbeta(s.beta_c, d)?)?;
            let r = evaluate(&f, Some(&b), &EstimatorOptions::default())?;
            Ok((f, b, r))
        })
        .collect()
}

fn worst<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

/// Runs every check and reports each outcome; failures are not errors.
pub fn run_validation(s: &ValidationSettings) -> Result<Vec<Check>> {
    let dims = SystemDims::default();
    let ideal_sim = Simulation::new(dims, Mode::Ideal, &ErrorModel::none())?;
    let phys_sim = Simulation::new(dims, Mode::Physical, &s.model)?;
    let runs = Runs {
        ideal: sweep_tables(&ideal_sim, s)?,
        physical: sweep_tables(&phys_sim, s)?,
    };
    let mut out = Vec::new();

    let relaxing = ErrorModel {
        relax_atom_prob: 0.04,
        relax_cavity_prob: 0.04,
        ..s.model.clone()
    };
    let channels = [
        readout_channel(dims, s.model.eps_read)?,
        feedback_channel(s.model.eps_feed, dims)?,
        relaxation_channel(&relaxing, dims)?,
        detection_channel(dims, &s.model.detect_confusion)?,
    ];
    out.push(check(
        "channels are column-stochastic",
        worst(channels.iter().map(|c| c.stochasticity_defect())),
        1e-12,
        "largest column-sum defect",
    ));

    let v = feedback_channel(0.0, dims)?;
    let involution = v.then(&v)? == StochasticChannel::identity(dims) && time_reverse(&v)? == v;
    out.push(flag(
        "feedback swap is an involution",
        involution,
        "V·V = 1 and time_reverse(V) = V".into(),
    ));

    let chain = Circuit::physical(dims, &relaxing)?.composite()?;
    let leaked = worst((0..dims.joint_len()).flat_map(|from| {
        let (q, d, _) = dims.unindex(from);
        let chain = &chain;
        (0..dims.cavity_full)
            .filter(move |_| (q, d) != (1, 0))
            .map(move |c| chain.get(dims.index(1, 0, c), from))
    }));
    out.push(check(
        "physical circuit avoids the unencoded pair",
        leaked,
        0.0,
        "largest transition into (1_Q, 0_D)",
    ));

    let mut circuit = Circuit::ideal(dims)?;
    if s.inject_defect {
        circuit.feedback = reversed_feedback(dims)?;
    }
    let mut violations = 0usize;
    for &d in &s.grid {
        let f = forward_table_with(&circuit, &GibbsSpec::from_dbeta(s.beta_c, d)?)?;
        violations += f
            .iter()
            .filter(|(t, p)| *p > 0.0 && t.n_q + t.n_c != t.m_q + t.m_c)
            .count();
    }
    out.push(flag(
        "ideal circuit conserves quanta",
        violations == 0,
        format!("{violations} weighted trajectories change n_Q + n_C"),
    ));

    out.push(check(
        "forward tables are normalized",
        worst(
            runs.ideal
                .iter()
                .chain(&runs.physical)
                .map(|(f, _, _)| (f.total() - 1.0).abs()),
        ),
        1e-9,
        "largest deviation",
    ));
    out.push(check(
        "backward mass equals the extended cavity weights",
        worst(runs.ideal.iter().chain(&runs.physical).map(|(f, b, _)| {
            let ext: f64 = f.gibbs().cavity_reference(&dims).iter().sum();
            (b.total() - ext).abs()
        })),
        1e-9,
        "largest deviation",
    ));

    let mut heat_gap: f64 = 0.0;
    let mut fr_gap: f64 = 0.0;
    let mut ift_gap: f64 = 0.0;
    let mut jarzynski_gap: f64 = 0.0;
    for (f, b, _) in &runs.ideal {
        let pk = branch_probability(f)?;
        for (t, p) in f.iter().filter(|(_, p)| *p > 0.0) {
            let sigma = sigma_of_trajectory(&t, f.gibbs(), &pk).unwrap_or(f64::NAN);
            heat_gap = heat_gap.max((sigma - (p / b.get(&t)).ln()).abs());
        }
        let h = sigma_histogram(f, b, 1e-9)?;
        for bin in &h.bins {
            fr_gap = fr_gap.max(((bin.forward / bin.backward).ln() - bin.sigma).abs());
        }
        let avg = forward_exp_average(f)?;
        jarzynski_gap = jarzynski_gap.max((avg - 1.0).abs());
        ift_gap = ift_gap.max((avg - (b.total() - h.unreached_backward)).abs());
    }
    out.push(check(
        "heat formula equals the log ratio",
        heat_gap,
        1e-9,
        "largest |σ - ln(p/p̃)|",
    ));
    out.push(check(
        "detailed fluctuation relation",
        fr_gap,
        1e-9,
        "largest |ln(p(σ)/p̃(σ)) - σ|",
    ));
    out.push(check(
        "Jarzynski average equals one",
        jarzynski_gap,
        1e-9,
        "largest |<e^-σ> - 1|",
    ));
    out.push(check(
        "integral relation with unreached backward mass",
        ift_gap,
        1e-9,
        "largest |<e^-σ> - (backward mass on reached trajectories)|",
    ));

    let mut oracle_gap: f64 = 0.0;
    for (sim, rows) in [(&ideal_sim, &runs.ideal), (&phys_sim, &runs.physical)] {
        let c = sim.circuit()?;
        for (f, _, _) in rows {
            let oracle = c.oracle(f.gibbs())?.final_state;
            for (a, b) in f.final_joint().probs().iter().zip(oracle.probs()) {
                oracle_gap = oracle_gap.max((a - b).abs());
            }
        }
    }
    out.push(check(
        "oracle equivalence",
        oracle_gap,
        1e-12,
        "largest marginal difference",
    ));

    out.push(check(
        "ideal estimators coincide",
        worst(runs.ideal.iter().map(|(_, _, r)| r.max_pairwise_gap())),
        1e-9,
        "largest |Σi - Σj|",
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut s26: f64 = 0.0;
    for i in 0..s.seeds {
        let c = Circuit::random(dims, &mut rng)?;
        let d = s.grid[i % s.grid.len()];
        let g = GibbsSpec::from_dbeta(s.beta_c, d)?;
        let f = forward_table_with(&c, &g)?;
        s26 = s26.max((sigma2(&f, &g)? - sigma6(&f, &g)?).abs());
    }
    out.push(check(
        "Σ2 equals Σ6 on random circuits",
        s26,
        1e-12,
        &format!("{} circuits, largest gap", s.seeds),
    ));

    let mut lowest = f64::INFINITY;
    let mut models = vec![ErrorModel::none(), s.model.clone()];
    models.extend(ErrorKind::ALL.iter().map(|k| s.model.only(&[*k])));
    for m in &models {
        let sim = Simulation::new(dims, Mode::Physical, m)?;
        for (_, _, r) in sweep_tables(&sim, s)? {
            for (_, v) in r.sigmas() {
                if v.is_finite() {
                    lowest = lowest.min(v);
                }
            }
        }
    }
    out.push(flag(
        "second law",
        lowest >= -1e-9,
        format!("smallest finite Σ {lowest:.3e}"),
    ));

    let mut balance: f64 = 0.0;
    let ideal_circuit = ideal_sim.circuit()?;
    for &d in &s.grid {
        let g = GibbsSpec::from_dbeta(s.beta_c, d)?;
        let taps = ideal_circuit.oracle(&g)?;
        balance = balance
            .max(feedback_balance_residual(&taps.post_readout, &taps.post_feedback, &g)?.abs());
    }
    out.push(check(
        "information balance across the feedback",
        balance,
        1e-9,
        "largest residual",
    ));

    let coarse = runs
        .physical
        .iter()
        .filter_map(|(_, _, r)| match (r.sigma4, r.sigma5) {
            (Some(s4), Some(s5)) if s4.is_finite() => Some(s5 - s4),
            _ => None,
        });
    out.push(check(
        "coarse-graining does not raise Σ",
        worst(coarse),
        1e-9,
        "largest Σ5 - Σ4",
    ));

    let point = |m: &ErrorModel, d: f64| -> Result<EpResult> {
        let (f, b) = Simulation::new(dims, Mode::Physical, m)?
            .tables(&GibbsSpec::from_dbeta(s.beta_c, d)?)?;
        evaluate(&f, Some(&b), &EstimatorOptions::default())
    };
    let none = ErrorModel::none();
    let read = point(&s.model.only(&[ErrorKind::Read]), -6.0)?.sigma2 - point(&none, -6.0)?.sigma2;
    let feed = point(&none, 6.0)?.sigma1 - point(&s.model.only(&[ErrorKind::Feed]), 6.0)?.sigma1;
    let meas = point(&s.model.only(&[ErrorKind::Meas]), 6.0)?;
    let ideal_hi = point(&none, 6.0)?;
    let d3 = (meas.sigma3.unwrap_or(f64::NAN) - ideal_hi.sigma3.unwrap_or(f64::NAN)).abs();
    let d2 = (meas.sigma2 - ideal_hi.sigma2).abs();
    out.push(flag(
        "single-error signatures",
        read >= 0.01 && feed >= 0.01 && d3 > d2,
        format!("readout raises Σ2(-6) by {read:.4}, feedback lowers Σ1(6) by {feed:.4}, detection moves Σ3(6) by {d3:.4} and Σ2(6) by {d2:.4}"),
    ));

    let p2 = two_atom_probability(s.model.nbar_atoms, s.model.detect_eff)?;
    out.push(flag(
        "two-atom probability",
        (p2 - 0.10).abs() <= 0.005,
        format!("P(2 | 1 detected) = {p2:.4}"),
    ));

    let x = kelvin_to_beta_omega(2.8, 51.0)?;
    let nbar = mean_occupation(&gibbs_distribution(x, 200, true)?);
    out.push(flag(
        "thermal photon number",
        (nbar - 0.716).abs() <= 0.005,
        format!("n̄ = {nbar:.4} at 2.8 K, 51 GHz"),
    ));

    let (fc, bc) = phys_sim.conditionals()?;
    let mut round_trip: f64 = 0.0;
    for c in [&fc, &bc] {
        let table = ConditionalTable::from_conditionals(c);
        let mut buf = Vec::new();
        write_table(&table, &mut buf)?;
        let back = parse_table(buf.as_slice(), table.orientation)?.to_conditionals(dims)?;
        round_trip = round_trip.max(worst(
            back.values()
                .iter()
                .zip(c.values())
                .map(|(a, b)| (a - b).abs()),
        ));
    }
    out.push(check(
        "conditional table round trip",
        round_trip,
        1e-15,
        "largest change",
    ));

    Ok(out)
}
