//! One function per experiment kind. Each produces tables and JSON documents;
//! writing them is left to the runner.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use sparsepot::bs::{
    asymptotic_ratio, bs_matrix, bs_principle_check, bs_spectrum, two_sided_check, weyl_demo, SparsePotential,
};
use sparsepot::green::{
    fundamental_z2_asymptotic, potential_kernel, BoxGreen, Calibration, GreenSource, GreenTable, SolveGreen, Z2Green,
};
use sparsepot::heat::{estimate_dimension, log_grid};
use sparsepot::lattice::{Lattice, LatticeSpec, Point};
use sparsepot::linalg::InertiaCounter;
use sparsepot::metric::{
    calogero_count, constant_potential_count, envelope_check, epsilon_sweep, random_monotone_step, MetricGraph,
    NonAdjacentStream, StepPotential,
};
use sparsepot::sparse::{
    build_sparse_set, build_sparse_set_partial, default_budget, lattice_candidates, BuildOutcome, CandidateStream,
    ListStream, SparseSet, Z2CandidateStream, DEFAULT_SCAN_CAP,
};
use sparsepot::Error;

use crate::config::*;
use crate::table::{num, Table};
use crate::CliError;

/// Everything an experiment produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub tables: Vec<(String, Table)>,
    pub documents: Vec<(String, Value)>,
    pub c_norm: Option<f64>,
    pub box_radii: Vec<i64>,
    /// Set when outputs were written but a check failed.
    pub failure: Option<CliError>,
}

impl Outcome {
    fn fail(&mut self, e: CliError) {
        if self.failure.is_none() {
            self.failure = Some(e);
        }
    }
}

pub fn execute(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let seed = config.seed;
    match &config.experiment {
        Experiment::Green(c) => green(c, seed),
        Experiment::SparseBuild(c) => sparse_build(c, seed),
        Experiment::BsSpectrum(c) => spectrum(c, seed),
        Experiment::CountNegative(c) => count_negative(c),
        Experiment::BsPrinciple(c) => principle(c),
        Experiment::Dimension(c) => dimension(c),
        Experiment::Metric(c) => metric(c, seed),
        Experiment::Calogero(c) => calogero(c, seed),
        Experiment::WeylDemo(c) => weyl(c),
    }
}

enum Source {
    Z2(Arc<Z2Green>, Calibration),
    Box(Arc<BoxGreen>),
}

fn resolve(host: &Host, seed: u64) -> Result<Source, CliError> {
    Ok(match host {
        Host::Z2 { calibration_samples } => {
            let (green, cal) = Z2Green::calibrated(*calibration_samples, seed)?;
            Source::Z2(Arc::new(green), cal)
        }
        Host::Box(spec) => Source::Box(Arc::new(BoxGreen::new(*spec)?)),
    })
}

fn stamp<S: GreenSource>(table: &mut Table, green: &GreenTable<S>) {
    let meta = green.metadata();
    table.meta("cNorm", num(meta.c_norm));
    table.meta("boxRadius", meta.box_radius.map_or("none".to_string(), |r| r.to_string()));
    table.meta("method", serde_json::to_value(meta.method).expect("serializable").as_str().unwrap_or_default());
}

fn record<S: GreenSource>(out: &mut Outcome, green: &GreenTable<S>) {
    let meta = green.metadata();
    out.c_norm = Some(meta.c_norm);
    if let Some(r) = meta.box_radius {
        if !out.box_radii.contains(&r) {
            out.box_radii.push(r);
        }
    }
}

fn green(c: &GreenConfig, seed: u64) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let m = c.max_offset;
    match resolve(&c.host, seed)? {
        Source::Z2(g, cal) => {
            let table = GreenTable::new(Arc::clone(&g));
            record(&mut out, &table);
            let mut t = Table::new(&["x1", "x2", "kernel", "asymptotic", "asymptotic_difference", "equation_residual"]);
            stamp(&mut t, &table);
            t.meta("calibrationSamples", cal.samples);
            for i in -m..=m {
                for j in -m..=m {
                    let x = [i, j];
                    let a = potential_kernel(x)?;
                    let (asym, diff) = if x == [0, 0] {
                        (String::new(), String::new())
                    } else {
                        let s = fundamental_z2_asymptotic(x)?;
                        (num(s), num(a - s))
                    };
                    let residual = if x == [0, 0] { String::new() } else { num(g.residual(x, 1)?) };
                    t.push(vec![i.to_string(), j.to_string(), num(a), asym, diff, residual]);
                }
            }
            out.tables.push(("kernel".into(), t));
            out.documents.push(("calibration".into(), serde_json::to_value(&cal).map_err(CliError::from_json)?));
        }
        Source::Box(b) => {
            let spec = *b.spec();
            let d = spec.dimension;
            if m >= spec.radius {
                return Err(CliError::Validation(format!(
                    "maxOffset {m} must be below the box radius {}",
                    spec.radius
                )));
            }
            let source = c.source.unwrap_or(if spec.clamps_origin() { [1, 0, 0] } else { [0, 0, 0] });
            if !spec.contains_interior(&source) || (spec.clamps_origin() && source == [0, 0, 0]) {
                return Err(CliError::Validation(format!("source {source:?} is not an interior vertex")));
            }
            let table = GreenTable::new(Arc::clone(&b));
            record(&mut out, &table);
            let mut cols: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
            cols.extend(["green".to_string(), "capacity".to_string()]);
            let mut t = Table::with_columns(cols);
            stamp(&mut t, &table);
            t.meta("source", format!("{:?}", &source[..d]));
            let lattice = b.lattice();
            let column = b.column(&source)?;
            let caps: std::collections::HashMap<Point, f64> = b.all_capacities()?.into_iter().collect();
            for v in 0..lattice.graph().vertex_count() {
                let x = lattice.coords(v);
                if x[..d].iter().any(|c| c.abs() > m) || lattice.graph().is_dirichlet(v) {
                    continue;
                }
                let mut row: Vec<String> = x[..d].iter().map(i64::to_string).collect();
                row.push(num(column[v]));
                row.push(caps.get(&x).map_or(String::new(), |&c| num(c)));
                t.push(row);
            }
            out.tables.push(("green".into(), t));
        }
    }
    Ok(out)
}

fn box_stream(green: &BoxGreen, build: &BuildConfig) -> ListStream<Point> {
    let cap = build.mildness_cap.unwrap_or(2.0 * green.spec().dimension as f64);
    ListStream::new(lattice_candidates(green.lattice(), cap))
}

fn run_build<S, C>(table: &GreenTable<S>, build: &BuildConfig, stream: &mut C) -> Result<BuildOutcome<Point>, CliError>
where
    S: GreenSource<Vertex = Point>,
    C: CandidateStream<Vertex = Point>,
{
    let budget = default_budget(build.size, build.cap)?;
    Ok(build_sparse_set_partial(table, &budget, build.size, stream)?)
}

fn set_outputs<S: GreenSource<Vertex = Point>>(
    out: &mut Outcome,
    table: &GreenTable<S>,
    outcome: &BuildOutcome<Point>,
) {
    let set = &outcome.set;
    let source = table.source();
    let dim = source.coords([0, 0, 0]).len();
    let mut cols = vec!["index".to_string()];
    cols.extend((1..=dim).map(|i| format!("x{i}")));
    cols.push("capacity".into());
    let mut t = Table::with_columns(cols);
    stamp(&mut t, table);
    t.meta("deltaHs", num(set.delta_hs)).meta("hsBound", num(set.budget.hs_bound()));
    for (i, (&v, &c)) in set.vertices.iter().zip(&set.capacities).enumerate() {
        let mut row = vec![(i + 1).to_string()];
        row.extend(source.coords(v).iter().map(i64::to_string));
        row.push(num(c));
        t.push(row);
    }
    out.tables.push(("sparse_set".into(), t));
    let mut doc = serde_json::to_value(set.to_document(|v| source.coords(v))).expect("serializable");
    if let Some(e) = &outcome.failure {
        doc["failure"] = Value::String(e.to_string());
    }
    out.documents.push(("sparse_set".into(), doc));
    if let Some(e) = &outcome.failure {
        out.fail(CliError::Certificate(e.to_string()));
    } else if !set.certificate_holds() {
        out.fail(CliError::Certificate(format!("delta_HS = {} against bound {}", set.delta_hs, set.budget.hs_bound())));
    }
}

fn sparse_build(c: &SparseBuildConfig, seed: u64) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    match resolve(&c.host, seed)? {
        Source::Z2(g, _) => {
            let table = GreenTable::new(Arc::clone(&g));
            record(&mut out, &table);
            let mut stream = Z2CandidateStream::new(g, c.build.scan_cap.unwrap_or(DEFAULT_SCAN_CAP));
            let outcome = run_build(&table, &c.build, &mut stream)?;
            set_outputs(&mut out, &table, &outcome);
        }
        Source::Box(b) => {
            let table = GreenTable::new(Arc::clone(&b));
            record(&mut out, &table);
            let mut stream = box_stream(&b, &c.build);
            let outcome = run_build(&table, &c.build, &mut stream)?;
            set_outputs(&mut out, &table, &outcome);
        }
    }
    Ok(out)
}

fn make_potential<S: GreenSource<Vertex = Point>>(
    table: &GreenTable<S>,
    sites: &[Point],
    schedule: &Schedule,
) -> Result<SparsePotential<Point>, CliError> {
    let values = schedule.values(sites.len())?;
    Ok(match schedule.target {
        ScheduleTarget::Effective => SparsePotential::for_target(table, sites, &values)?,
        ScheduleTarget::Strength => SparsePotential::new(table, sites, &values)?,
    })
}

fn spectrum_outputs<S: GreenSource<Vertex = Point>>(
    out: &mut Outcome,
    table: &GreenTable<S>,
    set: &SparseSet<Point>,
    schedule: &Schedule,
) -> Result<(), CliError> {
    let potential = make_potential(table, &set.vertices, schedule)?;
    let k = bs_matrix(table, &potential)?;
    let spectrum = bs_spectrum(&k.matrix)?;
    let gram = sparsepot::sparse::gram_matrix(table, &potential.sites)?;
    let sandwich = two_sided_check(&spectrum.values, &potential, &gram)?;
    let ratio = asymptotic_ratio(&spectrum.values, &potential).ok();
    let mut t = Table::new(&["n", "lambda", "w_n", "ratio"]);
    stamp(&mut t, table);
    for (i, (&l, &w)) in spectrum.values.iter().zip(&potential.weights).enumerate() {
        t.push(vec![(i + 1).to_string(), num(l), num(w), num(l / w)]);
    }
    out.tables.push(("spectrum".into(), t));
    out.documents.push((
        "spectrum_summary".into(),
        json!({
            "sandwich": sandwich,
            "asymptoticRatio": ratio,
            "deltaHs": set.delta_hs,
            "deltaOp": set.delta_op,
            "maxRelativeResidual": spectrum.max_relative_residual,
            "moderatelyVarying": potential.moderately_varying(),
            "variation": potential.variation(),
        }),
    ));
    if !sandwich.holds {
        out.fail(CliError::Certificate(format!("two-sided bound violated by {:e}", sandwich.max_slack)));
    }
    Ok(())
}

fn spectrum(c: &BsSpectrumConfig, seed: u64) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    match resolve(&c.host, seed)? {
        Source::Z2(g, _) => {
            let table = GreenTable::new(Arc::clone(&g));
            record(&mut out, &table);
            let mut stream = Z2CandidateStream::new(g, c.build.scan_cap.unwrap_or(DEFAULT_SCAN_CAP));
            let outcome = run_build(&table, &c.build, &mut stream)?;
            set_outputs(&mut out, &table, &outcome);
            spectrum_outputs(&mut out, &table, &outcome.set, &c.schedule)?;
        }
        Source::Box(b) => {
            let table = GreenTable::new(Arc::clone(&b));
            record(&mut out, &table);
            let mut stream = box_stream(&b, &c.build);
            let outcome = run_build(&table, &c.build, &mut stream)?;
            set_outputs(&mut out, &table, &outcome);
            spectrum_outputs(&mut out, &table, &outcome.set, &c.schedule)?;
        }
    }
    Ok(out)
}

fn box_set(table: &GreenTable<BoxGreen>, build: &BuildConfig) -> Result<SparseSet<Point>, CliError> {
    let budget = default_budget(build.size, build.cap)?;
    let mut stream = box_stream(table.source(), build);
    build_sparse_set(table, &budget, build.size, &mut stream).map_err(|e| CliError::Certificate(e.to_string()))
}

fn count_negative(c: &CountNegativeConfig) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let green = Arc::new(BoxGreen::new(c.lattice)?);
    let table = GreenTable::new(Arc::clone(&green));
    record(&mut out, &table);
    let sites = match (&c.sites, &c.build) {
        (Some(s), _) => s.clone(),
        (None, Some(b)) => box_set(&table, b)?.vertices,
        (None, None) => unreachable!("validated"),
    };
    let potential = make_potential(&table, &sites, &c.schedule)?;
    let lambdas = bs_spectrum(&bs_matrix(&table, &potential)?.matrix)?.values;
    let alphas = c.alphas.values(Some(&lambdas))?;
    let lattice = green.lattice();
    let ids: Vec<usize> = potential
        .sites
        .iter()
        .map(|p| lattice.index(p).ok_or_else(|| CliError::Validation(format!("site {p:?} outside the box"))))
        .collect::<Result<_, _>>()?;
    let counter = InertiaCounter::new(lattice.graph(), &ids, &potential.strengths)?;
    let mut t = Table::new(&["alpha", "n_minus", "warning"]);
    stamp(&mut t, &table);
    let mut skipped = 0;
    for &alpha in &alphas {
        match counter.count(alpha) {
            Ok(n) => t.push(vec![num(alpha), n.to_string(), String::new()]),
            Err(e @ Error::ThresholdProximity { .. }) => {
                skipped += 1;
                t.push(vec![num(alpha), String::new(), e.to_string()]);
            }
            Err(e) => return Err(e.into()),
        }
    }
    out.tables.push(("staircase".into(), t));
    if skipped == alphas.len() {
        out.fail(CliError::SweepExhausted(format!("all {skipped} couplings sit on thresholds")));
    }
    Ok(out)
}

fn principle(c: &BsPrincipleConfig) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let green = Arc::new(BoxGreen::new(c.lattice)?);
    let table = GreenTable::new(Arc::clone(&green));
    record(&mut out, &table);
    let set = box_set(&table, &c.build)?;
    let potential = make_potential(&table, &set.vertices, &c.schedule)?;
    let lambdas = bs_spectrum(&bs_matrix(&table, &potential)?.matrix)?.values;
    let alphas = c.alphas.values(Some(&lambdas))?;
    let reports = bs_principle_check(&table, &potential, &alphas)?;
    let mut t = Table::new(&["alpha", "n_minus", "n_bs", "n_minus_unclamped", "agreement", "skipped", "warning"]);
    stamp(&mut t, &table);
    for r in &reports {
        t.push(vec![
            num(r.alpha),
            if r.skipped { String::new() } else { r.n_minus.to_string() },
            r.n_bs.to_string(),
            r.n_minus_unclamped.map_or(String::new(), |n| n.to_string()),
            r.agreement.to_string(),
            r.skipped.to_string(),
            r.warnings.join("; "),
        ]);
    }
    out.tables.push(("counts".into(), t));
    let mut s = Table::new(&["n", "lambda", "w_n", "ratio"]);
    stamp(&mut s, &table);
    for (i, (&l, &w)) in lambdas.iter().zip(&potential.weights).enumerate() {
        s.push(vec![(i + 1).to_string(), num(l), num(w), num(l / w)]);
    }
    out.tables.push(("spectrum".into(), s));
    let skipped = reports.iter().filter(|r| r.skipped).count();
    if skipped == reports.len() {
        out.fail(CliError::SweepExhausted(format!("all {skipped} couplings sit on thresholds")));
    } else if let Some(r) = reports.iter().find(|r| !r.skipped && !r.agreement) {
        out.fail(CliError::Certificate(format!(
            "counts disagree at alpha = {}: inertia {} against {}",
            r.alpha, r.n_minus, r.n_bs
        )));
    }
    Ok(out)
}

fn dimension(c: &DimensionConfig) -> Result<Outcome, CliError> {
    let mut out = Outcome { box_radii: vec![c.lattice.radius], ..Default::default() };
    let fit = estimate_dimension(&c.lattice, &log_grid(c.t_min, c.t_max, c.samples)).map_err(|e| match e {
        Error::ValidityWindow { .. } => CliError::Certificate(e.to_string()),
        e => e.into(),
    })?;
    let mut t = Table::new(&["t", "heat_diag", "boundary_mass", "log_t", "log_heat_diag"]);
    t.meta("boxRadius", c.lattice.radius).meta("dimension", c.lattice.dimension);
    t.meta("fittedDimension", num(fit.dimension)).meta("slope", num(fit.slope)).meta("intercept", num(fit.intercept));
    for s in &fit.samples {
        t.push(vec![num(s.t), num(s.value), num(s.boundary_mass), num(s.t.ln()), num(s.value.ln())]);
    }
    out.tables.push(("heat".into(), t));
    out.documents.push(("dimension_fit".into(), serde_json::to_value(&fit).map_err(CliError::from_json)?));
    Ok(out)
}

fn metric(c: &MetricConfig, seed: u64) -> Result<Outcome, CliError> {
    let mut out = Outcome { box_radii: vec![c.lattice.radius], ..Default::default() };
    let lattice = Lattice::build(c.lattice)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [lo, hi] = c.length_range;
    let graph = MetricGraph::from_lattice(&lattice, |_, _| if hi > lo { rng.gen_range(lo..hi) } else { lo })?;
    let green = GreenTable::new(Arc::new(SolveGreen::new(graph.to_combinatorial())?.with_box_radius(c.lattice.radius)));
    out.c_norm = Some(green.metadata().c_norm);
    let budget = default_budget(c.build.size, c.build.cap)?;
    let cap = c.build.mildness_cap.unwrap_or(f64::INFINITY);
    let mut stream = NonAdjacentStream::new(ListStream::new(lattice.candidates_by_radius(cap)), graph.combinatorial());
    let set = build_sparse_set(&green, &budget, c.build.size, &mut stream)
        .map_err(|e| CliError::Certificate(e.to_string()))?;
    let masses = c.masses.values(set.len())?;
    let sweep = epsilon_sweep(&graph, &set.vertices, &masses, &c.eps0, c.support_cells)?;
    let finest = c.eps0.iter().copied().fold(f64::INFINITY, f64::min);
    let values: Vec<f64> = sweep.rows.iter().filter(|r| r.eps0 == finest).map(|r| r.metric).collect();
    let envelope = envelope_check(&values, &masses, &set.gram, &set.capacities);
    let mut t = Table::new(&["eps0", "n", "metric", "point_mass", "difference"]);
    t.meta("cNorm", num(1.0)).meta("boxRadius", c.lattice.radius).meta("epsilonSchedule", "eps0 * 4^-n");
    t.meta("supportCells", c.support_cells);
    for r in &sweep.rows {
        t.push(vec![num(r.eps0), r.index.to_string(), num(r.metric), num(r.point_mass), num(r.difference)]);
    }
    out.tables.push(("sweep".into(), t));
    let sites: Vec<Vec<i64>> =
        set.vertices.iter().map(|&v| lattice.coords(v)[..c.lattice.dimension].to_vec()).collect();
    out.documents.push((
        "metric_summary".into(),
        json!({
            "sites": sites,
            "masses": masses,
            "deltaHs": set.delta_hs,
            "monotone": sweep.monotone,
            "envelope": envelope,
        }),
    ));
    if !sweep.monotone {
        out.fail(CliError::Certificate("epsilon sweep is not monotone".into()));
    } else if !envelope.holds {
        out.fail(CliError::Certificate("metric eigenvalues leave the Gram envelope".into()));
    }
    Ok(out)
}

fn calogero(c: &CalogeroConfig, seed: u64) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let [lo, hi] = c.lambda_range;
    let rows: Vec<Result<Vec<String>, CliError>> = (0..c.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let step = random_monotone_step(&mut rng, c.max_steps);
            let lambda = if hi > lo { rng.gen_range(lo.ln()..hi.ln()).exp() } else { lo };
            let base = vec![
                trial.to_string(),
                num(step.length()),
                step.values.len().to_string(),
                num(step.sqrt_integral()),
                num(lambda),
            ];
            match calogero_count(&step, lambda, c.cells) {
                Ok(r) => Ok([base, vec![r.count.to_string(), num(r.bound), r.holds.to_string()]].concat()),
                Err(Error::ThresholdProximity { .. }) => {
                    Ok([base, vec![String::new(), String::new(), "skipped".into()]].concat())
                }
                Err(e) => Err(e.into()),
            }
        })
        .collect();
    let mut t = Table::new(&["trial", "length", "steps", "sqrt_integral", "lambda", "count", "bound", "holds"]);
    t.meta("cells", c.cells).meta("slack", num(sparsepot::metric::CALOGERO_SLACK));
    let mut violations = 0;
    for r in rows {
        let r = r?;
        violations += usize::from(r[7] == "false");
        t.push(r);
    }
    out.tables.push(("calogero".into(), t));

    let mut k = Table::new(&["length", "value", "lambda", "count", "closed_form"]);
    let mut mismatches = 0;
    let (length, value) = (1.5, 40.0);
    for j in 0..10 {
        // halfway between consecutive thresholds
        let lambda = value * (length / (std::f64::consts::PI * (j as f64 + 0.5))).powi(2);
        let count = calogero_count(&StepPotential::constant(length, value)?, lambda, c.cells)?.count;
        let exact = constant_potential_count(length, value, lambda);
        mismatches += usize::from(count != exact);
        k.push(vec![num(length), num(value), num(lambda), count.to_string(), exact.to_string()]);
    }
    out.tables.push(("calogero_constant".into(), k));
    if violations > 0 || mismatches > 0 {
        out.fail(CliError::Certificate(format!("{violations} bound violations, {mismatches} closed-form mismatches")));
    }
    Ok(out)
}

fn weyl(c: &WeylConfig) -> Result<Outcome, CliError> {
    let mut out = Outcome { box_radii: vec![c.lattice.radius], ..Default::default() };
    let lattice = Lattice::build(c.lattice)?;
    let spec: LatticeSpec = c.lattice;
    let mut potential = Vec::new();
    for v in lattice.graph().interior_vertices() {
        let x = lattice.coords(v);
        if x[..spec.dimension].iter().all(|c0| c0.abs() <= c.support_radius) {
            let r2 = lattice.norm_sq(v) as f64;
            potential.push((x, (1.0 + r2).powf(-c.decay / 2.0)));
        }
    }
    let alphas = c.alphas.values(None)?;
    let rows = weyl_demo(&lattice, &potential, &alphas)?;
    let mut t = Table::new(&["alpha", "n_minus", "ratio"]);
    t.meta("boxRadius", c.lattice.radius).meta("decay", num(c.decay)).meta("supportRadius", c.support_radius);
    for r in rows {
        t.push(vec![num(r.alpha), r.n_minus.to_string(), num(r.ratio)]);
    }
    out.tables.push(("weyl".into(), t));
    Ok(out)
}
