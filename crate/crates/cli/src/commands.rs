use std::collections::BTreeMap;
use std::path::PathBuf;

use kimmel::bpre::{
    functional_eq_residual, default_sample_points, linear_fractional_fixed_point, linear_fractional_yaglom,
    size_biased, survival_decay_fit, yaglom_power_iteration, bgw_survival, YaglomResult, DEFAULT_MAX_ITER,
    DEFAULT_SOLVER_BOUND, DEFAULT_YAGLOM_TOL,
};
use kimmel::model::{classify_regime, load_model_config, Family, ModelSummary, DEFAULT_REGIME_TOL};
use kimmel::stats::{growth_rate_fit, l1_distance, EnsembleStats, Frequencies, Summary, QUANTILE_LEVELS};
use kimmel::treesim::{
    estimate_recovery, heavy_cell_mass, mean_identity_check, run_ensemble_with, Conditioning, ReplicateResult,
    SimConfig, SimError, DEFAULT_K_TOP, DEFAULT_MARGIN,
};
use kimmel::{OffspringLaw, Regime, RegimeLabel};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{
    ClassifyArgs, Common, CompareArgs, D4Args, Ensemble, IdentityArgs, RecoveryArgs, SimulateArgs,
    SizebiasArgs, YaglomArgs,
};
use crate::error::CliError;
use crate::report::{Csv, Field, Report};

const DEFAULT_OUT: &str = "kimmel_reports";
/// Tolerance on the solver against the linear-fractional closed form.
const CLOSED_FORM_TOL: f64 = 1e-10;
const CLOSED_FORM_K: usize = 30;
const RESIDUAL_TOL: f64 = 1e-8;
/// Bands for Monte Carlo comparisons with an exact value, in standard errors.
const Z_BANDS: f64 = 4.0;
const EXPLORATORY: &str = "exploratory (no theorem target)";

fn out_dir(common: &Common) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn load_law(common: &Common) -> Result<OffspringLaw, CliError> {
    let path = common.config.as_ref().ok_or_else(|| CliError::Usage("--config is required".into()))?;
    Ok(load_model_config(path)?)
}

/// A law fit for theorem checks: degenerate laws are refused.
fn theorem_law(common: &Common) -> Result<(OffspringLaw, ModelSummary, Regime), CliError> {
    let law = load_law(common)?;
    let summary = law.summarize();
    let regime = summary.admissible_regime()?.clone();
    Ok((law, summary, regime))
}

fn strongly_subcritical(command: &str, regime: &Regime) -> Result<(), CliError> {
    if regime.is_strongly_subcritical() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "`{command}` needs a quasistationary law, which exists in D1, D2 and D3 only; this law is {regime} \
             (see `d4-explore`)"
        )))
    }
}

fn solver_bound(common: &Common) -> usize {
    common.kmax.unwrap_or(DEFAULT_SOLVER_BOUND)
}

fn solve_yaglom(law: &OffspringLaw, common: &Common) -> Result<YaglomResult, CliError> {
    Ok(yaglom_power_iteration(law, solver_bound(common), DEFAULT_YAGLOM_TOL, DEFAULT_MAX_ITER)?)
}

struct Defaults {
    horizon: u32,
    replicates: u64,
    conditioning: Conditioning,
}

fn sim_config(law: &OffspringLaw, common: &Common, e: &Ensemble, d: Defaults) -> SimConfig {
    let mut cfg = SimConfig::new(
        law.clone(),
        e.horizon.unwrap_or(d.horizon),
        e.replicates.unwrap_or(d.replicates),
        common.seed,
    )
    .with_conditioning(e.condition.map_or(d.conditioning, |c| c.0))
    .with_sampler(e.sampler.into())
    .with_k_top(e.k_top.unwrap_or(DEFAULT_K_TOP));
    if let Some(cap) = e.cell_cap {
        cfg = cfg.with_cell_cap(cap);
    }
    if let Some(n) = e.max_attempts {
        cfg = cfg.with_max_attempts(n);
    }
    cfg
}

fn config_echo(cfg: &SimConfig, common: &Common, extra: Value) -> Value {
    json!({
        "simulation": cfg.to_json(),
        "solver_bound": solver_bound(common),
        "command_options": extra,
    })
}

fn finish(report: &Report, common: &Common, failures: Vec<String>) -> Result<(), CliError> {
    for path in report.write(&out_dir(common), common.format)? {
        say!("wrote {}", path.display());
    }
    if common.assert && !failures.is_empty() {
        return Err(CliError::AssertFailed(failures));
    }
    Ok(())
}

/// Runs the ensemble. When it cannot be completed, the report is written
/// with the number of accepted replicates and the error is returned.
fn run_or_report(
    cfg: &SimConfig,
    report: &mut Report,
    common: &Common,
    observer: impl FnMut(&ReplicateResult),
) -> Result<EnsembleStats, CliError> {
    match run_ensemble_with(cfg, observer) {
        Ok(stats) => Ok(stats),
        Err(e) => {
            let (attempted, accepted) = match e {
                SimError::Infeasible { attempted, accepted, .. } | SimError::BudgetExhausted { attempted, accepted } => {
                    (attempted, accepted)
                }
                _ => return Err(e.into()),
            };
            report.set("accepted_count", 0u64);
            report.set("partial", json!({ "attempted": attempted, "accepted": accepted }));
            report.set("error", e.to_string());
            report.write(&out_dir(common), common.format)?;
            Err(e.into())
        }
    }
}

fn summary_rows(csv: &mut Csv, g: u32, s: &Summary) {
    csv.row(vec![g.into(), "count".into(), s.count.into(), Field::Empty]);
    csv.row(vec![g.into(), "mean".into(), s.mean.into(), s.stderr.into()]);
    csv.row(vec![g.into(), "variance".into(), s.variance.into(), Field::Empty]);
    csv.row(vec![g.into(), "min".into(), s.min.into(), Field::Empty]);
    csv.row(vec![g.into(), "max".into(), s.max.into(), Field::Empty]);
    for (level, q) in QUANTILE_LEVELS.iter().zip(&s.quantiles) {
        csv.row(vec![g.into(), format!("q{level}").into(), (*q).into(), Field::Empty]);
    }
}

fn frequency_rows(csv: &mut Csv, lead: Vec<Field>, mean: &Frequencies, stderr: Option<&Frequencies>) {
    let mut push = |label: String, v: f64, se: Option<f64>| {
        let mut row: Vec<Field> = lead.to_vec();
        row.extend([label.into(), v.into(), se.into()]);
        csv.row(row);
    };
    for (i, &v) in mean.probs.iter().enumerate() {
        push(format!("k={}", i + 1), v, stderr.map(|s| s.probs[i]));
    }
    push("tail".into(), mean.tail, stderr.map(|s| s.tail));
}

/// Empirical law of the number of contaminated cells at the horizon.
fn cells_pmf(stats: &EnsembleStats) -> BTreeMap<u64, u64> {
    let mut counts = BTreeMap::new();
    for &c in &stats.columns.n_contaminated[stats.horizon as usize] {
        *counts.entry(c).or_insert(0u64) += 1;
    }
    counts
}

/// Tables shared by every simulating command.
fn ensemble_tables(report: &mut Report, stats: &EnsembleStats) {
    let observables: [(&str, fn(&kimmel::stats::GenerationAggregate) -> Option<&Summary>); 6] = [
        ("n_contaminated", |a| Some(&a.n_contaminated)),
        ("total_parasites", |a| Some(&a.total_parasites)),
        ("recovery_ratio", |a| Some(&a.recovery_ratio)),
        ("cells_per_parasite", |a| a.cells_per_parasite.as_ref()),
        ("leaves_cumulative", |a| Some(&a.leaves_cumulative)),
        ("max_cell_count", |a| Some(&a.max_cell_count)),
    ];
    for (name, pick) in observables {
        let mut csv = Csv::new(&["generation", "statistic", "value", "stderr"]);
        for a in &stats.generations {
            if let Some(s) = pick(a) {
                summary_rows(&mut csv, a.generation, s);
            }
        }
        report.table(name, csv);
    }

    let mut csv = Csv::new(&["generation", "statistic", "value", "stderr"]);
    for a in &stats.generations {
        csv.row(vec![a.generation.into(), "surviving".into(), a.surviving.into(), Field::Empty]);
        if let Some(f) = &a.mean_proportions {
            frequency_rows(&mut csv, vec![a.generation.into()], f, a.proportions_stderr.as_ref());
        }
    }
    report.table("proportions", csv);

    let acc = &stats.acceptance;
    let mut csv = Csv::new(&["statistic", "value"]);
    csv.row(vec!["attempted".into(), acc.attempted.into()]);
    csv.row(vec!["accepted".into(), acc.accepted.into()]);
    csv.row(vec!["rate".into(), acc.rate.into()]);
    csv.row(vec!["lower".into(), acc.lower.into()]);
    csv.row(vec!["upper".into(), acc.upper.into()]);
    csv.row(vec!["exact".into(), u64::from(acc.exact).into()]);
    csv.row(vec!["predicted".into(), acc.predicted.into()]);
    report.table("acceptance", csv);

    let pmf = cells_pmf(stats);
    let n = stats.accepted_count.max(1) as f64;
    let mut csv = Csv::new(&["n_contaminated", "replicates", "prob"]);
    for (&c, &k) in &pmf {
        csv.row(vec![c.into(), k.into(), (k as f64 / n).into()]);
    }
    report.table("cells_pmf", csv);
    report.set("stats", stats);
}

pub fn classify(a: &ClassifyArgs) -> Result<(), CliError> {
    let tol = a.tol.unwrap_or(DEFAULT_REGIME_TOL);
    let (m0, m1, law) = match (&a.common.config, a.m0, a.m1) {
        (Some(_), None, None) => {
            let law = load_law(&a.common)?;
            let (m0, m1) = law.means();
            (m0, m1, Some(law))
        }
        (None, Some(m0), Some(m1)) => (m0, m1, None),
        _ => return Err(CliError::Usage("give either --config or both --m0 and --m1".into())),
    };
    let regime = classify_regime(m0, m1, tol)?;
    say!("{regime}");
    let summary = law.as_ref().map(|l| l.summarize_with_tol(tol));
    if let Some(d) = summary.as_ref().and_then(|s| s.degeneracy) {
        say!("non-admissible: {d}");
    }
    let Some(dir) = &a.common.out else { return Ok(()) };
    let config = json!({
        "law": law.as_ref().map(OffspringLaw::config_json),
        "m0": m0,
        "m1": m1,
        "tol": tol,
    });
    let mut report = Report::new("classify", a.common.seed, config);
    report.set("regime", &regime);
    report.set("label", regime.to_string());
    report.set("summary", &summary);
    let mut csv = Csv::new(&["statistic", "value"]);
    csv.row(vec!["regime".into(), regime.to_string().into()]);
    csv.row(vec!["m0".into(), m0.into()]);
    csv.row(vec!["m1".into(), m1.into()]);
    if let Some(s) = &summary {
        for (name, v) in [
            ("m", s.m),
            ("sum_mean", s.sum_mean),
            ("prod_mean", s.prod_mean),
            ("xlogx", s.xlogx),
            ("m_hat", s.m_hat),
            ("m_check", s.m_check),
            ("bgw_extinction", s.bgw_extinction),
        ] {
            csv.row(vec![name.into(), v.into()]);
        }
    }
    report.table("classify", csv);
    for path in report.write(dir, a.common.format)? {
        say!("wrote {}", path.display());
    }
    Ok(())
}

pub fn yaglom(a: &YaglomArgs) -> Result<(), CliError> {
    let (law, summary, regime) = theorem_law(&a.common)?;
    strongly_subcritical("yaglom", &regime)?;
    let k = solver_bound(&a.common);
    let tol = a.tol.unwrap_or(DEFAULT_YAGLOM_TOL);
    let max_iter = a.max_iter.unwrap_or(DEFAULT_MAX_ITER);
    let res = yaglom_power_iteration(&law, k, tol, max_iter)?;
    let residual = functional_eq_residual(&law, &res.pmf, &default_sample_points());
    let config = json!({
        "law": law.config_json(),
        "solver_bound": k,
        "tol": tol,
        "max_iter": max_iter,
        "start": "delta_1",
    });
    let mut report = Report::new("yaglom", a.common.seed, config);
    report.set("regime", regime.to_string());
    report.set("summary", &summary);
    report.set("result", &res);
    report.set("mean", res.pmf.mean());
    report.set("residual", residual);
    let mut failures = Vec::new();
    if !(residual.max_abs < RESIDUAL_TOL) {
        failures.push(format!("functional equation residual {:e} >= {RESIDUAL_TOL:e}", residual.max_abs));
    }

    let mut csv = Csv::new(&["k", "prob"]);
    for kk in 1..=res.pmf.bound() {
        csv.row(vec![kk.into(), res.pmf.get(kk).into()]);
    }
    csv.row(vec!["overflow".into(), res.pmf.overflow().into()]);
    report.table("yaglom", csv);

    if let Family::LinearFractionalIndependent { b, p, .. } = *law.family() {
        let s0 = linear_fractional_fixed_point(b, p)?;
        let exact = linear_fractional_yaglom(b, p, k)?;
        let mut csv = Csv::new(&["k", "solver", "closed_form", "abs_diff"]);
        let mut max_err = 0.0f64;
        for kk in 1..=k {
            let (x, y) = (res.pmf.get(kk), exact.get(kk));
            if kk <= CLOSED_FORM_K {
                max_err = max_err.max((x - y).abs());
            }
            csv.row(vec![kk.into(), x.into(), y.into(), (x - y).abs().into()]);
        }
        report.table("yaglom_closed_form", csv);
        report.set(
            "closed_form",
            json!({ "s0": s0, "max_abs_error": max_err, "max_k": CLOSED_FORM_K, "tolerance": CLOSED_FORM_TOL }),
        );
        if !(max_err < CLOSED_FORM_TOL) {
            failures.push(format!("closed-form error {max_err:e} >= {CLOSED_FORM_TOL:e} for k <= {CLOSED_FORM_K}"));
        }
    }
    say!("P(Y=1) = {}  decay ratio {}  residual {:e}", res.pmf.get(1), res.decay_ratio, residual.max_abs);
    finish(&report, &a.common, failures)
}

#[derive(Serialize)]
struct HeavyRow {
    generation: u32,
    k: usize,
    summary: Option<Summary>,
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let law = load_law(&a.common)?;
    let mut cfg = sim_config(
        &law,
        &a.common,
        &a.ensemble,
        Defaults { horizon: 10, replicates: 1000, conditioning: Conditioning::None },
    );
    if let Some(t) = a.tags_from {
        cfg = cfg.with_tags_from(t);
    }
    if let (Some(n0), Some(p)) = (a.n0, a.p) {
        cfg = cfg.with_ancestor_depth(n0, p);
    }
    let heavy_g = a.heavy_generation.unwrap_or(cfg.horizon);
    if heavy_g > cfg.horizon {
        return Err(CliError::Usage(format!("--heavy-generation {heavy_g} is past the horizon")));
    }
    if let Some(&k) = a.heavy_k.iter().find(|&&k| k > cfg.k_top) {
        return Err(CliError::Usage(format!("--heavy-k {k} exceeds --k-top {}", cfg.k_top)));
    }
    let extra = json!({
        "k_anc": a.k_anc,
        "heavy_k": a.heavy_k,
        "heavy_generation": heavy_g,
    });
    let mut report = Report::new("simulate", a.common.seed, config_echo(&cfg, &a.common, extra));
    let mut heavy: Vec<Vec<f64>> = vec![Vec::new(); a.heavy_k.len()];
    let stats = run_or_report(&cfg, &mut report, &a.common, |r| {
        for (i, &k) in a.heavy_k.iter().enumerate() {
            if let Ok(v) = heavy_cell_mass(r, heavy_g, k) {
                heavy[i].push(v);
            }
        }
    })?;
    ensemble_tables(&mut report, &stats);

    if !a.heavy_k.is_empty() {
        let rows: Vec<HeavyRow> = a
            .heavy_k
            .iter()
            .zip(&heavy)
            .map(|(&k, v)| HeavyRow { generation: heavy_g, k, summary: Summary::of(v) })
            .collect();
        let mut csv = Csv::new(&["generation", "k", "replicates", "mean", "stderr"]);
        for r in &rows {
            let (n, mean, se) = r.summary.as_ref().map_or((0, None, None), |s| (s.count, Some(s.mean), Some(s.stderr)));
            csv.row(vec![r.generation.into(), r.k.into(), n.into(), mean.into(), se.into()]);
        }
        report.table("heavy_cell_mass", csv);
        report.set("heavy_cell_mass", rows);
    }
    if let Some(m) = &stats.multiplicity {
        let mut csv = Csv::new(&["ancestor_count", "distinct_tags", "cells"]);
        for (&(anc, n), &c) in &m.cells {
            csv.row(vec![anc.into(), n.into(), c.into()]);
        }
        report.table("multiplicity", csv);
        report.set(
            "multiplicity_fraction",
            json!({ "k_anc": a.k_anc, "fraction_at_least_two": m.fraction_multiple(a.k_anc) }),
        );
    }
    if let Some(f) = &stats.ancestor_proportions {
        let mut csv = Csv::new(&["statistic", "value", "stderr"]);
        frequency_rows(&mut csv, Vec::new(), f, stats.ancestor_proportions_stderr.as_ref());
        report.table("ancestor_proportions", csv);
    }
    say!(
        "accepted {} of {} attempted",
        stats.acceptance.accepted, stats.acceptance.attempted
    );
    finish(&report, &a.common, Vec::new())
}

/// `(L1, per-k rows)` between the mean proportions and a target law.
fn compare_frequencies(mean: &Frequencies, target: &Frequencies) -> Result<f64, CliError> {
    l1_distance(mean, target).map_err(|e| CliError::Usage(e.to_string()))
}

fn comparison_table(mean: &Frequencies, stderr: Option<&Frequencies>, target: &Frequencies, label: &str) -> Csv {
    let mut csv = Csv::new(&["k", "empirical", "stderr", label, "abs_diff"]);
    for i in 0..mean.k_top() {
        let (x, y) = (mean.probs[i], target.probs[i]);
        csv.row(vec![(i + 1).into(), x.into(), stderr.map(|s| s.probs[i]).into(), y.into(), (x - y).abs().into()]);
    }
    csv.row(vec![
        "tail".into(),
        mean.tail.into(),
        stderr.map(|s| s.tail).into(),
        target.tail.into(),
        (mean.tail - target.tail).abs().into(),
    ]);
    csv
}

fn z_score(mean: f64, stderr: f64, exact: f64) -> f64 {
    let gap = mean - exact;
    if stderr > 0.0 {
        gap / stderr
    } else if gap.abs() <= 1e-12 * exact.abs().max(1.0) {
        0.0
    } else {
        gap.signum() * f64::INFINITY
    }
}

#[derive(Serialize)]
struct SweepRow {
    margin: u32,
    l1: f64,
    median_cells_per_parasite: Option<f64>,
    acceptance: f64,
}

pub fn compare(a: &CompareArgs) -> Result<(), CliError> {
    let (law, summary, regime) = theorem_law(&a.common)?;
    strongly_subcritical("compare", &regime)?;
    let cfg = sim_config(
        &law,
        &a.common,
        &a.ensemble,
        Defaults { horizon: 16, replicates: 20_000, conditioning: Conditioning::SurviveWithMargin(DEFAULT_MARGIN) },
    );
    let h = cfg.horizon;
    let extra = json!({ "l1_max": a.l1_max, "sweep_margins": a.sweep_margins });
    let mut report = Report::new("compare", a.common.seed, config_echo(&cfg, &a.common, extra));
    let upsilon = solve_yaglom(&law, &a.common)?;
    let target = Frequencies::from_pmf(&upsilon.pmf, cfg.k_top);
    let mean_upsilon = upsilon.pmf.mean();
    let stats = run_or_report(&cfg, &mut report, &a.common, |_| {})?;
    ensemble_tables(&mut report, &stats);
    report.set("regime", regime.to_string());
    report.set("summary", &summary);
    report.set("yaglom_mean", mean_upsilon);

    let mut failures = Vec::new();
    let mut l1_series = Csv::new(&["generation", "l1"]);
    let mut l1_by_generation = Vec::new();
    for agg in &stats.generations {
        if let Some(f) = &agg.mean_proportions {
            let d = compare_frequencies(f, &target)?;
            l1_series.row(vec![agg.generation.into(), d.into()]);
            l1_by_generation.push(json!([agg.generation, d]));
        }
    }
    report.table("l1_by_generation", l1_series);
    report.set("l1_by_generation", l1_by_generation);

    let last = stats.generation(h);
    let mean = last.mean_proportions.as_ref().ok_or(SimError::EmptyGeneration(h))?;
    let l1 = compare_frequencies(mean, &target)?;
    report.table("compare", comparison_table(mean, last.proportions_stderr.as_ref(), &target, "solver"));
    report.set("l1", l1);
    if let Some(p) = &last.pooled_proportions {
        report.set("l1_pooled", compare_frequencies(p, &target)?);
    }
    if l1 > a.l1_max {
        failures.push(format!("L1 distance {l1} at generation {h} exceeds {}", a.l1_max));
    }

    // Counts: #G*/𝒵 against 1/E(Υ), growth of the mean number of cells.
    let median = last.cells_per_parasite.as_ref().and_then(|s| s.quantile(0.5));
    let window = (h as usize / 2)..=(h as usize);
    let growth = growth_rate_fit(&stats.mean_series(|g| g.n_contaminated.mean), window.clone()).ok();
    let expected_growth = (regime.label == RegimeLabel::D3).then_some(summary.sum_mean);
    report.set(
        "counts",
        json!({
            "median_cells_per_parasite": median,
            "inverse_yaglom_mean": 1.0 / mean_upsilon,
            "growth_window": [window.start(), window.end()],
            "growth_fit": growth,
            "expected_growth": expected_growth,
        }),
    );

    // Exact moments of the conditioned total, when conditioning at the horizon.
    if cfg.conditioning == Conditioning::SurviveAtHorizon {
        let survival = bgw_survival(cfg.law.total_offspring_law(), h);
        let exact = summary.sum_mean.powi(h as i32) / survival;
        let z = &last.total_parasites;
        let parasites_z = z_score(z.mean, z.stderr, exact);
        let cells = &last.n_contaminated;
        let cells_exact = exact / mean_upsilon / h as f64;
        let cells_z = z_score(cells.mean / h as f64, cells.stderr / h as f64, cells_exact);
        report.set(
            "oracle",
            json!({
                "survival": survival,
                "conditioned_parasite_mean": exact,
                "parasites_mean": z.mean,
                "parasites_stderr": z.stderr,
                "parasites_z": parasites_z,
                "cells_over_horizon_mean": cells.mean / h as f64,
                "cells_over_horizon_stderr": cells.stderr / h as f64,
                "cells_over_horizon_oracle": cells_exact,
                "cells_over_horizon_z": cells_z,
            }),
        );
        if parasites_z.abs() > Z_BANDS {
            failures.push(format!("conditioned parasite mean is {parasites_z:.2} standard errors from {exact}"));
        }
        if regime.label == RegimeLabel::D2 && cells_z.abs() > Z_BANDS {
            failures.push(format!("#G*/n is {cells_z:.2} standard errors from {cells_exact}"));
        }
    }

    if !a.sweep_margins.is_empty() {
        let mut rows = Vec::new();
        for &margin in &a.sweep_margins {
            let mut c = cfg.clone();
            c.conditioning = Conditioning::SurviveWithMargin(margin);
            let s = run_or_report(&c, &mut report, &a.common, |_| {})?;
            let g = s.generation(h);
            let f = g.mean_proportions.as_ref().ok_or(SimError::EmptyGeneration(h))?;
            rows.push(SweepRow {
                margin,
                l1: compare_frequencies(f, &target)?,
                median_cells_per_parasite: g.cells_per_parasite.as_ref().and_then(|s| s.quantile(0.5)),
                acceptance: s.acceptance.rate,
            });
        }
        let mut csv = Csv::new(&["margin", "l1", "median_cells_per_parasite", "acceptance"]);
        for r in &rows {
            csv.row(vec![r.margin.into(), r.l1.into(), r.median_cells_per_parasite.into(), r.acceptance.into()]);
        }
        report.table("margin_sweep", csv);
        report.set("margin_sweep", rows);
    }

    say!("L1(F({h}), Y) = {l1}");
    finish(&report, &a.common, failures)
}

fn write_summary(csv: &mut Csv, sample: &str, s: &Summary) {
    let row = |csv: &mut Csv, stat: String, v: f64, se: Option<f64>| {
        csv.row(vec![sample.into(), stat.into(), v.into(), se.into()]);
    };
    row(csv, "count".into(), s.count as f64, None);
    row(csv, "mean".into(), s.mean, Some(s.stderr));
    row(csv, "min".into(), s.min, None);
    row(csv, "max".into(), s.max, None);
    for (level, q) in QUANTILE_LEVELS.iter().zip(&s.quantiles) {
        row(csv, format!("q{level}"), *q, None);
    }
}

pub fn recovery(a: &RecoveryArgs) -> Result<(), CliError> {
    let (law, summary, regime) = theorem_law(&a.common)?;
    let cfg = sim_config(
        &law,
        &a.common,
        &a.ensemble,
        Defaults { horizon: 20, replicates: 10_000, conditioning: Conditioning::SurviveAtHorizon },
    );
    let mut report = Report::new("recovery", a.common.seed, config_echo(&cfg, &a.common, Value::Null));
    let rec = match estimate_recovery(&cfg) {
        Ok(r) => r,
        Err(e @ (SimError::Infeasible { .. } | SimError::BudgetExhausted { .. })) => {
            report.set("accepted_count", 0u64);
            report.set("error", e.to_string());
            report.write(&out_dir(&a.common), a.common.format)?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    report.set("regime", regime.to_string());
    report.set("summary", &summary);
    report.set("recovery", &rec);
    let mut csv = Csv::new(&["sample", "statistic", "value", "stderr"]);
    write_summary(&mut csv, "conditioned", &rec.conditioned);
    write_summary(&mut csv, "unconditioned", &rec.unconditioned);
    csv.row(vec!["exact".into(), "survival_lower".into(), rec.exact_survival.lower.into(), Field::Empty]);
    csv.row(vec!["exact".into(), "survival_upper".into(), rec.exact_survival.upper.into(), Field::Empty]);
    report.table("recovery", csv);
    let mut failures = Vec::new();
    if rec.z.abs() > Z_BANDS {
        failures.push(format!("unconditioned mean is {:.2} standard errors outside the exact bracket", rec.z));
    }
    say!(
        "#G*/2^n at {}: conditioned median {:?}, q0.99 {:?}",
        rec.horizon,
        rec.conditioned.quantile(0.5),
        rec.conditioned.quantile(0.99)
    );
    finish(&report, &a.common, failures)
}

pub fn sizebias(a: &SizebiasArgs) -> Result<(), CliError> {
    let (law, summary, regime) = theorem_law(&a.common)?;
    strongly_subcritical("sizebias", &regime)?;
    let horizon = a.n0 + a.p;
    if a.ensemble.horizon.is_some_and(|h| h != horizon) {
        return Err(CliError::Usage(format!("sizebias runs to n0 + p = {horizon}; drop --horizon")));
    }
    let cfg = sim_config(
        &law,
        &a.common,
        &a.ensemble,
        Defaults { horizon, replicates: 20_000, conditioning: Conditioning::SurviveWithMargin(DEFAULT_MARGIN) },
    )
    .with_ancestor_depth(a.n0, a.p);
    let extra = json!({ "n0": a.n0, "p": a.p, "l1_max": a.l1_max });
    let mut report = Report::new("sizebias", a.common.seed, config_echo(&cfg, &a.common, extra));
    let upsilon = solve_yaglom(&law, &a.common)?;
    let biased = size_biased(&upsilon.pmf)?;
    let target = Frequencies::from_pmf(&biased, cfg.k_top);
    let stats = run_or_report(&cfg, &mut report, &a.common, |_| {})?;
    ensemble_tables(&mut report, &stats);
    let missing = || SimError::EmptyGeneration(horizon);
    let pooled = stats.ancestor_pooled.as_ref().ok_or_else(missing)?;
    let per_tree = stats.ancestor_proportions.as_ref().ok_or_else(missing)?;
    let per_tree_se = stats.ancestor_proportions_stderr.as_ref().ok_or_else(missing)?;
    let l1 = compare_frequencies(pooled, &target)?;
    let l1_per_tree = compare_frequencies(per_tree, &target)?;
    report.set("regime", regime.to_string());
    report.set("summary", &summary);
    report.set("l1", l1);
    report.set("l1_per_tree_mean", l1_per_tree);
    report.set("size_biased_mean", biased.mean());
    let mut csv = Csv::new(&["k", "pooled", "per_tree_mean", "per_tree_stderr", "size_biased", "abs_diff"]);
    let column = |f: &Frequencies, i: usize| if i < f.k_top() { f.probs[i] } else { f.tail };
    for i in 0..=cfg.k_top {
        let label: Field = if i < cfg.k_top { (i + 1).into() } else { "tail".into() };
        let (x, y) = (column(pooled, i), column(&target, i));
        csv.row(vec![
            label,
            x.into(),
            column(per_tree, i).into(),
            column(per_tree_se, i).into(),
            y.into(),
            (x - y).abs().into(),
        ]);
    }
    report.table("sizebias", csv);
    let mut failures = Vec::new();
    if l1 > a.l1_max {
        failures.push(format!("L1 distance {l1} exceeds {}", a.l1_max));
    }
    say!("L1(ancestor histogram, size-biased Y) = {l1} (pooled), {l1_per_tree} (per-tree mean)");
    finish(&report, &a.common, failures)
}

pub fn identity_check(a: &IdentityArgs) -> Result<(), CliError> {
    let (law, summary, regime) = theorem_law(&a.common)?;
    let cfg = sim_config(
        &law,
        &a.common,
        &a.ensemble,
        Defaults { horizon: 10, replicates: 100_000, conditioning: Conditioning::None },
    );
    let extra = json!({ "z_max": a.z_max });
    let mut report = Report::new("identity-check", a.common.seed, config_echo(&cfg, &a.common, extra));
    let id = mean_identity_check(&cfg)?;
    report.set("regime", regime.to_string());
    report.set("summary", &summary);
    report.set("identity", &id);
    let mut csv = Csv::new(&[
        "generation",
        "mc_mean",
        "stderr",
        "exact_lower",
        "exact_upper",
        "z",
        "parasites_mean",
        "parasites_stderr",
        "parasites_exact",
        "parasites_z",
    ]);
    let mut failures = Vec::new();
    for r in &id.rows {
        csv.row(vec![
            r.generation.into(),
            r.mc_mean.into(),
            r.stderr.into(),
            r.exact_lower.into(),
            r.exact_upper.into(),
            r.z.into(),
            r.parasites_mean.into(),
            r.parasites_stderr.into(),
            r.parasites_exact.into(),
            r.parasites_z.into(),
        ]);
        if r.z.abs() > a.z_max {
            failures.push(format!("generation {}: #G*/2^n is {:.2} standard errors off", r.generation, r.z));
        }
        if r.parasites_z.abs() > a.z_max {
            failures.push(format!("generation {}: parasite mean is {:.2} standard errors off", r.generation, r.parasites_z));
        }
    }
    report.table("identity", csv);
    say!("max |z| = {}", id.max_abs_z);
    finish(&report, &a.common, failures)
}

pub fn d4_explore(a: &D4Args) -> Result<(), CliError> {
    let (law, summary, regime) = theorem_law(&a.common)?;
    let cfg = sim_config(
        &law,
        &a.common,
        &a.ensemble,
        Defaults { horizon: 10, replicates: 2_000, conditioning: Conditioning::SurviveAtHorizon },
    );
    let h = cfg.horizon;
    let ns: Vec<u32> = if a.fit_generations.is_empty() { (3..=h.max(6)).collect() } else { a.fit_generations.clone() };
    let k = a.common.kmax.unwrap_or(3000);
    let extra = json!({ "fit_generations": ns, "decay_solver_bound": k });
    let mut report = Report::new("d4-explore", a.common.seed, config_echo(&cfg, &a.common, extra));
    report.set("status", EXPLORATORY);
    report.set("regime", regime.to_string());
    report.set("summary", &summary);
    let decay = survival_decay_fit(&law, &ns, k)?;
    let stats = run_or_report(&cfg, &mut report, &a.common, |_| {})?;
    let window = (h as usize / 2)..=(h as usize);
    let growth = growth_rate_fit(&stats.mean_series(|g| g.n_contaminated.mean), window.clone())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    ensemble_tables(&mut report, &stats);
    report.set("survival_decay_fit", &decay);
    report.set("growth_fit", json!({ "window": [window.start(), window.end()], "fit": growth }));
    let mut csv = Csv::new(&["statistic", "value"]);
    csv.row(vec!["status".into(), EXPLORATORY.into()]);
    csv.row(vec!["decay_rate".into(), decay.rate.into()]);
    csv.row(vec!["decay_polynomial_exponent".into(), decay.polynomial_exponent.into()]);
    csv.row(vec!["decay_r2".into(), decay.r2.into()]);
    csv.row(vec!["growth_rate".into(), growth.rate.into()]);
    csv.row(vec!["growth_r2".into(), growth.r2.into()]);
    report.table("d4_explore", csv);
    say!("{EXPLORATORY}: decay rate {} growth rate {}", decay.rate, growth.rate);
    finish(&report, &a.common, Vec::new())
}
