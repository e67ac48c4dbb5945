use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, ExperimentKind};
use super::invariance::{invariance_test, ObservableSuite};
use crate::dynamics::{evolve, truncation_convergence, FlowMode};
use crate::gauge::{decomposition_check, CoeffSequence, ResonantCounting};
use crate::measures::{exp_moment_mc, exp_moment_oracle, gibbs_ensemble, EnsembleReport, RngStream};
use crate::torus::{sigma, write_snapshot, Cutoff, TorusGeometry};
use crate::variational::{divergence_scan, objective_estimate, VariationalConfig};
use crate::{Error, Result};

/// Result of [`run`]: the statistical verdict (if the experiment has one) and
/// what was written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub passed: Option<bool>,
    pub summary: Value,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    /// `2` for a failed statistical test, `0` otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.passed {
            Some(false) => 2,
            _ => 0,
        }
    }
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let file = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(file))
    }

    fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn table(&mut self, name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

/// Runs one experiment and writes its artifacts into `out_dir`.
///
/// Every file is a deterministic function of the configuration (seed included).
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let mut out = Artifacts::new(out_dir)?;
    out.json("config.json", &serde_json::to_value(config)?)?;
    let (passed, result) = match config.kind {
        ExperimentKind::Sample => run_sample(config, &mut out)?,
        ExperimentKind::Evolve => run_evolve(config, &mut out)?,
        ExperimentKind::Invariance => run_invariance(config, &mut out)?,
        ExperimentKind::Moments => run_moments(config, &mut out)?,
        ExperimentKind::Variational => run_variational(config, &mut out)?,
        ExperimentKind::GaugeCheck => run_gauge(config, &mut out)?,
        ExperimentKind::Truncation => run_truncation(config, &mut out)?,
    };
    let summary = json!({
        "kind": config.kind.name(),
        "seed": config.seed,
        "passed": passed,
        "result": result,
    });
    out.json("summary.json", &summary)?;
    Ok(RunOutcome { passed, summary, files: out.files })
}

type Section = (Option<bool>, Value);

fn run_sample(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Section> {
    let params = config.params()?;
    let mode = config.sample.clone().unwrap_or_default().sampler;
    let s = config.flow.as_ref().map_or(0.5, |f| f.sobolev_index);
    let ensemble = gibbs_ensemble(&params, config.ensemble_size()?, &RngStream::new(config.seed, 0), mode)?;
    let mut suite = ObservableSuite::new(params, s);
    let spectrum = config.observables.iter().any(|o| o == "spectrum");
    let names = suite.names();
    let mut header: Vec<String> =
        ["sample_id", "weight", "mass", "potential", "hamiltonian", "hs_norm"].iter().map(|s| s.to_string()).collect();
    if spectrum {
        header.extend(names[4..].iter().cloned());
    }
    let rows: Vec<Vec<f64>> = ensemble
        .samples
        .iter()
        .map(|w| {
            let v = suite.evaluate(&w.field);
            let mut row = vec![w.sample_id as f64, w.weight, v[0], v[2], v[1], v[3]];
            if spectrum {
                row.extend_from_slice(&v[4..]);
            }
            row
        })
        .collect();
    out.table("samples.csv", &header, &rows)?;
    let weights = ensemble.weights();
    let columns: Vec<(String, Vec<f64>)> =
        (2..header.len()).map(|j| (header[j].clone(), rows.iter().map(|r| r[j]).collect())).collect();
    let report = EnsembleReport::from_columns(&columns, &weights);
    Ok((
        None,
        json!({
            "sampler": mode,
            "proposals": ensemble.proposals,
            "kept": ensemble.samples.len(),
            "partition": ensemble.partition,
            "report": report,
        }),
    ))
}

fn run_evolve(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Section> {
    let cfg = config.flow_config()?;
    let mode = config.flow.as_ref().map_or(FlowMode::Galerkin, |f| f.mode);
    let initial = config.initial.as_ref().expect("validated");
    let u0 = initial.build(&cfg.params, config.seed)?;
    let traj = evolve(&u0, &cfg, mode)?;
    traj.write_csv(out.create("trajectory.csv")?)?;
    for (i, (_, u)) in traj.snapshots.iter().enumerate() {
        let mut w = out.create(&format!("snapshot_{i:05}.bin"))?;
        write_snapshot(&mut w, u)?;
        w.flush()?;
    }
    let snapshot_times: Vec<f64> = traj.snapshots.iter().map(|s| s.0).collect();
    Ok((
        None,
        json!({
            "mode": mode,
            "steps": traj.records.len() - 1,
            "relative_mass_drift": traj.relative_mass_drift(),
            "relative_hamiltonian_drift": traj.relative_hamiltonian_drift(),
            "final": traj.records.last(),
            "snapshot_times": snapshot_times,
        }),
    ))
}

fn run_invariance(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Section> {
    let cfg = config.flow_config()?;
    let threshold = config.invariance.clone().unwrap_or_default().threshold;
    let report = invariance_test(
        &cfg.params,
        &cfg,
        cfg.t_final,
        config.ensemble_size()?,
        &RngStream::new(config.seed, 0),
        threshold,
    )?;
    let header: Vec<String> =
        ["observable", "mean_initial", "mean_final", "mean_difference", "stderr", "z", "ci_low", "ci_high"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    let mut w = csv::Writer::from_writer(out.create("invariance.csv")?);
    w.write_record(&header)?;
    let control = std::iter::once(("negative_control".to_string(), &report.negative_control));
    for (name, o) in report.observables.iter().map(|o| (o.name.clone(), o)).chain(control) {
        let values =
            [o.mean_initial, o.mean_final, o.mean_difference, o.stderr, o.z, o.bootstrap_ci.0, o.bootstrap_ci.1];
        w.write_record(std::iter::once(name).chain(values.iter().map(|v| v.to_string())))?;
    }
    w.flush()?;
    Ok((Some(report.conclusive_pass()), serde_json::to_value(&report)?))
}

#[derive(Serialize)]
struct MomentRow {
    p: f64,
    level: f64,
    oracle: f64,
    estimate: f64,
    stderr: f64,
    z: f64,
}

fn run_moments(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Section> {
    let params = config.params()?;
    let section = config.moments.as_ref().expect("validated");
    let samples = config.ensemble_size()? as u64;
    let sigma_n = sigma(params.alpha, Cutoff::Finite(params.cutoff), params.dim())?;
    let stream = RngStream::new(config.seed, 0);
    let rows = section
        .p
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let oracle = exp_moment_oracle(&params, p)?;
            let e = exp_moment_mc(&params, p, section.x, samples, &stream.substream(j as u64));
            Ok(MomentRow {
                p,
                level: p * params.beta * sigma_n,
                oracle,
                estimate: e.estimate,
                stderr: e.stderr,
                z: e.z_against(oracle),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.csv("moments.csv", &rows)?;
    let passed = rows.iter().all(|r| r.z.abs() <= 3.0);
    Ok((Some(passed), json!({ "sigma": sigma_n, "rows": rows })))
}

#[derive(Serialize)]
struct ObjectiveRow {
    scale: usize,
    objective: f64,
    stderr: f64,
    cost: f64,
    potential_term: f64,
    indicator_frequency: f64,
}

fn run_variational(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Section> {
    let params = config.params()?;
    let section = config.variational.as_ref().expect("validated");
    let samples = config.ensemble_size()?;
    let stream = RngStream::new(config.seed, 0);
    let scan = divergence_scan(&params, section.mass_cutoff, &section.clips, samples, &stream.substream(0))?;
    out.csv("divergence.csv", &scan.rows)?;
    let mut objective = Vec::with_capacity(section.scales.len());
    for &n in &section.scales {
        let geometry = TorusGeometry::new(1, 2 * n, params.geometry.oversampling())?;
        let p = crate::measures::ModelParams { geometry, cutoff: n, ..params };
        let clip = section.clips.last().copied().expect("validated");
        let vc = VariationalConfig {
            sde_dt: section.sde_dt,
            scheme: section.scheme,
            ..VariationalConfig::new(p, section.mass_cutoff, clip, section.eta, samples)
        };
        let report = objective_estimate(&vc, &stream.substream(1 + n as u64))?;
        let get = |name: &str| {
            report.report.get(name).ok_or_else(|| Error::Degenerate(format!("objective report lacks `{name}`")))
        };
        objective.push(ObjectiveRow {
            scale: n,
            objective: get("objective")?.estimate,
            stderr: get("objective")?.stderr,
            cost: get("cost")?.estimate,
            potential_term: get("potential_term")?.estimate,
            indicator_frequency: report.indicator_frequency,
        });
    }
    if !objective.is_empty() {
        out.csv("objective.csv", &objective)?;
    }
    Ok((
        None,
        json!({
            "diverging": scan.diverging,
            "trend_pvalue": scan.trend_pvalue,
            "saturated": scan.saturated,
            "acceptance": scan.acceptance,
            "rows": scan.rows,
            "objective": objective,
        }),
    ))
}

#[derive(Serialize)]
struct GaugeRow {
    k: usize,
    trial: usize,
    modes: usize,
    max_error: f64,
    relative_error: f64,
}

/// Up to `modes` distinct frequencies in `[-n_max, n_max]` with coefficients in the unit square.
pub fn random_sequence<R: Rng + ?Sized>(rng: &mut R, modes: usize, n_max: usize) -> CoeffSequence {
    let n_max_i = n_max as i64;
    let count = rng.gen_range(1..=modes.min(2 * n_max + 1));
    let mut pairs: Vec<(i64, Complex64)> = Vec::with_capacity(count);
    while pairs.len() < count {
        let n = rng.gen_range(-n_max_i..=n_max_i);
        if pairs.iter().all(|(m, _)| *m != n) {
            pairs.push((n, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
        }
    }
    CoeffSequence::from_pairs(n_max, &pairs).expect("frequencies drawn inside the box")
}

fn run_gauge(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Section> {
    let section = config.gauge.clone().unwrap_or_default();
    let mut rows = Vec::with_capacity(section.k.len() * section.trials);
    for &k in &section.k {
        let mut rng = RngStream::new(config.seed, 0).substream(k as u64).rng();
        for trial in 0..section.trials {
            let v = random_sequence(&mut rng, section.modes, section.n_max);
            let check = decomposition_check(k, &v, ResonantCounting::Excess)?;
            rows.push(GaugeRow {
                k,
                trial,
                modes: v.support().len(),
                max_error: check.max_error,
                relative_error: check.relative_error,
            });
        }
    }
    out.csv("gauge.csv", &rows)?;
    let max_error = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    let max_abs_error = rows.iter().map(|r| r.max_error).fold(0.0, f64::max);
    let pass = max_error <= section.tolerance;
    Ok((
        Some(pass),
        json!({
            "max_error": max_error,
            "max_abs_error": max_abs_error,
            "trials": rows.len(),
            "tolerance": section.tolerance,
            "pass": pass,
        }),
    ))
}

fn run_truncation(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Section> {
    let cfg = config.flow_config()?;
    let section = config.truncation.as_ref().expect("validated");
    let u0 = config.initial.as_ref().expect("validated").build(&cfg.params, config.seed)?;
    let table = truncation_convergence(&u0, &cfg, &section.ladder, section.reference, cfg.sobolev_index)?;
    let header = vec!["cutoff".to_string(), "error".to_string()];
    let rows: Vec<Vec<f64>> = table.cutoffs.iter().zip(&table.errors).map(|(&n, &e)| vec![n as f64, e]).collect();
    out.table("truncation.csv", &header, &rows)?;
    let monotone = table.is_monotone_decreasing();
    Ok((
        Some(monotone),
        json!({
            "reference_cutoff": table.reference_cutoff,
            "cutoffs": table.cutoffs,
            "errors": table.errors,
            "order": table.order,
            "monotone_decreasing": monotone,
        }),
    ))
}
