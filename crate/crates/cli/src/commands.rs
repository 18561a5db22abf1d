use std::fs;
use std::path::Path;

use lidqr::baselines::{ald_chain, pair_bootstrap_with, rq_fit, wrq_fit};
use lidqr::experiments::{
    grid_indices, oob_coverage, point_estimates, run_mse_study, Example, FitSettings, Method, SimSpec,
};
use lidqr::rng::derive_seed;
use lidqr::summary::{Contrast, Summary};
use lidqr::{run_chain, Dataset, PriorSpec};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::io::{create_dir, num, read_table, sha256_file, write_csv, write_json};
use crate::{CliError, EvaluateCmd, FitCmd, SimulateCmd};

/// Everything needed to re-run a command.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    /// Parsed arguments without the output directory and thread count.
    pub args: Value,
    pub seed: u64,
    pub input_sha256: Option<String>,
    pub version: String,
    /// Resolved settings and run statistics.
    pub config: Value,
}

fn write_manifest(out: &Path, command: &str, args: Value, seed: u64, digest: Option<String>, config: Value) -> Result<(), CliError> {
    let m = Manifest {
        command: command.into(),
        args,
        seed,
        input_sha256: digest,
        version: env!("CARGO_PKG_VERSION").into(),
        config,
    };
    let value = serde_json::to_value(&m).map_err(|e| CliError::Io(e.to_string()))?;
    write_json(&out.join("manifest.json"), &value)
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn load_data(input: &Path, response: &str) -> Result<(Dataset, Vec<String>), CliError> {
    let table = read_table(input, response)?;
    let mut names = vec!["intercept".to_string()];
    names.extend(table.covariate_names);
    let data = Dataset::with_intercept(&table.covariates, table.response).map_err(|e| CliError::Data(e.to_string()))?;
    Ok((data, names))
}

/// Draws (or replicates) with one column per (level, coefficient).
struct DrawTable {
    columns: Vec<(f64, usize)>,
    rows: Vec<Vec<f64>>,
    /// Point estimate per column when it is not the mean of `rows`.
    point: Option<Vec<f64>>,
}

impl DrawTable {
    fn column(&self, tau: f64, coef: usize) -> Result<usize, CliError> {
        self.columns
            .iter()
            .position(|&(t, c)| c == coef && (t - tau).abs() < lidqr::model::LEVEL_MATCH_TOL)
            .ok_or_else(|| CliError::Usage(format!("level {tau} was not estimated")))
    }

    fn values(&self, c: &Contrast) -> Result<(Vec<f64>, Option<f64>), CliError> {
        let plus = self.column(c.plus.tau, c.plus.coef)?;
        let minus = c.minus.map(|m| self.column(m.tau, m.coef)).transpose()?;
        let eval = |row: &[f64]| row[plus] - minus.map_or(0.0, |k| row[k]);
        Ok((self.rows.iter().map(|r| eval(r)).collect(), self.point.as_deref().map(eval)))
    }

    fn write(&self, path: &Path, names: &[String]) -> Result<(), CliError> {
        let header: Vec<String> = self.columns.iter().map(|&(t, c)| format!("{}:{}", num(t), names[c])).collect();
        let rows: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(|&v| num(v)).collect()).collect();
        write_csv(path, &header, &rows)
    }

    fn write_summary(&self, path: &Path, targets: &[Contrast]) -> Result<(), CliError> {
        let header: Vec<String> = ["target", "estimate", "sd", "q025", "q50", "q975"].iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for t in targets {
            let (values, point) = self.values(t)?;
            let mut row = vec![t.label.clone()];
            if values.len() >= 2 {
                let s = Summary::of(&values)?;
                row.push(num(point.unwrap_or(s.mean)));
                row.extend([s.sd, s.q025, s.q50, s.q975].map(num));
            } else {
                row.push(num(point.unwrap_or(values[0])));
                row.extend(std::iter::repeat_n(String::new(), 4));
            }
            rows.push(row);
        }
        write_csv(path, &header, &rows)
    }
}

fn dedup_levels(levels: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for t in levels {
        if !out.iter().any(|&u| (u - t).abs() < lidqr::model::LEVEL_MATCH_TOL) {
            out.push(t);
        }
    }
    out
}

pub fn fit(a: &FitCmd) -> Result<(), CliError> {
    let (data, names) = load_data(&a.input, &a.response)?;
    let settings = a.model.settings(15);
    let p = data.p();
    let mut targets: Vec<Contrast> = Vec::new();
    for &t in &a.taus {
        for (l, name) in names.iter().enumerate() {
            targets.push(Contrast::single(l, t, format!("{name}@{}", num(t))));
        }
    }
    for c in &a.contrast {
        targets.push(Contrast::parse(c, &names)?);
    }
    let levels = dedup_levels(targets.iter().flat_map(|c| c.levels().collect::<Vec<_>>()));
    if a.bootstrap.is_some() && !matches!(a.method, Method::Rq | Method::Ewrq) {
        return Err(CliError::Usage("--bootstrap applies to rq and ewrq only".into()));
    }

    let mut config = json!({ "settings": to_json(&settings), "levels": levels });
    let table = match a.method {
        Method::Lid => {
            let grid = settings.grid()?;
            grid_indices(&grid, &levels)?;
            let prior = PriorSpec::iid(grid.len() * p, 0.0, settings.prior_sd)?;
            let cfg = settings.sampler_config(grid.len(), p, a.seed);
            let chain = run_chain(&data, &grid, &prior, &cfg)?;
            config["grid"] = json!(grid.levels());
            config["sampler"] = to_json(&cfg);
            config["chain"] = json!({
                "tail_sd": chain.tail_sd,
                "proposal_sd": chain.proposal_sd,
                "accept_count": chain.accept_count,
                "propose_count": chain.propose_count,
                "final_loglik": chain.final_loglik,
                "stored_draws": chain.draws.len(),
            });
            let columns = grid.levels().iter().flat_map(|&t| (0..p).map(move |l| (t, l))).collect();
            DrawTable { columns, rows: chain.draws.iter().map(|d| d.values().to_vec()).collect(), point: None }
        }
        Method::Rq | Method::Ewrq => {
            let estimator = |d: &Dataset, t: f64| -> lidqr::Result<Vec<f64>> {
                match a.method {
                    Method::Rq => rq_fit(d, t, None).map(|f| f.beta),
                    _ => wrq_fit(d, t, settings.delta_tau).map(|f| f.beta),
                }
            };
            let point: Vec<f64> = levels
                .iter()
                .map(|&t| estimator(&data, t))
                .collect::<lidqr::Result<Vec<_>>>()?
                .concat();
            let columns = levels.iter().flat_map(|&t| (0..p).map(move |l| (t, l))).collect();
            let rows = match a.bootstrap {
                Some(b) => {
                    let res = pair_bootstrap_with(&data, &levels, b, a.seed, estimator)?;
                    config["bootstrap"] = json!({ "replicates": b, "redraws": res[0].redraws });
                    (0..b).map(|r| res.iter().flat_map(|x| x.replicates[r].clone()).collect()).collect()
                }
                None => vec![point.clone()],
            };
            DrawTable { columns, rows, point: Some(point) }
        }
        Method::Ald => {
            let prior = PriorSpec::iid(p, 0.0, settings.prior_sd)?;
            let chains = levels
                .iter()
                .enumerate()
                .map(|(k, &t)| ald_chain(&data, t, &prior, &settings.ald_config(derive_seed(a.seed, k as u64, 0))))
                .collect::<lidqr::Result<Vec<_>>>()?;
            config["ald"] = json!(chains
                .iter()
                .map(|c| json!({ "tau": c.tau, "seed": c.seed, "accept_count": c.accept_count, "propose_count": c.propose_count }))
                .collect::<Vec<_>>());
            let columns = levels.iter().flat_map(|&t| (0..p).map(move |l| (t, l))).collect();
            let draws = chains[0].draws.len();
            let rows = (0..draws).map(|r| chains.iter().flat_map(|c| c.draws[r].clone()).collect()).collect();
            DrawTable { columns, rows, point: None }
        }
        Method::Oracle => return Err(CliError::Usage("the oracle method is only available to simulate".into())),
    };

    create_dir(&a.out)?;
    table.write(&a.out.join("draws.csv"), &names)?;
    table.write_summary(&a.out.join("summary.csv"), &targets)?;
    let digest = sha256_file(&a.input)?;
    write_manifest(&a.out, "fit", to_json(a), a.seed, Some(digest), config)
}

pub fn simulate(a: &SimulateCmd) -> Result<(), CliError> {
    let example = Example::from_number(a.example)?;
    let settings = a.model.settings(15);
    let names = example.coef_names();
    let targets = if a.targets.is_empty() {
        example.default_targets()
    } else {
        a.targets.iter().map(|t| Contrast::parse(t, &names)).collect::<lidqr::Result<Vec<_>>>()?
    };
    let spec = SimSpec { example, n: a.n, reps: a.reps, seed: a.seed };
    let study = run_mse_study(&spec, &a.methods, &targets, &settings)?;

    create_dir(&a.out)?;
    let header: Vec<String> = ["method", "target", "n_times_mse", "se"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = study
        .rows
        .iter()
        .map(|r| vec![r.method.to_string(), r.target.clone(), num(r.n_times_mse), num(r.se)])
        .collect();
    write_csv(&a.out.join("mse.csv"), &header, &rows)?;
    let config = json!({
        "settings": to_json(&settings),
        "spec": to_json(&spec),
        "targets": targets.iter().map(|t| t.label.clone()).collect::<Vec<_>>(),
        "truths": study.truths,
        "dropped": study.dropped.iter().map(|(m, k)| json!({ "method": m.name(), "replicates": k })).collect::<Vec<_>>(),
        "reps_used": study.rows.iter().map(|r| json!({ "method": r.method.name(), "target": r.target, "reps": r.reps_used })).collect::<Vec<_>>(),
    });
    write_manifest(&a.out, "simulate", to_json(a), a.seed, None, config)
}

pub fn evaluate(a: &EvaluateCmd) -> Result<(), CliError> {
    let (data, _) = load_data(&a.input, &a.response)?;
    let settings: FitSettings = a.model.settings(19);
    if a.methods.contains(&Method::Oracle) {
        return Err(CliError::Usage("the oracle method is only available to simulate".into()));
    }
    if a.methods.contains(&Method::Lid) {
        grid_indices(&settings.grid()?, &a.taus)?;
    }
    let mut rows = Vec::new();
    for (k, &method) in a.methods.iter().enumerate() {
        let seed = derive_seed(a.seed, k as u64, 1);
        let cov = oob_coverage(&data, &a.taus, a.test_fraction, a.seed, |train, taus| {
            point_estimates(method, train, taus, &settings, seed)
        })?;
        for r in cov {
            rows.push(vec![method.to_string(), num(r.tau), num(r.coverage), r.n_test.to_string()]);
        }
    }
    create_dir(&a.out)?;
    let header: Vec<String> = ["method", "tau", "coverage", "n_test"].iter().map(|s| s.to_string()).collect();
    write_csv(&a.out.join("coverage.csv"), &header, &rows)?;
    let digest = sha256_file(&a.input)?;
    write_manifest(&a.out, "evaluate", to_json(a), a.seed, Some(digest), json!({ "settings": to_json(&settings) }))
}

pub fn replay(manifest: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(manifest).map_err(|e| CliError::Data(format!("{}: {e}", manifest.display())))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", manifest.display())))?;
    if m.version != env!("CARGO_PKG_VERSION") {
        eprintln!("lidqr: manifest written by version {}, replaying with {}", m.version, env!("CARGO_PKG_VERSION"));
    }
    let bad_args = |e: serde_json::Error| CliError::Data(format!("manifest arguments: {e}"));
    let check_input = |input: &Path| -> Result<(), CliError> {
        if let Some(expected) = &m.input_sha256 {
            if &sha256_file(input)? != expected {
                return Err(CliError::Data(format!("{} does not match the recorded digest", input.display())));
            }
        }
        Ok(())
    };
    match m.command.as_str() {
        "fit" => {
            let mut a: FitCmd = serde_json::from_value(m.args).map_err(bad_args)?;
            check_input(&a.input)?;
            a.out = out.to_path_buf();
            fit(&a)
        }
        "simulate" => {
            let mut a: SimulateCmd = serde_json::from_value(m.args).map_err(bad_args)?;
            a.out = out.to_path_buf();
            simulate(&a)
        }
        "evaluate" => {
            let mut a: EvaluateCmd = serde_json::from_value(m.args).map_err(bad_args)?;
            check_input(&a.input)?;
            a.out = out.to_path_buf();
            evaluate(&a)
        }
        other => Err(CliError::Data(format!("unknown command '{other}' in manifest"))),
    }
}
