//! Batch experiment runner: parses a model/experiment configuration,
//! dispatches to the library operations, and writes reports under the
//! output directory.
//!
//! Exit codes: 0 success, 1 validation failure (bad arguments, malformed
//! config, missing model file), 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::json;

use hmmle::asymptotics::{
    default_burn_avg, identifiability_curve, lln_scaling_check, run_consistency_study,
    run_moment_study, run_normality_study, McReport,
};
use hmmle::config::{load_experiment, Command, ExperimentConfig};
use hmmle::estimate::{estimate_mle, fisher_information, fit_log_profile_curvature,
    likelihood_profile};
use hmmle::filter::{run_sensitivity_filter, TangentVec};
use hmmle::model::SimplexVec;
use hmmle::report::{
    chain_to_csv, filter_run_to_csv, mc_report_to_json, obs_to_csv, points_to_csv,
    records_to_csv, taus_to_csv, ArtifactWriter, Manifest,
};
use hmmle::rng::RngStream;
use hmmle::simulate::{sample_chain_path, sample_observations};
use hmmle::stability::{
    boundary_moment_check, contraction_check, coupling_tail_check, filter_robustness_check,
    tangent_decay_check,
};
use hmmle::Result;

#[derive(Parser)]
#[command(
    name = "hmmle",
    version,
    about = "Hidden Markov model maximum-likelihood experiments",
    disable_help_subcommand = true
)]
struct Cli {
    /// Experiment command: simulate | filter | estimate | fisher | profile |
    /// study-consistency | study-normality | study-moments | study-lln |
    /// stability-suite | identifiability
    command: String,

    /// Experiment configuration file (flat key = value)
    #[arg(long)]
    config: PathBuf,

    /// Master seed override (takes precedence over run.master_seed)
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory override (default: output.dir or `out`)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker thread count (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help / --version are not failures.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let command = match Command::parse(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("hmmle: {e}");
            return ExitCode::from(1);
        }
    };
    let config = match load_experiment(
        command,
        &cli.config,
        cli.seed,
        cli.out.as_deref(),
        cli.workers,
    ) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("hmmle: {e}");
            return ExitCode::from(1);
        }
    };

    if let Some(workers) = config.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
        {
            eprintln!("hmmle: worker pool: {e}");
            return ExitCode::from(2);
        }
    }

    match run_experiment(&config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hmmle: {e}");
            ExitCode::from(2)
        }
    }
}

fn run_experiment(config: &ExperimentConfig) -> Result<()> {
    let start = Instant::now();
    let mut writer = ArtifactWriter::new(&config.out_dir)?;
    let model = &config.model;
    let run = &config.run;
    let seed = config.master_seed;

    match config.command {
        Command::Simulate => {
            let mut rng = RngStream::derive(seed, 0);
            let path = sample_chain_path(&model.lambda(run.theta0), model.nu(), run.t, &mut rng)?;
            let obs = sample_observations(&path, model.h(), run.dt, &mut rng)?;
            writer.write("chain.csv", &chain_to_csv(&path))?;
            writer.write("obs.csv", &obs_to_csv(&obs))?;
            let summary = json!({
                "theta0": run.theta0,
                "t": run.t,
                "dt": run.dt,
                "n_jumps": path.jump_times().len(),
                "n_steps": obs.n_steps(),
            });
            writer.write("report.json", &pretty(&summary)?)?;
        }
        Command::Filter => {
            let mut rng = RngStream::derive(seed, 0);
            let path = sample_chain_path(&model.lambda(run.theta0), model.nu(), run.t, &mut rng)?;
            let obs = sample_observations(&path, model.h(), run.dt, &mut rng)?;
            let filt = run_sensitivity_filter(model, run.theta0, &obs, model.nu())?;
            writer.write("chain.csv", &chain_to_csv(&path))?;
            writer.write("obs.csv", &obs_to_csv(&obs))?;
            writer.write("filter.csv", &filter_run_to_csv(&filt, model.h()))?;
            let summary = json!({
                "theta0": run.theta0,
                "loglik": filt.loglik,
                "clamp_events": filt.clamp_events,
            });
            writer.write("report.json", &pretty(&summary)?)?;
        }
        Command::Estimate => {
            let mut rng = RngStream::derive(seed, 0);
            let path = sample_chain_path(&model.lambda(run.theta0), model.nu(), run.t, &mut rng)?;
            let obs = sample_observations(&path, model.h(), run.dt, &mut rng)?;
            let est = estimate_mle(model, &obs, run.grid_size, run.refine_tol)?;
            if let Some(profile) = &est.profile {
                writer.write("grid.csv", &points_to_csv("theta,loglik", profile))?;
            }
            let summary = json!({
                "theta0": run.theta0,
                "theta_hat": est.theta_hat,
                "loglik_at_hat": est.loglik_at_hat,
                "n_evals": est.n_evals,
                "at_boundary": est.at_boundary,
            });
            writer.write("report.json", &pretty(&summary)?)?;
        }
        Command::Fisher => {
            let mut rng = RngStream::derive(seed, 0);
            let est = fisher_information(model, run.theta0, run.t, run.dt, &mut rng)?;
            let summary = json!({
                "theta0": run.theta0,
                "fisher": est.value,
                "t": est.horizon,
                "dt": est.dt,
            });
            writer.write("report.json", &pretty(&summary)?)?;
        }
        Command::Profile => {
            let mut rng = RngStream::derive(seed, 0);
            let path = sample_chain_path(&model.lambda(run.theta0), model.nu(), run.t, &mut rng)?;
            let obs = sample_observations(&path, model.h(), run.dt, &mut rng)?;
            let u_grid = u_grid(run.u_min, run.u_max, run.u_points)?;
            let profile = likelihood_profile(model, run.theta0, &obs, &u_grid)?;
            writer.write("profile.csv", &points_to_csv("u,logZ", &profile.points))?;
            let curvature = fit_log_profile_curvature(&profile.points)?;
            let summary = json!({
                "theta0": run.theta0,
                "curvature": curvature,
                "fisher_from_curvature": -2.0 * curvature,
                "dropped_u": profile.dropped,
            });
            writer.write("report.json", &pretty(&summary)?)?;
        }
        Command::StudyConsistency => {
            let report =
                run_consistency_study(model, run.theta0, &run.t_list, run.m, run.dt, seed)?;
            write_study(&mut writer, &report)?;
        }
        Command::StudyNormality => {
            let report = run_normality_study(model, run.theta0, run.t, run.m, run.dt, seed)?;
            write_study(&mut writer, &report)?;
        }
        Command::StudyMoments => {
            let report = run_moment_study(
                model, run.theta0, &run.t_list, run.m, &run.p_list, run.dt, seed,
            )?;
            write_study(&mut writer, &report)?;
        }
        Command::StudyLln => {
            let report = lln_scaling_check(
                model, run.theta0, run.theta, &run.t_list, run.m, run.dt, seed,
            )?;
            write_study(&mut writer, &report)?;
        }
        Command::StabilitySuite => {
            run_stability_suite(config, &mut writer)?;
        }
        Command::Identifiability => {
            let (t_burn, t_avg) = default_burn_avg(model, run.dt);
            let mut rng = RngStream::derive(seed, 0);
            let curve = identifiability_curve(
                model,
                run.theta0,
                &run.theta_grid,
                t_burn,
                t_avg,
                run.dt,
                &mut rng,
            )?;
            writer.write("identifiability.csv", &points_to_csv("theta,g_hat", &curve))?;
            let summary = json!({
                "theta0": run.theta0,
                "t_burn": t_burn,
                "t_avg": t_avg,
                "curve": curve,
            });
            writer.write("report.json", &pretty(&summary)?)?;
        }
    }

    let manifest = Manifest {
        command: config.command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: seed,
        config: config.raw.clone(),
        wall_seconds: start.elapsed().as_secs_f64(),
        outputs: Vec::new(),
    };
    writer.finish(manifest)?;
    Ok(())
}

fn run_stability_suite(config: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<()> {
    let model = &config.model;
    let run = &config.run;
    let seed = config.master_seed;
    let d = model.dim();

    // Contraction between two initializations concentrated on the extreme
    // states, on one path simulated under theta0.
    let mut rng = RngStream::derive(seed, 0);
    let path = sample_chain_path(&model.lambda(run.theta0), model.nu(), run.t, &mut rng)?;
    let obs = sample_observations(&path, model.h(), run.dt, &mut rng)?;
    let mu1 = concentrated(d, 0)?;
    let mu2 = concentrated(d, d - 1)?;
    let contraction = contraction_check(model, run.theta0, &obs, &mu1, &mu2)?;
    let dist_points: Vec<(f64, f64)> = contraction
        .times
        .iter()
        .cloned()
        .zip(contraction.distances.iter().cloned())
        .collect();
    writer.write("contraction.csv", &points_to_csv("t,distance", &dist_points))?;

    // Tangent decay along the same path.
    let mut v = vec![0.0; d];
    v[0] = 0.05;
    v[d - 1] = -0.05;
    let tangent = tangent_decay_check(model, run.theta0, &obs, model.nu(), &TangentVec::new(v)?)?;
    let tan_points: Vec<(f64, f64)> = tangent
        .times
        .iter()
        .cloned()
        .zip(tangent.values.iter().cloned())
        .collect();
    writer.write("tangent.csv", &points_to_csv("t,tangent_norm", &tan_points))?;

    let robustness = filter_robustness_check(
        model,
        run.theta0,
        &run.theta_list,
        run.t,
        run.dt,
        run.m,
        hmmle::rng::stream_id(seed, 1),
    )?;
    let boundary = boundary_moment_check(
        model,
        run.theta0,
        run.t,
        run.dt,
        run.m,
        &run.p_list,
        hmmle::rng::stream_id(seed, 2),
    )?;
    let coupling = coupling_tail_check(
        &model.lambda(run.theta0),
        run.t,
        run.n_samples,
        hmmle::rng::stream_id(seed, 3),
    )?;
    writer.write("taus.csv", &taus_to_csv(&coupling.taus))?;

    let summary = json!({
        "contraction": {
            "gamma": contraction.gamma,
            "pathwise": contraction.pathwise,
            "fitted_rate": contraction.fit.as_ref().map(|f| f.fitted_rate),
            "r_squared": contraction.fit.as_ref().map(|f| f.r_squared),
        },
        "tangent": {
            "fitted_rate": tangent.fitted_rate,
            "r_squared": tangent.r_squared,
        },
        "robustness": robustness,
        "boundary_moments": boundary,
        "coupling": {
            "rate": coupling.rate,
            "ks_distance": coupling.ks_distance,
            "censored": coupling.censored,
            "exploratory": coupling.exploratory,
        },
    });
    writer.write("report.json", &pretty(&summary)?)?;
    Ok(())
}

/// Mass 0.9 on one state, remainder spread uniformly.
fn concentrated(d: usize, state: usize) -> Result<SimplexVec> {
    if d == 1 {
        return SimplexVec::new(vec![1.0]);
    }
    let rest = 0.1 / (d - 1) as f64;
    let mut entries = vec![rest; d];
    entries[state] = 0.9;
    SimplexVec::new(entries)
}

fn u_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(max > min) {
        return Err(hmmle::Error::InvalidArgument(format!(
            "bad u grid: [{min}, {max}] with {points} points"
        )));
    }
    let step = (max - min) / (points - 1) as f64;
    Ok((0..points).map(|i| min + step * i as f64).collect())
}

fn write_study(writer: &mut ArtifactWriter, report: &McReport) -> Result<()> {
    writer.write("report.json", &mc_report_to_json(report)?)?;
    writer.write("records.csv", &records_to_csv(report))?;
    Ok(())
}

fn pretty(value: &serde_json::Value) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| hmmle::Error::Json {
        path: "report.json".into(),
        source: e,
    })
}
