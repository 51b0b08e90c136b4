//! Study dispatch and deterministic CSV/JSON output.

use crate::config::{Command, InitChoice, RunConfig};
use nlse_core::bea::{cfl_max_step, BeaConfig, CflSpec, SeriesParams};
use nlse_core::experiments::{
    convergence_order, defect_order, dense_spectrum, drift_study, initial_state,
    longtime_stability, symplecticity_check, InitKind, ProbeMethod, SlopeEstimate,
};
use nlse_core::lattice::{GridSpec, Lattice, ModelParams};
use nlse_core::stepper::SolverParams;
use nlse_core::CoreError;
use serde_json::json;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Study(#[from] CoreError),
    #[error("configuration error: {0}")]
    Config(#[from] crate::config::ConfigError),
}

/// Result of a completed run: the exit status plus the files written.
pub struct RunOutput {
    pub exit_code: i32,
    pub outputs: Vec<String>,
}

fn init_kind(cfg: &RunConfig) -> InitKind {
    match cfg.init {
        InitChoice::Bump => InitKind::Bump,
        InitChoice::Mode => InitKind::Mode {
            index: cfg.mode_j.unwrap_or_else(|| cfg.k.unwrap_or(1)),
        },
        InitChoice::Noise => InitKind::Noise { seed: cfg.seed },
    }
}

fn bea_config(cfg: &RunConfig) -> BeaConfig {
    BeaConfig {
        series: SeriesParams::default(),
        eps_tilde: cfg.eps_tilde,
    }
}

fn write_file(outdir: &Path, name: &str, body: &str) -> Result<(), RunError> {
    let mut f = std::fs::File::create(outdir.join(name))?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

fn slope_json(est: &SlopeEstimate) -> String {
    let v = json!({
        "slope": est.slope,
        "intercept": est.intercept,
        "r_squared": est.r_squared,
    });
    format!("{}\n", serde_json::to_string_pretty(&v).unwrap())
}

fn sweep_csv(est: &SlopeEstimate) -> String {
    let mut s = String::from("h,defect\n");
    for (h, d) in est.h_values.iter().zip(&est.defect_values) {
        s.push_str(&format!("{h},{d}\n"));
    }
    s
}

/// Executes the configured study and writes its CSV files plus
/// `manifest.json` under `outdir`. Returns exit status 0 on healthy
/// completion and 2 for assertion-style failures (a stability FAIL).
pub fn run(cfg: &RunConfig, outdir: &Path) -> Result<RunOutput, RunError> {
    if let Ok(v) = std::env::var("NLSELAB_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    std::fs::create_dir_all(outdir)?;

    let mut outputs = Vec::new();
    let mut exit_code = 0;
    let mut extra = serde_json::Map::new();

    match cfg.command {
        Command::Cfl => {
            let spec = CflSpec::new(cfg.n_order, cfg.r, cfg.eps_tilde)?;
            let h_max = cfl_max_step(cfg.delta_x, &spec);
            let body = format!(
                "delta_x,r,N,eps_tilde,h_max\n{},{},{},{},{}\n",
                cfg.delta_x, cfg.r, cfg.n_order, cfg.eps_tilde, h_max
            );
            write_file(outdir, "cfl.csv", &body)?;
            outputs.push("cfl.csv".into());
        }
        Command::SpectrumCheck => {
            let lat = lattice(cfg)?;
            let dense = dense_spectrum(&lat);
            let mut body = String::from("j,lambda_analytic,lambda_dense,abs_diff\n");
            for (i, (a, d)) in lat.eigenvalues().iter().zip(&dense).enumerate() {
                body.push_str(&format!("{},{},{},{}\n", i + 1, a, d, (a - d).abs()));
            }
            write_file(outdir, "spectrum-check.csv", &body)?;
            outputs.push("spectrum-check.csv".into());
        }
        Command::Simulate | Command::Drift => {
            let (lat, params) = system(cfg)?;
            let solver = solver(cfg)?;
            let u0 = initial_state(&lat, init_kind(cfg), cfg.init_scale);
            let t_final = cfg.t_final.unwrap();
            let n_steps = (t_final / solver.h).round().max(1.0) as u64;
            let stride = if cfg.stride == 0 {
                (n_steps / 1000).max(1)
            } else {
                cfg.stride
            };
            let orders: Vec<u32> = (0..=cfg.n_order).collect();
            let study = drift_study(
                &lat,
                &params,
                &solver,
                &u0,
                t_final,
                &orders,
                stride,
                &bea_config(cfg),
            )?;
            let mut header = String::from("step,time,mass,norm_dx,energy_H");
            for n in &study.orders {
                header.push_str(&format!(",energy_mod_N{n}"));
            }
            let mut body = header;
            body.push('\n');
            for rec in &study.reports {
                body.push_str(&format!(
                    "{},{},{},{},{}",
                    rec.step, rec.time, rec.mass, rec.norm_dx, rec.energy_h
                ));
                for e in &rec.energy_mod {
                    body.push_str(&format!(",{e}"));
                }
                body.push('\n');
            }
            let name = format!("{}.csv", cfg.command.as_str());
            write_file(outdir, &name, &body)?;
            outputs.push(name);
        }
        Command::DefectOrder => {
            let (lat, params) = system(cfg)?;
            let u0 = initial_state(&lat, init_kind(cfg), cfg.init_scale);
            let est = defect_order(
                &lat,
                &params,
                &u0,
                cfg.h_values.as_ref().unwrap(),
                cfg.n_order,
                &bea_config(cfg),
            )?;
            write_file(outdir, "defect-order.csv", &sweep_csv(&est))?;
            write_file(outdir, "slope.json", &slope_json(&est))?;
            outputs.push("defect-order.csv".into());
            outputs.push("slope.json".into());
        }
        Command::Convergence => {
            let (lat, params) = system(cfg)?;
            let u0 = initial_state(&lat, init_kind(cfg), cfg.init_scale);
            let est = convergence_order(
                &lat,
                &params,
                &u0,
                cfg.t_final.unwrap(),
                cfg.h_values.as_ref().unwrap(),
                cfg.fp_tol,
            )?;
            write_file(outdir, "convergence.csv", &sweep_csv(&est))?;
            write_file(outdir, "slope.json", &slope_json(&est))?;
            outputs.push("convergence.csv".into());
            outputs.push("slope.json".into());
        }
        Command::SymplecticCheck => {
            let (lat, params) = system(cfg)?;
            let u = initial_state(&lat, init_kind(cfg), cfg.init_scale);
            let h = cfg.h.unwrap();
            let dev_mid = symplecticity_check(
                &lat,
                &params,
                h,
                &u,
                cfg.fd_step,
                ProbeMethod::Midpoint { fp_tol: cfg.fp_tol },
            )?;
            let dev_rk2 =
                symplecticity_check(&lat, &params, h, &u, cfg.fd_step, ProbeMethod::Rk2)?;
            let body = format!("method,deviation\nmidpoint,{dev_mid}\nrk2,{dev_rk2}\n");
            write_file(outdir, "symplectic-check.csv", &body)?;
            outputs.push("symplectic-check.csv".into());
        }
        Command::Stability => {
            let (lat, params) = system(cfg)?;
            let solver = solver(cfg)?;
            let shape = initial_state(&lat, init_kind(cfg), 1.0);
            let result = longtime_stability(
                &lat,
                &params,
                &solver,
                &shape,
                cfg.epsilon.unwrap(),
                cfg.kappa.unwrap(),
                cfg.n_order,
                cfg.step_cap,
                if cfg.stride == 0 { 1000 } else { cfg.stride },
            )?;
            let mut body = String::from("step,time,norm_dx,ratio\n");
            for rec in &result.records {
                body.push_str(&format!(
                    "{},{},{},{}\n",
                    rec.step, rec.time, rec.norm_dx, rec.ratio
                ));
            }
            write_file(outdir, "stability.csv", &body)?;
            outputs.push("stability.csv".into());
            extra.insert(
                "verdict".into(),
                json!(if result.pass { "PASS" } else { "FAIL" }),
            );
            extra.insert("max_ratio".into(), json!(result.max_ratio));
            extra.insert("steps_run".into(), json!(result.steps_run));
            extra.insert("horizon_steps".into(), json!(result.horizon_steps));
            extra.insert("horizon_capped".into(), json!(result.capped));
            if !result.pass {
                exit_code = 2;
            }
        }
    }

    let mut manifest = serde_json::Map::new();
    manifest.insert("command".into(), json!(cfg.command.as_str()));
    manifest.insert("config".into(), json!(cfg.resolved));
    manifest.insert("outputs".into(), json!(outputs));
    manifest.insert("rng".into(), json!("chacha12/box-muller"));
    manifest.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    for (k, v) in extra {
        manifest.insert(k, v);
    }
    let manifest_body = format!(
        "{}\n",
        serde_json::to_string_pretty(&serde_json::Value::Object(manifest)).unwrap()
    );
    write_file(outdir, "manifest.json", &manifest_body)?;
    outputs.push("manifest.json".into());

    Ok(RunOutput { exit_code, outputs })
}

fn lattice(cfg: &RunConfig) -> Result<Lattice, RunError> {
    let spec = GridSpec::new(cfg.k.unwrap(), cfg.delta_x)?;
    Ok(Lattice::new(spec))
}

fn system(cfg: &RunConfig) -> Result<(Lattice, ModelParams), RunError> {
    let lat = lattice(cfg)?;
    let params = ModelParams::new(cfg.lambda, cfg.r)?;
    Ok((lat, params))
}

fn solver(cfg: &RunConfig) -> Result<SolverParams, RunError> {
    Ok(SolverParams::new(cfg.h.unwrap())?
        .with_fp_tol(cfg.fp_tol)
        .with_max_iters(cfg.max_iters)
        .with_ref_tol(cfg.ref_tol))
}
