//! Subcommand implementations. Each writes its outputs and a JSON manifest
//! into the output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use gpam::estimators::{expansion_compare, fernique_tail, mc_coeff, mc_shifted, q_integrability, varadhan_check, CenteredProblem, SeedStreams};
use gpam::functional::Functional;
use gpam::io::{table_to_csv, trajectory_to_bytes, write_atomic, write_field_csv, write_trajectory};
use gpam::minimizer::{minimize, MinimizerResult};
use gpam::noise::{sample_seed, sample_white_noise};
use gpam::solver::{solve_shifted_driver, solve_skeleton, SolveContext};
use gpam::spectral::Field;
use gpam::taylor::solve_hierarchy;

use crate::config::{parse_field, RunConfig};

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    root_seed: u64,
    seeds: SeedStreams,
    /// TOML snapshot of the effective configuration
    config: String,
    outputs: Vec<String>,
    wall_seconds: f64,
    result: Value,
}

/// Collects output files and writes the manifest last.
pub struct Run<'a> {
    command: &'static str,
    cfg: &'a RunConfig,
    out: PathBuf,
    outputs: Vec<String>,
    start: Instant,
}

impl<'a> Run<'a> {
    pub fn new(command: &'static str, cfg: &'a RunConfig, out: &Path) -> Self {
        Self {
            command,
            cfg,
            out: out.to_path_buf(),
            outputs: Vec::new(),
            start: Instant::now(),
        }
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name);
        write_atomic(&p, body.as_bytes()).with_context(|| format!("writing {}", p.display()))
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let body = serde_json::to_string_pretty(value)?;
        self.text(name, &body)
    }

    fn finish(self, result: Value) -> Result<()> {
        let seed = self.cfg.noise.seed;
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            root_seed: seed,
            seeds: SeedStreams::from_root(seed),
            config: toml::to_string(self.cfg)?,
            outputs: self.outputs,
            wall_seconds: self.start.elapsed().as_secs_f64(),
            result,
        };
        let path = self.out.join(format!("{}.manifest.json", self.command));
        write_atomic(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        println!("{}", serde_json::to_string_pretty(&manifest.result)?);
        Ok(())
    }
}

fn nan_to_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

struct Prepared {
    ctx: SolveContext,
    functional: Box<dyn Functional>,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    Ok(Prepared {
        ctx: cfg.context()?,
        functional: cfg.functional()?,
    })
}

fn run_minimizer(cfg: &RunConfig, p: &Prepared) -> Result<MinimizerResult> {
    let h0 = Field::zeros(p.ctx.grid());
    Ok(minimize(p.functional.as_ref(), &p.ctx, &h0, &cfg.minimize_options())?)
}

fn minimizer_summary(res: &MinimizerResult) -> Value {
    json!({
        "value": res.value,
        "grad_norm": res.grad_norm,
        "iterations": res.iterations,
        "converged": res.converged,
        "h_star_l2": res.h_star.norm_l2(),
        "hessian_min_quotient": nan_to_null(res.hessian_min_quotient),
    })
}

fn centered<'a>(p: &'a Prepared, res: &'a MinimizerResult) -> CenteredProblem<'a> {
    CenteredProblem {
        functional: p.functional.as_ref(),
        ctx: &p.ctx,
        h_star: &res.h_star,
        value: res.value,
    }
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut run = Run::new("simulate", cfg, out);
    let p = prepare(cfg)?;
    let ctx = p.ctx.clone().with_record_every(cfg.time.record_every)?;
    let h = if cfg.simulate.h == "minimizer" {
        run_minimizer(cfg, &p)?.h_star
    } else {
        parse_field(&cfg.simulate.h, ctx.grid())?
    };
    let seed = sample_seed(cfg.noise.seed, cfg.simulate.sample);
    let driver = ctx.driver(&sample_white_noise(ctx.grid(), seed))?;
    let skeleton = solve_skeleton(&ctx, &h)?;
    let shifted = solve_shifted_driver(&ctx, &h, cfg.simulate.eps, &driver)?;
    let path = run.path("skeleton.bin");
    write_trajectory(&path, &skeleton)?;
    let path = run.path("shifted.bin");
    write_atomic(&path, &trajectory_to_bytes(&shifted))?;
    let path = run.path("skeleton_terminal.csv");
    write_field_csv(&path, skeleton.terminal())?;
    let path = run.path("shifted_terminal.csv");
    write_field_csv(&path, shifted.terminal())?;
    let mut hierarchy = Value::Null;
    if cfg.simulate.terms > 0 {
        let hier = solve_hierarchy(&ctx, &h, &driver, cfg.simulate.terms)?;
        for m in 1..=hier.order {
            let path = run.path(&format!("term_{m}.bin"));
            write_trajectory(&path, &hier.terms[m])?;
        }
        let norms: Vec<Value> = hier.terms.iter().map(|t| nan_to_null(t.sup_norm())).collect();
        hierarchy = json!({
            "order": hier.order,
            "seed": seed,
            "delta": cfg.noise.delta,
            "c_delta": ctx.c_delta(),
            "norms": norms,
            "exploded": hier.exploded,
        });
        run.json("hierarchy.json", &hierarchy)?;
    }
    run.finish(json!({
        "eps": cfg.simulate.eps,
        "sample_seed": seed,
        "c_delta": ctx.c_delta(),
        "exploded": shifted.exploded,
        "terminal_sup": nan_to_null(shifted.terminal().norm_sup()),
        "functional": nan_to_null(p.functional.evaluate(shifted.terminal()).unwrap_or(f64::NAN)),
        "hierarchy": hierarchy,
    }))
}

pub fn minimize_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut run = Run::new("minimize", cfg, out);
    let p = prepare(cfg)?;
    let res = run_minimizer(cfg, &p)?;
    let path = run.path("h_star.csv");
    write_field_csv(&path, &res.h_star)?;
    run.json(
        "minimizer.json",
        &json!({
            "summary": minimizer_summary(&res),
            "probe_quotients": res.probe_quotients,
            "log": res.log,
        }),
    )?;
    run.finish(minimizer_summary(&res))
}

pub fn expand(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut run = Run::new("expand", cfg, out);
    let p = prepare(cfg)?;
    let res = run_minimizer(cfg, &p)?;
    let seeds = SeedStreams::from_root(cfg.noise.seed);
    let coeffs = mc_coeff(&centered(&p, &res), cfg.expansion.n, cfg.mc.samples, seeds.coeff)?;
    let a = coeffs.coefficients();
    let rows: Vec<[f64; 3]> = a.iter().enumerate().map(|(m, c)| [m as f64, c.mean, c.se]).collect();
    run.text("coefficients.csv", &table_to_csv(&["m", "a_m", "SE"], &rows))?;
    let result = json!({
        "minimizer": minimizer_summary(&res),
        "order": cfg.expansion.n,
        "samples": cfg.mc.samples,
        "exploded": coeffs.exploded,
        "coefficients": a,
    });
    run.json("expand.json", &result)?;
    run.finish(result)
}

pub fn compare(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut run = Run::new("compare", cfg, out);
    let p = prepare(cfg)?;
    let res = run_minimizer(cfg, &p)?;
    let problem = centered(&p, &res);
    let report = expansion_compare(&problem, &cfg.expansion.eps, cfg.expansion.n, cfg.mc.samples, cfg.noise.seed)?;
    let header = gpam::estimators::ExpansionReport::CSV_HEADER;
    run.text("compare.csv", &table_to_csv(&header, &report.csv_rows()))?;
    let varadhan = varadhan_check(&problem, &cfg.expansion.eps, cfg.mc.samples, report.seeds.shifted)?;
    let vrows: Vec<[f64; 3]> = varadhan.iter().map(|r| [r.eps, r.value, r.se]).collect();
    run.text("varadhan.csv", &table_to_csv(&["eps", "value", "SE"], &vrows))?;
    let mut localized = Vec::new();
    if cfg.norm.rho.is_finite() {
        for &eps in &cfg.expansion.eps {
            let est = mc_shifted(&problem, eps, cfg.norm.rho, &cfg.norm_frame(), cfg.mc.samples, report.seeds.shifted)?;
            let rel = est.relative_to(-res.value / (eps * eps));
            localized.push(json!({"eps": eps, "j": rel.mean, "se": rel.se, "excluded": est.exploded}));
        }
    }
    let result = json!({
        "minimizer": minimizer_summary(&res),
        "report": report,
        "varadhan": varadhan,
        "localized": localized,
    });
    run.json("compare.json", &result)?;
    run.finish(json!({
        "value": res.value,
        "rows": report.rows,
        "varadhan": varadhan,
    }))
}

pub fn tails(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut run = Run::new("tails", cfg, out);
    let p = prepare(cfg)?;
    let seeds = SeedStreams::from_root(cfg.noise.seed);
    let norm = fernique_tail(&p.ctx, &cfg.norm_frame(), cfg.mc.samples, seeds.tails)?;
    run.text("tails_norm.csv", &survival_csv(&norm.survival))?;
    let res = run_minimizer(cfg, &p)?;
    let q = q_integrability(&centered(&p, &res), cfg.tails.p, cfg.mc.samples, seeds.coeff)?;
    let q_survival = gpam::stats::survival_curve(&q.samples);
    run.text("tails_q.csv", &survival_csv(&q_survival))?;
    let q_tail = q.tail.as_ref().map(|t| json!({"rate": t.rate, "rate_lower": t.rate_lower}));
    let result = json!({
        "norm": {"power": norm.power, "rate": norm.rate, "rate_lower": norm.rate_lower, "r2": norm.fit.r2},
        "q": {
            "p": q.p,
            "moment": q.moment,
            "first_half": q.first_half,
            "second_half": q.second_half,
            "stable": q.stable,
            "tail": q_tail,
        },
        "minimizer": minimizer_summary(&res),
    });
    run.json("tails.json", &result)?;
    run.finish(result)
}

fn survival_csv(curve: &[(f64, f64)]) -> String {
    let rows: Vec<[f64; 2]> = curve.iter().map(|&(r, s)| [r, s]).collect();
    table_to_csv(&["r", "log_survival"], &rows)
}
