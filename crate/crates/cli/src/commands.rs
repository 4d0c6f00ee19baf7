use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use stablear::ar::simulate_ar;
use stablear::asymptotics::{limit_sample_spec, loss_moments, LimitOptions};
use stablear::bootstrap::{bootstrap_replicates, coverage_experiment, BootstrapConfig, CoverageExperiment};
use stablear::estimation::{ls_estimate, m_estimate, MOptions};
use stablear::io::{read_series, series_to_csv, write_text};
use stablear::montecarlo::{run_table, Estimator, McConfig};
use stablear::rng::{derive_seed, stream};

use crate::config::{parse_estimator, parse_loss, parse_m_rule};
use crate::RunContext;

// Tags keep the stream families of different subcommands apart.
const TAG_PATHS: u64 = 1;
const TAG_SIMULATE: u64 = 2;
const TAG_LIMIT: u64 = 3;
const TAG_ESTIMATE: u64 = 4;

fn announce(path: &PathBuf) {
    println!("wrote {}", path.display());
}

pub fn paths(ctx: &RunContext, count: Option<usize>) -> Result<()> {
    let cfg = &ctx.file.paths;
    let count = count.unwrap_or(cfg.count);
    if cfg.n == 0 {
        bail!("paths need n >= 1");
    }
    let model = ctx.file.model.model()?;
    let spec = ctx.file.innovations.spec(cfg.alpha)?;
    let base = derive_seed(ctx.seed, &[TAG_PATHS, cfg.n as u64, cfg.alpha.to_bits()]);
    let p = model.order();
    for k in 0..count {
        let eps = spec.sample(cfg.n, &mut stream(base, k as u64))?;
        let full = simulate_ar(&model, &eps, None)?.full();
        let mut out = String::from("t,X\n");
        for (t, x) in full[p - 1..].iter().enumerate() {
            out.push_str(&format!("{t},{x}\n"));
        }
        let path = ctx.out_dir.join(format!("path_{}.csv", k + 1));
        write_text(&path, &out)?;
        announce(&path);
    }
    Ok(())
}

pub fn mc_table(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.file.mc_table;
    let model = ctx.file.model.model()?;
    if cfg.coefficient == 0 || cfg.coefficient > model.order() {
        bail!("coefficient must lie in 1..={}", model.order());
    }
    let estimators = cfg.estimators.iter().map(|e| parse_estimator(e)).collect::<Result<Vec<Estimator>>>()?;
    let config = McConfig {
        model,
        family: ctx.file.innovations.family()?,
        scale: ctx.file.innovations.scale,
        ns: cfg.n.clone(),
        alphas: cfg.alpha.clone(),
        estimators,
        replicates: ctx.replicates.or(cfg.replicates).unwrap_or(ctx.scale.monte_carlo()),
        coefficient: cfg.coefficient - 1,
        seed: ctx.seed,
        solver: MOptions::default(),
    };
    let table = run_table(&config)?;
    let path = ctx.out_dir.join("mc_table.csv");
    write_text(&path, &table.to_csv())?;
    announce(&path);
    let side = ctx.out_dir.join("mc_table_failures.csv");
    write_text(&side, &table.failures_csv())?;
    announce(&side);
    if table.total_failures() > 0 {
        eprintln!("{} replicates failed; see {}", table.total_failures(), side.display());
    }
    Ok(())
}

pub fn limit_sample(ctx: &RunContext, alpha: Option<f64>) -> Result<()> {
    let cfg = &ctx.file.limit_sample;
    let alpha = alpha.unwrap_or(cfg.alpha);
    let Some(roots) = ctx.file.model.roots()? else {
        bail!("limit-law draws need the model given by its unit roots (r, s, pairs), not by phi");
    };
    let spec = ctx.file.innovations.spec(alpha)?;
    let loss = parse_loss(&cfg.loss)?;
    let moments = loss_moments(&loss, &spec)?;
    let opts = LimitOptions { mesh: cfg.mesh, truncation: cfg.truncation, phase: cfg.phase()? };
    let draws = ctx.replicates.or(cfg.draws).unwrap_or(ctx.scale.monte_carlo());
    let base = derive_seed(ctx.seed, &[TAG_LIMIT, alpha.to_bits()]);
    let mut out = String::from("draw,case,component,value\n");
    let mut resampled = 0;
    for d in 0..draws {
        for sample in limit_sample_spec(&roots, alpha, &moments, &opts, &mut stream(base, d as u64))? {
            resampled += sample.resamples;
            for row in sample.csv_rows().lines() {
                out.push_str(&format!("{},{row}\n", d + 1));
            }
        }
    }
    let path = ctx.out_dir.join("limit_sample.csv");
    write_text(&path, &out)?;
    announce(&path);
    if resampled > 0 {
        eprintln!("{resampled} near-singular limit matrices were redrawn");
    }
    Ok(())
}

pub fn boot_coverage(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.file.boot_coverage;
    let model = ctx.file.model.model()?;
    if cfg.coefficient == 0 || cfg.coefficient > model.order() {
        bail!("coefficient must lie in 1..={}", model.order());
    }
    let loss = parse_loss(&cfg.loss)?;
    let b = cfg.bootstrap_replicates.unwrap_or(ctx.scale.bootstrap());
    let outer = ctx.replicates.or(cfg.outer_replicates).unwrap_or(ctx.scale.outer());
    let rules = cfg.m_rules.iter().map(|r| parse_m_rule(r)).collect::<Result<Vec<_>>>()?;
    let mut out = String::from("n,alpha,m_rule,m,coverage_pct,completed,failed,flagged\n");
    for &n in &cfg.n {
        for &alpha in &cfg.alpha {
            let exp = CoverageExperiment {
                model: model.clone(),
                innovations: ctx.file.innovations.spec(alpha)?,
                n,
                coefficient: cfg.coefficient - 1,
                warm_start: None,
            };
            for rule in &rules {
                let config = BootstrapConfig::new(*rule, b, cfg.level, loss)?;
                let r = coverage_experiment(&exp, &config, outer, ctx.seed)
                    .with_context(|| format!("coverage at n = {n}, alpha = {alpha}, m = {}", rule.label()))?;
                out.push_str(&format!(
                    "{n},{alpha},{},{},{},{},{},{}\n",
                    rule.label(),
                    rule.m_for(n, model.order())?,
                    100.0 * r.coverage,
                    r.completed,
                    r.failed,
                    r.flagged
                ));
            }
        }
    }
    let path = ctx.out_dir.join("boot_coverage.csv");
    write_text(&path, &out)?;
    announce(&path);
    Ok(())
}

pub fn estimate(ctx: &RunContext, input: Option<PathBuf>, order: Option<usize>) -> Result<()> {
    let cfg = &ctx.file.estimate;
    let Some(input) = input.or_else(|| cfg.input.clone()) else {
        bail!("estimate needs an input series (--input or [estimate] input)");
    };
    let series = read_series(&input)?;
    let p = match order.or(cfg.order) {
        Some(p) => p,
        None => ctx.file.model.model()?.order(),
    };
    let x = series.full();
    let fit = match parse_estimator(&cfg.loss)? {
        Estimator::LeastSquares => ls_estimate(&x, p)?,
        Estimator::M(loss) => m_estimate(&x, p, &loss, &MOptions::default())?,
    };
    if !fit.converged {
        eprintln!("warning: the solver stopped after {} iterations without converging", fit.iterations);
    }
    let kv = ctx.out_dir.join("estimate.txt");
    write_text(&kv, &fit.to_key_value())?;
    announce(&kv);
    let csv = ctx.out_dir.join("estimate.csv");
    write_text(&csv, &fit.to_csv())?;
    announce(&csv);
    if let Some(b) = cfg.bootstrap_replicates {
        let loss = match parse_estimator(&cfg.loss)? {
            Estimator::M(loss) => loss,
            Estimator::LeastSquares => stablear::estimation::Loss::Quadratic,
        };
        let config = BootstrapConfig::new(parse_m_rule(&cfg.m_rule)?, b, cfg.level, loss)?;
        let mut rng = stream(derive_seed(ctx.seed, &[TAG_ESTIMATE]), 0);
        let summary = bootstrap_replicates(&x, &fit.phi_hat, &config, &mut rng)?;
        if summary.flagged {
            eprintln!("warning: {} of {} bootstrap replicates were dropped", summary.dropped, summary.requested);
        }
        let path = ctx.out_dir.join("bootstrap.csv");
        write_text(&path, &summary.to_csv())?;
        announce(&path);
    }
    Ok(())
}

pub fn simulate(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.file.simulate;
    if cfg.n == 0 {
        bail!("simulate needs n >= 1");
    }
    let model = ctx.file.model.model()?;
    let spec = ctx.file.innovations.spec(cfg.alpha)?;
    let mut rng = stream(derive_seed(ctx.seed, &[TAG_SIMULATE, cfg.n as u64, cfg.alpha.to_bits()]), 0);
    let eps = spec.sample(cfg.n, &mut rng)?;
    let series = simulate_ar(&model, &eps, None)?;
    let path = ctx.out_dir.join("series.csv");
    write_text(&path, &series_to_csv(&series))?;
    announce(&path);
    Ok(())
}
