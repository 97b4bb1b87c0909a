use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stablelad::experiments::{run_campaign, COVERAGE_LEVELS};
use stablelad::index_scale::{estimate_alpha, PowerVariationConfig};
use stablelad::lad::{q_function, q_identity_check, q_integral};
use stablelad::quadrature::integrate;
use stablelad::sde_sim::{read_path, HorizonKind};
use stablelad::stable_noise::{stable_density_at_zero, stable_fractional_moment};
use stablelad::{estimate_path, simulate_path, Error, Horizon, RunConfig};

#[derive(Parser)]
#[command(name = "stablelad", version, about = "Stable-noise SDE simulation and LAD drift estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (same as `--override seed=N`).
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-key override, e.g. `levy.alpha=1.2`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Power-variation exponent (same as `--override estimate.rho=R`).
    #[arg(long)]
    rho: Option<f64>,
    /// euler, improved-euler, exact-linear or exact-bernoulli.
    #[arg(long)]
    regressor: Option<String>,
    /// Only print errors.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path and write `path.csv`.
    Simulate(Common),
    /// Estimate drift, index and scale from a path CSV.
    Estimate {
        path: PathBuf,
        /// Sampling step, required for single-column files.
        #[arg(long)]
        h: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate the stability index of a path CSV.
    Index {
        path: PathBuf,
        #[arg(long)]
        h: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a Monte Carlo campaign.
    Mc(Common),
    /// Check closed-form identities against numerical references.
    Selftest {
        #[arg(long)]
        quiet: bool,
    },
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        if let Some(r) = self.rho {
            o.push(format!("estimate.rho={r}"));
        }
        if let Some(r) = &self.regressor {
            o.push(format!("estimate.regressor=\"{r}\""));
        }
        o
    }

    fn load(&self) -> Result<RunConfig, Error> {
        let file =
            self.config.as_deref().ok_or_else(|| Error::invalid("--config", "a configuration file is required"))?;
        let cfg = RunConfig::load(file, &self.overrides())?;
        if !self.quiet {
            for w in &cfg.warnings {
                eprintln!("warning: {w}");
            }
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<PathBuf, Error> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn say(&self, s: &str) {
        if !self.quiet {
            print!("{s}");
        }
    }
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf, Error> {
    let p = dir.join(name);
    fs::write(&p, body)?;
    Ok(p)
}

fn load_path(file: &Path, h: Option<f64>, kind: HorizonKind) -> Result<stablelad::ObservationPath, Error> {
    let f = fs::File::open(file)?;
    read_path(f, h, kind)
}

fn simulate(c: &Common) -> Result<(), Error> {
    let cfg = c.load()?;
    let design = cfg.design();
    let path = simulate_path(&cfg.model, design, cfg.fine_factor, cfg.seed)?;
    let dir = c.out_dir()?;
    let mut buf = Vec::new();
    path.write_csv(&mut buf)?;
    let p = dir.join("path.csv");
    fs::write(&p, buf)?;
    c.say(&format!("wrote {} ({} observations, h = {})\n", p.display(), path.n() + 1, path.h()));
    Ok(())
}

fn estimate(file: &Path, h: Option<f64>, c: &Common) -> Result<(), Error> {
    let cfg = c.load()?;
    let kind = match cfg.design().horizon {
        Horizon::Ergodic => HorizonKind::Ergodic,
        Horizon::FixedT { .. } => HorizonKind::FixedT,
    };
    let path = load_path(file, h, kind)?;
    cfg.pv.validate(&cfg.model.levy, path.design.horizon, path.h())?;
    let report = estimate_path(&path, &cfg.model.lite(), cfg.regressor, &cfg.pv, cfg.scale_mode)?;
    let dir = c.out_dir()?;
    write(&dir, "estimate.csv", &report.to_csv())?;
    let text = report.to_text();
    write(&dir, "estimate.txt", &text)?;
    c.say(&text);
    Ok(())
}

fn index(file: &Path, h: Option<f64>, c: &Common) -> Result<(), Error> {
    let mut pv = match &c.config {
        Some(_) => c.load()?.pv,
        None => PowerVariationConfig::default(),
    };
    if let Some(r) = c.rho {
        pv.rho = r;
    }
    let h = h.or_else(|| (!is_two_column(file)).then_some(1.0));
    let path = load_path(file, h, HorizonKind::FixedT)?;
    let est = estimate_alpha(&path, &pv)?;
    let text = format!(
        "alpha_hat {:.10}\nH1 {:.10e}\nH2 {:.10e}\nratio {:.10}\nclamped {}\n",
        est.alpha_hat, est.h1, est.h2, est.ratio, est.clamped
    );
    if let Some(dir) = &c.out {
        fs::create_dir_all(dir)?;
        write(dir, "index.txt", &text)?;
    }
    c.say(&text);
    Ok(())
}

/// α̂ does not depend on h, so single-column files default to `h = 1`.
fn is_two_column(file: &Path) -> bool {
    fs::read_to_string(file).ok().and_then(|s| s.lines().next().map(|l| l.contains(','))).unwrap_or(false)
}

fn mc(c: &Common) -> Result<bool, Error> {
    let cfg = c.load()?;
    let dir = c.out_dir()?;
    let run = run_campaign(&cfg.campaign(Some(dir.clone())))?;
    let mut ok = true;
    for d in &run.summary.designs {
        ok &= d.failure_rate() < 0.05;
        c.say(&format!(
            "n = {:>7}  h = {:.3e}  r_n = {:.3}  rmse(u) {:?}  KS p {:?}  cover{:.0} {:.3}  failures {}/{}\n",
            d.n,
            d.h,
            d.rate,
            d.rmse_u.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
            d.ks_pvalue.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
            100.0 * COVERAGE_LEVELS[1],
            d.coverage[1],
            d.failures,
            d.replications
        ));
    }
    c.say(&format!("wrote records.csv, summary.csv, summary.txt to {}\n", dir.display()));
    if !ok {
        eprintln!("error: failure rate at or above 5%");
    }
    Ok(ok)
}

fn selftest(quiet: bool) -> bool {
    let mut all = true;
    let mut check = |name: &str, err: f64, tol: f64| {
        let pass = err < tol;
        all &= pass;
        if !quiet || !pass {
            println!("{} {name}: error {err:.2e} (tolerance {tol:.0e})", if pass { "ok  " } else { "FAIL" });
        }
    };
    let mut worst = 0.0f64;
    for i in 0..400 {
        for j in 0..400 {
            let x = -5.0 + (i as f64 + 0.5 * std::f64::consts::SQRT_2) * 0.025;
            let v = -5.0 + (j as f64 + 0.3) * 0.025;
            if let Ok(r) = q_identity_check(x, v) {
                worst = worst.max(r.abs());
            }
        }
    }
    check("q identity", worst, 1e-14);
    let mut worst = 0.0f64;
    for i in 0..=40 {
        let v = -3.0 + 0.15 * i as f64;
        let mut cuts = vec![-1.0, 0.0, 1.0];
        if v.abs() < 1.0 {
            cuts.push(v);
        }
        cuts.sort_by(f64::total_cmp);
        let quad: f64 = cuts.windows(2).map(|w| integrate(|z| q_function(z, v), w[0], w[1], 1e-14)).sum();
        worst = worst.max((quad - q_integral(v)).abs());
    }
    check("q integral", worst, 1e-12);
    let mut worst = 0.0f64;
    for alpha in [0.6, 1.0, 1.5, 1.9] {
        let edges = [0.0, 1e-3, 1e-1, 1.0, 4.0, 16.0, 64.0, 256.0, 1024.0, 8192.0, 65536.0];
        let quad: f64 =
            edges.windows(2).map(|w| integrate(|u: f64| (-u.powf(alpha)).exp(), w[0], w[1], 1e-15)).sum::<f64>()
                / std::f64::consts::PI;
        worst = worst.max((quad - stable_density_at_zero(alpha).unwrap_or(f64::NAN)).abs());
    }
    check("phi_alpha(0) quadrature", worst, 1e-8);
    // Cauchy: E|S|^ρ = 1/cos(πρ/2).
    let mut worst = 0.0f64;
    for rho in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let m = stable_fractional_moment(1.0, rho).unwrap_or(f64::NAN);
        worst = worst.max((m - 1.0 / (std::f64::consts::FRAC_PI_2 * rho).cos()).abs());
    }
    check("m_1(rho) Cauchy moments", worst, 1e-10);
    all
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match &cli.command {
        Command::Simulate(c) => simulate(c).map(|_| true),
        Command::Estimate { path, h, common } => estimate(path, *h, common).map(|_| true),
        Command::Index { path, h, common } => index(path, *h, common).map(|_| true),
        Command::Mc(c) => mc(c),
        Command::Selftest { quiet } => Ok(selftest(*quiet)),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => fail(&e),
    }
}
