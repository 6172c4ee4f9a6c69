use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use onebit_core::scenario::{
    emit_sweep, equal_complexity_loss_from_points, parse_config, run_sweep, AdcModel, SweepSpec, GAMMA_SWEEP_SNR_DB,
    TAU_SWEEP_SNR_DB,
};
use onebit_core::signal::{PilotConfig, DEFAULT_CODE_SEED, DEFAULT_TAIL_PERIODS, GPS_CHIP_RATE};
use onebit_core::validation::{
    exact_bound_check_n2, ideal_ml_estimate, jacobian_checks, mc_moment_check, PairCase,
};
use onebit_core::{adc_power, ChannelParams, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "onebit", version, about = "Quantization-loss bounds for 1-bit oversampled receivers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sweep SNR x oversampling and write one loss table per SNR.
    Sweep(ScenarioArgs),
    /// Jacobian checks and the exact two-sample bound sandwich.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Random pairs for the sandwich check.
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Monte Carlo check of the sign-sample moments, optionally the ideal ML estimator.
    Mc {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 16)]
        n_sub: usize,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also run the ideal-receiver ML estimator against its CRLB.
        #[arg(long)]
        ml: bool,
    },
    /// ADC power of a converter, `beta (2^b - 1) f_s`.
    Adc {
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 1)]
        bits: u32,
        /// Sampling rate in Hz; defaults to `2 B kappa`.
        #[arg(long)]
        fs: Option<f64>,
        #[arg(long, default_value_t = 1)]
        kappa: u32,
        #[arg(long)]
        bandwidth: Option<f64>,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct ScenarioArgs {
    /// key=value file with defaults for any of these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Code length in chips.
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    code_seed: Option<u64>,
    /// SNR in dB; repeat for several.
    #[arg(long = "snr-db", allow_hyphen_values = true)]
    snr_db: Vec<f64>,
    #[arg(long)]
    kappa_min: Option<u32>,
    #[arg(long)]
    kappa_max: Option<u32>,
    /// Delay in seconds.
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tail_periods: Option<usize>,
    #[arg(long)]
    chip_rate: Option<f64>,
    #[arg(long)]
    bandwidth: Option<f64>,
}

struct Scenario {
    pilot: PilotConfig,
    snr_db: Vec<f64>,
    kappas: Vec<u32>,
    tau: f64,
    out: PathBuf,
}

fn lookup<T: std::str::FromStr>(file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    file.get(key)
        .map(|v| v.parse().map_err(|_| Error::Domain(format!("config: bad value '{v}' for {key}"))))
        .transpose()
}

impl ScenarioArgs {
    fn resolve(&self, default_snr: &[f64]) -> Result<Scenario> {
        let file = match &self.config {
            Some(p) => parse_config(&std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?)?,
            None => BTreeMap::new(),
        };
        let m = self.m.or(lookup(&file, "M")?).unwrap_or(1023);
        let seed = self.code_seed.or(lookup(&file, "code-seed")?).unwrap_or(DEFAULT_CODE_SEED);
        let chip_rate = self.chip_rate.or(lookup(&file, "chip-rate")?).unwrap_or(GPS_CHIP_RATE);
        let bandwidth = self.bandwidth.or(lookup(&file, "bandwidth")?).unwrap_or(chip_rate);
        let tail = self.tail_periods.or(lookup(&file, "tail-periods")?).unwrap_or(DEFAULT_TAIL_PERIODS);
        let kmin = self.kappa_min.or(lookup(&file, "kappa-min")?).unwrap_or(1);
        let kmax = self.kappa_max.or(lookup(&file, "kappa-max")?).unwrap_or(5);
        let tau = self.tau.or(lookup(&file, "tau")?).unwrap_or(0.0);
        let out = self.out.clone().or(lookup(&file, "out")?).unwrap_or_else(|| PathBuf::from("."));
        let snr_db = if !self.snr_db.is_empty() {
            self.snr_db.clone()
        } else if let Some(list) = file.get("snr-db") {
            list.split(',')
                .map(|v| v.trim().parse().map_err(|_| Error::Domain(format!("config: bad SNR '{v}'"))))
                .collect::<Result<_>>()?
        } else {
            default_snr.to_vec()
        };
        if kmin < 1 || kmax < kmin {
            return Err(Error::Domain(format!("bad oversampling range {kmin}..={kmax}")));
        }
        let pilot = PilotConfig::random(m, seed, chip_rate, bandwidth, 1, tail)?;
        Ok(Scenario { pilot, snr_db, kappas: (kmin..=kmax).collect(), tau, out })
    }
}

fn default_sweep_snr() -> Vec<f64> {
    let mut v: Vec<f64> = GAMMA_SWEEP_SNR_DB.iter().chain(&TAU_SWEEP_SNR_DB).copied().collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn sweep(args: &ScenarioArgs) -> Result<bool> {
    let sc = args.resolve(&default_sweep_snr())?;
    let spec = SweepSpec::new(sc.snr_db, sc.kappas, sc.pilot, sc.tau, sc.out)?;
    for line in spec.describe() {
        println!("# {line}");
    }
    let points = run_sweep(&spec)?;
    let paths = emit_sweep(&spec, &points)?;
    for p in &points {
        match &p.error {
            None => println!(
                "snr_db={} kappa={} chi_gamma_db={:.4} chi_tau_db={:.4}",
                p.snr_db, p.kappa, p.chi_gamma_db, p.chi_tau_db
            ),
            Some(e) => println!("snr_db={} kappa={} status=failed error=\"{e}\"", p.snr_db, p.kappa),
        }
    }
    for path in &paths {
        println!("table={}", path.display());
    }
    if spec.kappa_list.contains(&3) {
        match equal_complexity_loss_from_points(&points) {
            Ok(v) => println!("equal_complexity_loss_db={v:.4}"),
            Err(e) => println!("# equal-complexity loss unavailable: {e}"),
        }
    }
    Ok(points.iter().all(|p| p.is_valid()))
}

fn validate(args: &ScenarioArgs, trials: usize) -> Result<bool> {
    let sc = args.resolve(&[0.0])?;
    let mut ok = true;
    for &kappa in &sc.kappas {
        let cfg = sc.pilot.with_kappa(kappa)?;
        for &snr in &sc.snr_db {
            let theta = ChannelParams::from_snr_db(snr, sc.tau)?;
            let rep = jacobian_checks(&cfg, &theta)?;
            let pass = rep.max() <= 1e-5;
            ok &= pass;
            println!(
                "check=jacobian snr_db={snr} kappa={kappa} signal_rel_err={:.3e} mean_rel_err={:.3e} pass={pass}",
                rep.signal, rep.mean
            );
        }
    }
    // random pairs on the kappa >= 2 grids
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(sc.pilot.code_seed().unwrap_or(0));
    let mut worst = f64::INFINITY;
    let mut failures = 0usize;
    for _ in 0..trials {
        let kappa = rng.random_range(2..=3u32);
        let cfg = sc.pilot.with_kappa(kappa)?;
        let gamma = 10f64.powf(rng.random_range(-1.5..1.0));
        let tau = rng.random_range(-0.5..0.5) * cfg.chip_period();
        let theta = ChannelParams::new(gamma, tau)?;
        let start = rng.random_range(0..cfg.n_samples() - 1);
        let case = PairCase::from_pilot(&cfg, &theta, start, 1)?;
        let rep = exact_bound_check_n2(&case)?;
        worst = worst.min(rep.min_gap_eigenvalue);
        if !rep.holds {
            failures += 1;
        }
    }
    ok &= failures == 0;
    println!("check=pair_sandwich trials={trials} failures={failures} min_gap_eigenvalue={worst:.3e}");
    Ok(ok)
}

fn monte_carlo(args: &ScenarioArgs, n_sub: usize, draws: usize, seed: u64, ml: bool) -> Result<bool> {
    let sc = args.resolve(&[0.0])?;
    let mut ok = true;
    for &kappa in &sc.kappas {
        let cfg = sc.pilot.with_kappa(kappa)?;
        for &snr in &sc.snr_db {
            let theta = ChannelParams::from_snr_db(snr, sc.tau)?;
            let rep = mc_moment_check(&cfg, &theta, n_sub.min(cfg.n_samples()), draws, seed)?;
            let pass = rep.within(4.0);
            ok &= pass;
            println!(
                "check=moments snr_db={snr} kappa={kappa} draws={} mean_err={:.3e} mean_se={:.3e} cov_err={:.3e} cov_se={:.3e} pass={pass}",
                rep.draws, rep.max_abs_z_mean_err, rep.mean_std_error, rep.max_abs_z_cov_err, rep.cov_std_error
            );
            if ml {
                let step = cfg.chip_period() / 64.0;
                let r = ideal_ml_estimate(&cfg, &theta, draws.min(10_000), seed, step)?;
                println!(
                    "check=ideal_ml snr_db={snr} kappa={kappa} rmse_gamma={:.4e} crlb_gamma={:.4e} rmse_tau={:.4e} crlb_tau={:.4e} boundary_fraction={:.4}",
                    r.rmse_gamma, r.crlb_gamma, r.rmse_tau, r.crlb_tau, r.boundary_fraction
                );
            }
        }
    }
    Ok(ok)
}

fn adc(beta: f64, bits: u32, fs: Option<f64>, kappa: u32, bandwidth: Option<f64>) -> Result<bool> {
    let fs = fs.unwrap_or_else(|| 2.0 * bandwidth.unwrap_or(GPS_CHIP_RATE) * f64::from(kappa));
    let model = AdcModel::new(beta, bits, fs)?;
    println!("beta={beta} bits={bits} fs_hz={fs} power_w={:.6e}", adc_power(&model)?);
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Validate { scenario, trials } => validate(scenario, *trials),
        Command::Mc { scenario, n_sub, draws, seed, ml } => monte_carlo(scenario, *n_sub, *draws, *seed, *ml),
        Command::Adc { beta, bits, fs, kappa, bandwidth } => adc(*beta, *bits, *fs, *kappa, *bandwidth),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
