//! `pbce` command line: pilot codebook design, simulation sweeps, codebook
//! inspection and the data behind the Doppler and coherence curves.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pbce::config::RunConfig;
use pbce::error::{Error, Result};
use pbce::geometry::{codebook_slot, doppler_at_position, doppler_index, PositionState};
use pbce::pilot_design::{
    build_codebook, build_codebook_with, equidistant_pattern, joint_design, random_pattern, random_search_design,
    Codebook, DesignMethod, DesignTrace,
};
use pbce::random::{stream_id, stream_rng};
use pbce::sim::{run_monte_carlo, write_csv, PilotBank, PilotSource};
use pbce::coherence::CoherenceEvaluator;

#[derive(Parser)]
#[command(name = "pbce", version, about = "Position-based pilot design and compressed channel estimation for high-speed-rail OFDM")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Run configuration (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: fig4, fig6, fig7, fig8, fig9, fig10, fig11.
    #[arg(long)]
    preset: Option<String>,
    /// Master seed (overrides the configuration).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Design the pilot codebook (one pattern per Doppler bin).
    Design {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Design iterations (a multiple of the pilot count).
        #[arg(long)]
        iters: Option<usize>,
        /// Codebook output path.
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration trace CSV (default: next to the codebook).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the Monte Carlo sweep and write the results table.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Designed codebook; designed in-process when omitted.
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print one codebook entry.
    Inspect {
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        slot: usize,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Doppler shift and codebook slot along the track.
    Doppler {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Number of intervals between the cell edges.
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean average coherence per iteration for the design methods.
    Coherence {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        iters: Option<usize>,
        /// Independent runs to average.
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the effective configuration as JSON.
    Config {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
            let cfg: RunConfig = serde_json::from_str(&text).map_err(Error::from)?;
            cfg
        }
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Writes to a sibling temporary file, then renames over `path`.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Validation(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn read_codebook(path: &Path) -> Result<Codebook<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
    Codebook::from_json(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn provenance_lines(cfg: &RunConfig) -> Vec<(&'static str, String)> {
    vec![
        ("tool", format!("pbce {}", env!("CARGO_PKG_VERSION"))),
        ("config_hash", cfg.config_hash()),
        ("seed", cfg.seed.to_string()),
    ]
}

fn trace_csv(cfg: &RunConfig, codebook: &Codebook<f64>, traces: &[DesignTrace<f64>]) -> String {
    let mut s = String::new();
    for (k, v) in provenance_lines(cfg) {
        let _ = writeln!(s, "# {k}: {v}");
    }
    s.push_str("slot,x,iteration,previous_objective,candidate_objective,accepted_objective,occupation_max\n");
    for (entry, trace) in codebook.entries.iter().zip(traces) {
        for r in &trace.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                entry.slot, entry.x, r.iteration, r.previous_objective, r.candidate_objective, r.accepted_objective, r.occupation_max
            );
        }
    }
    s
}

fn design(args: &ConfigArgs, iters: Option<usize>, out: &Path, trace: Option<&Path>) -> Result<()> {
    let mut cfg = load_config(args)?;
    if let Some(i) = iters {
        cfg.design.iters = i;
    }
    cfg.validate()?;
    let ch = cfg.channel_config()?;
    let (codebook, traces) = build_codebook::<f64>(&ch, &cfg.design_params()?, cfg.seed, &cfg.config_hash())?;
    write_atomic(out, codebook.to_json()?.as_bytes())?;
    let trace_path = trace.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("trace.csv"));
    write_atomic(&trace_path, trace_csv(&cfg, &codebook, &traces).as_bytes())?;
    eprintln!(
        "wrote {} ({} entries) and {}",
        out.display(),
        codebook.entries.len(),
        trace_path.display()
    );
    Ok(())
}

fn random_search_seed(seed: u64) -> u64 {
    stream_id(&[seed, 0x7273])
}

fn simulate(args: &ConfigArgs, codebook: Option<&Path>, trials: Option<usize>, out: &Path) -> Result<()> {
    let mut cfg = load_config(args)?;
    if let Some(t) = trials {
        cfg.sim.trials = t;
    }
    cfg.validate()?;
    let sim = cfg.sim_config()?;
    let ch = &sim.channel;
    let hash = cfg.config_hash();
    let mut bank = PilotBank::<f64>::default();
    if sim.pilot_sources.contains(&PilotSource::Algorithm1) {
        let cb = match codebook {
            Some(path) => read_codebook(path)?,
            None => build_codebook(ch, &cfg.design_params()?, cfg.seed, &hash)?.0,
        };
        if cb.subcarriers != ch.subcarriers || cb.pilots != cfg.design.pilots || cb.doppler_half != ch.doppler_half() {
            return Err(Error::Validation(format!(
                "codebook (K={}, P={}, M={}) does not match the configuration (K={}, P={}, M={})",
                cb.subcarriers,
                cb.pilots,
                cb.doppler_half,
                ch.subcarriers,
                cfg.design.pilots,
                ch.doppler_half()
            )));
        }
        bank.algorithm1 = Some(cb);
    }
    if sim.pilot_sources.contains(&PilotSource::RandomSearch) {
        let params = cfg.random_search_params()?;
        let seed = random_search_seed(cfg.seed);
        bank.random_search = Some(build_codebook_with(ch, &params, seed, &hash, DesignMethod::RandomSearch)?.0);
    }
    let rows = run_monte_carlo(&sim, &bank)?;
    let mut prov = provenance_lines(&cfg);
    if let Some(cb) = &bank.algorithm1 {
        prov.push(("codebook_config_hash", cb.provenance.config_hash.clone()));
    }
    prov.push(("mse", "sum over packet of |H_hat - H|^2 on the diagonal / sum of |H|^2".into()));
    prov.push(("snr", "unit symbol energy / noise variance, unitary DFT".into()));
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows, &prov)?;
    write_atomic(out, &buf)?;
    eprintln!("wrote {} ({} rows)", out.display(), rows.len());
    Ok(())
}

fn inspect(path: &Path, slot: usize, json: bool) -> Result<()> {
    let cb = read_codebook(path)?;
    let entry = cb.entry(slot)?;
    let p = &entry.pattern;
    if json {
        let value = serde_json::json!({
            "slot": entry.slot,
            "x": entry.x,
            "f_d_range_hz": [entry.f_d_range.0, entry.f_d_range.1],
            "placement": p.placement,
            "power_level_index": p.level_assignment,
            "power_levels": p.power_levels,
        });
        println!("{}", serde_json::to_string_pretty(&value).map_err(Error::from)?);
    } else {
        println!("slot {} (x = {})", entry.slot, entry.x);
        println!("f_d range: [{}, {}] Hz", entry.f_d_range.0, entry.f_d_range.1);
        println!("pilots: {}", p.len());
        println!("power levels: {:?}", p.power_levels);
        println!("placement: {:?}", p.placement);
        println!("level index: {:?}", p.level_assignment);
    }
    Ok(())
}

fn doppler(args: &ConfigArgs, points: usize, out: &Path) -> Result<()> {
    let cfg = load_config(args)?;
    cfg.validate()?;
    if points == 0 {
        return Err(Error::Validation("--points must be at least 1".into()));
    }
    let geom = cfg.geometry_config()?;
    let ch = cfg.channel_config()?;
    let mut s = String::new();
    for (k, v) in provenance_lines(&cfg) {
        let _ = writeln!(s, "# {k}: {v}");
    }
    s.push_str("alpha_m,f_d_hz,x,slot\n");
    for alpha in cfg.track_positions(points)? {
        let state = PositionState::new(alpha, cfg.speed_mps(), &geom)?;
        let f_d = doppler_at_position(&state, &geom);
        let x = doppler_index(f_d, ch.t_d_s, ch.f_dmax_hz)?;
        let _ = writeln!(s, "{alpha},{f_d},{x},{}", codebook_slot(x, ch.doppler_half())?);
    }
    write_atomic(out, s.as_bytes())
}

fn coherence_curve(args: &ConfigArgs, iters: Option<usize>, seeds: usize, out: &Path) -> Result<()> {
    let mut cfg = load_config(args)?;
    if let Some(i) = iters {
        cfg.design.iters = i;
    }
    cfg.validate()?;
    if seeds == 0 {
        return Err(Error::Validation("--seeds must be at least 1".into()));
    }
    let ch = cfg.channel_config()?;
    let params = cfg.design_params::<f64>()?;
    let rs_params = cfg.random_search_params::<f64>()?;
    let eval = CoherenceEvaluator::for_config(&ch);
    let runs: Vec<Result<(Vec<f64>, Vec<f64>, f64)>> = {
        use rayon::prelude::*;
        (0..seeds as u64)
            .into_par_iter()
            .map(|s| {
                let mut rng = stream_rng(cfg.seed, stream_id(&[s, 1]));
                let init = random_pattern(ch.subcarriers, params.pilots, &params.power_levels, &mut rng)?;
                let (_, joint) = joint_design(&init, &ch, &params, &mut rng)?;
                let mut rng = stream_rng(cfg.seed, stream_id(&[s, 2]));
                let (_, rs) = random_search_design(&ch, &rs_params, &mut rng)?;
                let mut rng = stream_rng(cfg.seed, stream_id(&[s, 3]));
                let eq = equidistant_pattern::<f64, _>(ch.subcarriers, params.pilots, &mut rng)?;
                let mu_eq = eval.evaluate(&eq.placement, &eq.energies(), &params.coherence);
                Ok((
                    joint.records.iter().map(|r| r.accepted_objective).collect(),
                    rs.records.iter().map(|r| r.accepted_objective).collect(),
                    mu_eq,
                ))
            })
            .collect()
    };
    let mut collected = Vec::with_capacity(runs.len());
    for r in runs {
        collected.push(r?);
    }
    let n = collected.len() as f64;
    let len = params.iters.max(rs_params.iters);
    let mean_at = |pick: &dyn Fn(&(Vec<f64>, Vec<f64>, f64)) -> &Vec<f64>, i: usize| {
        collected.iter().map(|c| {
            let v = pick(c);
            v[i.min(v.len() - 1)]
        }).sum::<f64>() / n
    };
    let eq_mean = collected.iter().map(|c| c.2).sum::<f64>() / n;
    let mut s = String::new();
    for (k, v) in provenance_lines(&cfg) {
        let _ = writeln!(s, "# {k}: {v}");
    }
    let _ = writeln!(s, "# runs: {seeds}");
    s.push_str("iteration,algorithm1,random_search,equidistant\n");
    for i in 0..len {
        let _ = writeln!(s, "{},{},{},{}", i + 1, mean_at(&|c| &c.0, i), mean_at(&|c| &c.1, i), eq_mean);
    }
    write_atomic(out, s.as_bytes())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Design { cfg, iters, out, trace } => design(cfg, *iters, out, trace.as_deref()),
        Command::Simulate { cfg, codebook, trials, out } => simulate(cfg, codebook.as_deref(), *trials, out),
        Command::Inspect { codebook, slot, json } => inspect(codebook, *slot, *json),
        Command::Doppler { cfg, points, out } => doppler(cfg, *points, out),
        Command::Coherence { cfg, iters, seeds, out } => coherence_curve(cfg, *iters, *seeds, out),
        Command::Config { cfg } => {
            let cfg = load_config(cfg)?;
            cfg.validate()?;
            print!("{}", cfg.to_json()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
