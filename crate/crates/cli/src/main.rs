mod args;
mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use altmin_core::experiments::{self, default_sample_size, write_compare_csv, write_sweep_csv, SweepConfig};
use altmin_core::io::{config_from_manifest, load_matrix, manifest_entries, parse_key_values, save_matrix, write_manifest};
use altmin_core::svg::{Chart, Series};
use altmin_core::synth::Instance;
use altmin_core::{
    altmin_dict, gen_samples, perturb_dictionary, AccuracySchedule, AltMinConfig, CoefficientMatrix, Dictionary,
    Error, ModelConfig, Oracle, Outcome, PerturbConfig, Result, SampleSet, SolverConfig, UNIT_TOL,
};

use args::{CheckArgs, Cli, Command, CompareArgs, ModelArgs, RunArgs, SolverArg, SolverArgs, SweepArgs};

const EXIT_INVALID: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_RANK: u8 = 4;

fn main() -> ExitCode {
    let raw = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    let cli = Cli::parse_from(raw);
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail(&invalid("threads", "must be at least 1"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(&cli, a),
        Command::Run(a) => cmd_run(&cli, a),
        Command::Compare(a) => cmd_compare(&cli, a),
        Command::Sweep(a) => cmd_sweep(&cli, a),
        Command::Check(a) => cmd_check(&cli, a),
    };
    match result {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(e))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig { .. } | Error::ShapeMismatch { .. } => EXIT_INVALID,
        Error::Io(_) | Error::Parse { .. } => EXIT_IO,
        Error::RankDeficient { .. } => EXIT_RANK,
        _ => 1,
    }
}

fn invalid(field: &'static str, reason: &str) -> Error {
    Error::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

fn model_config(m: &ModelArgs, seed: u64) -> Result<ModelConfig> {
    let cfg = ModelConfig::new(m.d, m.r, m.n, m.s, seed).with_law(m.law);
    cfg.validate()?;
    Ok(cfg)
}

fn output(out: &Option<PathBuf>, file: &str) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Box::new(BufWriter::new(File::create(dir.join(file))?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_gen(cli: &Cli, m: &ModelArgs) -> Result<ExitCode> {
    let cfg = model_config(m, cli.seed)?;
    let dir = cli.out.as_ref().ok_or_else(|| invalid("out", "gen needs an output directory"))?;
    std::fs::create_dir_all(dir)?;
    let inst = gen_samples(&cfg)?;
    save_matrix(&dir.join("Astar.txt"), inst.dictionary.matrix())?;
    save_matrix(&dir.join("Xstar.txt"), inst.coefficients.entries())?;
    save_matrix(&dir.join("Y.txt"), inst.samples.matrix())?;
    write_manifest(&dir.join("manifest.txt"), &manifest_entries(&cfg))?;
    Ok(ExitCode::SUCCESS)
}

fn load_instance(dir: &Path) -> Result<Instance> {
    let kv = parse_key_values(&std::fs::read_to_string(dir.join("manifest.txt"))?)?;
    let cfg = config_from_manifest(&kv)?;
    let a = load_matrix(&dir.join("Astar.txt"))?;
    let x = load_matrix(&dir.join("Xstar.txt"))?;
    let y = load_matrix(&dir.join("Y.txt"))?;
    let shapes = [
        ("Astar.txt", a.shape(), (cfg.d, cfg.r)),
        ("Xstar.txt", x.shape(), (cfg.r, cfg.n)),
        ("Y.txt", y.shape(), (cfg.d, cfg.n)),
    ];
    for (file, found, expected) in shapes {
        if found != expected {
            return Err(Error::Parse {
                line: 1,
                message: format!("{file} is {found:?}, manifest implies {expected:?}"),
            });
        }
    }
    Ok(Instance {
        dictionary: Dictionary::from_unit_columns(a, UNIT_TOL)?,
        coefficients: CoefficientMatrix::from_dense(x),
        samples: SampleSet::new(y, Some(cfg))?,
    })
}

fn instance(path: &Option<PathBuf>, m: &ModelArgs, seed: u64) -> Result<(ModelConfig, Instance)> {
    match path {
        Some(dir) => {
            let inst = load_instance(dir)?;
            let cfg = inst.samples.meta().cloned().expect("loaded instances carry their config");
            Ok((cfg, inst))
        }
        None => {
            let cfg = model_config(m, seed)?;
            Ok((cfg.clone(), gen_samples(&cfg)?))
        }
    }
}

fn parse_schedule(spec: &str, cfg: &ModelConfig) -> Result<AccuracySchedule> {
    let schedule = match spec {
        "off" => AccuracySchedule::off(),
        "theory" => AccuracySchedule::theory(cfg.s, cfg.mu1, cfg.d),
        _ => match spec.strip_prefix("fixed=").map(str::parse::<f64>) {
            Some(Ok(v)) => AccuracySchedule::fixed(v),
            _ => return Err(invalid("threshold", "expected off, theory or fixed=V")),
        },
    };
    schedule.validate()?;
    Ok(schedule)
}

fn solver_config(kind: SolverArg, s: usize, eps: f64) -> SolverConfig {
    match kind {
        SolverArg::Grades => SolverConfig::grades(s),
        SolverArg::L1 => SolverConfig::l1(s, eps),
    }
}

fn check_perturb(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(invalid("perturb", "must be finite and non-negative"))
    }
}

fn altmin_config(a: &SolverArgs, cfg: &ModelConfig, record_trace: bool) -> Result<AltMinConfig> {
    check_perturb(a.perturb)?;
    let alt = AltMinConfig {
        iters: a.iters,
        solver: solver_config(a.solver, cfg.s, a.eps),
        schedule: parse_schedule(&a.threshold, cfg)?,
        stop_tol: a.stop_tol,
        record_trace,
    };
    alt.validate()?;
    Ok(alt)
}

fn cmd_run(cli: &Cli, a: &RunArgs) -> Result<ExitCode> {
    let (cfg, inst) = instance(&a.instance, &a.model, cli.seed)?;
    let alt = altmin_config(&a.solver, &cfg, true)?;
    let a0 = perturb_dictionary(&inst.dictionary, PerturbConfig::for_model(a.solver.perturb, &cfg))?;
    let oracle = Oracle {
        dictionary: &inst.dictionary,
        coefficients: &inst.coefficients,
    };
    let report = altmin_dict(&inst.samples, &a0, &alt, Some(oracle))?;
    let mut out = output(&cli.out, "trace.csv")?;
    report.write_csv(&mut out, a.timing)?;
    out.flush()?;
    if let Some(path) = &a.svg {
        let mut points = vec![(0.0, report.initial_error.unwrap_or(f64::NAN))];
        points.extend(report.records.iter().map(|r| ((r.t + 1) as f64, r.dict_error.unwrap_or(f64::NAN))));
        let chart = Chart {
            title: format!("d={} r={} n={} s={}", cfg.d, cfg.r, cfg.n, cfg.s),
            x_label: "iteration".into(),
            y_label: "error".into(),
            log_y: true,
            series: vec![Series {
                label: "dict_error".into(),
                points,
            }],
        };
        std::fs::write(path, chart.render())?;
    }
    eprintln!(
        "initial_error={:e} final_error={:e} rounds={}",
        report.initial_error.unwrap_or(f64::NAN),
        report.final_error().unwrap_or(f64::NAN),
        report.records.len()
    );
    match report.outcome {
        Outcome::Aborted(e) => {
            eprintln!("aborted: {e}");
            Ok(ExitCode::from(exit_code(&e)))
        }
        _ => Ok(ExitCode::SUCCESS),
    }
}

fn cmd_compare(cli: &Cli, a: &CompareArgs) -> Result<ExitCode> {
    let base = model_config(&a.model, cli.seed)?;
    let alt = altmin_config(&a.solver, &base, false)?;
    let ns = if a.ns.is_empty() {
        let r = base.r;
        vec![r, 2 * r, 5 * r, 10 * r, default_sample_size(base.s, r)]
    } else {
        a.ns.clone()
    };
    if ns.contains(&0) {
        return Err(invalid("ns", "sample sizes must be positive"));
    }
    let rows = experiments::compare(&base, &ns, a.solver.perturb, &alt)?;
    let mut out = output(&cli.out, "compare.csv")?;
    write_compare_csv(&mut out, &rows)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(cli: &Cli, a: &SweepArgs) -> Result<ExitCode> {
    check_perturb(a.perturb)?;
    if !(a.success_tol > 0.0) {
        return Err(invalid("success_tol", "must be positive"));
    }
    if a.s == 0 {
        return Err(invalid("s", "must be at least 1"));
    }
    let cfg = SweepConfig {
        r_values: a.r_values.clone(),
        n_over_r: a.n_over_r.clone(),
        trials: a.trials,
        success_tol: a.success_tol,
        iters: a.iters,
        d_over_r: a.d_over_r,
        s: a.s,
        law: a.law,
        sigma: a.perturb,
        root_seed: cli.seed,
        solver: solver_config(a.solver, a.s, 1e-9),
        schedule: AccuracySchedule::off(),
    };
    let cells = experiments::sweep(&cfg)?;
    let mut out = output(&cli.out, "sweep.csv")?;
    write_sweep_csv(&mut out, &cells)?;
    out.flush()?;
    let join = |v: Vec<String>| v.join(",");
    let meta = [
        ("root_seed", cli.seed.to_string()),
        ("r_values", join(a.r_values.iter().map(|v| v.to_string()).collect())),
        ("n_over_r", join(a.n_over_r.iter().map(|v| v.to_string()).collect())),
        ("trials", a.trials.to_string()),
        ("d_over_r", a.d_over_r.to_string()),
        ("s", a.s.to_string()),
        ("nonzero_law", a.law.to_string()),
        ("iters", a.iters.to_string()),
        ("success_tol", format!("{:e}", a.success_tol)),
        ("perturb", a.perturb.to_string()),
        ("solver", format!("{:?}", a.solver).to_lowercase()),
        ("desk_scale", "true".into()),
        ("desk_scale_note", "d and s per r-curve are desk-scale substitutes".into()),
    ];
    match &cli.out {
        Some(dir) => write_manifest(&dir.join("sweep_meta.txt"), &meta)?,
        None => {
            for (k, v) in &meta {
                eprintln!("{k}={v}");
            }
        }
    }
    if let Some(path) = &a.svg {
        let chart = Chart {
            title: "success probability".into(),
            x_label: "n/r".into(),
            y_label: "probability".into(),
            log_y: false,
            series: a
                .r_values
                .iter()
                .map(|&r| Series {
                    label: format!("r={r}"),
                    points: experiments::curve(&cells, r).iter().map(|c| (c.n_over_r, c.prob())).collect(),
                })
                .collect(),
        };
        std::fs::write(path, chart.render())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(cli: &Cli, a: &CheckArgs) -> Result<ExitCode> {
    let (cfg, inst) = instance(&a.instance, &a.model, cli.seed)?;
    let report = experiments::check(&inst.dictionary, Some(&inst.coefficients), cfg.s, cfg.law)?;
    let mut out = output(&cli.out, "check.txt")?;
    write!(out, "{report}")?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}
