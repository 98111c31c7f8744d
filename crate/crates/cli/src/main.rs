use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use lrp::blocks::enumerate::{block_counts, coarse_connectivity_audit, DEFAULT_ENUMERATION_CAP};
use lrp::blocks::ftree::{binomial, f_tree, forward_degree_vectors, realizable, AUDIT_CAP};
use lrp::blocks::sampled_decomposition_audit;
use lrp::cluster::RunOptions;
use lrp::experiment::{self, csv_float, write_file, AuxConfig, ExperimentSpec, Kind};
use lrp::graph::{GraphModel, Vertex};
use lrp::iso::{anchored_dimension_estimate, boundary, connected_sets, varopoulos_sweep, IsoError};
use lrp::kernel::KernelSpec;
use lrp::oracle::{verify_estimators, MicroWindow};
use lrp::sampler::{Method, Sampler};

type Error = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(name = "lrp", version, about = "Long-range percolation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: current directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn aux(&self) -> Result<AuxConfig, Error> {
        let mut c = match &self.config {
            Some(p) => AuxConfig::load(p)?,
            None => AuxConfig::default(),
        };
        c.seed = self.seed.or(c.seed);
        c.workers = self.workers.or(c.workers);
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Truncated one-arm probabilities over r_list.
    OneArm(Common),
    /// Finite-cluster volume tail over k_list.
    ClusterTail(Common),
    /// Escape probabilities of finite sets.
    SetEscape(Common),
    /// Giant-cluster fraction at rho.
    Giant(Common),
    /// Boundary ratios of connected Z^2 sets and the Varopoulos sweep.
    IsoAudit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long)]
        r_max: Option<u32>,
    },
    /// Anchored dimension estimate on the first sample with an escaping origin.
    IsoDim(Common),
    /// Block-decomposition invariants over sampled finite clusters.
    BlocksAudit(Common),
    /// Closed-block counts by boundary size.
    Peierls {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Forward-degree vector tables.
    Ftrees {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        b_max: Option<usize>,
    },
    /// Monte Carlo estimators against exact enumeration on a micro-window.
    OracleVerify {
        #[command(flatten)]
        common: Common,
        /// Rectangle `WxH` anchored at the origin.
        #[arg(long)]
        window: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Degree profile, tail degrees and the length-divergence flag.
    KernelAudit(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::OneArm(c) => estimator(Kind::OneArm, &c),
        Command::ClusterTail(c) => estimator(Kind::ClusterTail, &c),
        Command::SetEscape(c) => estimator(Kind::SetEscape, &c),
        Command::Giant(c) => estimator(Kind::Giant, &c),
        Command::IsoAudit { common, cap, r_max } => iso_audit(&common, cap, r_max),
        Command::IsoDim(c) => iso_dim(&c),
        Command::BlocksAudit(c) => blocks_audit(&c),
        Command::Peierls { common, cap } => peierls(&common, cap),
        Command::Ftrees { common, b_max } => ftrees(&common, b_max),
        Command::OracleVerify { common, window, alpha, beta, trials } => {
            oracle_verify(&common, window.as_deref(), alpha, beta, trials)
        }
        Command::KernelAudit(c) => kernel_audit(&c),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("lrp: {e}");
            ExitCode::from(2)
        }
    }
}

fn json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn estimator(kind: Kind, common: &Common) -> Result<bool, Error> {
    let path = common.config.as_ref().ok_or("--config is required")?;
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    let map = value.as_object_mut().ok_or("configuration must be a JSON object")?;
    match map.get("kind").and_then(|k| k.as_str()) {
        Some(k) if k != kind.name() => return Err(format!("configuration kind is {k}, subcommand is {}", kind.name()).into()),
        Some(_) => {}
        None => {
            map.insert("kind".into(), kind.name().into());
        }
    }
    if let Some(s) = common.seed {
        map.insert("run.seed".into(), s.into());
    }
    if let Some(w) = common.workers {
        map.insert("run.workers".into(), w.into());
    }
    let spec = ExperimentSpec::parse(&value.to_string())?;
    let result = experiment::run(&spec)?;
    let (csv, json_path) = experiment::emit(&result, &common.out_dir())?;
    println!("wrote {} and {}", csv.display(), json_path.display());
    if let Some(fit) = &result.fit {
        let expected = result.expected_exponent.map_or("n/a".to_string(), |e| format!("{e}"));
        println!("slope {:.4} (expected {expected})", fit.slope);
    }
    if let Some(e) = &result.fit_error {
        println!("fit: {e}");
    }
    match result.pass {
        Some(true) => println!("PASS"),
        Some(false) => println!("FAIL"),
        None => {}
    }
    Ok(result.exit_code() == 0)
}

fn iso_audit(common: &Common, cap: Option<usize>, r_max: Option<u32>) -> Result<bool, Error> {
    let cfg = common.aux()?;
    let cap = cap.or(cfg.cap).unwrap_or(8);
    let r_max = r_max.or(cfg.r_max).unwrap_or(4);
    let model = GraphModel::lattice(2)?;
    let mut csv = String::from("set_id,size,boundary,ratio\n");
    for (i, a) in connected_sets(cap).iter().enumerate() {
        let b = boundary(&model, a).len();
        let _ = writeln!(csv, "{i},{},{b},{}", a.len(), csv_float(b as f64 / (a.len() as f64).sqrt()));
    }
    let sweep = varopoulos_sweep(cap, r_max);
    let dir = common.out_dir();
    write_file(&dir.join("iso-audit.csv"), &csv)?;
    write_file(&dir.join("iso-audit.json"), &json(&sweep))?;
    println!(
        "{} sets, {} checks, {} violations, c_iso = {:.6}, max ratio = {:.6}, two-way mismatches = {}",
        sweep.sets, sweep.checks, sweep.violations, sweep.c_iso, sweep.max_ratio, sweep.two_way_mismatches
    );
    Ok(sweep.violations == 0 && sweep.two_way_mismatches == 0)
}

fn sampler_from(cfg: &AuxConfig, fallback_r: u32) -> Result<(GraphModel, Sampler), Error> {
    let model = cfg.model()?;
    let kernel = cfg.kernel(&model)?;
    let window = cfg.window(&model, fallback_r)?;
    let sampler = Sampler::new(Arc::new(window), &kernel)?;
    Ok((model, sampler))
}

fn iso_dim(common: &Common) -> Result<bool, Error> {
    let cfg = common.aux()?;
    let r_top = cfg.schedule.iter().copied().max().unwrap_or(8);
    let (_, sampler) = sampler_from(&cfg, r_top)?;
    let schedule = if cfg.schedule.is_empty() {
        let r_in = sampler.window().r_in();
        std::iter::successors(Some(1u32), |r| Some(r * 2)).take_while(|&r| r <= r_in).collect()
    } else {
        cfg.schedule.clone()
    };
    let seed = cfg.seed.unwrap_or(0);
    let attempts = cfg.trials.unwrap_or(100);
    let origin = sampler.window().center();
    for t in 0..attempts {
        let config = sampler.sample_configuration(seed, t, Method::ShellSkip)?;
        match anchored_dimension_estimate(&sampler, &config, origin, &schedule) {
            Ok(est) => {
                let mut csv = String::from("r,size,edge_boundary\n");
                for p in &est.points {
                    let _ = writeln!(csv, "{},{},{}", p.r, p.size, p.edge_boundary);
                }
                let dir = common.out_dir();
                write_file(&dir.join("iso-dim.csv"), &csv)?;
                let summary = serde_json::json!({ "trial": t, "seed": seed, "estimate": est });
                write_file(&dir.join("iso-dim.json"), &json(&summary))?;
                println!("trial {t}: d_hat = {:.4}, slope = {:.4}, min ratio = {:.4}", est.d_hat, est.slope, est.min_ratio);
                return Ok(true);
            }
            Err(IsoError::NotEscaping(_)) | Err(IsoError::TooFewPoints(_)) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(format!("no usable escaping origin cluster in {attempts} samples").into())
}

fn blocks_audit(common: &Common) -> Result<bool, Error> {
    let cfg = common.aux()?;
    let (_, sampler) = sampler_from(&cfg, 8)?;
    let r_bound = cfg.r_bound.unwrap_or(2);
    let sampled = sampled_decomposition_audit(
        &sampler,
        cfg.trials.unwrap_or(1000),
        cfg.seed.unwrap_or(0),
        cfg.workers.unwrap_or(1),
        r_bound,
    )?;
    let coarse = coarse_connectivity_audit(cfg.cap.unwrap_or(DEFAULT_ENUMERATION_CAP), 2, r_bound);
    let summary = serde_json::json!({ "sampled": sampled, "enumerated": coarse, "r_bound": r_bound });
    write_file(&common.out_dir().join("blocks-audit.json"), &json(&summary))?;
    println!(
        "sampled: {} configurations, {} finite clusters, {} failures, max boundary R = {}",
        sampled.samples, sampled.finite_clusters, sampled.failures, sampled.max_boundary_r
    );
    println!(
        "enumerated: {} closed blocks, max boundary R = {}, max complement R = {}",
        coarse.blocks, coarse.max_boundary_radius, coarse.max_complement_radius
    );
    if sampled.finite_clusters == 0 {
        println!("warning: no finite clusters sampled; the sampled audit is vacuous");
    }
    Ok(sampled.failures == 0 && coarse.boundary_failures == 0 && coarse.complement_failures == 0)
}

fn peierls(common: &Common, cap: Option<usize>) -> Result<bool, Error> {
    let cfg = common.aux()?;
    let cap = cap.or(cfg.cap).unwrap_or(DEFAULT_ENUMERATION_CAP);
    let rows = block_counts(cap)?;
    let mut csv = String::from("m,count,log_count_over_m\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{}", r.m, r.count, csv_float(r.log_count_over_m));
    }
    write_file(&common.out_dir().join("peierls.csv"), &csv)?;
    print!("{csv}");
    Ok(true)
}

fn ftrees(common: &Common, b_max: Option<usize>) -> Result<bool, Error> {
    let cfg = common.aux()?;
    let b_max = b_max.or(cfg.cap).unwrap_or(6).min(AUDIT_CAP);
    let mut table = String::from("b,f,realizable,tree\n");
    let mut summary = String::from("b,count,bound,realizable\n");
    for b in 1..=b_max {
        let all = forward_degree_vectors(b);
        let mut n_real = 0;
        for f in &all {
            let fs: Vec<String> = f.iter().map(|x| x.to_string()).collect();
            let tree = f_tree(f).map_or(String::new(), |t| {
                t.iter().map(|(i, j)| format!("{i}-{j}")).collect::<Vec<_>>().join(" ")
            });
            n_real += realizable(f) as usize;
            let _ = writeln!(table, "{b},{},{},{tree}", fs.join(" "), realizable(f));
        }
        let bound = binomial(2 * b as u64 - 2, b as u64 - 1);
        let _ = writeln!(summary, "{b},{},{bound},{n_real}", all.len());
    }
    let dir = common.out_dir();
    write_file(&dir.join("ftrees.csv"), &table)?;
    write_file(&dir.join("ftrees-summary.csv"), &summary)?;
    print!("{summary}");
    Ok(true)
}

fn parse_rectangle(s: &str) -> Result<(i32, i32), Error> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("window must look like 2x3, got {s}"))?;
    Ok((w.trim().parse()?, h.trim().parse()?))
}

fn oracle_verify(
    common: &Common,
    window: Option<&str>,
    alpha: Option<f64>,
    beta: Option<f64>,
    trials: Option<u64>,
) -> Result<bool, Error> {
    let cfg = common.aux()?;
    let (w, h) = parse_rectangle(window.unwrap_or("2x3"))?;
    let model = GraphModel::lattice(2)?;
    let kernel = KernelSpec::power_law(&model, alpha.or(cfg.alpha).unwrap_or(1.5), beta.or(cfg.beta).unwrap_or(2.0))?;
    let vs: Vec<Vertex> = (0..w).flat_map(|x| (0..h).map(move |y| Vertex::xy(x, y))).collect();
    let micro = MicroWindow::new(&model, &kernel, Vertex::ORIGIN, &vs)?;
    let opts = RunOptions {
        trials: trials.or(cfg.trials).unwrap_or(100_000),
        seed: cfg.seed.unwrap_or(0),
        workers: cfg.workers.unwrap_or(1),
    };
    let r_list = if cfg.r_list.is_empty() { vec![1, 2] } else { cfg.r_list.clone() };
    let k_list = if cfg.k_list.is_empty() { (1..(vs.len() as u64).min(6)).collect() } else { cfg.k_list.clone() };
    let set: Vec<Vertex> = if cfg.set_vertices.is_empty() {
        vec![Vertex::ORIGIN, Vertex::xy(w - 1, h - 1)]
    } else {
        cfg.set_vertices.iter().map(|c| model.vertex(c)).collect::<Result<_, _>>()?
    };
    let lines = verify_estimators(&micro, &r_list, &k_list, &set, cfg.rho.unwrap_or(0.5), opts, 3.0)?;
    let mut ok = true;
    for l in &lines {
        println!(
            "{} {}: exact {:.6e}, estimate {:.6e}, sigma {:.3e}",
            if l.pass { "PASS" } else { "FAIL" },
            l.event,
            l.exact,
            l.estimate,
            l.sigma
        );
        ok &= l.pass;
    }
    let audit = micro.partition_audit()?;
    let part = audit.passed(1e-10);
    println!(
        "{} partition: sum over {} decompositions {:.15e}, P(FINITE) {:.15e}, difference {:.3e}",
        if part { "PASS" } else { "FAIL" },
        audit.decompositions,
        audit.lhs,
        audit.finite,
        audit.difference
    );
    let ub = audit.union_bound.iter().all(|u| u.holds);
    println!("{} union bound over {} (r, k) pairs", if ub { "PASS" } else { "FAIL" }, audit.union_bound.len());
    println!("{} split identity, max error {:.3e}", if audit.split_max_error <= 1e-10 { "PASS" } else { "FAIL" }, audit.split_max_error);
    let summary = serde_json::json!({ "estimators": lines, "partition": audit });
    write_file(&common.out_dir().join("oracle-verify.json"), &json(&summary))?;
    Ok(ok && part)
}

fn kernel_audit(common: &Common) -> Result<bool, Error> {
    let cfg = common.aux()?;
    let model = cfg.model()?;
    let kernel = cfg.kernel(&model)?;
    let r_max = cfg.r_max.unwrap_or(1024);
    let profile = kernel.degree_profile(&model, r_max)?;
    let mut csv = String::from("r,degree,tail,tail_lower,tail_upper,length_partial\n");
    for row in &profile.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            row.r,
            csv_float(row.degree),
            csv_float(row.tail.value()),
            csv_float(row.tail.lower()),
            csv_float(row.tail.upper()),
            csv_float(row.length_partial)
        );
    }
    let dir: &Path = &common.out_dir();
    write_file(&dir.join("kernel-audit.csv"), &csv)?;
    write_file(&dir.join("kernel-audit.json"), &json(&profile))?;
    for (r, q) in &profile.doublings {
        println!("T({})/T({r}) = {q:.4}", 2 * r);
    }
    println!("length divergent: {}", profile.length_divergent);
    Ok(true)
}
