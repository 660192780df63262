//! `lidarnas`: scene synthesis, genome tooling and architecture search.

mod config;
mod external;
mod fail;
mod report;
mod scene;

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use lidarnas::analysis::{count_cost, write_csv, Calibration, ObjectiveWeights, SceneStats, CALIBRATION_ENV};
use lidarnas::arch::{deserialize, genome_hash, preset, serialize, validate, ArchGenome, Profile, LIDARNASNET_R, PRESET_NAMES};
use lidarnas::exec::ExecConfig;
use lidarnas::pcrep::io::{write_boxes, write_scan};
use lidarnas::pcrep::{Kind, View, DEFAULT_KEEP_FRACTION};
use lidarnas::search::{
    analyze_format_latency, analyze_mutation_variance, analyze_presence_regression, evolve_with, mutate, random_genome,
    read_history, write_record, CoverageEvaluator, EvolutionConfig, Evaluator, GridSubspace, HistoryRecord, Memoized,
    Mutator, Regression, SearchError, SearchSpaceMutator,
};
use lidarnas::synth::{synth_scene, SynthParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use config::{EvaluatorKind, SearchConfig, DEFAULT_TIMEOUT_S};
use external::ExternalEvaluator;
use fail::{Fail, OrFail};

const DEFAULT_REGION_HALF: f64 = 40.96;
const DEFAULT_Z: [f64; 2] = [-3.0, 3.0];

#[derive(Parser)]
#[command(name = "lidarnas", version, about = "Architecture search over point-cloud view/format trellises")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Framework,
    Search,
}

#[derive(clap::Args)]
struct RegionArgs {
    /// Half side of the square scene region, meters.
    #[arg(long, default_value_t = DEFAULT_REGION_HALF)]
    region_half: f64,
    #[arg(long, default_value_t = DEFAULT_Z[0], allow_hyphen_values = true)]
    z_min: f64,
    #[arg(long, default_value_t = DEFAULT_Z[1], allow_hyphen_values = true)]
    z_max: f64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a genome document; prints one `RULE branch=ID` line per violation.
    Validate {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "framework")]
        profile: ProfileArg,
    },
    /// Emit a reference genome document.
    Preset {
        #[arg(required_unless_present = "list")]
        name: Option<String>,
        #[arg(long)]
        list: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic scan and its `.boxes.csv` ground-truth sidecar.
    SynthScene {
        #[arg(long, default_value_t = SynthParams::default().boxes)]
        boxes: usize,
        #[arg(long, default_value_t = SynthParams::default().height)]
        height: usize,
        #[arg(long, default_value_t = SynthParams::default().width)]
        width: usize,
        /// Lowest beam inclination, radians.
        #[arg(long, default_value_t = SynthParams::default().inclination[0], allow_hyphen_values = true)]
        inc_min: f64,
        #[arg(long, default_value_t = SynthParams::default().inclination[1], allow_hyphen_values = true)]
        inc_max: f64,
        #[arg(long, default_value_t = SynthParams::default().range[0], allow_hyphen_values = true)]
        range_min: f64,
        #[arg(long, default_value_t = SynthParams::default().range[1], allow_hyphen_values = true)]
        range_max: f64,
        #[arg(long, default_value_t = SynthParams::default().placement_radius, allow_hyphen_values = true)]
        placement_radius: f64,
        #[arg(long, default_value_t = SynthParams::default().sensor_height, allow_hyphen_values = true)]
        sensor_height: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-branch parameter, FLOP and latency report as CSV.
    Cost {
        genome: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        boxes: Option<PathBuf>,
        #[command(flatten)]
        region: RegionArgs,
        /// Calibration file; the environment variable takes precedence.
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_KEEP_FRACTION)]
        keep_fraction: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write `n` independent mutations of a genome.
    Mutate {
        genome: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write `n` random search-space genomes.
    Random {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run regularized evolution; flags override the config file.
    Search {
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        tournament: Option<usize>,
        #[arg(long, value_enum)]
        evaluator: Option<EvaluatorKind>,
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Preset name or genome document.
        #[arg(long)]
        warm_start: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        parallel: Option<usize>,
        /// Continue from an existing history log in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Presence regression, mutation variance and format latency over history logs.
    Analyze {
        #[arg(required = true)]
        history: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Validate { file, profile } => cmd_validate(&file, profile),
        Cmd::Preset { name, list, out } => cmd_preset(name.as_deref(), list, out.as_deref()),
        Cmd::SynthScene {
            boxes,
            height,
            width,
            inc_min,
            inc_max,
            range_min,
            range_max,
            placement_radius,
            sensor_height,
            seed,
            out,
        } => {
            let params = SynthParams {
                boxes,
                height,
                width,
                inclination: [inc_min, inc_max],
                range: [range_min, range_max],
                placement_radius,
                sensor_height,
                seed,
            };
            cmd_synth(&params, &out)
        }
        Cmd::Cost { genome, scene, boxes, region, calibration, keep_fraction, out } => {
            cmd_cost(&genome, &scene, boxes.as_deref(), &region, calibration.as_deref(), keep_fraction, out.as_deref())
        }
        Cmd::Mutate { genome, seed, n, out_dir } => cmd_mutate(&genome, seed, n, &out_dir),
        Cmd::Random { seed, n, out_dir } => cmd_random(seed, n, &out_dir),
        Cmd::Search { config, seed, budget, population, tournament, evaluator, scene, warm_start, out_dir, parallel, resume } => {
            let overrides = SearchOverrides { seed, budget, population, tournament, evaluator, scene, warm_start, parallel };
            cmd_search(config.as_deref(), overrides, &out_dir, resume)
        }
        Cmd::Analyze { history } => cmd_analyze(&history),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code() as u8)
        }
    }
}

fn read_genome(path: &Path) -> Result<(ArchGenome, lidarnas::arch::ValidationReport), Fail> {
    let what = format!("genome {}", path.display());
    let text = fs::read_to_string(path).input(&what)?;
    if text.trim().is_empty() {
        return Err(Fail::Input(format!("{what}: empty document")));
    }
    deserialize(&text).input(&what)
}

/// Reads a genome that must satisfy the framework rules.
fn read_valid_genome(path: &Path) -> Result<ArchGenome, Fail> {
    let (g, report) = read_genome(path)?;
    if !report.ok() {
        return Err(Fail::Domain(format!("genome {}: {}", path.display(), report_line(&report))));
    }
    Ok(g)
}

fn report_line(r: &lidarnas::arch::ValidationReport) -> String {
    r.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// Writes to stdout; a closed pipe is not an error.
fn stdout_bytes(bytes: &[u8]) -> Result<(), Fail> {
    let mut out = std::io::stdout().lock();
    match out.write_all(bytes).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Fail::Input(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Fail> {
    fs::write(path, contents).input(&format!("write {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<(), Fail> {
    fs::create_dir_all(dir).input(&format!("create {}", dir.display()))
}

fn cmd_validate(file: &Path, profile: ProfileArg) -> Result<(), Fail> {
    let (g, framework) = read_genome(file)?;
    let report = match profile {
        ProfileArg::Framework => framework,
        ProfileArg::Search => validate(&g, Profile::SearchSpace),
    };
    if report.ok() {
        println!("ok");
        return Ok(());
    }
    for v in &report.violations {
        println!("{v}");
    }
    Err(Fail::Domain(format!("{} violation(s)", report.violations.len())))
}

fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESET_NAMES.into_iter().chain([LIDARNASNET_R])
}

fn cmd_preset(name: Option<&str>, list: bool, out: Option<&Path>) -> Result<(), Fail> {
    if list {
        for n in preset_names() {
            println!("{n}");
        }
        return Ok(());
    }
    let name = name.expect("clap requires a name");
    let g = preset(name).input("preset")?;
    let doc = serialize(&g);
    match out {
        Some(p) => write_file(p, doc.as_bytes()),
        None => stdout_bytes(format!("{doc}\n").as_bytes()),
    }
}

fn cmd_synth(params: &SynthParams, out: &Path) -> Result<(), Fail> {
    let s = synth_scene::<f64>(params).input("synthetic scene")?;
    write_scan(out, &s.scan).input(&format!("write {}", out.display()))?;
    let side = scene::sidecar_path(out);
    let f = File::create(&side).input(&format!("write {}", side.display()))?;
    let mut w = BufWriter::new(f);
    write_boxes(&mut w, &s.boxes).input(&format!("write {}", side.display()))?;
    w.flush().input(&format!("write {}", side.display()))?;
    println!("{} points, {} boxes -> {} (+ {})", s.scan.points.len(), s.boxes.len(), out.display(), side.display());
    Ok(())
}

/// The environment variable, when set, overrides any configured path.
fn load_calibration(path: Option<&Path>) -> Result<Calibration, Fail> {
    match std::env::var_os(CALIBRATION_ENV) {
        Some(v) if !v.is_empty() => Calibration::from_env().input(&format!("calibration {}", Path::new(&v).display())),
        _ => match path {
            Some(p) => Calibration::load(p).input(&format!("calibration {}", p.display())),
            None => Ok(Calibration::default()),
        },
    }
}

fn cmd_cost(
    genome: &Path,
    scene_path: &Path,
    boxes: Option<&Path>,
    region: &RegionArgs,
    calibration: Option<&Path>,
    keep_fraction: f64,
    out: Option<&Path>,
) -> Result<(), Fail> {
    let g = read_valid_genome(genome)?;
    let r = scene::region(region.region_half, region.z_min, region.z_max)?;
    let s = scene::load(scene_path, boxes, r)?;
    let cal = load_calibration(calibration)?;
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Fail::Input(format!("keep fraction must be in (0, 1], got {keep_fraction}")));
    }
    let stats = SceneStats::from_scene(&s.points, s.frame)
        .with_occupancy_decay(cal.occupancy_decay)
        .with_keep_fraction(keep_fraction);
    let report = count_cost(&g, &stats, &cal).domain("cost")?;
    let mut buf = Vec::new();
    write_csv(&mut buf, &report).input("csv")?;
    match out {
        Some(p) => {
            write_file(p, &buf)?;
            println!(
                "params {}  flops {}  max dense bytes {}  latency {:.6} ms",
                report.total_params, report.total_flops, report.max_dense_bytes, report.latency_ms
            );
        }
        None => stdout_bytes(&buf)?,
    }
    Ok(())
}

fn search_fail(e: SearchError) -> Fail {
    match e {
        SearchError::InvalidConfig(_) | SearchError::HistoryMismatch { .. } | SearchError::MalformedHistory { .. } => {
            Fail::Input(e.to_string())
        }
        SearchError::Io(_) => Fail::Input(e.to_string()),
        _ => Fail::Domain(e.to_string()),
    }
}

fn cmd_mutate(genome: &Path, seed: u64, n: usize, out_dir: &Path) -> Result<(), Fail> {
    let g = read_valid_genome(genome)?;
    create_dir(out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let (child, rec) = mutate(&g, &mut rng).map_err(search_fail)?;
        write_file(&out_dir.join(format!("child_{i:04}.json")), serialize(&child).as_bytes())?;
        println!("child_{i:04}.json {}", serde_json::to_string(&rec).expect("record serializes"));
    }
    Ok(())
}

fn cmd_random(seed: u64, n: usize, out_dir: &Path) -> Result<(), Fail> {
    create_dir(out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let g = random_genome(&mut rng).map_err(search_fail)?;
        write_file(&out_dir.join(format!("genome_{i:04}.json")), serialize(&g).as_bytes())?;
    }
    println!("{n} genomes -> {}", out_dir.display());
    Ok(())
}

struct SearchOverrides {
    seed: Option<u64>,
    budget: Option<usize>,
    population: Option<usize>,
    tournament: Option<usize>,
    evaluator: Option<EvaluatorKind>,
    scene: Option<PathBuf>,
    warm_start: Option<String>,
    parallel: Option<usize>,
}

/// Preset name first, then a genome document path.
fn resolve_warm_start(spec: &str) -> Result<ArchGenome, Fail> {
    if preset_names().any(|n| n == spec) {
        return preset(spec).input("warm start");
    }
    read_valid_genome(Path::new(spec))
}

fn cmd_search(config: Option<&Path>, o: SearchOverrides, out_dir: &Path, resume: bool) -> Result<(), Fail> {
    let cfg = match config {
        Some(p) => SearchConfig::load(p)?,
        None => SearchConfig::default(),
    };
    let subspace = cfg.subspace.then(GridSubspace::standard);
    let warm = match o.warm_start.as_deref().or(cfg.warm_start.as_deref()) {
        Some(spec) => resolve_warm_start(spec)?,
        None => match &subspace {
            Some(s) => s.genome(Kind::Point, 1, 1),
            None => preset(PRESET_NAMES[0]).input("warm start")?,
        },
    };
    if let Some(s) = &subspace {
        if s.locate(&warm).is_none() {
            return Err(Fail::Input("warm start lies outside the subspace".into()));
        }
    }
    let mut ecfg = EvolutionConfig::new(warm);
    ecfg.seed = o.seed.or(cfg.seed).unwrap_or(ecfg.seed);
    ecfg.budget = o.budget.or(cfg.budget).unwrap_or(ecfg.budget);
    ecfg.population_size = o.population.or(cfg.population).unwrap_or(ecfg.population_size);
    ecfg.tournament_size = o.tournament.or(cfg.tournament).unwrap_or(ecfg.tournament_size);
    ecfg.parallel = o.parallel.or(cfg.parallel).unwrap_or(ecfg.parallel);
    let defaults = ObjectiveWeights::default();
    ecfg.weights = ObjectiveWeights {
        quality: cfg.objective.quality.unwrap_or(defaults.quality),
        latency: cfg.objective.latency.unwrap_or(defaults.latency),
    };
    ecfg.check().map_err(search_fail)?;

    let kind = o.evaluator.or(cfg.evaluator.kind).unwrap_or_default();
    let evaluator: Box<dyn Evaluator> = match kind {
        EvaluatorKind::BuiltinCoverage => {
            let keep_fraction = cfg.keep_fraction.unwrap_or(DEFAULT_KEEP_FRACTION);
            if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
                return Err(Fail::Input(format!("keep fraction must be in (0, 1], got {keep_fraction}")));
            }
            let sc = &cfg.scene;
            let region = scene::region(
                sc.region_half.unwrap_or(DEFAULT_REGION_HALF),
                sc.z_min.unwrap_or(DEFAULT_Z[0]),
                sc.z_max.unwrap_or(DEFAULT_Z[1]),
            )?;
            let loaded = match o.scene.as_ref().or(sc.path.as_ref()) {
                Some(p) => scene::load(p, sc.boxes.as_deref(), region)?,
                None => {
                    let d = SynthParams::default();
                    let params = SynthParams {
                        boxes: sc.synth.boxes.unwrap_or(d.boxes),
                        height: sc.synth.height.unwrap_or(d.height),
                        width: sc.synth.width.unwrap_or(d.width),
                        placement_radius: sc.synth.placement_radius.unwrap_or(d.placement_radius),
                        seed: sc.synth.seed.unwrap_or(d.seed),
                        ..d
                    };
                    scene::synthesize(&params, region)?
                }
            };
            let cal = load_calibration(cfg.evaluator.calibration.as_deref())?;
            let exec = ExecConfig { seed: ecfg.seed, keep_fraction };
            Box::new(Memoized::new(CoverageEvaluator::new(loaded.points, loaded.frame, loaded.boxes, exec, cal)))
        }
        EvaluatorKind::External => {
            let timeout = cfg.evaluator.timeout_s.unwrap_or(DEFAULT_TIMEOUT_S);
            if !(timeout > 0.0 && timeout.is_finite()) {
                return Err(Fail::Input(format!("evaluator timeout must be > 0, got {timeout}")));
            }
            let ext = ExternalEvaluator::start(cfg.evaluator.command.clone(), Duration::from_secs_f64(timeout))
                .map_err(Fail::Evaluator)?;
            Box::new(ext)
        }
    };
    let mutator: &dyn Mutator = match &subspace {
        Some(s) => s,
        None => &SearchSpaceMutator,
    };

    create_dir(out_dir)?;
    let log_path = out_dir.join("history.jsonl");
    let prior = if resume && log_path.exists() {
        let f = File::open(&log_path).input(&format!("history {}", log_path.display()))?;
        read_history(BufReader::new(f)).map_err(search_fail)?
    } else {
        Vec::new()
    };
    // Rewrite the replayed prefix so a truncated tail line is dropped before appending.
    let mut log = BufWriter::new(
        OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&log_path)
            .input(&format!("history {}", log_path.display()))?,
    );
    for r in &prior {
        write_record(&mut log, r).map_err(search_fail)?;
    }
    log.flush().input("history")?;

    let started = Instant::now();
    let mut on_record = |r: &HistoryRecord| -> Result<(), SearchError> {
        write_record(&mut log, r)?;
        log.flush()?;
        match (&r.error, r.quality, r.latency_ms) {
            (Some(e), _, _) => eprintln!("[{:>4}] failed: {e}", r.index),
            (None, Some(q), Some(l)) => eprintln!("[{:>4}] fitness {:.4}  quality {:.2}%  latency {:.4} ms", r.index, r.fitness, 100.0 * q, l),
            _ => eprintln!("[{:>4}] fitness {:.4}", r.index, r.fitness),
        }
        Ok(())
    };
    let history = evolve_with(&ecfg, evaluator.as_ref(), mutator, &prior, &mut on_record).map_err(search_fail)?;
    drop(evaluator);

    write_file(&out_dir.join("fitness.csv"), report::fitness_csv(&history.records).as_bytes())?;
    write_file(&out_dir.join("best_so_far.svg"), report::best_so_far_svg(&history.records).as_bytes())?;
    let failures = history.records.iter().filter(|r| r.error.is_some()).count();
    println!("evaluations {}  failures {}  wall {:.1} s", history.records.len(), failures, started.elapsed().as_secs_f64());
    match history.best().filter(|b| b.fitness.is_finite()) {
        Some(b) => {
            write_file(&out_dir.join("best.json"), serialize(&b.genome).as_bytes())?;
            println!(
                "best #{}  fitness {:.4}  quality {:.2}%  latency {:.4} ms  hash {}",
                b.index,
                b.fitness,
                100.0 * b.quality.unwrap_or(f64::NAN),
                b.latency_ms.unwrap_or(f64::NAN),
                genome_hash(&b.genome)
            );
        }
        None => println!("no candidate evaluated successfully"),
    }
    println!("outputs in {}", out_dir.display());
    Ok(())
}

fn print_regression(title: &str, names: &[String], r: &Regression) {
    println!("{title} (rank {}{})", r.rank, if r.rank_deficient { ", rank deficient" } else { "" });
    for (n, c) in names.iter().zip(&r.coefficients) {
        println!("  {n:<18} {c:>12.6}");
    }
}

fn cmd_analyze(paths: &[PathBuf]) -> Result<(), Fail> {
    let mut records = Vec::new();
    for p in paths {
        let f = File::open(p).input(&format!("history {}", p.display()))?;
        records.extend(read_history(BufReader::new(f)).map_err(search_fail)?);
    }
    println!("{} records from {} log(s)", records.len(), paths.len());
    let mut failed = Vec::new();

    let quality: Vec<(&ArchGenome, f64)> = records.iter().filter_map(|r| Some((&r.genome, r.quality?))).collect();
    let names: Vec<String> = View::ALL
        .iter()
        .flat_map(|v| (1..=3).map(move |s| format!("{v:?}@stage{s}").to_lowercase()))
        .collect();
    match analyze_presence_regression(quality.iter().copied()) {
        Ok(r) => print_regression("presence regression on quality", &names, &r),
        Err(e) => failed.push(format!("presence regression: {e}")),
    }

    let v = analyze_mutation_variance(&records);
    let show = |x: Option<f64>| x.map_or("n/a".to_string(), |s| format!("{s:.6}"));
    println!("mutation quality std");
    println!("  layer-only         {:>12} (n={})", show(v.layer_only), v.layer_only_count);
    println!("  other              {:>12} (n={})", show(v.other), v.other_count);

    let latency: Vec<(&ArchGenome, f64)> = records.iter().filter_map(|r| Some((&r.genome, r.latency_ms?))).collect();
    match analyze_format_latency(latency.iter().copied()) {
        Ok(f) => {
            let cols: Vec<String> = ["empty stages", "dense branches", "sparse branches"].map(String::from).to_vec();
            print_regression("perspective latency by format", &cols, &f.perspective);
            print_regression("pillar latency by format", &cols, &f.pillar);
        }
        Err(e) => failed.push(format!("format latency: {e}")),
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Fail::Domain(failed.join("; ")))
    }
}
