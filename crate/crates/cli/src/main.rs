//! `vtsmask`: scripted front end for layout packing, mask export,
//! schedules, the toy simulator and metric reports.
//!
//! Exit codes: 0 success, 1 validation or usage failure, 2 I/O failure.
//! Every failure prints exactly one line to stderr.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use vts_mask::attention_mask::{export_compressed, export_mask};
use vts_mask::metrics::batch::{run_manifest, BatchConfig, BatchError};
use vts_mask::metrics::{avg_report, QualityScores};
use vts_mask::pnm::PnmError;
use vts_mask::sequence_layout::GroupId;
use vts_mask::structured_input::{parse_spec_file, SpecError};
use vts_mask::toy_mmdit::{
    attention_fixture, denoise_loop_with, perturbation_probe, perturbation_probe_stacked, Ablation, ProbeTarget,
    SimulatorConfig,
};
use vts_mask::{
    build_mask, build_schedule, pack, CompositionSpec, LayoutConfig, MaskMode, Modality, Owner, TokenLayout,
};

/// Directory holding an optional `vtsmask.toml` with default settings.
const CONFIG_DIR_ENV: &str = "VTSMASK_CONFIG_DIR";
const CONFIG_FILE: &str = "vtsmask.toml";

#[derive(Debug, Parser)]
#[command(
    name = "vtsmask",
    version,
    about = "Attention-mask compiler for multi-reference composition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pack a spec into its token layout.
    Pack {
        #[arg(long)]
        spec: PathBuf,
        /// Layout output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        layout: LayoutArgs,
    },
    /// Build a GIA or RMA mask and write the binary artifact.
    Mask {
        #[command(flatten)]
        source: LayoutSource,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Include the dense bit matrix in the binary.
        #[arg(long)]
        dense: bool,
        #[arg(long)]
        out: PathBuf,
        /// Class-block sidecar; defaults to `<out>.classes.toml`.
        #[arg(long)]
        compressed: Option<PathBuf>,
        #[command(flatten)]
        layout: LayoutArgs,
    },
    /// Print the per-step mask modes.
    Schedule {
        #[arg(long)]
        steps: u32,
        #[arg(long)]
        ratio: f64,
    },
    /// Run the toy denoising loop and dump per-step state digests.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        dump_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = AblationArg::Full)]
        ablation: AblationArg,
        /// Also write a single-layer attention fixture for this mode.
        #[arg(long, value_enum)]
        fixture: Option<ModeArg>,
        #[command(flatten)]
        layout: LayoutArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Perturb one token class and report which queries change.
    Probe {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// `group:<id>[:textual|visual|spatial]`, `cei` or `uncontrolled`.
        #[arg(long)]
        perturb: String,
        /// Probe through the residual layer stack instead of one layer.
        #[arg(long)]
        stacked: bool,
        #[command(flatten)]
        layout: LayoutArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Score a batch manifest.
    Metrics {
        #[arg(long)]
        manifest: PathBuf,
        /// Report output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// AVG of the five externally scored metrics.
    Report {
        #[arg(long)]
        dpg: f64,
        #[arg(long)]
        id_s: f64,
        #[arg(long)]
        ip_s: f64,
        #[arg(long)]
        bg_s: f64,
        #[arg(long)]
        aes: f64,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct LayoutSource {
    #[arg(long)]
    spec: Option<PathBuf>,
    /// A layout file written by `pack`.
    #[arg(long)]
    layout_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LayoutArgs {
    #[arg(long)]
    sad_tokens: Option<usize>,
    #[arg(long)]
    cei_tokens: Option<usize>,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Gia,
    Rma,
}

impl From<ModeArg> for MaskMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Gia => MaskMode::Gia,
            ModeArg::Rma => MaskMode::Rma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AblationArg {
    Full,
    WithoutRma,
    WithoutGia,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Full => Ablation::Full,
            AblationArg::WithoutRma => Ablation::WithoutRma,
            AblationArg::WithoutGia => Ablation::WithoutGia,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Defaults {
    sad_tokens: Option<usize>,
    cei_tokens: Option<usize>,
    dim: Option<usize>,
    layers: Option<usize>,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Io(m) => m,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

impl From<SpecError> for Failure {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::Io { .. }
            | SpecError::Mask {
                source: PnmError::Io { .. },
                ..
            } => Failure::Io(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<BatchError> for Failure {
    fn from(e: BatchError) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| io_failure(path, e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => write_bytes(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_defaults() -> Result<Defaults, Failure> {
    let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) else {
        return Ok(Defaults::default());
    };
    let path = Path::new(&dir).join(CONFIG_FILE);
    if !path.exists() {
        return Ok(Defaults::default());
    }
    let text = read_text(&path)?;
    toml::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {}", path.display(), e.message())))
}

fn layout_config(args: &LayoutArgs, defaults: &Defaults) -> LayoutConfig {
    let base = LayoutConfig::default();
    LayoutConfig {
        sad_tokens: args.sad_tokens.or(defaults.sad_tokens).unwrap_or(base.sad_tokens),
        cei_tokens: args.cei_tokens.or(defaults.cei_tokens).unwrap_or(base.cei_tokens),
    }
}

fn sim_config(spec: &CompositionSpec, args: &SimArgs, defaults: &Defaults) -> SimulatorConfig {
    let base = SimulatorConfig::for_spec(spec);
    SimulatorConfig {
        dim: args.dim.or(defaults.dim).unwrap_or(base.dim),
        layers: args.layers.or(defaults.layers).unwrap_or(base.layers),
        seed: base.seed,
    }
}

fn load_spec(path: &Path) -> Result<CompositionSpec, Failure> {
    Ok(parse_spec_file(path)?)
}

fn packed(spec: &CompositionSpec, cfg: &LayoutConfig) -> Result<TokenLayout, Failure> {
    pack(spec, cfg).map_err(invalid)
}

fn parse_target(text: &str) -> Result<ProbeTarget, Failure> {
    let bad = || {
        Failure::Validation(format!(
            "bad --perturb `{text}`: expected group:<id>[:modality], cei or uncontrolled"
        ))
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["cei"] => Ok(ProbeTarget {
            owner: Owner::Cei,
            modality: None,
        }),
        ["uncontrolled"] => Ok(ProbeTarget {
            owner: Owner::Uncontrolled,
            modality: None,
        }),
        ["group", id, rest @ ..] if rest.len() <= 1 => {
            let id: u32 = id.parse().ok().filter(|&n| n > 0).ok_or_else(bad)?;
            let modality = rest
                .first()
                .map(|m| m.parse::<Modality>())
                .transpose()
                .map_err(|_| bad())?;
            Ok(ProbeTarget {
                owner: Owner::Group(GroupId(id)),
                modality,
            })
        }
        _ => Err(bad()),
    }
}

/// `0-31 40 64-95` style run list.
fn index_ranges(indices: &[usize]) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < indices.len() {
        let start = indices[i];
        let mut end = start;
        while i + 1 < indices.len() && indices[i + 1] == end + 1 {
            i += 1;
            end = indices[i];
        }
        if !out.is_empty() {
            out.push(' ');
        }
        if start == end {
            let _ = write!(out, "{start}");
        } else {
            let _ = write!(out, "{start}-{end}");
        }
        i += 1;
    }
    out
}

fn run(cli: Cli) -> Result<(), Failure> {
    let defaults = load_defaults()?;
    match cli.command {
        Command::Pack { spec, out, layout } => {
            let spec = load_spec(&spec)?;
            let layout = packed(&spec, &layout_config(&layout, &defaults))?;
            emit(out.as_deref(), &layout.to_text())
        }
        Command::Mask {
            source,
            mode,
            dense,
            out,
            compressed,
            layout,
        } => {
            let token_layout = match (source.spec, source.layout_file) {
                (Some(spec), _) => packed(&load_spec(&spec)?, &layout_config(&layout, &defaults))?,
                (None, Some(file)) => TokenLayout::from_text(&read_text(&file)?).map_err(invalid)?,
                (None, None) => unreachable!("clap requires one layout source"),
            };
            let artifact = build_mask(&token_layout, mode.into());
            write_bytes(&out, &export_mask(&artifact, dense))?;
            let sidecar = compressed.unwrap_or_else(|| {
                let mut name = out.as_os_str().to_owned();
                name.push(".classes.toml");
                PathBuf::from(name)
            });
            write_bytes(&sidecar, export_compressed(&artifact).as_bytes())
        }
        Command::Schedule { steps, ratio } => {
            let schedule = build_schedule(steps, ratio).map_err(invalid)?;
            print!("{}", schedule.to_text());
            Ok(())
        }
        Command::Simulate {
            spec,
            dump_dir,
            ablation,
            fixture,
            layout,
            sim,
        } => {
            let spec = load_spec(&spec)?;
            let layout_cfg = layout_config(&layout, &defaults);
            let cfg = sim_config(&spec, &sim, &defaults);
            let mut modes = Vec::new();
            let states = denoise_loop_with(&spec, &layout_cfg, &cfg, ablation.into(), &mut |_, m| modes.push(m))
                .map_err(invalid)?;
            fs::create_dir_all(&dump_dir).map_err(|e| io_failure(&dump_dir, e))?;
            let mut digests = String::new();
            for (step, (state, mode)) in states.iter().zip(&modes).enumerate() {
                let digest = hex::encode(Sha256::digest(state.to_le_bytes()));
                let _ = writeln!(digests, "{step} {mode} {digest}");
            }
            write_bytes(&dump_dir.join("digests.txt"), digests.as_bytes())?;
            if let Some(last) = states.last() {
                write_bytes(&dump_dir.join("final_state.bin"), &last.to_le_bytes())?;
            }
            if let Some(mode) = fixture {
                let token_layout = packed(&spec, &layout_cfg)?;
                let mask = build_mask(&token_layout, mode.into());
                let fx = attention_fixture(&token_layout, &mask, &cfg).map_err(invalid)?;
                let text = toml::to_string(&fx).map_err(invalid)?;
                write_bytes(&dump_dir.join("fixture.toml"), text.as_bytes())?;
            }
            print!("{digests}");
            Ok(())
        }
        Command::Probe {
            spec,
            mode,
            perturb,
            stacked,
            layout,
            sim,
        } => {
            let target = parse_target(&perturb)?;
            let spec = load_spec(&spec)?;
            let token_layout = packed(&spec, &layout_config(&layout, &defaults))?;
            let cfg = sim_config(&spec, &sim, &defaults);
            let probe = if stacked {
                perturbation_probe_stacked
            } else {
                perturbation_probe
            };
            let report = probe(&token_layout, mode.into(), target, &cfg).map_err(invalid)?;
            let mut by_tag: BTreeMap<String, usize> = BTreeMap::new();
            for &q in &report.changed {
                *by_tag.entry(token_layout.tag(q).to_string()).or_default() += 1;
            }
            let mut text = String::new();
            let _ = writeln!(text, "mode = \"{}\"", report.mode);
            let _ = writeln!(text, "perturbed = \"{}\"", index_ranges(&report.perturbed));
            let _ = writeln!(text, "changed = \"{}\"", index_ranges(&report.changed));
            let _ = writeln!(text, "changed_count = {}", report.changed.len());
            text.push_str("\n[changed_by_tag]\n");
            for (tag, n) in by_tag {
                let _ = writeln!(text, "\"{tag}\" = {n}");
            }
            print!("{text}");
            Ok(())
        }
        Command::Metrics { manifest, out } => {
            let report = run_manifest(&manifest, &BatchConfig::default())?;
            emit(out.as_deref(), &report.to_text())
        }
        Command::Report {
            dpg,
            id_s,
            ip_s,
            bg_s,
            aes,
        } => {
            let avg = avg_report(&QualityScores {
                dpg: Some(dpg),
                id_s: Some(id_s),
                ip_s: Some(ip_s),
                bg_s: Some(bg_s),
                aes: Some(aes),
            })
            .map_err(invalid)?;
            println!("avg = {avg}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                // --help and --version
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let line = rendered.lines().next().unwrap_or("usage error");
            eprintln!("vtsmask: {}", line.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let one_line = f.message().replace('\n', " ");
            eprintln!("vtsmask: {one_line}");
            ExitCode::from(f.code())
        }
    }
}
