//! Command-line front end. `run` returns the process exit code: 0 on
//! success, 1 for invalid input or usage, 2 for filesystem failures.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bordercore;
use crate::classes::ClassTable;
use crate::ensemble::{average_argmax, majority_vote, read_prob_stack};
use crate::error::{Error, Result};
use crate::manifest::{load_manifest, CaseRecord, Manifest, Source};
use crate::metrics::{evaluate_manifest, summarize, write_evaluations_csv, EmptyPenalty, MetricOptions};
use crate::nifti::{
    read_label_volume, read_scalar_volume, read_volume, write_label_volume, write_scalar_volume,
    LoadedVolume,
};
use crate::planner::{emit_plan, plan_topology, validate_patch_size, PlanRequest};
use crate::postprocess::{
    optimize_cutoffs_for_manifest, postprocess_dataset, Connectivity, CutoffMode, CutoffTable,
    OptimizeOptions,
};
use crate::ranking::{compute_mean_ranks_for, load_scores_csv};
use crate::synth::{synth_case, synth_instances};
use crate::volume::{normalize_ct, NormalizationScheme, Spacing};

#[derive(Debug, Parser)]
#[command(name = "cbctseg", version, about = "CBCT segmentation evaluation and postprocessing toolkit")]
struct Cli {
    /// Worker threads (default: one per CPU).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print a machine-readable summary to standard output.
    #[arg(long, global = true)]
    json: bool,
    /// Class table JSON (default: the shipped 42-class ToothFairy2 table).
    #[arg(long, global = true, value_name = "PATH")]
    classes: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Args)]
struct MetricArgs {
    /// HD95 for one-sided empty classes: "diagonal" or a value in mm.
    #[arg(long, default_value = "diagonal", value_parser = parse_penalty)]
    penalty: EmptyPenalty,
    #[arg(long, default_value_t = 0.95)]
    percentile: f64,
}

impl MetricArgs {
    fn options(&self) -> MetricOptions {
        MetricOptions {
            empty_penalty: self.penalty,
            percentile: self.percentile,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    PerComponent,
    WholeClass,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EnsembleMode {
    Vote,
    Prob,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-case, per-class Dice and HD95.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Per-case CSV.
        #[arg(long)]
        out: PathBuf,
        /// Per-class means (default: the CSV path with a .json extension).
        #[arg(long)]
        summary: Option<PathBuf>,
        #[command(flatten)]
        metrics: MetricArgs,
    },
    /// Searches removal cutoffs on cross-validation predictions.
    OptimizeCutoffs {
        #[arg(long)]
        manifest: PathBuf,
        /// Cases to tune on: F, P or all.
        #[arg(long, default_value = "F")]
        source: String,
        #[arg(long, value_enum, default_value = "per-component")]
        mode: ModeArg,
        #[arg(long, default_value = "26")]
        connectivity: Connectivity,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        metrics: MetricArgs,
    },
    /// Applies a cutoff table to every prediction in a manifest.
    Postprocess {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        cutoffs: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        metrics: MetricArgs,
    },
    /// Mean-rank aggregation of per-class scores.
    Rank {
        /// CSV with algorithm_id,label_id,mean_dice,mean_hd95.
        #[arg(long)]
        scores: PathBuf,
        /// Rank matrix CSV.
        #[arg(long)]
        out: PathBuf,
        /// Mean ranks JSON (default: the CSV path with a .json extension).
        #[arg(long)]
        means: Option<PathBuf>,
        /// Report class-table labels missing from every algorithm.
        #[arg(long)]
        expect_all_classes: bool,
    },
    /// Combines several model outputs.
    Ensemble {
        #[arg(long, value_enum)]
        mode: EnsembleMode,
        /// Tie order for voting: model names (file stems) or 0-based indices.
        #[arg(long, value_delimiter = ',')]
        priority: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
    },
    /// Derives a network topology from a patch size.
    Plan {
        #[arg(long, value_parser = parse_triple)]
        patch: [usize; 3],
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        mirror_axes: Vec<usize>,
        #[arg(long, value_parser = parse_triple)]
        median: Option<[usize; 3]>,
        #[arg(long, default_value_t = 4)]
        min_edge: usize,
        #[arg(long, default_value_t = 32)]
        base_features: usize,
        #[arg(long, default_value_t = 320)]
        max_features: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,3,4,6,6,6")]
        encoder_blocks: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        batch_size: u32,
        #[arg(long, default_value_t = 1000)]
        epochs: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Border-core instance encoding.
    Bordercore {
        #[command(subcommand)]
        op: BorderOp,
    },
    /// Clips and rescales CT intensities.
    Normalize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// clip_lower,clip_upper,shift,scale
        #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [-992.0, 3513.0, 811.0, 1001.0])]
        scheme: Vec<f64>,
    },
    /// Prints header facts and label counts of a volume.
    Info {
        input: PathBuf,
    },
    /// Writes seeded synthetic data.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
}

#[derive(Debug, Subcommand)]
enum BorderOp {
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = bordercore::DEFAULT_BORDER_WIDTH)]
        width: usize,
    },
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = bordercore::DEFAULT_MIN_ORPHAN_SIZE)]
        min_orphan_size: u64,
    },
}

#[derive(Debug, Subcommand)]
enum SynthKind {
    /// Prediction/label pairs plus a manifest.
    Dataset {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        cases: usize,
        #[arg(long, value_parser = parse_triple, default_value = "32,32,32")]
        dims: [usize; 3],
        /// Fraction of cases tagged P (the rest are F).
        #[arg(long, default_value_t = 0.25)]
        p_fraction: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// An instance map of separated blobs.
    Instances {
        #[arg(long)]
        seed: u64,
        #[arg(long, value_parser = parse_triple, default_value = "48,48,48")]
        dims: [usize; 3],
        #[arg(long, default_value_t = 8)]
        max_instances: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_penalty(s: &str) -> std::result::Result<EmptyPenalty, String> {
    if s == "diagonal" {
        return Ok(EmptyPenalty::ImageDiagonal);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(EmptyPenalty::Fixed(v)),
        _ => Err(format!("expected \"diagonal\" or a positive number, got {s:?}")),
    }
}

fn parse_triple(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated integers, got {s:?}"));
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("{p:?} is not a non-negative integer"))?;
    }
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("summary serializes") + "\n"
}

struct Ctx<'a> {
    json: bool,
    classes: Option<PathBuf>,
    out: &'a mut (dyn Write + Send),
    err: &'a mut (dyn Write + Send),
}

impl Ctx<'_> {
    fn class_table(&self) -> Result<ClassTable> {
        match &self.classes {
            Some(p) => ClassTable::load(p),
            None => Ok(ClassTable::toothfairy2()),
        }
    }

    fn note(&mut self, msg: impl AsRef<str>) {
        let _ = writeln!(self.err, "{}", msg.as_ref());
    }

    fn emit<T: Serialize>(&mut self, v: &T) {
        if self.json {
            let _ = self.out.write_all(pretty(v).as_bytes());
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    let mut ctx = Ctx {
        json: cli.json,
        classes: cli.classes,
        out,
        err,
    };
    let result = match cli.threads {
        Some(0) => Err(Error::InvalidArgument("--threads must be >= 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.cmd, &mut ctx)),
            Err(e) => Err(Error::InvalidArgument(format!("thread pool: {e}"))),
        },
        None => dispatch(cli.cmd, &mut ctx),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            ctx.note(format!("error: {e}"));
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cmd: Command, ctx: &mut Ctx<'_>) -> Result<()> {
    match cmd {
        Command::Evaluate {
            manifest,
            out,
            summary,
            metrics,
        } => {
            let classes = ctx.class_table()?;
            let m = load_manifest(&manifest)?;
            ctx.note(format!("evaluating {} cases x {} classes", m.cases.len(), classes.len()));
            let evals = evaluate_manifest(&m, &classes, &metrics.options())?;
            let mut w = create(&out)?;
            write_evaluations_csv(&evals, &mut w)?;
            w.flush().map_err(|e| Error::io(&out, e))?;
            let s = summarize(&evals);
            let summary = summary.unwrap_or_else(|| out.with_extension("json"));
            write_text(&summary, &pretty(&s))?;
            ctx.emit(&s);
        }
        Command::OptimizeCutoffs {
            manifest,
            source,
            mode,
            connectivity,
            out,
            metrics,
        } => {
            let classes = ctx.class_table()?;
            let m = load_manifest(&manifest)?;
            let source = match source.as_str() {
                "all" => None,
                s => Some(Source::from_str(s)?),
            };
            let opts = OptimizeOptions {
                mode: match mode {
                    ModeArg::PerComponent => CutoffMode::PerComponent,
                    ModeArg::WholeClass => CutoffMode::WholeClass,
                },
                connectivity,
                metrics: metrics.options(),
            };
            let n = m
                .cases
                .iter()
                .filter(|c| source.is_none_or(|s| c.source == s))
                .count();
            ctx.note(format!("optimizing cutoffs on {n} cases"));
            let table = optimize_cutoffs_for_manifest(&m, source, &classes, &opts)?;
            table.save(&out)?;
            ctx.emit(&table);
        }
        Command::Postprocess {
            manifest,
            cutoffs,
            out_dir,
            metrics,
        } => {
            let classes = ctx.class_table()?;
            let m = load_manifest(&manifest)?;
            let table = CutoffTable::load(&cutoffs)?;
            let s = postprocess_dataset(&m, &table, &out_dir, &classes, &metrics.options())?;
            write_text(&out_dir.join("summary.json"), &pretty(&s))?;
            ctx.note(format!("wrote {} volumes to {}", s.cases_written, out_dir.display()));
            ctx.emit(&s);
        }
        Command::Rank {
            scores,
            out,
            means,
            expect_all_classes,
        } => {
            let s = load_scores_csv(&scores)?;
            let expected: Option<Vec<u32>> = if expect_all_classes {
                Some(ctx.class_table()?.labels().collect())
            } else {
                None
            };
            let t = compute_mean_ranks_for(&s, expected.as_deref())?;
            if !t.excluded_labels.is_empty() {
                ctx.note(format!(
                    "excluded classes absent from every algorithm: {:?}",
                    t.excluded_labels
                ));
            }
            let mut w = create(&out)?;
            t.write_matrix_csv(&mut w)?;
            w.flush().map_err(|e| Error::io(&out, e))?;
            let means = means.unwrap_or_else(|| out.with_extension("json"));
            let text = t.mean_ranks_json() + "\n";
            write_text(&means, &text)?;
            if ctx.json {
                let _ = ctx.out.write_all(text.as_bytes());
            }
        }
        Command::Ensemble {
            mode,
            priority,
            out,
            inputs,
        } => {
            let result = match mode {
                EnsembleMode::Vote => {
                    let vols = inputs
                        .iter()
                        .map(read_label_volume)
                        .collect::<Result<Vec<_>>>()?;
                    let order = if priority.is_empty() {
                        None
                    } else {
                        Some(resolve_priority(&priority, &inputs)?)
                    };
                    majority_vote(&vols, order.as_deref())?
                }
                EnsembleMode::Prob => {
                    if !priority.is_empty() {
                        ctx.note("note: --priority is ignored for probability averaging");
                    }
                    let mut stacks = Vec::new();
                    let mut labels: Option<Option<Vec<u32>>> = None;
                    for p in &inputs {
                        let (s, sc) = read_prob_stack(p)?;
                        match &labels {
                            None => labels = Some(sc.labels),
                            Some(l) if *l != sc.labels => {
                                return Err(Error::InvalidEnsemble(
                                    "sidecar channel labels differ between models".into(),
                                ))
                            }
                            _ => {}
                        }
                        stacks.push(s);
                    }
                    average_argmax(&stacks, labels.flatten().as_deref())?
                }
            };
            write_label_volume(&result, &out)?;
            ctx.emit(&serde_json::json!({"inputs": inputs.len(), "out": out}));
        }
        Command::Plan {
            patch,
            mirror_axes,
            median,
            min_edge,
            base_features,
            max_features,
            encoder_blocks,
            batch_size,
            epochs,
            out,
        } => {
            let req = PlanRequest {
                patch_size: patch,
                median_image_size: median,
                min_edge,
                max_features,
                base_features,
                encoder_blocks_schedule: encoder_blocks,
                mirror_axes,
                normalization: NormalizationScheme::toothfairy2_ct(),
                batch_size,
                epochs,
            };
            let plan = plan_topology(&req)?;
            let warnings = median
                .map(|m| validate_patch_size(patch, m))
                .unwrap_or_default();
            for w in &warnings {
                ctx.note(format!("warning: {w}"));
            }
            emit_plan(&plan, &out)?;
            if ctx.json {
                let _ = ctx.out.write_all(plan.to_canonical_json().as_bytes());
            }
        }
        Command::Bordercore { op } => match op {
            BorderOp::Encode { input, out, width } => {
                let inst = read_label_volume(&input)?;
                let bc = bordercore::encode(&inst, width)?;
                write_label_volume(&bc, &out)?;
                let core = bc.data().iter().filter(|&&v| v == bordercore::CORE).count();
                let border = bc.data().iter().filter(|&&v| v == bordercore::BORDER).count();
                ctx.emit(&serde_json::json!({"core_voxels": core, "border_voxels": border}));
            }
            BorderOp::Decode {
                input,
                out,
                min_orphan_size,
            } => {
                let bc = read_label_volume(&input)?;
                let (inst, rep) = bordercore::decode(&bc, min_orphan_size)?;
                write_label_volume(&inst, &out)?;
                if rep.dropped_orphans > 0 {
                    ctx.note(format!(
                        "dropped {} orphan border components ({} voxels)",
                        rep.dropped_orphans, rep.dropped_voxels
                    ));
                }
                ctx.emit(&rep);
            }
        },
        Command::Normalize { input, out, scheme } => {
            let s = NormalizationScheme::new(scheme[0], scheme[1], scheme[2], scheme[3])?;
            let v = read_scalar_volume(&input)?;
            let n = normalize_ct(&v, &s)?;
            write_scalar_volume(&n, &out)?;
            ctx.emit(&serde_json::json!({"voxels": n.len(), "scheme": s}));
        }
        Command::Info { input } => {
            let info = match read_volume(&input)? {
                LoadedVolume::Labels(v) => {
                    let mut counts = std::collections::BTreeMap::<u32, u64>::new();
                    for &l in v.data() {
                        *counts.entry(l).or_default() += 1;
                    }
                    serde_json::json!({
                        "kind": "labels",
                        "dims": v.dims(),
                        "spacing": v.spacing().0,
                        "label_counts": counts,
                    })
                }
                LoadedVolume::Scalars(v) => {
                    let (lo, hi) = v
                        .data()
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
                    serde_json::json!({
                        "kind": "scalars",
                        "dims": v.dims(),
                        "spacing": v.spacing().0,
                        "min": lo,
                        "max": hi,
                    })
                }
            };
            let text = pretty(&info);
            if ctx.json {
                let _ = ctx.out.write_all(text.as_bytes());
            } else {
                let _ = ctx.err.write_all(text.as_bytes());
            }
        }
        Command::Synth { kind } => synth(kind, ctx)?,
    }
    Ok(())
}

fn file_stem(p: &Path) -> String {
    let name = p
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.strip_suffix(".nii.gz")
        .or_else(|| name.strip_suffix(".nii"))
        .unwrap_or(&name)
        .to_string()
}

fn resolve_priority(names: &[String], inputs: &[PathBuf]) -> Result<Vec<usize>> {
    let stems: Vec<String> = inputs.iter().map(|p| file_stem(p)).collect();
    names
        .iter()
        .map(|n| {
            if let Some(k) = stems.iter().position(|s| s == n) {
                return Ok(k);
            }
            match n.parse::<usize>() {
                Ok(k) if k < inputs.len() => Ok(k),
                _ => Err(Error::InvalidEnsemble(format!(
                    "priority entry {n:?} matches no input (inputs: {stems:?})"
                ))),
            }
        })
        .collect()
}

fn synth(kind: SynthKind, ctx: &mut Ctx<'_>) -> Result<()> {
    let sp = Spacing::isotropic(0.3)?;
    match kind {
        SynthKind::Dataset {
            seed,
            cases,
            dims,
            p_fraction,
            out_dir,
        } => {
            if cases == 0 || !(0.0..=1.0).contains(&p_fraction) {
                return Err(Error::InvalidArgument(
                    "need >= 1 case and a P fraction in [0, 1]".into(),
                ));
            }
            let classes = ctx.class_table()?;
            let labels: Vec<u32> = classes.labels().collect();
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            let n_p = (cases as f64 * p_fraction).round() as usize;
            let mut records = Vec::with_capacity(cases);
            for k in 0..cases {
                let id = format!("case_{k:03}");
                let (pred, gt) = synth_case(seed.wrapping_add(k as u64), dims, sp, &labels)?;
                // manifest paths resolve against the manifest's directory
                let pred_path = PathBuf::from(format!("{id}_pred.nii"));
                let gt_path = PathBuf::from(format!("{id}_gt.nii"));
                write_label_volume(&pred, out_dir.join(&pred_path))?;
                write_label_volume(&gt, out_dir.join(&gt_path))?;
                records.push(CaseRecord {
                    case_id: id,
                    image_path: None,
                    label_path: Some(gt_path),
                    prediction_path: Some(pred_path),
                    source: if k < cases - n_p { Source::F } else { Source::P },
                    fold: Some((k % 5) as u8),
                });
            }
            let m = Manifest {
                cases: records,
                class_table_path: None,
            };
            let mpath = out_dir.join("manifest.json");
            write_text(&mpath, &(m.to_json_string() + "\n"))?;
            ctx.note(format!("wrote {cases} cases and {}", mpath.display()));
            ctx.emit(&serde_json::json!({"cases": cases, "manifest": mpath}));
        }
        SynthKind::Instances {
            seed,
            dims,
            max_instances,
            out,
        } => {
            let v = synth_instances(seed, dims, sp, max_instances)?;
            write_label_volume(&v, &out)?;
            ctx.emit(&serde_json::json!({"out": out}));
        }
    }
    Ok(())
}
