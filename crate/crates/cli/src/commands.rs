use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use entangled_core::layers::{extract_foreground, mask_out, merge_layers, BlendConfig, ForegroundLayer, PositionMask};
use entangled_core::manifest::{scan_manifest, summarize, Manifest, RecordStatus};
use entangled_core::metric::{ConsistencySource, MetricOptions, MetricWeights, DEFAULT_EPSILON};
use entangled_core::pipeline::{backend_from_arg, run_pipeline, GateConfig, PipelineConfig, SuffixRefiner};
use entangled_core::report::{
    alpha_sweep, eval_batch, sweep, write_text, write_with_sidecar, EvalConfig, EvalInput, EvalMode, EvalReport,
    SweepReference, SweepReport, VariantSet, DEFAULT_MASK_THRESHOLD,
};
use entangled_core::{load_image, load_mask, synth, Error, Result};

use crate::config::{resolve_workers, FileConfig};
use crate::{
    Cli, Command, EvalArgs, ExtractArgs, ManifestCommand, MaskoutArgs, MergeArgs, MetricArgs, PipelineArgs,
    PipelineCommand, SweepArgs, SynthArgs,
};

struct Ctx {
    file: FileConfig,
    workers: usize,
}

pub fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::resolve(cli.config.as_deref())?;
    let workers = resolve_workers(cli.workers, &file)?;
    let ctx = Ctx { file, workers };
    match cli.command {
        Command::Eval(a) => eval(&ctx, a),
        Command::Extract(a) => extract(&ctx, a),
        Command::Merge(a) => merge(&ctx, a),
        Command::Maskout(a) => maskout(&ctx, a),
        Command::Manifest(ManifestCommand::Validate { root }) => validate(&root),
        Command::Manifest(ManifestCommand::Stats { root, name }) => stats(&root, name),
        Command::Pipeline(PipelineCommand::Run(a)) => pipeline(&ctx, a),
        Command::Sweep(a) => run_sweep(&ctx, a),
        Command::Synth(a) => make_synth(a),
    }
}

/// Weights from flags if either weight flag is present, else from the
/// config file, else the defaults; a missing weight is derived as 1 - other.
fn weights(args: &MetricArgs, file: &FileConfig) -> Result<MetricWeights> {
    let (a, b) = if args.alpha.is_some() || args.beta.is_some() {
        (args.alpha, args.beta)
    } else {
        (file.metric.alpha, file.metric.beta)
    };
    let (alpha, beta) = match (a, b) {
        (Some(a), Some(b)) => (a, b),
        (Some(a), None) => (a, 1.0 - a),
        (None, Some(b)) => (1.0 - b, b),
        (None, None) => (0.5, 0.5),
    };
    let eps = args.epsilon.or(file.metric.epsilon).unwrap_or(DEFAULT_EPSILON);
    MetricWeights::with_epsilon(alpha, beta, eps)
}

fn eval_config(args: &MetricArgs, ctx: &Ctx, mode: EvalMode) -> Result<EvalConfig> {
    let m = &ctx.file.metric;
    let source = match args.consistency_source.as_deref().or(m.consistency_source.as_deref()) {
        Some(s) => s.parse()?,
        None => ConsistencySource::default(),
    };
    let mask_threshold = threshold(args.mask_threshold.or(m.mask_threshold))?;
    Ok(EvalConfig {
        weights: weights(args, &ctx.file)?,
        mode,
        options: MetricOptions {
            consistency_source: source,
            uniform_region_consistency: args.uniform_flat || m.uniform_flat.unwrap_or(false),
            grayscale: args.grayscale || m.grayscale.unwrap_or(false),
        },
        mask_threshold,
        workers: ctx.workers,
    })
}

fn threshold(t: Option<f64>) -> Result<f64> {
    let t = t.unwrap_or(DEFAULT_MASK_THRESHOLD);
    if (0.0..=1.0).contains(&t) {
        Ok(t)
    } else {
        Err(Error::Config(format!("mask threshold must lie in [0, 1], got {t}")))
    }
}

fn print_report(report: &EvalReport) {
    println!(
        "evaluated {} of {} records ({} skipped)",
        report.per_record.len(),
        report.input_records,
        report.skipped.len()
    );
    for name in ["entangled_d", "entangled_s"] {
        if let Some(a) = report.aggregate.get(name) {
            println!(
                "{name:<12} n={:<5} mean {:.6}  median {:.6}  stddev {:.6}",
                a.count, a.mean, a.median, a.stddev
            );
        }
    }
    for s in &report.skipped {
        println!("skipped {}: {}", s.id, s.reason);
    }
}

fn eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let mode: EvalMode = a.mode.as_deref().map(str::parse).transpose()?.unwrap_or_default();
    let input = match (a.pairs, a.manifest, a.unlearned, a.masks) {
        (Some(p), None, None, None) => EvalInput::Pairs(p),
        (None, Some(m), None, None) => EvalInput::Manifest(m),
        (None, None, Some(unlearned), Some(masks)) => EvalInput::Dirs {
            original: a.original,
            unlearned,
            masks,
        },
        _ => {
            return Err(Error::Config(
                "give exactly one input: --pairs, --manifest, or --unlearned with --masks".into(),
            ))
        }
    };
    let cfg = eval_config(&a.metric, ctx, mode)?;
    let report = eval_batch(&input, &cfg)?;
    write_with_sidecar(&a.out, &report.to_json())?;
    if let Some(csv) = &a.csv {
        write_text(csv, &report.to_csv())?;
    }
    print_report(&report);
    println!("wrote {}", a.out.display());
    Ok(())
}

fn extract(ctx: &Ctx, a: ExtractArgs) -> Result<()> {
    let mask = load_mask(&a.mask, threshold(a.mask_threshold.or(ctx.file.metric.mask_threshold))?)?;
    let image = load_image(&a.image, Some(mask.dims()))?.plane;
    let layer = extract_foreground(&image, &mask)?;
    layer.save_png(&a.layer)?;
    if let Some(p) = &a.position {
        mask.save_png(p)?;
    }
    let (r, c) = layer.origin();
    println!("layer {}x{} at row {r}, col {c}", layer.width(), layer.height());
    Ok(())
}

fn merge(ctx: &Ctx, a: MergeArgs) -> Result<()> {
    let pos = load_mask(&a.position, threshold(a.mask_threshold.or(ctx.file.metric.mask_threshold))?)?;
    let background = load_image(&a.background, Some(pos.dims()))?.plane;
    let bbox = pos
        .bounding_box()
        .ok_or(Error::DegenerateMask(entangled_core::error::Region::Inner))?;
    let layer = ForegroundLayer::load_png(&a.layer, (bbox.row, bbox.col))?;
    let feather = a.feather.or(ctx.file.layers.feather).unwrap_or(2);
    let out = merge_layers(&background, &layer, &PositionMask::from(pos), &BlendConfig::feathered(feather))?;
    out.save_png(&a.out)?;
    println!("merged {}x{} layer, feather {feather}, wrote {}", layer.width(), layer.height(), a.out.display());
    Ok(())
}

fn maskout(ctx: &Ctx, a: MaskoutArgs) -> Result<()> {
    let mask = load_mask(&a.mask, threshold(a.mask_threshold.or(ctx.file.metric.mask_threshold))?)?;
    let image = load_image(&a.image, Some(mask.dims()))?.plane;
    let fill = a.fill.or(ctx.file.layers.fill).unwrap_or(0.0);
    if !(0.0..=1.0).contains(&fill) {
        return Err(Error::Config(format!("fill must lie in [0, 1], got {fill}")));
    }
    mask_out(&image, &mask, fill)?.save_png(&a.out)?;
    println!("masked {} pixels with {fill}, wrote {}", mask.inner_count(), a.out.display());
    Ok(())
}

fn validate(root: &Path) -> Result<()> {
    let manifest = Manifest::load(root)?;
    let records = scan_manifest(root)?;
    let rejected: Vec<_> = records.iter().filter(|r| r.status == RecordStatus::Rejected).collect();
    println!(
        "manifest ok: dataset {}, {} records, {} usable, {} rejected",
        manifest.dataset,
        records.len(),
        records.len() - rejected.len(),
        rejected.len()
    );
    for r in rejected {
        println!("  {}: {}", r.id, r.reason.as_deref().unwrap_or("unspecified"));
    }
    Ok(())
}

fn stats(root: &Path, name: Option<String>) -> Result<()> {
    let manifest = Manifest::load(root)?;
    let records = scan_manifest(root)?;
    let mut summary = summarize(&records, name.as_deref().unwrap_or(&manifest.dataset));
    if records.is_empty() {
        summary.prompt = manifest.prompt.clone();
    }
    println!("dataset\tprompt\timages\tselected\tsuccess_rate");
    println!("{summary}");
    Ok(())
}

fn pipeline(ctx: &Ctx, a: PipelineArgs) -> Result<()> {
    let p = &ctx.file.pipeline;
    let defaults = GateConfig::default();
    let gate = GateConfig {
        entangled_threshold: a.threshold.or(p.threshold).unwrap_or(defaults.entangled_threshold),
        max_inpaint_passes: a.max_passes.or(p.max_passes).unwrap_or(defaults.max_inpaint_passes),
        max_candidates: a.max_candidates.or(p.max_candidates).or(defaults.max_candidates),
        mask_dilation_px: a.dilate.or(p.dilate).unwrap_or(defaults.mask_dilation_px),
        epsilon: ctx.file.metric.epsilon.unwrap_or(defaults.epsilon),
    };
    gate.validate()?;
    let refine = !a.no_refine && p.refine.unwrap_or(true);
    let cfg = PipelineConfig {
        gate,
        refiner: refine.then(|| Arc::new(SuffixRefiner::default()) as _),
        inpaint_prompt: a
            .inpaint_prompt
            .or_else(|| p.inpaint_prompt.clone())
            .unwrap_or_else(|| PipelineConfig::DEFAULT_INPAINT_PROMPT.to_string()),
        workers: match ctx.workers {
            0 => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            n => n,
        },
        force: a.force,
    };
    let backend = a.backend.or_else(|| p.backend.clone()).unwrap_or_else(|| "mock".into());
    let timeout = Duration::from_secs(a.timeout.or(p.timeout_secs).unwrap_or(120));
    let backends = backend_from_arg(&backend, timeout)?;
    let run = run_pipeline(&a.root, &backends, &cfg)?;
    println!("{} records processed", run.processed);
    println!("dataset\tprompt\timages\tselected\tsuccess_rate");
    println!("{}", run.summary);
    if run.backend_errors > 0 {
        eprintln!("warning: {} records rejected after backend errors", run.backend_errors);
    }
    Ok(())
}

fn parse_variant(s: &str) -> Result<VariantSet> {
    let (label, dir) = s
        .split_once('=')
        .filter(|(l, d)| !l.is_empty() && !d.is_empty())
        .ok_or_else(|| Error::Config(format!("--variant expects LABEL=DIR, got `{s}`")))?;
    Ok(VariantSet {
        label: label.to_string(),
        dir: PathBuf::from(dir),
    })
}

fn print_sweep(report: &SweepReport) {
    for line in report.to_csv().lines() {
        println!("{}", line.replace(',', "\t"));
    }
}

fn run_sweep(ctx: &Ctx, a: SweepArgs) -> Result<()> {
    let cfg = eval_config(&a.metric, ctx, EvalMode::Paired)?;
    let report = if !a.alphas.is_empty() {
        let pairs = a.pairs.ok_or_else(|| Error::Config("--alphas needs --pairs".into()))?;
        let dataset = a
            .dataset
            .or_else(|| pairs.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "pairs".into());
        let base = eval_batch(&EvalInput::Pairs(pairs), &cfg)?;
        let mut r = alpha_sweep(&base, &dataset, &a.alphas)?;
        if let Some(axis) = a.axis {
            r.axis_name = axis;
        }
        r
    } else {
        if a.reference.is_empty() || a.variant.is_empty() {
            return Err(Error::Config(
                "sweep needs --reference and --variant, or --alphas with --pairs".into(),
            ));
        }
        let refs = a
            .reference
            .iter()
            .map(|r| SweepReference::from_manifest(r))
            .collect::<Result<Vec<_>>>()?;
        let variants = a.variant.iter().map(|v| parse_variant(v)).collect::<Result<Vec<_>>>()?;
        sweep(a.axis.as_deref().unwrap_or("variant"), &variants, &refs, &cfg)?
    };
    write_with_sidecar(&a.out, &report.to_json())?;
    if let Some(csv) = &a.csv {
        write_text(csv, &report.to_csv())?;
    }
    print_sweep(&report);
    println!("wrote {}", a.out.display());
    Ok(())
}

fn make_synth(a: SynthArgs) -> Result<()> {
    if a.count == 0 || a.size < 4 {
        return Err(Error::Config("synth needs --count >= 1 and --size >= 4".into()));
    }
    match a.kind.as_str() {
        "pairs" => synth::write_pairs_fixture(&a.out, a.count, a.size, a.seed)?,
        "pipeline" => synth::write_pipeline_fixture(&a.out, a.count, a.size, a.seed, &a.dataset, &a.prompt)?,
        other => return Err(Error::Config(format!("synth kind must be pairs or pipeline, got `{other}`"))),
    }
    println!("wrote {} {} records to {}", a.count, a.kind, a.out.display());
    Ok(())
}
