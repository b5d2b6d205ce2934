//! Command implementations. Each command expands the config into
//! (region, period, method) jobs, runs them on a bounded thread pool and
//! merges the results sequentially in config order.

use std::fs;
use std::path::{Path, PathBuf};

use gpp_extremes::anomaly::{AnomalyField, Method};
use gpp_extremes::compare::{
    compare_methods, threshold_table, write_agreement_csv, AgreementStats,
};
use gpp_extremes::extremes::{
    cumulative_totals, extremes_report, write_flags_csv, write_frequency_csv,
    write_regional_csv, write_threshold_csv, CumulativeTotals, ExtremesReport, Sign, ThresholdSet,
};
use gpp_extremes::grid::synth::{synth_generate, SynthTruth};
use gpp_extremes::grid::{
    flux_to_mass, load_grid, save_grid, GridFormat, GridSeries, MassSeries, MonthCalendar, Period,
    RegionMask,
};
use gpp_extremes::ssa::ssa_anomalies;
use gpp_extremes::vae::{
    grid_search, load_checkpoint, normalize, reconstruct, save_checkpoint, train, vae_anomalies,
    TrainConfig, TrainReport, Trial,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{period_tag, InputSpec, RunConfig};
use crate::error::{CliError, Result};
use crate::svg::{region_color, HeatMap, LineChart, Series};

/// Everything a command needs: the validated config and its loaded grid.
pub struct Context {
    pub config: RunConfig,
    pub grid: GridSeries,
    pub truth: Option<SynthTruth>,
    pub regions: Vec<RegionMask>,
}

/// One (region, period) pair, in config order.
#[derive(Debug, Clone)]
struct Job {
    region_index: usize,
    period: Period,
}

impl Context {
    pub fn load(config: RunConfig) -> Result<Self> {
        let (grid, truth) = load_input(&config)?;
        let regions = config.validate_against(&grid)?;
        Ok(Self {
            config,
            grid,
            truth,
            regions,
        })
    }

    fn out(&self) -> &Path {
        &self.config.output_dir
    }

    fn jobs(&self) -> Vec<Job> {
        (0..self.regions.len())
            .flat_map(|region_index| {
                self.config.periods.iter().map(move |&period| Job {
                    region_index,
                    period,
                })
            })
            .collect()
    }

    fn region(&self, job: &Job) -> &RegionMask {
        &self.regions[job.region_index]
    }

    fn mass(&self, job: &Job) -> Result<MassSeries> {
        let mass = flux_to_mass(&self.grid, self.region(job))?;
        Ok(mass.slice_period(job.period)?)
    }

    fn job_name(&self, job: &Job) -> String {
        format!("{}_{}", self.region(job).name, period_tag(job.period))
    }

    fn checkpoint_path(&self, job: &Job) -> PathBuf {
        self.out()
            .join("models")
            .join(self.job_name(job))
            .join("model")
    }

    fn train_config(&self, job: &Job) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(
                self.config.seed,
                &format!("train/{}/{}", self.region(job).name, period_tag(job.period)),
            ),
            ..self.config.vae.train.clone()
        }
    }

    /// Run `f` over the jobs on the configured pool, returning results in
    /// job order. The first failing job in that order wins.
    fn run_jobs<T, F>(&self, jobs: &[Job], f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&Job) -> Result<T> + Sync,
    {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.config.jobs {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {} worker threads: {e}", self.config.jobs.unwrap_or(0))))?;
        let results: Vec<Result<T>> = pool.install(|| jobs.par_iter().map(&f).collect());
        results.into_iter().collect()
    }
}

fn load_input(config: &RunConfig) -> Result<(GridSeries, Option<SynthTruth>)> {
    match &config.input {
        InputSpec::Grid { path, format } => {
            let format = format.unwrap_or_else(|| GridFormat::from_path(path));
            Ok((load_grid(path, format)?, None))
        }
        InputSpec::Synth(spec) => {
            let (grid, truth) = synth_generate(spec, synth_seed(config.seed))?;
            Ok((grid, Some(truth)))
        }
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for a named stream of the run. Stable across
/// platforms and across changes to unrelated parts of the config.
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    // FNV-1a over the stream name.
    let h = stream.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    });
    mix(seed ^ mix(h))
}

pub fn synth_seed(seed: u64) -> u64 {
    derive_seed(seed, "synth")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s.into_bytes()
}

fn csv_bytes(
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Core(gpp_extremes::Error::format("csv", e.to_string()));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(&r).map_err(fail)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Core(gpp_extremes::Error::format("csv", e.to_string())))
}

/// Fractional year of month `t`, for chart axes.
fn decimal_year(cal: MonthCalendar, t: usize) -> f64 {
    let (y, m) = cal.year_month(t);
    f64::from(y) + f64::from(m - 1) / 12.0
}

// ---------------------------------------------------------------- synth

pub fn cmd_synth(config: RunConfig) -> Result<String> {
    let InputSpec::Synth(spec) = &config.input else {
        return Err(CliError::Config(
            "`synth` needs an `input.synth` section in the config".into(),
        ));
    };
    let (grid, truth) = synth_generate(spec, synth_seed(config.seed))?;
    let dir = config.output_dir.join("synth");
    create_dir(&dir)?;
    save_grid(&grid, &dir.join("grid"), GridFormat::FlatBinary)?;
    write_file(&dir.join("truth.csv"), truth.to_csv().as_bytes())?;
    Ok(format!(
        "synth: {} x {} grid, {} months, {} injected samples -> {}",
        grid.n_lat(),
        grid.n_lon(),
        grid.n_months(),
        truth.samples.len(),
        dir.display()
    ))
}

// ---------------------------------------------------------------- train

pub fn cmd_train(ctx: &Context) -> Result<String> {
    let jobs = ctx.jobs();
    let reports = ctx.run_jobs(&jobs, |job| train_one(ctx, job))?;
    let mut out = String::new();
    for (job, r) in jobs.iter().zip(&reports) {
        out.push_str(&format!(
            "train {}: {} epochs, best epoch {}, validation loss {:.6}, mse {:.6}\n",
            ctx.job_name(job),
            r.history.len(),
            r.best_epoch,
            r.best_validation_loss,
            r.best_validation_mse
        ));
    }
    Ok(out.trim_end().to_owned())
}

fn train_one(ctx: &Context, job: &Job) -> Result<TrainReport> {
    let mass = ctx.mass(job)?;
    let (windows, norm) = normalize(&mass)?;
    let config = ctx.train_config(job);
    let (model, report) = train(&windows, norm, &ctx.config.vae.architecture, &config)?;
    let path = ctx.checkpoint_path(job);
    let dir = path.parent().expect("checkpoint has a directory");
    create_dir(dir)?;
    save_checkpoint(&model, &path, config.seed, report.best_epoch)?;
    write_file(&dir.join("history.csv"), &history_csv(&report)?)?;
    write_file(
        &dir.join("loss.svg"),
        loss_chart(&ctx.job_name(job), &report).render().as_bytes(),
    )?;
    Ok(report)
}

fn history_csv(report: &TrainReport) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "epoch",
            "lr",
            "train_loss",
            "train_recon",
            "train_kl",
            "validation_loss",
            "validation_recon",
            "validation_kl",
            "validation_mse",
        ],
        report.history.iter().map(|r| {
            vec![
                r.epoch.to_string(),
                r.lr.to_string(),
                r.train.total.to_string(),
                r.train.recon.to_string(),
                r.train.kl.to_string(),
                r.validation.total.to_string(),
                r.validation.recon.to_string(),
                r.validation.kl.to_string(),
                r.validation_mse.to_string(),
            ]
        }),
    )
}

/// Training and validation loss per epoch plus the best-so-far validation
/// envelope that early stopping tracks.
pub fn loss_chart(name: &str, report: &TrainReport) -> LineChart {
    let epochs = || report.history.iter().map(|r| r.epoch as f64);
    let mut best = f64::INFINITY;
    let envelope = report
        .history
        .iter()
        .map(|r| {
            best = best.min(r.validation.total);
            (r.epoch as f64, best)
        })
        .collect();
    LineChart {
        title: format!("VAE loss, {name}"),
        x_label: "epoch".into(),
        y_label: "loss".into(),
        series: vec![
            Series {
                label: "training".into(),
                points: epochs().zip(report.history.iter().map(|r| r.train.total)).collect(),
            },
            Series {
                label: "validation".into(),
                points: epochs()
                    .zip(report.history.iter().map(|r| r.validation.total))
                    .collect(),
            },
            Series {
                label: "validation, best so far".into(),
                points: envelope,
            },
        ],
    }
}

// ---------------------------------------------------------------- extremes

/// Reports of one (region, period) pair, VAE first when present.
struct JobReports {
    vae: Option<ExtremesReport>,
    ssa: Option<ExtremesReport>,
}

fn anomalies_for(ctx: &Context, job: &Job, method: Method) -> Result<AnomalyField> {
    let mass = ctx.mass(job)?;
    match method {
        Method::Ssa => Ok(ssa_anomalies(&mass, &ctx.config.ssa)?),
        Method::Vae => {
            let path = ctx.checkpoint_path(job);
            if !path.with_extension("json").exists() {
                return Err(CliError::MissingCheckpoint {
                    region: ctx.region(job).name.clone(),
                    period: job.period.to_string(),
                    path: path.with_extension("json"),
                });
            }
            let (model, _) = load_checkpoint(&path)?;
            let rec = reconstruct(&model, &mass)?;
            Ok(vae_anomalies(&mass, &rec)?)
        }
    }
}

fn report_for(ctx: &Context, job: &Job, method: Method) -> Result<ExtremesReport> {
    let anoms = anomalies_for(ctx, job, method)?;
    Ok(extremes_report(
        &anoms,
        &ctx.region(job).name,
        job.period,
        ctx.config.extremes.mode,
    )?)
}

fn reports_for(ctx: &Context, job: &Job, methods: &[Method]) -> Result<JobReports> {
    let mut out = JobReports {
        vae: None,
        ssa: None,
    };
    for &m in methods {
        let r = report_for(ctx, job, m)?;
        match m {
            Method::Vae => out.vae = Some(r),
            Method::Ssa => out.ssa = Some(r),
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct TotalsJson<'a> {
    region: &'a str,
    period: String,
    method: Method,
    negative_tgc: f64,
    positive_tgc: f64,
}

fn write_method_outputs(ctx: &Context, job: &Job, report: &ExtremesReport) -> Result<()> {
    let method = report.thresholds.method;
    let dir = ctx
        .out()
        .join("extremes")
        .join(ctx.job_name(job))
        .join(method.as_str());
    create_dir(&dir)?;
    let cal = report.anomalies.values.calendar();

    let mut buf = Vec::new();
    write_threshold_csv(&mut buf, std::slice::from_ref(&report.thresholds))?;
    write_file(&dir.join("thresholds.csv"), &buf)?;

    let mut buf = Vec::new();
    write_flags_csv(&mut buf, &report.flags, cal)?;
    write_file(&dir.join("flags.csv"), &buf)?;

    let mut buf = Vec::new();
    write_frequency_csv(&mut buf, report, ctx.grid.n_lon())?;
    write_file(&dir.join("frequency.csv"), &buf)?;

    let mut buf = Vec::new();
    write_regional_csv(&mut buf, report)?;
    write_file(&dir.join("regional.csv"), &buf)?;

    let totals = cumulative_totals(report);
    write_file(
        &dir.join("totals.json"),
        &to_json(&TotalsJson {
            region: &report.thresholds.region,
            period: job.period.label(),
            method,
            negative_tgc: totals.negative_tgc,
            positive_tgc: totals.positive_tgc,
        }),
    )?;

    let title = format!(
        "{} {} {}",
        method.label(),
        report.thresholds.region,
        job.period.label()
    );
    for sign in [Sign::Negative, Sign::Positive] {
        let name = match sign {
            Sign::Negative => "negative",
            Sign::Positive => "positive",
        };
        let freq = report.frequency(sign);
        save_grid(
            &frequency_grid(&ctx.grid, &report.flags.cells, freq, job.period)?,
            &dir.join(format!("frequency_{name}_grid.csv")),
            GridFormat::Csv,
        )?;
        let mut values = vec![None; ctx.grid.n_cells()];
        for (&cell, &n) in report.flags.cells.iter().zip(freq) {
            values[cell] = Some(f64::from(n));
        }
        let map = HeatMap {
            title: format!("{title}: {name} extremes per cell"),
            legend_label: "events".into(),
            n_lat: ctx.grid.n_lat(),
            n_lon: ctx.grid.n_lon(),
            values,
        };
        write_file(
            &dir.join(format!("frequency_{name}.svg")),
            map.render(region_color(job.region_index)).as_bytes(),
        )?;
    }

    let x: Vec<f64> = report
        .negative
        .months
        .clone()
        .map(|t| decimal_year(cal, t))
        .collect();
    let line = |label: &str, ys: Vec<f64>| Series {
        label: label.into(),
        points: x.iter().copied().zip(ys).collect(),
    };
    let counts = LineChart {
        title: format!("{title}: extreme events"),
        x_label: "year".into(),
        y_label: "events/month".into(),
        series: vec![
            line("negative", report.negative.count.iter().map(|&c| f64::from(c)).collect()),
            line("positive", report.positive.count.iter().map(|&c| f64::from(c)).collect()),
        ],
    };
    write_file(&dir.join("counts.svg"), counts.render().as_bytes())?;
    let magnitude = LineChart {
        title: format!("{title}: extreme magnitude"),
        x_label: "year".into(),
        y_label: "TgC".into(),
        series: vec![
            line("negative", report.negative.magnitude_tgc.clone()),
            line("positive", report.positive.magnitude_tgc.clone()),
        ],
    };
    write_file(&dir.join("magnitude.svg"), magnitude.render().as_bytes())?;
    Ok(())
}

/// Single-month grid holding the count per cell; cells outside the region
/// hold 0.
fn frequency_grid(
    grid: &GridSeries,
    cells: &[usize],
    freq: &[u32],
    period: Period,
) -> Result<GridSeries> {
    let mut values = vec![0.0; grid.n_cells()];
    for (&c, &n) in cells.iter().zip(freq) {
        values[c] = f64::from(n);
    }
    Ok(GridSeries::new(
        grid.n_lat(),
        grid.n_lon(),
        1,
        MonthCalendar::new(period.first_year, 1),
        values,
        grid.cell_area().to_vec(),
        grid.land_frac().to_vec(),
    )?)
}

fn write_comparison(ctx: &Context, stats: &[AgreementStats]) -> Result<()> {
    let out = ctx.out();
    let mut buf = Vec::new();
    write_agreement_csv(&mut buf, stats)?;
    write_file(&out.join("agreement.csv"), &buf)?;
    write_file(&out.join("agreement.json"), &to_json(&stats))?;
    let table = threshold_table(stats);
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    write_file(&out.join("threshold_table.csv"), &buf)?;
    write_file(&out.join("threshold_table.txt"), table.to_text().as_bytes())?;
    Ok(())
}

fn compare_all(jobs: &[Job], reports: &[JobReports]) -> Result<Vec<AgreementStats>> {
    let mut stats = Vec::new();
    for (_, r) in jobs.iter().zip(reports) {
        if let (Some(v), Some(s)) = (&r.vae, &r.ssa) {
            stats.push(compare_methods(v, s)?);
        }
    }
    Ok(stats)
}

pub fn cmd_extremes(ctx: &Context) -> Result<String> {
    let jobs = ctx.jobs();
    let methods = ctx.config.methods.methods();
    let reports = ctx.run_jobs(&jobs, |job| {
        let r = reports_for(ctx, job, &methods)?;
        for report in r.vae.iter().chain(&r.ssa) {
            write_method_outputs(ctx, job, report)?;
        }
        Ok(r)
    })?;

    let mut thresholds: Vec<ThresholdSet> = Vec::new();
    let mut totals: Vec<(ThresholdSet, CumulativeTotals)> = Vec::new();
    for r in &reports {
        for report in r.vae.iter().chain(&r.ssa) {
            thresholds.push(report.thresholds.clone());
            totals.push((report.thresholds.clone(), cumulative_totals(report)));
        }
    }
    let mut buf = Vec::new();
    write_threshold_csv(&mut buf, &thresholds)?;
    write_file(&ctx.out().join("thresholds.csv"), &buf)?;
    write_file(
        &ctx.out().join("cumulative_totals.csv"),
        &csv_bytes(
            &["region", "period", "method", "negative_TgC", "positive_TgC"],
            totals.iter().map(|(t, c)| {
                vec![
                    t.region.clone(),
                    t.period.label(),
                    t.method.to_string(),
                    c.negative_tgc.to_string(),
                    c.positive_tgc.to_string(),
                ]
            }),
        )?,
    )?;

    let stats = compare_all(&jobs, &reports)?;
    if !stats.is_empty() {
        write_comparison(ctx, &stats)?;
    }

    let mut out = String::new();
    for t in &thresholds {
        out.push_str(&format!(
            "extremes {} {} {}: q_neg {:.3} GgC, q_pos {:.3} GgC\n",
            t.region,
            t.period.label(),
            t.method,
            t.q_neg,
            t.q_pos
        ));
    }
    if !stats.is_empty() {
        out.push_str(&threshold_table(&stats).to_text());
    }
    Ok(out.trim_end().to_owned())
}

pub fn cmd_compare(ctx: &Context) -> Result<String> {
    let jobs = ctx.jobs();
    let reports = ctx.run_jobs(&jobs, |job| {
        reports_for(ctx, job, &[Method::Vae, Method::Ssa])
    })?;
    let stats = compare_all(&jobs, &reports)?;
    write_comparison(ctx, &stats)?;
    let mut out = String::new();
    for s in &stats {
        out.push_str(&format!(
            "compare {} {}: correlation {:.3}/{:.3}, jaccard {:.3}/{:.3} (negative/positive)\n",
            s.region,
            s.period.label(),
            s.correlation_negative,
            s.correlation_positive,
            s.jaccard_negative,
            s.jaccard_positive
        ));
    }
    out.push_str(&threshold_table(&stats).to_text());
    Ok(out.trim_end().to_owned())
}

// ---------------------------------------------------------------- gridsearch

pub fn cmd_gridsearch(ctx: &Context) -> Result<String> {
    let Some(space) = &ctx.config.gridsearch else {
        return Err(CliError::Config(
            "`gridsearch` needs a `gridsearch` section in the config".into(),
        ));
    };
    let jobs = ctx.jobs();
    let results = ctx.run_jobs(&jobs, |job| {
        let mass = ctx.mass(job)?;
        let (windows, norm) = normalize(&mass)?;
        let (trials, best) = grid_search(
            &windows,
            norm,
            space,
            &ctx.config.vae.architecture,
            &ctx.train_config(job),
        )?;
        let path = ctx
            .out()
            .join("gridsearch")
            .join(format!("{}.csv", ctx.job_name(job)));
        write_file(&path, &trials_csv(&trials, best)?)?;
        Ok((trials, best))
    })?;
    let mut out = String::new();
    for (job, (trials, best)) in jobs.iter().zip(&results) {
        let t = &trials[*best];
        out.push_str(&format!(
            "gridsearch {}: {} trials, best #{} hidden {} latent {} lr {} loss {:.6}\n",
            ctx.job_name(job),
            trials.len(),
            t.index,
            hidden_label(&t.hidden),
            t.latent_dim,
            t.learning_rate,
            t.best_validation_loss
        ));
    }
    Ok(out.trim_end().to_owned())
}

fn hidden_label(hidden: &[usize]) -> String {
    hidden
        .iter()
        .map(|h| h.to_string())
        .collect::<Vec<_>>()
        .join("-")
}

/// One row per trial in grid order; `best` is 1 on exactly one row.
pub fn trials_csv(trials: &[Trial], best: usize) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "trial",
            "hidden",
            "latent_dim",
            "learning_rate",
            "best_validation_loss",
            "best_epoch",
            "epochs_run",
            "best",
        ],
        trials.iter().enumerate().map(|(i, t)| {
            vec![
                t.index.to_string(),
                hidden_label(&t.hidden),
                t.latent_dim.to_string(),
                t.learning_rate.to_string(),
                t.best_validation_loss.to_string(),
                t.best_epoch.to_string(),
                t.epochs_run.to_string(),
                u8::from(i == best).to_string(),
            ]
        }),
    )
}
