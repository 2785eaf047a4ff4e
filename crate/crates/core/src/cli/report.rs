use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use super::evaluate::PartitionArg;
use super::train::{RunSummary, RUN_CONFIG, SUMMARY};
use super::{create_dir, read_json, write_text, CliError, Result};
use crate::dfg::DfgVariant;
use crate::eventlog::cache::Partition;
use crate::gnn::Task;
use crate::metrics::EvalReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories, or directories containing them.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub partition: PartitionArg,
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: ReportFormat,
    /// Directory for `report_<task>.<ext>` files; tables always go to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Run directories at or below `root` (three levels deep at most).
fn find_runs(root: &Path, depth: usize, found: &mut Vec<PathBuf>) {
    if root.join(RUN_CONFIG).is_file() {
        found.push(root.to_owned());
        return;
    }
    if depth == 0 {
        return;
    }
    if let Ok(entries) = fs::read_dir(root) {
        let mut dirs: Vec<PathBuf> = entries.flatten().map(|e| e.path()).filter(|p| p.is_dir()).collect();
        dirs.sort();
        for d in dirs {
            find_runs(&d, depth - 1, found);
        }
    }
}

/// One table cell: the two headline metrics of a task.
fn metric_pair(report: &EvalReport) -> Option<(f64, f64)> {
    match report.task {
        Task::NextActivity => report.classification.as_ref().map(|c| (c.accuracy, c.weighted_f1)),
        Task::RemainingTime => report.regression.as_ref().map(|r| (r.mae_hours, r.rmse_hours)),
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

type Cells = BTreeMap<(DfgVariant, String), Vec<(f64, f64)>>;

/// Renders one task's variants x datasets matrix. Repeated runs of a cell
/// are summarized by the per-metric median.
pub fn render_table(task: Task, cells: &Cells, format: ReportFormat) -> String {
    let datasets: BTreeSet<&String> = cells.keys().map(|(_, d)| d).collect();
    let variants: Vec<DfgVariant> = DfgVariant::ALL
        .into_iter()
        .filter(|v| cells.keys().any(|(cv, _)| cv == v))
        .collect();
    let (m1, m2) = match task {
        Task::NextActivity => ("accuracy", "f_score"),
        Task::RemainingTime => ("mae_h", "rmse_h"),
    };
    let cell = |v: DfgVariant, d: &String| {
        cells.get(&(v, d.clone())).map(|runs| {
            let a = median(runs.iter().map(|r| r.0).collect());
            let b = median(runs.iter().map(|r| r.1).collect());
            (a, b, runs.len())
        })
    };
    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            let label = match task {
                Task::NextActivity => "Acc. / F-Score",
                Task::RemainingTime => "MAE / RMSE (h)",
            };
            let _ = writeln!(out, "### {task}: {label}\n");
            let _ = writeln!(
                out,
                "| variant | {} |",
                datasets.iter().map(|d| d.as_str()).collect::<Vec<_>>().join(" | ")
            );
            let _ = writeln!(out, "|---|{}", "---|".repeat(datasets.len()));
            for v in &variants {
                let row: Vec<String> = datasets
                    .iter()
                    .map(|d| match cell(*v, d) {
                        None => "-".to_owned(),
                        Some((a, b, n)) => {
                            let s = match task {
                                Task::NextActivity => format!("{a:.4} / {b:.4}"),
                                Task::RemainingTime => format!("{a:.2} / {b:.2}"),
                            };
                            if n > 1 {
                                format!("{s} (n={n})")
                            } else {
                                s
                            }
                        }
                    })
                    .collect();
                let _ = writeln!(out, "| {v} | {} |", row.join(" | "));
            }
        }
        ReportFormat::Csv => {
            let header: Vec<String> = datasets.iter().flat_map(|d| [format!("{d} {m1}"), format!("{d} {m2}")]).collect();
            let _ = writeln!(out, "variant,{}", header.join(","));
            for v in &variants {
                let row: Vec<String> = datasets
                    .iter()
                    .flat_map(|d| match cell(*v, d) {
                        Some((a, b, _)) => [format!("{a:?}"), format!("{b:?}")],
                        None => [String::new(), String::new()],
                    })
                    .collect();
                let _ = writeln!(out, "{v},{}", row.join(","));
            }
        }
    }
    out
}

pub fn cmd_report(args: &ReportArgs) -> Result<PathBuf> {
    let mut runs = Vec::new();
    for root in &args.runs {
        find_runs(root, 3, &mut runs);
    }
    let partition = Partition::from(args.partition);
    let mut by_task: BTreeMap<Task, Cells> = BTreeMap::new();
    for run in &runs {
        let path = run.join(format!("eval_{}.json", partition.name()));
        if !path.is_file() {
            log::warn!("{}: no {} evaluation, skipped", run.display(), partition.name());
            continue;
        }
        let summary: RunSummary = read_json(&run.join(SUMMARY))?;
        let report: EvalReport = read_json(&path)?;
        if let Some(pair) = metric_pair(&report) {
            by_task
                .entry(report.task)
                .or_default()
                .entry((summary.variant, summary.dataset))
                .or_default()
                .push(pair);
        }
    }
    if by_task.is_empty() {
        let roots: Vec<String> = args.runs.iter().map(|p| p.display().to_string()).collect();
        return Err(CliError::NoRunsFound(roots.join(", ")));
    }
    let ext = match args.format {
        ReportFormat::Markdown => "md",
        ReportFormat::Csv => "csv",
    };
    if let Some(dir) = &args.out {
        create_dir(dir)?;
    }
    for (task, cells) in &by_task {
        let table = render_table(*task, cells, args.format);
        println!("{table}");
        if let Some(dir) = &args.out {
            write_text(&dir.join(format!("report_{task}.{ext}")), &table)?;
        }
    }
    Ok(args.out.clone().unwrap_or_else(|| PathBuf::from(".")))
}
