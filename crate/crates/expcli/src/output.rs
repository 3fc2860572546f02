//! Result files: `results.csv`, `run.json`, figure SVGs and the χ dump.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use dampchan::channel::{apply_channel, damping_kraus, DampingParams, Side};
use dampchan::metrics::tangle;
use serde::Serialize;

use crate::error::Result;
use crate::run::{input_state, ChiDump, ExperimentRun, ResultRow, RunKind};
use crate::svg::{chi_panels, Plot};

pub const CSV_HEADER: [&str; 12] = [
    "case",
    "alpha",
    "beta",
    "psucc_analytic",
    "psucc_sim",
    "psucc_sigma",
    "tangle",
    "tangle_sigma",
    "fidelity",
    "fidelity_sigma",
    "trace_distance",
    "trace_distance_sigma",
];

const THEORY_POINTS: usize = 181;

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_results_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.write_record([
            r.case.clone(),
            r.alpha.to_string(),
            r.beta.to_string(),
            r.psucc_analytic.to_string(),
            cell(r.psucc_sim),
            cell(r.psucc_sigma),
            cell(r.tangle),
            cell(r.tangle_sigma),
            cell(r.fidelity),
            cell(r.fidelity_sigma),
            cell(r.trace_distance),
            cell(r.trace_distance_sigma),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_chi_dump<W: Write>(dump: &ChiDump, w: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        row: &'a str,
        col: &'a str,
        reconstructed_re: f64,
        reconstructed_im: f64,
        ideal_re: f64,
        ideal_im: f64,
    }
    let labels = ["I", "X", "Y", "Z"];
    let mut out = csv::Writer::from_writer(w);
    for i in 0..4 {
        for j in 0..4 {
            out.serialize(Row {
                row: labels[i],
                col: labels[j],
                reconstructed_re: dump.reconstructed_re[i][j],
                reconstructed_im: dump.reconstructed_im[i][j],
                ideal_re: dump.ideal_re[i][j],
                ideal_im: dump.ideal_im[i][j],
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

fn theory_curve(run: &ExperimentRun, f: impl Fn(DampingParams) -> f64) -> Vec<(f64, f64)> {
    (0..THEORY_POINTS)
        .map(|i| {
            let beta = FRAC_PI_2 * i as f64 / (THEORY_POINTS - 1) as f64;
            let p = run.config.case.params(beta).expect("beta inside [0, pi/2]");
            (beta, f(p))
        })
        .collect()
}

fn base_plot(title: String, y_label: &str) -> Plot {
    Plot {
        title,
        x_label: "beta (rad)".into(),
        y_label: y_label.into(),
        x_range: (0.0, FRAC_PI_2),
        ..Default::default()
    }
}

fn fig2_plots(run: &ExperimentRun) -> Result<Vec<(&'static str, String)>> {
    let case = run.config.case.name();
    let mut psucc = base_plot(format!("Success probability, {case}"), "p_succ");
    psucc.theory = theory_curve(run, |p| p.optimal_success_probability());
    psucc.band = run
        .band
        .iter()
        .map(|b| {
            let (m, s) = (b.transmission.mean, b.transmission.stddev);
            (b.params.beta(), m - s, m + s)
        })
        .collect();
    psucc.points = run
        .rows
        .iter()
        .filter_map(|r| Some((r.beta, r.psucc_sim?, r.psucc_sigma.unwrap_or(0.0))))
        .collect();
    psucc.y_range = (0.4, 1.05);

    let rho_in = input_state(&run.config)?;
    let mut tau = base_plot(format!("Tangle, {case}"), "tangle");
    tau.theory = theory_curve(run, |p| {
        apply_channel(&damping_kraus(p), &rho_in, Side::AOnly)
            .map(|out| tangle(&out))
            .unwrap_or(f64::NAN)
    });
    tau.band = run
        .band
        .iter()
        .map(|b| {
            let (m, s) = (b.tangle.mean, b.tangle.stddev);
            (b.params.beta(), m - s, m + s)
        })
        .collect();
    tau.points = run
        .rows
        .iter()
        .filter_map(|r| Some((r.beta, r.tangle?, r.tangle_sigma.unwrap_or(0.0))))
        .collect();
    tau.y_range = (-0.05, 1.05);
    Ok(vec![
        ("fig2a_psucc.svg", psucc.render()),
        ("fig2b_tangle.svg", tau.render()),
    ])
}

fn fig3_plots(run: &ExperimentRun) -> Vec<(&'static str, String)> {
    let case = run.config.case.name();
    let mut fid = base_plot(format!("Process fidelity, {case}"), "F");
    fid.theory = vec![(0.0, 1.0), (FRAC_PI_2, 1.0)];
    fid.points = run
        .rows
        .iter()
        .filter_map(|r| Some((r.beta, r.fidelity?, r.fidelity_sigma.unwrap_or(0.0))))
        .collect();
    fid.fit_y_range(None, Some(1.0 + 1e-3));

    let mut dist = base_plot(format!("Maximum trace distance, {case}"), "D");
    dist.theory = vec![(0.0, 0.0), (FRAC_PI_2, 0.0)];
    dist.points = run
        .rows
        .iter()
        .filter_map(|r| {
            Some((
                r.beta,
                r.trace_distance?,
                r.trace_distance_sigma.unwrap_or(0.0),
            ))
        })
        .collect();
    dist.fit_y_range(Some(-1e-3), None);

    let mut out = vec![
        ("fig3a_fidelity.svg", fid.render()),
        ("fig3a_trace_distance.svg", dist.render()),
    ];
    if let Some(d) = &run.chi_dump {
        out.push((
            "fig3b_chi.svg",
            chi_panels(
                &format!(
                    "Process matrix at alpha = {}, beta = {:.4}",
                    d.alpha, d.beta
                ),
                &[
                    ("Re reconstructed", d.reconstructed_re),
                    ("Im reconstructed", d.reconstructed_im),
                    ("Re ideal", d.ideal_re),
                    ("Im ideal", d.ideal_im),
                ],
            ),
        ));
    }
    out
}

/// Write every artifact of `run` into `dir` and return the paths written.
pub fn emit_outputs(run: &ExperimentRun, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let csv_path = dir.join("results.csv");
    write_results_csv(&run.rows, fs::File::create(&csv_path)?)?;
    written.push(csv_path);

    let json_path = dir.join("run.json");
    fs::write(&json_path, serde_json::to_string_pretty(run)? + "\n")?;
    written.push(json_path);

    if let Some(d) = &run.chi_dump {
        let p = dir.join("chi_dump.csv");
        write_chi_dump(d, fs::File::create(&p)?)?;
        written.push(p);
    }

    let plots = match run.kind {
        RunKind::Fig2 => fig2_plots(run)?,
        RunKind::Fig3 => fig3_plots(run),
    };
    for (name, svg) in plots {
        let p = dir.join(name);
        fs::write(&p, svg)?;
        written.push(p);
    }
    Ok(written)
}

pub fn load_run(path: &Path) -> Result<ExperimentRun> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
