use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;
use ssr_core::inference::{initial_estimate_with_survival, postselection_curve, CurvePoint};
use ssr_core::io::{self, f, f_opt};
use ssr_core::montecarlo::{histograms_from_shots, simulate, total_variation, McClass, McConfig};
use ssr_core::optimizer::{argmin_error, error_vs_duration, select_optimum, sweep_cells, SweepPoint};
use ssr_core::counting::n_max_for;
use ssr_core::{ConditionalCounts, Parity, State, StatePriors, SwitchingRates, Window};

use crate::config::{RunConfig, System};
use crate::error::CliError;

/// Serialised writer for one output directory.
pub struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir, written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

fn json_text(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialise");
    s.push('\n');
    s
}

fn parameters(sys: &System, priors: &StatePriors) -> serde_json::Value {
    json!({
        "gamma_0": sys.rates.gamma_0(),
        "gamma_1": sys.rates.gamma_1(),
        "lambda_0": sys.emission.lambda_0(),
        "lambda_1": sys.emission.lambda_1(),
        "duration": sys.window.duration(),
        "grid_nodes": sys.window.grid_nodes(),
        "p0": priors.p0(),
    })
}

fn two_column(a: &[f64], b: &[f64]) -> String {
    io::table(
        &["n", "pmf_0", "pmf_1"],
        a.iter().zip(b).enumerate().map(|(n, (x, y))| vec![n.to_string(), f(*x), f(*y)]),
    )
}

pub fn pdf(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let sys = cfg.system()?;
    let priors = cfg.priors(&sys.rates)?;
    let cc = ConditionalCounts::compute(&sys.rates, &sys.emission, &sys.window)?;
    let i0 = cc.given_initial(State::Zero)?;
    let i1 = cc.given_initial(State::One)?;
    let f0 = cc.given_final(State::Zero, &priors)?;
    let f1 = cc.given_final(State::One, &priors)?;
    out.write("pdf_initial.csv", &two_column(i0.pmf(), i1.pmf()))?;
    out.write("pdf_final.csv", &two_column(f0.pmf(), f1.pmf()))?;
    let parity = |s: State| {
        json!({
            "even": cc.parity_probability(s, Parity::Even),
            "odd": cc.parity_probability(s, Parity::Odd),
        })
    };
    let summary = json!({
        "parameters": parameters(&sys, &priors),
        "n_max": cc.n_max(),
        "parity_probability": { "initial_0": parity(State::Zero), "initial_1": parity(State::One) },
        "final_state_probability": {
            "0": cc.final_state_probability(State::Zero, &priors),
            "1": cc.final_state_probability(State::One, &priors),
        },
        "mean_count": {
            "initial_0": i0.mean(), "initial_1": i1.mean(), "final_0": f0.mean(), "final_1": f1.mean(),
        },
        "pmf": {
            "initial_0": i0.pmf(), "initial_1": i1.pmf(), "final_0": f0.pmf(), "final_1": f1.pmf(),
        },
    });
    out.write("pdf.json", &json_text(&summary))
}

pub fn mc(cfg: &RunConfig, out: &mut Output, compare: bool) -> Result<(), CliError> {
    let sys = cfg.system()?;
    let priors = cfg.priors(&sys.rates)?;
    let settings = cfg.mc()?;
    let config = McConfig::new(settings.runs, settings.seed).with_stream(settings.stream_id);
    let start = Instant::now();
    let shots = simulate(&config, &sys.rates, &sys.emission, &sys.window, &priors);
    let n_max = n_max_for(&sys.emission, &sys.window);
    let hists = histograms_from_shots(&shots, n_max)?;
    let wall = start.elapsed().as_secs_f64();

    let mut csv = String::from("n,pmf_estimate,stderr,class\n");
    for h in &hists.histograms {
        csv.push_str(io::histogram_csv(h).split_once('\n').map_or("", |(_, rows)| rows));
    }
    out.write("mc_histograms.csv", &csv)?;

    if compare {
        let cc = ConditionalCounts::compute(&sys.rates, &sys.emission, &sys.window)?;
        let mut rows = Vec::new();
        for class in McClass::ALL {
            let analytic = match class {
                McClass::Initial(s) => cc.given_initial(s)?,
                McClass::Final(s) => cc.given_final(s, &priors)?,
            };
            let h = hists.get(class);
            let tv = total_variation(analytic.pmf(), &h.pmf);
            println!("{class}: {} samples, TV {tv:.4}", h.samples);
            rows.push(vec![class.to_string(), h.samples.to_string(), f(tv)]);
        }
        out.write("mc_compare.csv", &io::table(&["class", "samples", "total_variation"], rows))?;
    }

    let classes: serde_json::Map<String, serde_json::Value> = hists
        .histograms
        .iter()
        .map(|h| (h.class.to_string(), json!({ "samples": h.samples, "overflow": h.overflow })))
        .collect();
    let manifest = json!({
        "seed": settings.seed,
        "stream_id": settings.stream_id,
        "runs": settings.runs,
        "parameters": parameters(&sys, &priors),
        "n_max": n_max,
        "classes": classes,
        "wall_time_s": wall,
    });
    out.write("mc_manifest.json", &json_text(&manifest))
}

fn curve_rows(
    rates: &SwitchingRates,
    duration: f64,
    target: State,
    solid: &[CurvePoint],
    baseline: &[CurvePoint],
) -> Vec<Vec<String>> {
    solid
        .iter()
        .map(|p| {
            let b = baseline.iter().find(|b| b.threshold == p.threshold);
            vec![
                f(rates.gamma_0()),
                f(rates.gamma_1()),
                f(duration),
                target.index().to_string(),
                p.threshold.to_string(),
                f(p.efficiency),
                f(p.error_rate),
                f(p.error_rate_unweighted),
                f(p.fidelity),
                f(p.success_rate),
                f_opt(b.map(|b| b.error_rate)),
                f_opt(b.map(|b| b.fidelity)),
            ]
        })
        .collect()
}

pub fn error_curve(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let sys = cfg.system()?;
    let ec = cfg
        .error_curve
        .as_ref()
        .ok_or_else(|| CliError::config("error_curve", "section is required"))?;
    let durations = ec.durations.resolve("error_curve.durations")?;
    if let Some(d) = durations.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(CliError::config("error_curve.durations", format!("durations must be > 0, got {d}")));
    }
    let rate_sets: Vec<SwitchingRates> = match &ec.gammas {
        None => vec![sys.rates],
        Some(g) if g.is_empty() => return Err(CliError::config("error_curve.gammas", "list is empty")),
        Some(g) => g
            .iter()
            .map(|&x| SwitchingRates::symmetric(x).map_err(|e| CliError::config("error_curve.gammas", e)))
            .collect::<Result<_, _>>()?,
    };
    if let Some(d) = ec.efficiency_duration {
        if !(d.is_finite() && d > 0.0) {
            return Err(CliError::config("error_curve.efficiency_duration", format!("must be > 0, got {d}")));
        }
    }

    let mut vs_t = Vec::new();
    let mut vs_eff = Vec::new();
    for rates in &rate_sets {
        let priors = cfg.priors(rates)?;
        let curve = error_vs_duration(rates, &sys.emission, &priors, &durations)?;
        for p in &curve {
            vs_t.push(vec![f(rates.gamma_0()), f(rates.gamma_1()), f(p.duration), f(p.error_final), f(p.error_initial)]);
        }
        let best = &curve[argmin_error(&curve).expect("durations are non-empty")];
        println!(
            "gamma_0={} gamma_1={}: minimum error {:.4e} at T={:e}",
            rates.gamma_0(),
            rates.gamma_1(),
            best.error_final,
            best.duration
        );
        let t = ec.efficiency_duration.unwrap_or(best.duration);
        let window = Window::with_grid_nodes(t, sys.window.grid_nodes())?;
        let cc = ConditionalCounts::compute(rates, &sys.emission, &window)?;
        let fp = cc.final_priors(&priors)?;
        for target in State::ALL {
            let solid = postselection_curve(&cc.given_final(target, &priors)?, &cc.given_final(target.other(), &priors)?, &fp)?;
            let baseline = initial_estimate_with_survival(
                &cc.given_initial(target)?,
                &cc.given_initial(target.other())?,
                &priors,
                rates.leaving(target),
                &window,
            )?;
            vs_eff.extend(curve_rows(rates, t, target, &solid, &baseline));
        }
    }
    out.write(
        "error_vs_duration.csv",
        &io::table(&["gamma_0", "gamma_1", "duration", "error_final", "error_initial"], vs_t),
    )?;
    out.write(
        "error_vs_efficiency.csv",
        &io::table(
            &[
                "gamma_0",
                "gamma_1",
                "duration",
                "target",
                "threshold",
                "efficiency",
                "error_rate",
                "error_rate_unweighted",
                "fidelity",
                "success_rate",
                "baseline_error_rate",
                "baseline_fidelity",
            ],
            vs_eff,
        ),
    )
}

pub fn optimize(cfg: &RunConfig, config_dir: &Path, out: &mut Output) -> Result<(), CliError> {
    let o = cfg.optimize(config_dir)?;
    let cells = sweep_cells(&o.scenario, o.calibration.as_ref(), &o.grid)?;
    let controls = o.grid.controls();
    let columns = o.grid.columns();
    let plane = |get: &dyn Fn(&SweepPoint) -> Option<f64>| {
        let rows: Vec<Vec<Option<f64>>> = cells.chunks(columns.len()).map(|r| r.iter().map(get).collect()).collect();
        io::plane_csv(&controls, &columns, &rows)
    };
    out.write("plane_fidelity.csv", &plane(&|p| Some(p.fidelity)))?;
    out.write("plane_threshold.csv", &plane(&|p| p.threshold.map(|t| t as f64)))?;
    out.write("plane_threshold_shift.csv", &plane(&|p| p.threshold_shift.map(|t| t as f64)))?;
    out.write("plane_attempts.csv", &plane(&|p| p.attempts))?;
    out.write("plane_time.csv", &plane(&|p| p.total_time))?;

    let best = select_optimum(&cells, o.scenario.target_fidelity)?;
    let p = &cells[best];
    println!(
        "optimum: control={:e} duration={:e} threshold={} fidelity={:.6} attempts={:.4} time={:.6e} s",
        p.control,
        p.duration,
        p.threshold.expect("optimum is feasible"),
        p.fidelity,
        p.attempts.expect("optimum is feasible"),
        p.total_time.expect("optimum is feasible"),
    );
    let summary = json!({
        "scenario": o.scenario,
        "grid": o.grid,
        "optimum_index": best,
        "optimum": p,
        "feasible_cells": cells.iter().filter(|c| c.feasible()).count(),
        "cells": cells.len(),
    });
    out.write("optimum.json", &json_text(&summary))
}
