use rayon::prelude::*;
use serde_json::json;

use pseudospec::circuit::{build_pathway_circuit, export_qasm, gate_census, CircuitSettings, MeasureBasis};
use pseudospec::collision::{CollisionPropagator, CollisionStepSpec};
use pseudospec::config::{Engine, NoiseFloor, RunConfig};
use pseudospec::dynamics::{step_count, trajectory, DensityMatrix, Propagator, Trajectory, TRACE_DRIFT_LIMIT};
use pseudospec::linalg;
use pseudospec::response::{
    decompose_site_basis, enumerate_pathways, evaluate_classical, evaluate_quantum, ClassicalDynamics,
    ClassicalOptions, DelayGrid, PathwaySpec, PhaseMatching, QuantumOptions, ResponseGrid,
};
use pseudospec::spectra::{
    absorption_spectrum, apply_rotating_frame, shot_noise_floor, snr_cut_and_pad, spectrum_2d_with, Spectrum1D,
    Spectrum2DOptions,
};
use pseudospec::{Error, Model, Result};

use crate::output::{time_label, OutputDir};

fn classical_options(cfg: &RunConfig) -> ClassicalOptions {
    let s = &cfg.simulation;
    let dynamics = match RunConfig::integrator(s.propagator) {
        Some(i) => ClassicalDynamics::Lindblad(i),
        None => ClassicalDynamics::Collision {
            hamiltonian_trotter_steps: s.hamiltonian_trotter_steps,
            collision_trotter_steps: s.collision_trotter_steps,
        },
    };
    ClassicalOptions::new(s.dt).with_dynamics(dynamics)
}

fn quantum_options(cfg: &RunConfig, shots: bool) -> QuantumOptions {
    let s = &cfg.simulation;
    let base = if shots { QuantumOptions::shots(s.dt, s.shots, s.seed) } else { QuantumOptions::exact(s.dt) };
    let mut opts = base
        .with_settings(
            CircuitSettings::new(s.dt)
                .with_trotter(s.hamiltonian_trotter_steps, s.collision_trotter_steps)
                .with_scheme(s.ancilla_scheme.scheme()),
        )
        .with_pruning(s.pruning.pruning());
    if let Some(b) = s.memory_budget {
        opts.emulator.memory_budget = b as u128;
    }
    opts
}

fn evaluate(cfg: &RunConfig, engine: Engine, pathway: &PathwaySpec, grid: &DelayGrid, model: &Model) -> Result<ResponseGrid> {
    match engine {
        Engine::Classical => evaluate_classical(pathway, grid, model, &classical_options(cfg)),
        Engine::QuantumExact => evaluate_quantum(pathway, grid, model, &quantum_options(cfg, false)),
        Engine::QuantumShots => evaluate_quantum(pathway, grid, model, &quantum_options(cfg, true)),
    }
}

fn pathway_named(name: &str) -> Result<PathwaySpec> {
    let upper = name.to_ascii_uppercase();
    let (order, pm) = if upper.starts_with('R') { (1, PhaseMatching::Linear) } else { (3, PhaseMatching::Rephasing) };
    enumerate_pathways(order, pm)?
        .into_iter()
        .find(|p| p.name().eq_ignore_ascii_case(&upper))
        .ok_or_else(|| Error::Config { field: "pathway".into(), msg: format!("unknown pathway `{name}`") })
}

pub fn dynamics(cfg: &RunConfig, out: &OutputDir) -> Result<Vec<String>> {
    let model = cfg.model()?;
    let d = &cfg.dynamics;
    let s = &cfg.simulation;
    let observables = cfg.observables()?;
    let rho = DensityMatrix::physical(model.initial_state(d.initial_site.checked_sub(1)))?;
    let traj = match RunConfig::integrator(d.propagator) {
        Some(integrator) => {
            let prop = Propagator::for_model(&model, s.dt, integrator)?;
            trajectory(&model, &prop, &rho, d.t_total, d.sample_every, &observables)?
        }
        None => {
            let spec = CollisionStepSpec::for_model(&model, s.dt)
                .with_trotter(s.hamiltonian_trotter_steps, s.collision_trotter_steps);
            let prop = CollisionPropagator::new(&model, spec)?;
            let ops: Vec<_> = observables.iter().map(|o| o.operator(&model)).collect();
            let every = step_count(d.sample_every, s.dt)?.max(1);
            let total = step_count(d.t_total, s.dt)?;
            let mut state = rho.data().clone();
            let mut traj = Trajectory {
                times: Vec::new(),
                labels: observables.iter().map(|o| o.label()).collect(),
                values: Vec::new(),
            };
            for step in 0..=total {
                if step > 0 {
                    let before = linalg::trace(&state);
                    prop.step(&mut state);
                    let drift = (linalg::trace(&state) - before).norm();
                    if !(drift <= TRACE_DRIFT_LIMIT) {
                        return Err(Error::TraceDrift { drift, limit: TRACE_DRIFT_LIMIT });
                    }
                }
                if step % every == 0 || step == total {
                    traj.times.push(step as f64 * s.dt);
                    traj.values.push(ops.iter().map(|op| linalg::trace(&(op * &state))).collect());
                }
            }
            traj
        }
    };
    let file = out.write("trajectory.csv", |w| {
        write!(w, "time_fs")?;
        for l in &traj.labels {
            write!(w, ",{l}_re,{l}_im")?;
        }
        writeln!(w)?;
        for (t, row) in traj.times.iter().zip(&traj.values) {
            write!(w, "{t}")?;
            for v in row {
                write!(w, ",{},{}", v.re, v.im)?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    let mut plot = String::from("set datafile separator ','\nset key autotitle columnhead\nset xlabel 't (fs)'\nplot");
    for (k, _) in traj.labels.iter().enumerate() {
        plot.push_str(&format!("{} 'trajectory.csv' using 1:{} with lines", if k == 0 { "" } else { "," }, 2 + 2 * k));
    }
    plot.push('\n');
    Ok(vec![file, out.write_text("plot_dynamics.gp", &plot)?])
}

fn write_response(out: &OutputDir, name: &str, r: &ResponseGrid) -> Result<String> {
    out.write(name, |w| r.write_csv(w))
}

fn write_spectrum(out: &OutputDir, stem: &str, s: &Spectrum1D) -> Result<Vec<String>> {
    Ok(vec![
        out.write(&format!("{stem}.csv"), |w| s.write_csv(w))?,
        out.write_text(&format!("{stem}.json"), &s.to_json()?)?,
    ])
}

fn linear_spectrum(cfg: &RunConfig, r: &ResponseGrid, floor: NoiseFloor) -> Result<Spectrum1D> {
    let s = &cfg.simulation;
    let framed = apply_rotating_frame(r, s.rotating_frame);
    let floor = match floor {
        NoiseFloor::None => None,
        NoiseFloor::Value(v) => Some(v),
        NoiseFloor::Auto => shot_noise_floor(r),
    };
    let padded = snr_cut_and_pad(&framed, floor, r.values.len() * s.pad_factor)?;
    absorption_spectrum(&padded)
}

pub fn absorption(cfg: &RunConfig, out: &OutputDir) -> Result<Vec<String>> {
    let model = cfg.model()?;
    let a = &cfg.absorption;
    let grid = DelayGrid::linear(a.step, a.count)?;
    let r1 = pathway_named("R1")?;
    let engine = cfg.simulation.engine;
    let response = evaluate(cfg, engine, &r1, &grid, &model)?;
    let mut files = vec![write_response(out, "response.csv", &response)?];
    let spectrum = linear_spectrum(cfg, &response, cfg.noise_floor()?)?;
    files.extend(write_spectrum(out, "spectrum", &spectrum)?);
    let mut plot = String::from(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'energy (eV)'\nplot 'spectrum.csv' using 1:2 with lines",
    );
    if a.overlay && engine != Engine::Classical {
        let reference = evaluate(cfg, Engine::Classical, &r1, &grid, &model)?;
        let s = linear_spectrum(cfg, &reference, NoiseFloor::None)?;
        files.extend(write_spectrum(out, "spectrum_classical", &s)?);
        plot.push_str(", 'spectrum_classical.csv' using 1:2 with lines");
    }
    plot.push('\n');
    files.push(out.write_text("plot_absorption.gp", &plot)?);
    Ok(files)
}

pub fn two_d(cfg: &RunConfig, out: &OutputDir) -> Result<Vec<String>> {
    let model = cfg.model()?;
    let r = &cfg.rephasing;
    let names: Vec<String> =
        if r.pathways.is_empty() { vec!["GSB".into(), "SE".into(), "ESA".into()] } else { r.pathways.clone() };
    let pathways: Vec<PathwaySpec> = names.iter().map(|n| pathway_named(n)).collect::<Result<_>>()?;
    let axis = DelayGrid::axis(0.0, r.step, r.count);
    let options = Spectrum2DOptions { pad_factor: cfg.simulation.pad_factor, ..Default::default() };
    let engine = cfg.simulation.engine;
    let maps: Vec<(ResponseGrid, pseudospec::spectra::Spectrum2D)> = r
        .t2
        .par_iter()
        .map(|&t2| {
            let grid = DelayGrid::rephasing(axis.clone(), t2, axis.clone())?;
            let parts: Vec<ResponseGrid> =
                pathways.iter().map(|p| evaluate(cfg, engine, p, &grid, &model)).collect::<Result<_>>()?;
            let total = ResponseGrid::sum(&parts)?;
            let framed = apply_rotating_frame(&total, cfg.simulation.rotating_frame);
            let map = spectrum_2d_with(&framed, t2, &options)?;
            Ok((total, map))
        })
        .collect::<Result<_>>()?;
    let mut files = Vec::new();
    let energies = model.system.exciton_energies();
    let (b1, b3) = maps[0].1.bin_widths();
    let radius = b1.abs().max(b3.abs());
    let mut peaks = String::from("t2_fs");
    for (a, _) in energies.iter().enumerate() {
        for (b, _) in energies.iter().enumerate() {
            peaks.push_str(&format!(",peak_{}_{}", a + 1, b + 1));
        }
    }
    peaks.push('\n');
    for (&t2, (response, map)) in r.t2.iter().zip(&maps) {
        let tag = time_label(t2);
        files.push(write_response(out, &format!("response_t2_{tag}fs.csv"), response)?);
        files.push(out.write(&format!("spectrum2d_t2_{tag}fs.csv"), |w| map.write_csv(w))?);
        files.push(out.write(&format!("spectrum2d_t2_{tag}fs.dat"), |w| map.write_gnuplot_matrix(w))?);
        peaks.push_str(&tag);
        for &e1 in &energies {
            for &e3 in &energies {
                peaks.push_str(&format!(",{}", map.local_extremum(e1, e3, radius).2));
            }
        }
        peaks.push('\n');
    }
    files.push(out.write_text("peaks.csv", &peaks)?);
    let first = time_label(r.t2[0]);
    let plot = format!(
        "set view map\nset xlabel 'omega3 (eV)'\nset ylabel 'omega1 (eV)'\n\
         plot 'spectrum2d_t2_{first}fs.dat' nonuniform matrix with image\n"
    );
    files.push(out.write_text("plot_2d.gp", &plot)?);
    Ok(files)
}

pub fn circuit(cfg: &RunConfig, out: &OutputDir) -> Result<Vec<String>> {
    let model = cfg.model()?;
    let c = &cfg.circuit;
    let pathway = pathway_named(&c.pathway)?;
    let s = &cfg.simulation;
    let delays = c.delays.clone().unwrap_or_else(|| vec![s.dt; pathway.order()]);
    if delays.len() != pathway.order() {
        return Err(Error::Config {
            field: "circuit.delays".into(),
            msg: format!("pathway {} needs {} delays, got {}", pathway.name(), pathway.order(), delays.len()),
        });
    }
    let settings = CircuitSettings::new(s.dt)
        .with_trotter(s.hamiltonian_trotter_steps, s.collision_trotter_steps)
        .with_scheme(s.ancilla_scheme.scheme());
    let terms = decompose_site_basis(&pathway, &model, s.pruning.pruning())?;
    let mut files = Vec::new();
    let mut entries = Vec::new();
    let mut two_qubit = 0;
    for (j, sb) in terms.iter().take(c.max_circuits).enumerate() {
        let circuit = build_pathway_circuit(&model, &settings, &sb.events, &delays, MeasureBasis::X)?;
        let name = format!("circuits/{}_{j:03}.qasm", pathway.name());
        files.push(out.write_text(&name, &export_qasm(&circuit))?);
        let census = gate_census(&circuit);
        two_qubit += census.two_qubit;
        let coef = sb.coefficient();
        entries.push(json!({
            "file": name,
            "coefficient": [coef.re, coef.im],
            "census": census,
        }));
    }
    let summary = json!({
        "pathway": pathway.name(),
        "site_basis_circuits": terms.len(),
        "written": entries.len(),
        "two_qubit_total": two_qubit,
        "circuits": entries,
    });
    files.push(out.write_text("census.json", &serde_json::to_string_pretty(&summary)?)?);
    Ok(files)
}
