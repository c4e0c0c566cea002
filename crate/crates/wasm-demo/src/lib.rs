//! Browser bindings. Every export takes plain numbers or JSON and returns a
//! JSON string; errors surface as a thrown string.

use serde::Serialize;
use serde_json::json;
use slqr::arm::{build_arm_model, synthesize_stabilizing_gain, ArmParams};
use slqr::model_free::{learn_with_source, SampledData};
use slqr::report::error_chart;
use slqr::{
    close_loop, is_asms, run_model_based, solve_gare_pi, CostWeights, FeedbackGain, LearnConfig, NoiseKind,
    Reference, SimulatedPlant, StochasticLinearSystem,
};
use wasm_bindgen::prelude::*;

type Out = Result<String, String>;

fn text<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn to_js(r: Out) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[derive(Serialize)]
struct Step {
    iter: usize,
    gare_residual: f64,
    step_norm: f64,
}

/// Scalar policy iteration from `f0`.
pub fn scalar_gare_json(a: f64, b: f64, c: f64, d: f64, q: f64, r: f64, f0: f64) -> Out {
    let sys = StochasticLinearSystem::scalar(a, b, c, d);
    let w = CostWeights::scalar(q, r);
    let gain = FeedbackGain::scalar(f0);
    let cl = close_loop(&sys, &gain).map_err(text)?;
    let radius = is_asms(&cl.a, &cl.c).map_err(text)?.spectral_radius;
    if radius >= 1.0 {
        return Err(format!("f0 = {f0} is not mean-square stabilizing (radius {radius:.4})"));
    }
    let sol = solve_gare_pi(&sys, &w, &gain, 1e-12, 100).map_err(text)?;
    let steps: Vec<Step> = sol
        .log
        .entries
        .iter()
        .map(|e| Step {
            iter: e.iter,
            gare_residual: e.gare_residual,
            step_norm: e.step_norm,
        })
        .collect();
    Ok(json!({
        "P": sol.p.matrix()[(0, 0)],
        "F": sol.f.matrix()[(0, 0)],
        "converged": sol.converged,
        "iterations": sol.iterations,
        "initial_radius": radius,
        "steps": steps,
    })
    .to_string())
}

fn arm_setup(params_json: &str) -> Result<(StochasticLinearSystem, CostWeights, FeedbackGain), String> {
    let params: ArmParams = if params_json.trim().is_empty() {
        ArmParams::default()
    } else {
        serde_json::from_str(params_json).map_err(text)?
    };
    let (sys, w) = build_arm_model(&params).map_err(text)?;
    let f0 = synthesize_stabilizing_gain(&sys, 10_000)
        .map_err(text)?
        .ok_or("no stabilizing initial gain found")?;
    Ok((sys, w, f0))
}

/// Policy iteration and the primal-dual solver on the arm model.
pub fn arm_policy_iteration_json(params_json: &str) -> Out {
    let (sys, w, f0) = arm_setup(params_json)?;
    let pi = solve_gare_pi(&sys, &w, &f0, 1e-9, 100).map_err(text)?;
    let pd = run_model_based(&sys, &w, &f0, 1e-9, 100).map_err(text)?;
    let cl = close_loop(&sys, &pi.f).map_err(text)?;
    let radius = is_asms(&cl.a, &cl.c).map_err(text)?.spectral_radius;
    Ok(json!({
        "F": pi.f,
        "iterations": pi.iterations,
        "converged": pi.converged,
        "closed_loop_radius": radius,
        "residuals": pi.log.entries.iter().map(|e| e.gare_residual).collect::<Vec<_>>(),
        "pd_iterations": pd.log.len(),
        "pi_pd_gain_difference": (pd.f.matrix() - pi.f.matrix()).norm(),
    })
    .to_string())
}

/// Model-free learning on the simulated arm, scored against policy iteration.
pub fn learn_arm_json(seed: u64, paths: usize, max_iter: usize) -> Out {
    let (sys, w, f0) = arm_setup("")?;
    let pi = solve_gare_pi(&sys, &w, &f0, 1e-9, 100).map_err(text)?;
    let reference = Reference { f: pi.f, x: pi.x };
    let cfg = LearnConfig {
        paths,
        max_iter,
        master_seed: seed,
        ..LearnConfig::default()
    };
    cfg.validate().map_err(text)?;
    let plant = SimulatedPlant::new(sys.clone(), NoiseKind::Gaussian);
    let mut source = SampledData {
        plant: &plant,
        initial: cfg.initial_vectors(sys.n(), sys.m()).map_err(text)?,
        horizon: cfg.horizon,
        paths: cfg.paths,
        master_seed: seed,
    };
    let res = learn_with_source(&mut source, &sys.c, &sys.d, &w, &f0, cfg.tol, cfg.max_iter, Some(&reference))
        .map_err(text)?;
    let svg = error_chart(std::slice::from_ref(&res.log)).render();
    Ok(json!({
        "rel_err_F": res.log.entries.iter().map(|e| e.rel_err_f).collect::<Vec<_>>(),
        "F": res.f,
        "F_ref": reference.f,
        "svg": svg,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn scalar_gare(a: f64, b: f64, c: f64, d: f64, q: f64, r: f64, f0: f64) -> Result<String, JsValue> {
    to_js(scalar_gare_json(a, b, c, d, q, r, f0))
}

#[wasm_bindgen]
pub fn arm_policy_iteration(params_json: &str) -> Result<String, JsValue> {
    to_js(arm_policy_iteration_json(params_json))
}

#[wasm_bindgen]
pub fn learn_arm(seed: u32, paths: u32, max_iter: u32) -> Result<String, JsValue> {
    to_js(learn_arm_json(seed as u64, paths as usize, max_iter as usize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn scalar() {
        let v: Value = serde_json::from_str(&scalar_gare_json(1.0, 1.0, 0.2, 0.0, 1.0, 1.0, -0.5).unwrap()).unwrap();
        assert!((v["P"].as_f64().unwrap() - 1.6971187186551706).abs() < 1e-10);
        assert!(v["converged"].as_bool().unwrap());
        assert!(scalar_gare_json(1.0, 1.0, 0.2, 0.0, 1.0, 1.0, 0.5).unwrap_err().contains("not mean-square"));
    }

    #[test]
    fn arm() {
        let v: Value = serde_json::from_str(&arm_policy_iteration_json("").unwrap()).unwrap();
        assert!(v["closed_loop_radius"].as_f64().unwrap() < 1.0);
        assert!(v["pi_pd_gain_difference"].as_f64().unwrap() < 1e-8);
        assert!(arm_policy_iteration_json("{\"tau\": -1}").is_err());
    }

    #[test]
    fn learning() {
        let v: Value = serde_json::from_str(&learn_arm_json(3, 40, 3).unwrap()).unwrap();
        assert_eq!(v["rel_err_F"].as_array().unwrap().len(), 3);
        assert!(v["svg"].as_str().unwrap().starts_with("<svg"));
    }
}
