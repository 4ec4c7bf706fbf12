//! Subcommand implementations. Each returns the full text written to stdout.

use std::path::Path;

use affinejd::cone::{boundary_phi, cone_leq, interior_preservation_check, monotonicity_check, regularity_lu_check, SelfDualCone};
use affinejd::model::schema::ModelFile;
use affinejd::riccati::identities::{flow_identity_residual, variation_of_constants_residual};
use affinejd::simulate::{jump_count_check, mc_transform};
use affinejd::transform::{damped_transform_sequence, effective_domain_ray, infinite_divisibility_check, RayOutcome};
use affinejd::{
    explosion_time, simulate_paths, solve_riccati, transform, AffineModel64, Error, ExplosionTime, SimConfig64,
    SolverConfig64, TransformValue64, Verdict,
};
use serde_json::{json, Value};

use crate::parse::C64;
use crate::{Cli, Command, ConeCheck};

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub operation: &'static str,
    pub message: String,
    /// Report printed before the diagnostic (a failed validation still reports).
    pub output: String,
}

fn fail(operation: &'static str) -> impl Fn(Error) -> Failure {
    move |e| {
        let code = match e {
            Error::DimensionMismatch { .. }
            | Error::InvalidModel(_)
            | Error::InvalidConfig(_)
            | Error::UnsupportedSpace(_)
            | Error::UnsupportedFamily(_)
            | Error::StateSpaceMismatch { .. }
            | Error::Schema(_) => 2,
            _ => 1,
        };
        Failure { code, operation, message: e.to_string(), output: String::new() }
    }
}

type Out = Result<String, Failure>;

fn cjson(z: C64) -> Value {
    json!({"re": z.re, "im": z.im})
}

fn cvec(v: &[C64]) -> Value {
    Value::Array(v.iter().map(|z| cjson(*z)).collect())
}

/// JSON numbers cannot hold infinities; they are written as strings.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn emit(v: Value) -> String {
    let mut s = serde_json::to_string_pretty(&v).expect("json value serializes");
    s.push('\n');
    s
}

struct Loaded {
    model: AffineModel64,
    hash: String,
}

fn load(path: &Path) -> Result<Loaded, Failure> {
    let file = ModelFile::read(path).map_err(fail("load model"))?;
    let model = file.to_model::<f64>().map_err(fail("load model"))?;
    Ok(Loaded { model, hash: file.hash() })
}

pub fn run(cli: &Cli) -> Out {
    let mut solver = SolverConfig64::default();
    if let Some(r) = cli.rel_tol {
        solver = solver.with_rel_tol(r);
        solver.validate().map_err(fail("solver configuration"))?;
    }
    let csv = cli.csv;
    match &cli.command {
        Command::Solve { model, u, horizon } => solve(&load(&model.model)?, &u.0, *horizon, &solver, csv),
        Command::Explosion { model, u, t_max } => explosion(&load(&model.model)?, &u.0, *t_max, &solver, csv),
        Command::Transform { model, u, x, t } => transform_cmd(&load(&model.model)?, &u.0, &x.0, *t, &solver, csv),
        Command::Ray { model, direction, horizon, lambda_max } => {
            ray(&load(&model.model)?, &direction.0, *horizon, *lambda_max, &solver, csv)
        }
        Command::Simulate { model, x0, n_paths, dt, horizon, seed, records, u } => {
            let cfg = SimConfig64::new(*n_paths, *dt, *horizon, seed.unwrap_or(0)).with_records(*records);
            simulate(&load(&model.model)?, &x0.0, &cfg, u.as_ref().map(|u| u.0.as_slice()), &solver, csv)
        }
        Command::Validate { model, samples, seed, tol } => {
            validate(&load(&model.model)?, *samples, seed.unwrap_or(0), *tol, &solver, csv)
        }
        Command::Damp { model, u, x, t, n_list } => damp(&load(&model.model)?, &u.0, &x.0, *t, &n_list.0, &solver, csv),
        Command::Idcheck { model, u, t, n } => idcheck(&load(&model.model)?, &u.0, *t, &n.0, &solver, csv),
        Command::ConeCheck { model, check } => cone_check(&load(&model.model)?, check, &solver, csv),
    }
}

fn solve(m: &Loaded, u: &[C64], horizon: f64, cfg: &SolverConfig64, csv: bool) -> Out {
    let sol = solve_riccati(&m.model, u, horizon, cfg).map_err(fail("solve"))?;
    if csv {
        return Ok(sol.to_csv());
    }
    let (psi0, psi) = sol.terminal();
    let mut out = json!({
        "command": "solve",
        "model_hash": m.hash,
        "u": cvec(u),
        "T": horizon,
        "t": sol.last_time(),
        "psi0": cjson(psi0),
        "psi": cvec(psi),
        "steps": sol.grid().len() - 1,
    });
    match sol.verdict() {
        Verdict::Solved { .. } => out["verdict"] = json!("solved"),
        Verdict::Exploded { t_lo, t_hi } => {
            out["verdict"] = json!("exploded");
            out["explosion_bracket"] = json!([t_lo, t_hi]);
        }
    }
    Ok(emit(out))
}

fn explosion(m: &Loaded, u: &[C64], t_max: f64, cfg: &SolverConfig64, csv: bool) -> Out {
    let r = explosion_time(&m.model, u, t_max, cfg).map_err(fail("explosion"))?;
    let (verdict, estimate, bracket) = match r {
        ExplosionTime::Finite { estimate, bracket } => ("finite", Some(estimate), Some(bracket)),
        ExplosionTime::ExceedsHorizon(_) => ("exceeds_horizon", None, None),
    };
    if csv {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        return Ok(format!(
            "verdict,estimate,t_lo,t_hi,t_max\n{verdict},{},{},{},{t_max}\n",
            f(estimate),
            f(bracket.map(|b| b.0)),
            f(bracket.map(|b| b.1))
        ));
    }
    let mut out = json!({"command": "explosion", "model_hash": m.hash, "u": cvec(u), "t_max": t_max, "verdict": verdict});
    if let (Some(e), Some((lo, hi))) = (estimate, bracket) {
        out["estimate"] = json!(e);
        out["bracket"] = json!([lo, hi]);
    }
    Ok(emit(out))
}

fn transform_json(v: &TransformValue64) -> Value {
    let mut out = json!({"verdict": v.tag(), "value": v.value().map(cjson)});
    match v {
        TransformValue64::Finite { psi0, psi, .. } => {
            out["psi0"] = cjson(*psi0);
            out["psi"] = cvec(psi);
        }
        TransformValue64::Unknown(reason) => out["reason"] = json!(reason),
        _ => {}
    }
    out
}

fn transform_cmd(m: &Loaded, u: &[C64], x: &[f64], t: f64, cfg: &SolverConfig64, csv: bool) -> Out {
    let v = transform(&m.model, u, x, t, cfg).map_err(fail("transform"))?;
    if csv {
        let (re, im) = v.value().map(|z| (z.re.to_string(), z.im.to_string())).unwrap_or_default();
        return Ok(format!("verdict,re,im\n{},{re},{im}\n", v.tag()));
    }
    let mut out = transform_json(&v);
    out["command"] = json!("transform");
    out["model_hash"] = json!(m.hash);
    out["u"] = cvec(u);
    out["x"] = json!(x);
    out["t"] = json!(t);
    Ok(emit(out))
}

fn ray(m: &Loaded, direction: &[f64], horizon: f64, lambda_max: f64, cfg: &SolverConfig64, csv: bool) -> Out {
    let probe = effective_domain_ray(&m.model, direction, horizon, lambda_max, cfg).map_err(fail("ray"))?;
    if csv {
        return Ok(probe.to_csv());
    }
    let samples: Vec<Value> = probe
        .samples
        .iter()
        .map(|s| match s.outcome {
            RayOutcome::Exceeds => json!({"lambda": s.lambda, "verdict": "exceeds"}),
            RayOutcome::Explodes { t_inf } => json!({"lambda": s.lambda, "verdict": "explodes", "t_inf": t_inf}),
            RayOutcome::Divergent => json!({"lambda": s.lambda, "verdict": "divergent"}),
        })
        .collect();
    let bounded = probe.lambda_star.is_finite();
    Ok(emit(json!({
        "command": "ray",
        "model_hash": m.hash,
        "direction": direction,
        "T": horizon,
        "lambda_max": lambda_max,
        "verdict": if bounded { "bounded" } else { "unbounded" },
        "lambda_star": num(probe.lambda_star),
        "bracket": probe.bracket,
        "samples": samples,
    })))
}

fn simulate(m: &Loaded, x0: &[f64], cfg: &SimConfig64, u: Option<&[C64]>, solver: &SolverConfig64, csv: bool) -> Out {
    let ens = simulate_paths(&m.model, x0, cfg).map_err(fail("simulate"))?;
    let estimate = match u {
        Some(u) => {
            let mc = mc_transform(&ens, u).map_err(fail("simulate"))?;
            let exact = transform(&m.model, u, x0, cfg.horizon, solver).map_err(fail("simulate"))?;
            Some((u, mc, exact))
        }
        None => None,
    };
    if csv {
        let mut s = ens.summary_csv();
        if let Some((_, mc, exact)) = &estimate {
            // A second table follows a blank line.
            let (re, im) = exact.value().map(|z| (z.re.to_string(), z.im.to_string())).unwrap_or_default();
            s.push_str(&format!(
                "\nmc_re,mc_im,std_error,verdict,re,im\n{},{},{},{},{re},{im}\n",
                mc.value.re,
                mc.value.im,
                mc.std_error,
                exact.tag()
            ));
        }
        return Ok(s);
    }
    let n = ens.n_paths() as f64;
    let p = ens.dim();
    let mut mean = Vec::new();
    let mut std = Vec::new();
    for k in 0..ens.times().len() {
        let mut mk = vec![0.0; p];
        let mut sk = vec![0.0; p];
        for j in 0..ens.n_paths() {
            for (i, v) in ens.state(j, k).iter().enumerate() {
                mk[i] += v;
                sk[i] += v * v;
            }
        }
        for i in 0..p {
            mk[i] /= n;
            sk[i] = if n > 1.0 { ((sk[i] - n * mk[i] * mk[i]).max(0.0) / (n - 1.0)).sqrt() } else { 0.0 };
        }
        mean.push(mk);
        std.push(sk);
    }
    let jumps = jump_count_check(&ens);
    let mut out = json!({
        "command": "simulate",
        "model_hash": ens.model_hash(),
        "seed": cfg.seed,
        "n_paths": cfg.n_paths,
        "dt": cfg.dt,
        "T": cfg.horizon,
        "x0": x0,
        "times": ens.times(),
        "mean": mean,
        "std": std,
        "mean_jumps": jumps.mean_jumps,
        "mean_integrated_intensity": jumps.mean_integrated_intensity,
    });
    if let Some((u, mc, exact)) = estimate {
        out["transform"] = json!({
            "u": cvec(u),
            "mc": cjson(mc.value),
            "std_error": mc.std_error,
            "riccati": transform_json(&exact),
            "abs_error": exact.value().map(|z| (z - mc.value).norm()),
        });
    }
    Ok(emit(out))
}

struct Check {
    name: &'static str,
    value: f64,
    pass: bool,
}

fn validate(m: &Loaded, samples: usize, seed: u64, tol: f64, cfg: &SolverConfig64, csv: bool) -> Out {
    let model = &m.model;
    let space = model.space();
    let p = model.dim();
    let x = space.interior_point().to_vec();
    let report = model.check_admissibility(samples, seed, tol);
    let mut checks = vec![
        Check { name: "min_eigen_c", value: report.min_eigen_c, pass: report.min_eigen_c >= -tol },
        Check { name: "min_jump_weight", value: report.min_jump_weight, pass: report.min_jump_weight >= -tol },
        Check {
            name: "jump_support_violations",
            value: report.support_violations.len() as f64,
            pass: report.support_violations.is_empty(),
        },
    ];

    // Identities that hold for every affine model; only meaningful when admissible.
    if report.pass {
        let zero = vec![C64::new(0.0, 0.0); p];
        let one = transform(model, &zero, &x, 1.0, cfg).map_err(fail("validate"))?;
        let dev = one.value().map(|z| (z - C64::new(1.0, 0.0)).norm()).unwrap_or(f64::INFINITY);
        checks.push(Check { name: "transform_at_zero", value: dev, pass: dev <= 1e-12 });

        let mut flow = 0.0f64;
        let mut char_bound = 0.0f64;
        for (k, s) in [0.3, -0.7, 1.1].iter().enumerate() {
            let u: Vec<C64> = (0..p).map(|i| C64::new(0.0, s * (1.0 + i as f64) / (1.0 + k as f64))).collect();
            flow = flow.max(flow_identity_residual(model, &u, 0.4, 0.6, cfg).map_err(fail("validate"))?);
            let v = transform(model, &u, &x, 1.0, cfg).map_err(fail("validate"))?;
            char_bound = char_bound.max(v.value().map(|z| z.norm()).unwrap_or(f64::INFINITY));
        }
        checks.push(Check { name: "flow_identity_residual", value: flow, pass: flow < 1e-7 });
        checks.push(Check { name: "characteristic_function_modulus", value: char_bound, pass: char_bound <= 1.0 + 1e-9 });

        let candidate: Vec<f64> = x.iter().map(|v| -0.2 * v).collect();
        let cu: Vec<C64> = candidate.iter().map(|v| C64::new(*v, 0.0)).collect();
        let u = if space.in_u(&cu).map_err(fail("validate"))? { candidate } else { vec![0.0; p] };
        let voc = variation_of_constants_residual(model, &u, &x, 0.5, cfg).map_err(fail("validate"))?;
        checks.push(Check { name: "variation_of_constants_residual", value: voc, pass: voc < 1e-6 });
    }
    let pass = checks.iter().all(|c| c.pass);
    let text = if csv {
        let mut s = String::from("check,value,pass\n");
        for c in &checks {
            s.push_str(&format!("{},{},{}\n", c.name, c.value, c.pass));
        }
        s
    } else {
        let list: Vec<Value> = checks.iter().map(|c| json!({"name": c.name, "value": num(c.value), "pass": c.pass})).collect();
        emit(json!({
            "command": "validate",
            "model_hash": m.hash,
            "verdict": if pass { "pass" } else { "fail" },
            "admissible": report.pass,
            "min_eigen_c": report.min_eigen_c,
            "min_eigen_at": report.min_eigen_at,
            "exponential_moments": model.exponential_moment_condition(),
            "samples": report.sampled_points.len(),
            "seed": seed,
            "checks": list,
        }))
    };
    if pass {
        Ok(text)
    } else {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
        Err(Failure { code: 2, operation: "validate", message: format!("failed checks: {}", failed.join(", ")), output: text })
    }
}

fn damp(m: &Loaded, u: &[C64], x: &[f64], t: f64, n_list: &[u64], cfg: &SolverConfig64, csv: bool) -> Out {
    let seq = damped_transform_sequence(&m.model, u, x, t, n_list, cfg).map_err(fail("damp"))?;
    let target = seq.undamped.as_ref().and_then(|v| v.value());
    let distance = |v: &TransformValue64| Some((v.value()? - target?).norm());
    if csv {
        let mut s = String::from("n,verdict,re,im,distance_to_undamped\n");
        for (n, v) in seq.n_list.iter().zip(&seq.values) {
            let (re, im) = v.value().map(|z| (z.re.to_string(), z.im.to_string())).unwrap_or_default();
            let d = distance(v).map(|d| d.to_string()).unwrap_or_default();
            s.push_str(&format!("{n},{},{re},{im},{d}\n", v.tag()));
        }
        return Ok(s);
    }
    let values: Vec<Value> = seq
        .n_list
        .iter()
        .zip(&seq.values)
        .map(|(n, v)| {
            let mut e = transform_json(v);
            e["n"] = json!(n);
            e["distance_to_undamped"] = json!(distance(v));
            e
        })
        .collect();
    Ok(emit(json!({
        "command": "damp",
        "model_hash": m.hash,
        "u": cvec(u),
        "x": x,
        "t": t,
        "values": values,
        "cauchy_differences": seq.cauchy_differences,
        "undamped": seq.undamped.as_ref().map(transform_json),
    })))
}

fn idcheck(m: &Loaded, u: &[C64], t: f64, ns: &[u64], cfg: &SolverConfig64, csv: bool) -> Out {
    let residuals = ns
        .iter()
        .map(|n| infinite_divisibility_check(&m.model, u, t, *n, cfg).map(|r| (*n, r)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail("idcheck"))?;
    if csv {
        let mut s = String::from("n,residual\n");
        for (n, r) in &residuals {
            s.push_str(&format!("{n},{r}\n"));
        }
        return Ok(s);
    }
    let list: Vec<Value> = residuals.iter().map(|(n, r)| json!({"n": n, "residual": r})).collect();
    Ok(emit(json!({"command": "idcheck", "model_hash": m.hash, "u": cvec(u), "t": t, "residuals": list})))
}

fn cone_check(m: &Loaded, check: &ConeCheck, cfg: &SolverConfig64, csv: bool) -> Out {
    let model = &m.model;
    let cone = SelfDualCone::from_space(model.space()).map_err(fail("cone-check"))?;
    let dim = |v: &[f64]| {
        if v.len() == cone.dim() {
            Ok(())
        } else {
            Err(fail("cone-check")(Error::DimensionMismatch { expected: cone.dim(), got: v.len() }))
        }
    };
    let rows: Vec<(&str, Value)> = match check {
        ConeCheck::Leq { u, v } => {
            dim(&u.0)?;
            dim(&v.0)?;
            vec![("leq", json!(cone_leq(&cone, &u.0, &v.0)))]
        }
        ConeCheck::Phi { x } => {
            dim(&x.0)?;
            vec![("phi", json!(boundary_phi(&cone, &x.0))), ("degree", json!(cone.phi_degree()))]
        }
        ConeCheck::Monotonicity { u, v, t, grid } => {
            let r = monotonicity_check(model, &u.0, &v.0, *t, *grid, cfg).map_err(fail("cone-check monotonicity"))?;
            vec![
                ("pass", json!(r.pass)),
                ("psi0_margin", num(r.psi0_margin)),
                ("cone_slack", json!(r.cone_slack)),
                ("tol", json!(r.tol)),
            ]
        }
        ConeCheck::Interior { u, t, grid } => {
            let r = interior_preservation_check(model, &u.0, *t, *grid, cfg).map_err(fail("cone-check interior"))?;
            vec![("pass", json!(r.pass)), ("exploded", json!(r.exploded)), ("min_margin", num(r.min_margin))]
        }
        ConeCheck::Regularity { u } => {
            vec![("regular", json!(regularity_lu_check(model, &u.0).map_err(fail("cone-check regularity"))?))]
        }
    };
    if csv {
        let mut s = String::from("key,value\n");
        for (k, v) in &rows {
            s.push_str(&format!("{k},{}\n", v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string())));
        }
        return Ok(s);
    }
    let mut out = json!({"command": "cone-check", "model_hash": m.hash, "cone": format!("{cone:?}")});
    for (k, v) in rows {
        out[k] = v;
    }
    Ok(emit(out))
}
