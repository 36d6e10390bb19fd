use anyhow::{anyhow, Result};
use hetkey::optimize::{evaluate_rate, optimize_point, sweep};
use hetkey::sim::{run_protocol_with, simulated_key};
use hetkey::verify::run_suite;
use hetkey::{ChannelParams, KeyRateReport, OptimizedPoint, ProtocolParams};
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::output::{num, Output, Table};

const REPORT_COLUMNS: [&str; 13] = [
    "b_value",
    "f_hat",
    "n_suc",
    "e_bit",
    "c_min",
    "c_max",
    "delta1",
    "delta2",
    "u_of_f",
    "n_fin",
    "h_ec",
    "gain",
    "security_level",
];

fn report_cells(r: &KeyRateReport) -> Vec<String> {
    [
        r.b_value,
        r.f_hat,
        r.n_suc,
        r.e_bit,
        r.c_min,
        r.c_max,
        r.delta1,
        r.delta2,
        r.u_of_f,
        r.n_fin,
        r.h_ec,
        r.gain,
        r.security_level,
    ]
    .iter()
    .map(|v| num(*v))
    .collect()
}

const PARAM_COLUMNS: [&str; 12] = [
    "eta", "xi", "n_rounds", "mu", "p_sig", "beta", "x_th", "kappa", "gamma", "epsilon", "s", "s_prime",
];

fn param_cells(ch: &ChannelParams, p: &ProtocolParams) -> Vec<String> {
    vec![
        num(ch.eta),
        num(ch.xi),
        p.n_rounds.to_string(),
        num(p.mu),
        num(p.p_sig),
        num(p.beta),
        num(p.x_th),
        num(p.kappa),
        num(p.gamma),
        num(p.epsilon),
        p.s.to_string(),
        p.s_prime.to_string(),
    ]
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| anyhow!("serializing output: {e}"))
}

fn channel_json(ch: &ChannelParams) -> Value {
    json!({ "eta": ch.eta, "xi": ch.xi, "atten_db": ch.attenuation_db() })
}

pub fn cmd_rate(cfg: &RunConfig) -> Result<Output> {
    let ch = cfg.channel()?;
    let p = cfg.protocol(&ch, false)?;
    let report = evaluate_rate(&ch, &p, cfg.regime).map_err(|e| anyhow!("rate evaluation failed: {e}"))?;
    let mut table = Table::new(&[PARAM_COLUMNS.as_slice(), REPORT_COLUMNS.as_slice()].concat());
    let mut row = param_cells(&ch, &p);
    row.extend(report_cells(&report));
    table.rows.push(row);
    let mut body = Map::new();
    body.insert("regime".into(), to_value(&cfg.regime)?);
    body.insert("channel".into(), channel_json(&ch));
    body.insert("params".into(), to_value(&p)?);
    body.insert("report".into(), to_value(&report)?);
    Ok(Output {
        command: "rate",
        body,
        table,
    })
}

const SWEEP_COLUMNS: [&str; 15] = [
    "atten_db", "eta", "xi", "n_rounds", "mu", "p_sig", "x_th", "kappa", "gamma", "b_value", "u_value", "n_suc",
    "h_ec", "key_rate", "error",
];

fn point_cells(db: f64, eta: f64, xi: f64, point: Option<&OptimizedPoint>, error: Option<&str>) -> Vec<String> {
    let mut row = vec![num(db), num(eta), num(xi)];
    match point {
        Some(pt) => {
            let (p, r) = (&pt.params, &pt.report);
            row.push(p.n_rounds.to_string());
            row.extend([p.mu, p.p_sig, p.x_th, p.kappa, p.gamma, r.b_value, r.u_of_f, r.n_suc, r.h_ec].map(num));
            row.push(num(r.gain.max(0.0)));
        }
        None => row.extend(std::iter::repeat_n(String::new(), 11)),
    }
    row.push(error.unwrap_or("").to_string());
    row
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Output> {
    let grid = cfg.grid()?;
    let fixed = cfg.fixed()?;
    let opt = cfg.optimization()?;
    let rows = sweep(&grid, cfg.channel.xi, &fixed, &opt);
    let mut table = Table::new(&SWEEP_COLUMNS);
    let mut json_rows = Vec::with_capacity(rows.len());
    for r in &rows {
        table
            .rows
            .push(point_cells(r.atten_db, r.eta, r.xi, r.point.as_ref(), r.error.as_deref()));
        let mut obj = to_value(r)?;
        obj["key_rate"] = json!(r.key_rate());
        json_rows.push(obj);
    }
    let mut body = Map::new();
    body.insert("regime".into(), to_value(&cfg.regime)?);
    body.insert("fixed".into(), to_value(&fixed)?);
    body.insert("optimization".into(), to_value(&opt)?);
    body.insert("rows".into(), Value::Array(json_rows));
    Ok(Output {
        command: "sweep",
        body,
        table,
    })
}

pub fn cmd_optimize(cfg: &RunConfig) -> Result<Output> {
    let ch = cfg.channel()?;
    let fixed = cfg.fixed()?;
    let opt = cfg.optimization()?;
    let point = optimize_point(&ch, &fixed, &opt, &[]).map_err(|e| anyhow!("optimization failed: {e}"))?;
    let mut header = SWEEP_COLUMNS[..14].to_vec();
    header.extend(["converged", "evaluations"]);
    let mut table = Table::new(&header);
    let mut row = point_cells(ch.attenuation_db(), ch.eta, ch.xi, Some(&point), None);
    row.pop();
    row.push(point.converged.to_string());
    row.push(point.evaluations.to_string());
    table.rows.push(row);
    let mut body = Map::new();
    body.insert("regime".into(), to_value(&cfg.regime)?);
    body.insert("channel".into(), channel_json(&ch));
    body.insert("optimization".into(), to_value(&opt)?);
    body.insert("point".into(), to_value(&point)?);
    body.insert("key_rate".into(), json!(point.report.gain.max(0.0)));
    Ok(Output {
        command: "optimize",
        body,
        table,
    })
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Output> {
    let ch = cfg.channel()?;
    let p = cfg.protocol(&ch, true)?;
    let seed = cfg.simulate.seed;
    let tally = run_protocol_with(&ch, &p, seed, &cfg.sim_options()).map_err(|e| anyhow!("simulation failed: {e}"))?;
    let key = simulated_key(&tally, &p, cfg.regime).map_err(|e| anyhow!("key evaluation failed: {e}"))?;
    let mut header = vec!["seed", "n_rounds", "n_suc", "n_fail", "n_test", "bit_errors", "f_hat_sum"];
    header.extend(REPORT_COLUMNS);
    header.push("no_successes");
    let mut table = Table::new(&header);
    let mut row = vec![
        seed.to_string(),
        tally.n_rounds.to_string(),
        tally.n_suc.to_string(),
        tally.n_fail.to_string(),
        tally.n_test.to_string(),
        tally.bit_errors.to_string(),
        num(tally.f_hat),
    ];
    row.extend(report_cells(&key.report));
    row.push(key.no_successes.to_string());
    table.rows.push(row);
    let mut body = Map::new();
    body.insert("regime".into(), to_value(&cfg.regime)?);
    body.insert("channel".into(), channel_json(&ch));
    body.insert("params".into(), to_value(&p)?);
    body.insert("options".into(), to_value(&cfg.sim_options())?);
    body.insert("tally".into(), to_value(&tally)?);
    body.insert("key".into(), to_value(&key)?);
    Ok(Output {
        command: "simulate",
        body,
        table,
    })
}

/// Returns the output and whether every check passed.
pub fn cmd_verify(cfg: &RunConfig) -> Result<(Output, bool)> {
    let rep = run_suite(&cfg.verify);
    let mut table = Table::new(&["check", "passed", "margin", "detail"]);
    for c in &rep.checks {
        table
            .rows
            .push(vec![c.name.clone(), c.passed.to_string(), num(c.margin), c.detail.clone()]);
    }
    let mut body = Map::new();
    body.insert("config".into(), to_value(&cfg.verify)?);
    body.insert("passed".into(), json!(rep.passed));
    body.insert("checks".into(), to_value(&rep.checks)?);
    Ok((
        Output {
            command: "verify",
            body,
            table,
        },
        rep.passed,
    ))
}
