//! Instance JSON files.
//!
//! Besides the instance parameters each player record carries its security
//! cap `s_bar`. Loading recomputes the cap from `B` and rejects the file when
//! the stored cap no longer matches the budget.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{cost_h, CostKind, GciInstance, MarketParams, PlayerParams};
use crate::error::{Error, Result};

const CAP_TOL: f64 = 1e-10;

#[derive(Serialize, Deserialize)]
struct PlayerRecord {
    #[serde(flatten)]
    params: PlayerParams,
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "ser_opt_17")]
    s_bar: Option<f64>,
}

fn ser_opt_17<S: serde::Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(v) => crate::numfmt::serialize_f64_17(v, s),
        None => s.serialize_none(),
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    m: usize,
    n: usize,
    cost_kind: CostKind,
    markets: Vec<MarketParams>,
    players: Vec<PlayerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

pub(crate) fn to_json(inst: &GciInstance) -> Result<String> {
    let file = InstanceFile {
        m: inst.num_players(),
        n: inst.num_markets(),
        cost_kind: inst.cost_kind(),
        markets: inst.markets().to_vec(),
        players: inst
            .players()
            .iter()
            .zip(inst.security_caps())
            .map(|(p, &cap)| PlayerRecord { params: p.clone(), s_bar: Some(cap) })
            .collect(),
        seed: inst.seed(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub(crate) fn from_json(text: &str) -> Result<GciInstance> {
    let file: InstanceFile = serde_json::from_str(text)?;
    if file.m != file.players.len() || file.n != file.markets.len() {
        return Err(Error::Validation(format!(
            "header says m = {}, n = {} but the file lists {} players and {} markets",
            file.m,
            file.n,
            file.players.len(),
            file.markets.len()
        )));
    }
    let stored: Vec<Option<f64>> = file.players.iter().map(|p| p.s_bar).collect();
    let players = file.players.into_iter().map(|p| p.params).collect();
    let inst = GciInstance::new(file.markets, players, file.cost_kind, file.seed)?;
    for (p, cap) in stored.into_iter().enumerate() {
        if let Some(cap) = cap {
            let pl = inst.player(p);
            let residual = match cost_h(inst.cost_kind(), pl.alpha, cap) {
                Ok(h) => (h - pl.budget).abs(),
                Err(_) => f64::INFINITY,
            };
            if residual > CAP_TOL {
                return Err(Error::CapResidual { player: p, residual });
            }
        }
    }
    Ok(inst)
}

pub fn save_instance(inst: &GciInstance, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json(inst)?)?;
    Ok(())
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<GciInstance> {
    from_json(&std::fs::read_to_string(path)?)
}
