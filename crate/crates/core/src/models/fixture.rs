//! Plain-text fixture format for multi-machine systems.
//!
//! ```text
//! [system]     key = value        (base_mva, frequency)
//! [buses]      id type v_set p_gen     type: slack | pv | pq
//! [lines]      from to r x b_total
//! [machines]   bus h_inertia xd_prime damping
//! [loads]      bus p q
//! ```
//!
//! All quantities are per unit on the system base; `#` starts a comment.

use std::str::FromStr;

use crate::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusData {
    pub id: usize,
    pub kind: BusKind,
    pub v_set: f64,
    pub p_gen: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineData {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineData {
    pub bus: usize,
    /// Inertia constant H in seconds; the starting time is `2H`.
    pub h_inertia: f64,
    pub xd_prime: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadData {
    pub bus: usize,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub base_mva: f64,
    pub frequency: f64,
    pub buses: Vec<BusData>,
    pub lines: Vec<LineData>,
    pub machines: Vec<MachineData>,
    pub loads: Vec<LoadData>,
}

const WSCC9: &str = include_str!("../../fixtures/wscc9.fixture");

impl Fixture {
    /// Bundled fixture by name.
    pub fn builtin(name: &str) -> Result<Self, ModelError> {
        match name {
            "wscc9" => WSCC9.parse(),
            other => Err(ModelError::UnknownFixture(other.to_string())),
        }
    }

    /// Index of bus `id` in `buses`.
    pub fn bus_index(&self, id: usize) -> Result<usize, ModelError> {
        self.buses
            .iter()
            .position(|b| b.id == id)
            .ok_or(ModelError::InvalidBus(id))
    }
}

fn field<T: FromStr>(tokens: &[&str], i: usize, line: usize, what: &str) -> Result<T, ModelError> {
    let raw = tokens.get(i).ok_or_else(|| ModelError::Fixture {
        line,
        message: format!("missing {what}"),
    })?;
    raw.parse().map_err(|_| ModelError::Fixture {
        line,
        message: format!("bad {what} `{raw}`"),
    })
}

impl FromStr for Fixture {
    type Err = ModelError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut fx = Fixture {
            base_mva: 100.0,
            frequency: 60.0,
            buses: Vec::new(),
            lines: Vec::new(),
            machines: Vec::new(),
            loads: Vec::new(),
        };
        let mut section = String::new();

        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let err = |message: String| ModelError::Fixture { line, message };
            let tok: Vec<&str> = content.split_whitespace().collect();
            match section.as_str() {
                "system" => {
                    let (key, value) = content
                        .split_once('=')
                        .ok_or_else(|| err("expected key = value".into()))?;
                    let value: f64 = value
                        .trim()
                        .parse()
                        .map_err(|_| err(format!("bad value for {}", key.trim())))?;
                    match key.trim() {
                        "base_mva" => fx.base_mva = value,
                        "frequency" => fx.frequency = value,
                        other => return Err(err(format!("unknown system key `{other}`"))),
                    }
                }
                "buses" => {
                    let kind = match tok.get(1).copied() {
                        Some("slack") => BusKind::Slack,
                        Some("pv") => BusKind::Pv,
                        Some("pq") => BusKind::Pq,
                        other => return Err(err(format!("bad bus type {other:?}"))),
                    };
                    fx.buses.push(BusData {
                        id: field(&tok, 0, line, "bus id")?,
                        kind,
                        v_set: field(&tok, 2, line, "v_set")?,
                        p_gen: field(&tok, 3, line, "p_gen")?,
                    });
                }
                "lines" => fx.lines.push(LineData {
                    from: field(&tok, 0, line, "from bus")?,
                    to: field(&tok, 1, line, "to bus")?,
                    r: field(&tok, 2, line, "r")?,
                    x: field(&tok, 3, line, "x")?,
                    b_total: field(&tok, 4, line, "b_total")?,
                }),
                "machines" => fx.machines.push(MachineData {
                    bus: field(&tok, 0, line, "bus")?,
                    h_inertia: field(&tok, 1, line, "h_inertia")?,
                    xd_prime: field(&tok, 2, line, "xd_prime")?,
                    damping: field(&tok, 3, line, "damping")?,
                }),
                "loads" => fx.loads.push(LoadData {
                    bus: field(&tok, 0, line, "bus")?,
                    p: field(&tok, 1, line, "p")?,
                    q: field(&tok, 2, line, "q")?,
                }),
                "" => return Err(err("data before first section".into())),
                other => return Err(err(format!("unknown section `{other}`"))),
            }
        }

        if fx.buses.iter().filter(|b| b.kind == BusKind::Slack).count() != 1 {
            return Err(ModelError::Fixture {
                line: 0,
                message: "exactly one slack bus required".into(),
            });
        }
        let ids = fx
            .lines
            .iter()
            .flat_map(|l| [l.from, l.to])
            .chain(fx.machines.iter().map(|m| m.bus))
            .chain(fx.loads.iter().map(|l| l.bus));
        for id in ids {
            fx.bus_index(id)?;
        }
        for (i, m) in fx.machines.iter().enumerate() {
            if fx.machines[..i].iter().any(|o| o.bus == m.bus) {
                return Err(ModelError::Fixture {
                    line: 0,
                    message: format!("more than one machine at bus {}", m.bus),
                });
            }
        }
        Ok(fx)
    }
}
