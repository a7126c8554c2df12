//! Test-only reference implementations, written independently of the
//! cohort engine: one object per agent, one draw per agent and decision.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub const OFFSPRING: [f64; 6] = [0.5, 0.35, 0.12, 0.01, 0.01, 0.01];
/// Days 1..=9.
pub const T_A_INF: [f64; 9] = [0.0, 0.0, 0.0, 0.0, 0.05, 0.2, 0.5, 0.2, 0.05];
pub const T_AS: [f64; 9] = [0.0, 0.3, 0.6, 0.05, 0.05, 0.0, 0.0, 0.0, 0.0];
pub const T_SH: [f64; 9] = [0.0, 0.1, 0.2, 0.5, 0.15, 0.05, 0.0, 0.0, 0.0];

#[derive(Debug, Clone, Copy)]
pub struct AgentParams {
    pub p_as: f64,
    pub p_sh: f64,
    pub k: f64,
    pub t_e: u32,
    pub r: f64,
    pub p_hd: f64,
    pub mean_t_h: f64,
}

impl AgentParams {
    pub fn defaults_with(r: f64, p_hd: f64, mean_t_h: f64) -> Self {
        Self {
            p_as: 0.83,
            p_sh: 0.78,
            k: 0.58,
            t_e: 3,
            r,
            p_hd,
            mean_t_h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stage {
    Exposed,
    InfectiousAsym,
    InfectiousSym,
    Symptomatic,
    HospitalRecover,
    HospitalDie,
}

#[derive(Debug, Clone, Copy)]
struct Agent {
    stage: Stage,
    days_left: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AgentCounts {
    pub h: u64,
    pub r_cum: u64,
    pub d_cum: u64,
    pub infected_cum: u64,
}

fn draw_days(rng: &mut impl Rng, table: &[f64]) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in table.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u32 + 1;
        }
    }
    // rounding slack: last day with positive mass
    table.iter().rposition(|&p| p > 0.0).unwrap() as u32 + 1
}

fn draw_offspring(rng: &mut impl Rng, factor: f64) -> u64 {
    // With probability `factor` the agent draws from the offspring table,
    // otherwise it infects nobody: identical to the rescaled vector.
    if rng.random::<f64>() >= factor {
        return 0;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in OFFSPRING.iter().enumerate() {
        acc += p;
        if u < acc {
            return j as u64;
        }
    }
    5
}

/// Simulate `days` days from `seed_agents` agents in E with fixed
/// parameters; returns the counts at the end of each day.
pub fn simulate_agents(
    seed_agents: u64,
    params: AgentParams,
    days: u32,
    seed: u64,
) -> Vec<AgentCounts> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut agents: Vec<Agent> = (0..seed_agents)
        .map(|_| Agent {
            stage: Stage::Exposed,
            days_left: params.t_e,
        })
        .collect();
    let mut counts = AgentCounts::default();
    let mut out = Vec::with_capacity(days as usize);

    for _ in 0..days {
        let mut newborn = 0;
        for a in &agents {
            let factor = match a.stage {
                Stage::InfectiousAsym => params.k * params.r,
                Stage::InfectiousSym => params.r,
                _ => continue,
            };
            newborn += draw_offspring(&mut rng, factor);
        }
        counts.infected_cum += newborn;
        for _ in 0..newborn {
            agents.push(Agent {
                stage: Stage::Exposed,
                days_left: params.t_e,
            });
        }

        let mut next = Vec::with_capacity(agents.len());
        for mut a in agents {
            a.days_left -= 1;
            if a.days_left > 0 {
                next.push(a);
                continue;
            }
            match a.stage {
                Stage::Exposed => {
                    if rng.random::<f64>() < params.p_as {
                        next.push(Agent {
                            stage: Stage::InfectiousSym,
                            days_left: draw_days(&mut rng, &T_AS),
                        });
                    } else {
                        next.push(Agent {
                            stage: Stage::InfectiousAsym,
                            days_left: draw_days(&mut rng, &T_A_INF),
                        });
                    }
                }
                Stage::InfectiousAsym => {}
                Stage::InfectiousSym => {
                    if rng.random::<f64>() < params.p_sh {
                        next.push(Agent {
                            stage: Stage::Symptomatic,
                            days_left: draw_days(&mut rng, &T_SH),
                        });
                    }
                }
                Stage::Symptomatic => {
                    let stage = if rng.random::<f64>() < params.p_hd {
                        Stage::HospitalDie
                    } else {
                        Stage::HospitalRecover
                    };
                    let lo = params.mean_t_h.floor();
                    let frac = params.mean_t_h - lo;
                    let stay = if rng.random::<f64>() < frac {
                        lo + 1.0
                    } else {
                        lo
                    };
                    next.push(Agent {
                        stage,
                        days_left: stay as u32,
                    });
                }
                Stage::HospitalRecover => counts.r_cum += 1,
                Stage::HospitalDie => counts.d_cum += 1,
            }
        }
        agents = next;
        counts.h = agents
            .iter()
            .filter(|a| matches!(a.stage, Stage::HospitalRecover | Stage::HospitalDie))
            .count() as u64;
        out.push(counts);
    }
    out
}

/// Running mean / variance with a fourth-moment estimate for the standard
/// error of the variance.
#[derive(Debug, Clone, Default)]
pub struct Moments {
    xs: Vec<f64>,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.xs.push(x);
    }

    pub fn n(&self) -> f64 {
        self.xs.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.xs.iter().sum::<f64>() / self.n()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (self.n() - 1.0)
    }

    pub fn se_mean(&self) -> f64 {
        (self.variance() / self.n()).sqrt()
    }

    pub fn se_variance(&self) -> f64 {
        let m = self.mean();
        let n = self.n();
        let m4 = self.xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
        let v = self.variance();
        ((m4 - v * v * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }
}

/// `|a - b|` in units of the combined standard error.
pub fn z_score(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    let se = (se_a * se_a + se_b * se_b).sqrt();
    if se == 0.0 {
        if a == b {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - b).abs() / se
    }
}
