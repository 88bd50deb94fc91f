//! Plain-loop reference implementations used as oracles by the integration
//! tests. Nothing here touches the tape.

#![allow(dead_code)]

use arena::agents::{AgentMode, AgentSettings, Roster};
use arena::envs::Game;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Central differences of `f` at `x`.
pub fn numeric_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|k| {
            p[k] = x[k] + step;
            let up = f(&p);
            p[k] = x[k] - step;
            let down = f(&p);
            p[k] = x[k];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Largest `|a - n| / max(|a|, |n|)` over coordinates whose absolute gap
/// exceeds `floor`.
pub fn max_rel_err(a: &[f64], n: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), n.len());
    a.iter()
        .zip(n)
        .map(|(a, n)| {
            let d = (a - n).abs();
            if d.is_nan() {
                f64::INFINITY
            } else if d <= floor {
                0.0
            } else {
                d / a.abs().max(n.abs())
            }
        })
        .fold(0.0, f64::max)
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    softmax(z).iter().map(|p| p.ln()).collect()
}

/// `w1 (h x i), b1, w2 (o x h), b2` with tanh hidden units.
pub struct RefNet {
    pub i: usize,
    pub h: usize,
    pub o: usize,
}

impl RefNet {
    pub fn hidden(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let (i, h) = (self.i, self.h);
        (0..h)
            .map(|r| {
                let mut z = p[h * i + r];
                for c in 0..i {
                    z += p[r * i + c] * x[c];
                }
                z.tanh()
            })
            .collect()
    }

    pub fn logits(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let (i, h, o) = (self.i, self.h, self.o);
        let hid = self.hidden(p, x);
        let base = h * i + h;
        (0..o)
            .map(|r| {
                let mut z = p[base + o * h + r];
                for c in 0..h {
                    z += p[base + r * h + c] * hid[c];
                }
                z
            })
            .collect()
    }

    /// Hand-derived `d log softmax(logits)[a] / d params`.
    pub fn score(&self, p: &[f64], x: &[f64], a: usize) -> Vec<f64> {
        let (i, h, o) = (self.i, self.h, self.o);
        let hid = self.hidden(p, x);
        let pi = softmax(&self.logits(p, x));
        let delta: Vec<f64> = (0..o).map(|k| (k == a) as u8 as f64 - pi[k]).collect();
        let mut g = vec![0.0; p.len()];
        let base = h * i + h;
        for r in 0..o {
            for c in 0..h {
                g[base + r * h + c] = delta[r] * hid[c];
            }
            g[base + o * h + r] = delta[r];
        }
        for c in 0..h {
            let back: f64 = (0..o).map(|r| p[base + r * h + c] * delta[r]).sum();
            let pre = back * (1.0 - hid[c] * hid[c]);
            for k in 0..i {
                g[c * i + k] = pre * x[k];
            }
            g[h * i + c] = pre;
        }
        g
    }
}

/// Incentive emitted to each other agent: `r_max * sigmoid(net([obs, onehots]))`.
pub fn ref_incentive(net: &RefNet, p: &[f64], r_max: f64, obs: &[f64], others: &[usize], n_actions: usize) -> Vec<f64> {
    let mut x = obs.to_vec();
    for &a in others {
        let mut oh = vec![0.0; n_actions];
        oh[a] = 1.0;
        x.extend(oh);
    }
    net.logits(p, &x).into_iter().map(|z| r_max * sigmoid(z)).collect()
}

pub fn ref_returns(r: &[f64], gamma: f64) -> Vec<f64> {
    let mut g = vec![0.0; r.len()];
    let mut acc = 0.0;
    for t in (0..r.len()).rev() {
        acc = r[t] + gamma * acc;
        g[t] = acc;
    }
    g
}

/// Roster with parameters jittered away from the default initialisation.
pub fn jittered_roster(game: &Game, modes: &[AgentMode], rng: &mut ChaCha8Rng) -> Roster {
    let mut roster = Roster::new(game, modes, &AgentSettings::default(), rng);
    for a in roster.agents.iter_mut() {
        let v: Vec<f64> = a
            .policy_params
            .values()
            .iter()
            .map(|x| x + rng.gen_range(-0.5..0.5))
            .collect();
        a.policy_params = a.policy_params.with_values(v).unwrap();
        if let Some(f) = a.incentive.as_mut() {
            let v: Vec<f64> = f.params.values().iter().map(|x| x + rng.gen_range(-0.5..0.5)).collect();
            f.params = f.params.with_values(v).unwrap();
        }
    }
    roster
}
