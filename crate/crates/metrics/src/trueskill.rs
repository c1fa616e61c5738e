//! TrueSkill over free-for-all matches.
//!
//! Each ranking of groups is one match in which every group is a one-member
//! team. The update runs expectation propagation on the usual factor graph
//! (prior, performance likelihood, pairwise difference sums, truncation) with
//! the standard schedule: forward pass, iterate the difference/truncation
//! chain until the largest message change falls under `1e-4`, then send the
//! messages back up to the skill variables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};
use crate::special::{normal_cdf, normal_pdf, normal_ppf};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueSkillConfig<T> {
    pub mu: T,
    pub sigma: T,
    pub beta: T,
    pub tau: T,
    pub draw_probability: T,
}

impl<T: Scalar> Default for TrueSkillConfig<T> {
    fn default() -> Self {
        let mu = T::lit(25.0);
        Self { mu, sigma: mu / T::lit(3.0), beta: mu / T::lit(6.0), tau: mu / T::lit(300.0), draw_probability: T::lit(0.1) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating<T> {
    pub mu: T,
    pub sigma: T,
}

/// Final rating of one named group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingResult<T> {
    pub group: String,
    pub mu: T,
    pub sigma: T,
}

// Gaussian in natural parameters: precision `pi` and precision-adjusted mean `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Gaussian<T> {
    pi: T,
    tau: T,
}

impl<T: Scalar> Gaussian<T> {
    fn flat() -> Self {
        Self { pi: T::zero(), tau: T::zero() }
    }

    fn from_mu_sigma(mu: T, sigma: T) -> Self {
        let pi = T::one() / (sigma * sigma);
        Self { pi, tau: pi * mu }
    }

    fn mu(self) -> T {
        if self.pi == T::zero() {
            T::zero()
        } else {
            self.tau / self.pi
        }
    }

    fn sigma(self) -> T {
        if self.pi == T::zero() {
            T::infinity()
        } else {
            (T::one() / self.pi).sqrt()
        }
    }

    fn mul(self, o: Self) -> Self {
        Self { pi: self.pi + o.pi, tau: self.tau + o.tau }
    }

    fn div(self, o: Self) -> Self {
        Self { pi: self.pi - o.pi, tau: self.tau - o.tau }
    }

    fn delta(self, o: Self) -> T {
        let pi_delta = (self.pi - o.pi).abs();
        if pi_delta.is_infinite() {
            return T::zero();
        }
        (self.tau - o.tau).abs().max(pi_delta.sqrt())
    }
}

/// Variable node: current marginal plus the last message from each factor.
struct Variable<T> {
    value: Gaussian<T>,
    messages: BTreeMap<usize, Gaussian<T>>,
}

struct Graph<T> {
    vars: Vec<Variable<T>>,
}

impl<T: Scalar> Graph<T> {
    fn new_var(&mut self) -> usize {
        self.vars.push(Variable { value: Gaussian::flat(), messages: BTreeMap::new() });
        self.vars.len() - 1
    }

    fn message(&self, var: usize, factor: usize) -> Gaussian<T> {
        self.vars[var].messages.get(&factor).copied().unwrap_or_else(Gaussian::flat)
    }

    fn set(&mut self, var: usize, value: Gaussian<T>) -> T {
        let d = self.vars[var].value.delta(value);
        self.vars[var].value = value;
        d
    }

    fn update_message(&mut self, var: usize, factor: usize, msg: Gaussian<T>) -> T {
        let old = self.message(var, factor);
        self.vars[var].messages.insert(factor, msg);
        let v = self.vars[var].value.div(old).mul(msg);
        self.set(var, v)
    }

    fn update_value(&mut self, var: usize, factor: usize, value: Gaussian<T>) -> T {
        let old = self.message(var, factor);
        let cur = self.vars[var].value;
        self.vars[var].messages.insert(factor, value.mul(old).div(cur));
        self.set(var, value)
    }

    // Prior with dynamics: N(mu, sigma^2 + tau^2).
    fn prior_down(&mut self, factor: usize, var: usize, rating: Rating<T>, tau: T) -> T {
        let sigma = (rating.sigma * rating.sigma + tau * tau).sqrt();
        self.update_value(var, factor, Gaussian::from_mu_sigma(rating.mu, sigma))
    }

    // Performance likelihood p = s + N(0, beta^2).
    fn likelihood_pass(&mut self, factor: usize, from: usize, to: usize, variance: T) -> T {
        let msg = self.vars[from].value.div(self.message(from, factor));
        let a = T::one() / (T::one() + variance * msg.pi);
        self.update_message(to, factor, Gaussian { pi: a * msg.pi, tau: a * msg.tau })
    }

    // Generic weighted-sum update: target = Σ coeff_i · term_i.
    fn sum_update(&mut self, factor: usize, target: usize, terms: &[(usize, T)]) -> T {
        let mut pi_inv = T::zero();
        let mut mu = T::zero();
        for &(v, c) in terms {
            let div = self.vars[v].value.div(self.message(v, factor));
            mu = mu + c * div.mu();
            if pi_inv.is_infinite() {
                continue;
            }
            if div.pi == T::zero() {
                pi_inv = T::infinity();
            } else {
                pi_inv = pi_inv + c * c / div.pi;
            }
        }
        let pi = T::one() / pi_inv;
        self.update_message(target, factor, Gaussian { pi, tau: pi * mu })
    }

    fn truncate_up(&mut self, factor: usize, var: usize, draw_margin: T) -> T {
        let val = self.vars[var].value;
        let div = val.div(self.message(var, factor));
        let sqrt_pi = div.pi.sqrt();
        let diff = div.tau / sqrt_pi;
        let margin = draw_margin * sqrt_pi;
        let v = v_win(diff, margin);
        let w = w_win(diff, margin, v);
        let denom = T::one() - w;
        let pi = div.pi / denom;
        let tau = (div.tau + sqrt_pi * v) / denom;
        self.update_value(var, factor, Gaussian { pi, tau })
    }
}

fn v_win<T: Scalar>(diff: T, margin: T) -> T {
    let x = diff - margin;
    let denom = normal_cdf(x);
    if denom > T::zero() {
        normal_pdf(x) / denom
    } else {
        -x
    }
}

fn w_win<T: Scalar>(diff: T, margin: T, v: T) -> T {
    let x = diff - margin;
    let w = v * (v + x);
    // Clamp into the open unit interval; the exact value lies there.
    w.max(T::epsilon()).min(T::one() - T::epsilon())
}

fn draw_margin<T: Scalar>(cfg: &TrueSkillConfig<T>, players: usize) -> T {
    normal_ppf((cfg.draw_probability + T::one()) / T::lit(2.0)) * T::from_count(players).sqrt() * cfg.beta
}

const MIN_DELTA: f64 = 1e-4;
const MAX_SWEEPS: usize = 10;

/// Updates the ratings of one free-for-all match. `finish_order[0]` won;
/// every later entry finished strictly behind the previous one.
pub fn rate_free_for_all<T: Scalar>(finish_order: &[Rating<T>], cfg: &TrueSkillConfig<T>) -> Vec<Rating<T>> {
    let k = finish_order.len();
    if k < 2 {
        return finish_order.to_vec();
    }
    let mut g = Graph { vars: Vec::new() };
    let skill: Vec<usize> = (0..k).map(|_| g.new_var()).collect();
    let perf: Vec<usize> = (0..k).map(|_| g.new_var()).collect();
    let diff: Vec<usize> = (0..k - 1).map(|_| g.new_var()).collect();

    // Factor ids: prior i, likelihood k+i, difference 2k+i, truncation 3k+i.
    let prior_f = |i: usize| i;
    let like_f = |i: usize| k + i;
    let diff_f = |i: usize| 2 * k + i;
    let trunc_f = |i: usize| 3 * k + i;
    let beta_sq = cfg.beta * cfg.beta;
    let margin = draw_margin(cfg, 2);

    for i in 0..k {
        g.prior_down(prior_f(i), skill[i], finish_order[i], cfg.tau);
    }
    for i in 0..k {
        g.likelihood_pass(like_f(i), skill[i], perf[i], beta_sq);
    }

    let one = T::one();
    let diff_down = |g: &mut Graph<T>, i: usize| g.sum_update(diff_f(i), diff[i], &[(perf[i], one), (perf[i + 1], -one)]);
    // Solve diff_i = perf_i - perf_{i+1} for one of the two performances.
    let diff_up = |g: &mut Graph<T>, i: usize, upper: bool| {
        if upper {
            g.sum_update(diff_f(i), perf[i], &[(diff[i], one), (perf[i + 1], one)])
        } else {
            g.sum_update(diff_f(i), perf[i + 1], &[(perf[i], one), (diff[i], -one)])
        }
    };

    let tol = T::lit(MIN_DELTA);
    let n_diff = k - 1;
    for _ in 0..MAX_SWEEPS {
        let mut delta = T::zero();
        if n_diff == 1 {
            diff_down(&mut g, 0);
            delta = g.truncate_up(trunc_f(0), diff[0], margin);
        } else {
            for (i, &d) in diff.iter().enumerate().take(n_diff - 1) {
                diff_down(&mut g, i);
                delta = delta.max(g.truncate_up(trunc_f(i), d, margin));
                diff_up(&mut g, i, false);
            }
            for i in (1..n_diff).rev() {
                diff_down(&mut g, i);
                delta = delta.max(g.truncate_up(trunc_f(i), diff[i], margin));
                diff_up(&mut g, i, true);
            }
        }
        if delta <= tol {
            break;
        }
    }
    diff_up(&mut g, 0, true);
    diff_up(&mut g, n_diff - 1, false);
    for i in 0..k {
        g.likelihood_pass(like_f(i), perf[i], skill[i], beta_sq);
    }

    skill
        .iter()
        .map(|&v| {
            let x = g.vars[v].value;
            Rating { mu: x.mu(), sigma: x.sigma() }
        })
        .collect()
}

/// Rates groups from evaluator rankings, each ranking listing every group
/// best-first. Results follow the group order of the first ranking.
pub fn trueskill_rank<T: Scalar, S: AsRef<str>>(rankings: &[Vec<S>], cfg: &TrueSkillConfig<T>) -> Result<Vec<RatingResult<T>>> {
    let first = rankings.first().ok_or(MetricsError::InsufficientData { needed: 1, got: 0 })?;
    let groups: Vec<String> = first.iter().map(|s| s.as_ref().to_owned()).collect();
    let mut expected: Vec<&str> = groups.iter().map(String::as_str).collect();
    expected.sort_unstable();
    if expected.windows(2).any(|w| w[0] == w[1]) {
        return Err(MetricsError::Input("a ranking lists the same group twice".into()));
    }
    let mut ratings: BTreeMap<String, Rating<T>> = groups.iter().map(|g| (g.clone(), Rating { mu: cfg.mu, sigma: cfg.sigma })).collect();
    for (i, ranking) in rankings.iter().enumerate() {
        let mut names: Vec<&str> = ranking.iter().map(AsRef::as_ref).collect();
        names.sort_unstable();
        if names != expected {
            return Err(MetricsError::Input(format!("ranking {i} covers a different group set")));
        }
        let current: Vec<Rating<T>> = ranking.iter().map(|g| ratings[g.as_ref()]).collect();
        let updated = rate_free_for_all(&current, cfg);
        for (g, r) in ranking.iter().zip(updated) {
            ratings.insert(g.as_ref().to_owned(), r);
        }
    }
    Ok(groups
        .into_iter()
        .map(|g| {
            let r = ratings[&g];
            RatingResult { group: g, mu: r.mu, sigma: r.sigma }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_on_one_from_defaults() {
        // Reference values for a single win between two fresh players
        // with draw probability 0.1 (canonical TrueSkill example).
        let cfg = TrueSkillConfig::<f64>::default();
        let fresh = Rating { mu: 25.0, sigma: 25.0 / 3.0 };
        let r = rate_free_for_all(&[fresh, fresh], &cfg);
        assert!((r[0].mu - 29.395_832_02).abs() < 1e-5, "{:?}", r[0]);
        assert!((r[0].sigma - 7.171_475_59).abs() < 1e-5);
        assert!((r[1].mu - 20.604_167_98).abs() < 1e-5);
    }

    #[test]
    fn four_way_free_for_all() {
        let cfg = TrueSkillConfig::<f64>::default();
        let fresh = Rating { mu: 25.0, sigma: 25.0 / 3.0 };
        let r = rate_free_for_all(&[fresh; 4], &cfg);
        let want = [(33.207, 6.348), (27.401, 5.787), (22.599, 5.787), (16.793, 6.348)];
        for (got, (mu, sigma)) in r.iter().zip(want) {
            assert!((got.mu - mu).abs() < 1e-3, "{got:?}");
            assert!((got.sigma - sigma).abs() < 1e-3);
        }
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        let cfg = TrueSkillConfig::<f64>::default();
        let none: Vec<Vec<&str>> = vec![];
        assert!(trueskill_rank(&none, &cfg).is_err());
        let bad = vec![vec!["a", "b"], vec!["a", "c"]];
        assert!(trueskill_rank(&bad, &cfg).is_err());
    }

    #[test]
    fn sigma_shrinks_each_match() {
        let cfg = TrueSkillConfig::<f64>::default();
        let mut r = vec![Rating { mu: 25.0, sigma: 25.0 / 3.0 }; 4];
        for _ in 0..30 {
            let next = rate_free_for_all(&r, &cfg);
            for (a, b) in r.iter().zip(&next) {
                assert!(b.sigma < a.sigma);
            }
            r = next;
        }
    }
}
