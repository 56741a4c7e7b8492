//! Boosted decision stumps over log-cost, used to rank unmeasured candidates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Coordinate, SearchSpace};

/// `log2(1 + v)` per dimension (sign-symmetric for negative values), then a
/// constant bias component.
pub fn features(space: &SearchSpace, c: &Coordinate) -> Result<Vec<f64>> {
    let values = space.values_of(c)?;
    let mut f: Vec<f64> = values
        .iter()
        .map(|&v| (v as f64).signum() * (1.0 + (v as f64).abs()).log2())
        .collect();
    f.push(1.0);
    Ok(f)
}

/// Boosting hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub rounds: usize,
    pub learning_rate: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            rounds: 50,
            learning_rate: 0.3,
        }
    }
}

/// `x[feature] <= threshold ? left : right`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

impl Stump {
    fn eval(&self, x: &[f64]) -> f64 {
        if x[self.feature] <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

/// Least-squares gradient boosting of depth-1 trees on log-cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StumpEnsemble {
    pub params: BoostParams,
    pub base: f64,
    pub stumps: Vec<Stump>,
}

impl StumpEnsemble {
    /// Fits on `(features, cost)` rows. Rows with non-finite or
    /// non-positive cost are skipped.
    ///
    /// Rows are put in a canonical order first, so the model does not
    /// depend on the order they are given in.
    pub fn fit(rows: &[(Vec<f64>, f64)], params: BoostParams) -> Result<Self> {
        let mut data: Vec<(&[f64], f64)> = rows
            .iter()
            .filter(|(_, c)| c.is_finite() && *c > 0.0)
            .map(|(x, c)| (x.as_slice(), c.ln()))
            .collect();
        if data.is_empty() {
            return Err(Error::NoFiniteSamples);
        }
        data.sort_by(|a, b| {
            a.0.iter()
                .zip(b.0)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(a.0.len().cmp(&b.0.len()))
                .then(a.1.total_cmp(&b.1))
        });
        let n = data.len();
        let dim = data[0].0.len();
        if data.iter().any(|(x, _)| x.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data
                    .iter()
                    .map(|(x, _)| x.len())
                    .find(|&l| l != dim)
                    .unwrap_or(dim),
            });
        }
        let base = data.iter().map(|(_, y)| y).sum::<f64>() / n as f64;
        let mut resid: Vec<f64> = data.iter().map(|(_, y)| y - base).collect();
        let orders: Vec<Vec<usize>> = (0..dim)
            .map(|f| {
                let mut o: Vec<usize> = (0..n).collect();
                o.sort_by(|&i, &j| data[i].0[f].total_cmp(&data[j].0[f]));
                o
            })
            .collect();

        let mut stumps = Vec::new();
        for _ in 0..params.rounds {
            let total: f64 = resid.iter().sum();
            let scale: f64 = resid.iter().map(|r| r * r).sum();
            let mut best: Option<(f64, Stump)> = None;
            for (f, order) in orders.iter().enumerate() {
                let mut left_sum = 0.0;
                for (pos, &i) in order.iter().enumerate().take(n - 1) {
                    left_sum += resid[i];
                    let (x, next) = (data[i].0[f], data[order[pos + 1]].0[f]);
                    if x == next {
                        continue;
                    }
                    let (nl, nr) = ((pos + 1) as f64, (n - pos - 1) as f64);
                    let right_sum = total - left_sum;
                    let gain = left_sum * left_sum / nl + right_sum * right_sum / nr
                        - total * total / n as f64;
                    if best.as_ref().is_none_or(|(g, _)| gain > *g) {
                        let stump = Stump {
                            feature: f,
                            threshold: x + (next - x) / 2.0,
                            left: params.learning_rate * left_sum / nl,
                            right: params.learning_rate * right_sum / nr,
                        };
                        best = Some((gain, stump));
                    }
                }
            }
            let Some((gain, stump)) = best else { break };
            if gain <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
                break;
            }
            for (r, (x, _)) in resid.iter_mut().zip(&data) {
                *r -= stump.eval(x);
            }
            stumps.push(stump);
        }
        Ok(Self {
            params,
            base,
            stumps,
        })
    }

    /// Fits on measured coordinates of `space`.
    pub fn fit_samples<'a>(
        space: &SearchSpace,
        samples: impl IntoIterator<Item = (&'a Coordinate, f64)>,
        params: BoostParams,
    ) -> Result<Self> {
        let rows = samples
            .into_iter()
            .map(|(c, cost)| Ok((features(space, c)?, cost)))
            .collect::<Result<Vec<_>>>()?;
        Self::fit(&rows, params)
    }

    /// Predicted log-cost.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base + self.stumps.iter().map(|s| s.eval(x)).sum::<f64>()
    }

    /// Predicted cost.
    pub fn predict_cost(&self, x: &[f64]) -> f64 {
        self.predict(x).exp()
    }
}

/// The `k` candidates with the lowest predicted cost, ties in input order.
pub fn rank(
    model: &StumpEnsemble,
    candidates: &[Coordinate],
    space: &SearchSpace,
    k: usize,
) -> Result<Vec<Coordinate>> {
    let mut scored = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| Ok((model.predict(&features(space, c)?), i)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(_, i)| candidates[i].clone())
        .collect())
}
