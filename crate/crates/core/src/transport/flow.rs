//! Min-cost transportation by successive shortest paths on the bipartite
//! residual graph. Missing arcs (`None` costs) are simply absent.

use crate::error::{Error, Result};

const CAP_EPS: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct FlowSolution {
    pub cost: f64,
    /// `flow[i][j]` mass moved from supply `i` to demand `j`
    pub flow: Vec<Vec<f64>>,
    pub shipped: f64,
}

/// Ships as much of `supply` to `demand` as the arcs allow, at minimum cost.
pub fn transport(supply: &[f64], demand: &[f64], cost: &[Vec<Option<f64>>]) -> Result<FlowSolution> {
    let n = supply.len();
    let m = demand.len();
    if cost.len() != n || cost.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidDistribution("cost matrix shape".into()));
    }
    let mut rem_s = supply.to_vec();
    let mut rem_d = demand.to_vec();
    let mut flow = vec![vec![0.0; m]; n];
    let mut total = 0.0;

    // Relaxations must beat rounding in the path sums, or a zero-cost cycle
    // of residual arcs can look negative and corrupt the predecessor tree.
    let c_max = cost.iter().flatten().flatten().fold(0.0f64, |a, c| a.max(c.abs()));
    let tol = 1e-12 * c_max.max(1.0);

    // nodes: 0..n supplies, n..n+m demands
    let nodes = n + m;
    let max_aug = 8 * (n + 1) * (m + 1) + 64;
    for _ in 0..max_aug {
        // Bellman-Ford from every supply with remaining mass.
        let mut dist = vec![f64::INFINITY; nodes];
        let mut pred = vec![usize::MAX; nodes];
        for i in 0..n {
            if rem_s[i] > CAP_EPS {
                dist[i] = 0.0;
            }
        }
        for _ in 0..nodes {
            let mut changed = false;
            for i in 0..n {
                for j in 0..m {
                    let Some(c) = cost[i][j] else { continue };
                    // forward arc, unbounded capacity
                    if dist[i].is_finite() && dist[i] + c < dist[n + j] - tol {
                        dist[n + j] = dist[i] + c;
                        pred[n + j] = i;
                        changed = true;
                    }
                    // backward arc, capacity flow[i][j]
                    if flow[i][j] > CAP_EPS && dist[n + j].is_finite() && dist[n + j] - c < dist[i] - tol {
                        dist[i] = dist[n + j] - c;
                        pred[i] = n + j;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let sink = (0..m)
            .filter(|&j| rem_d[j] > CAP_EPS && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]));
        let Some(j_end) = sink else {
            return Ok(FlowSolution {
                cost: total_cost(&flow, cost),
                flow,
                shipped: total,
            });
        };

        // walk back to the originating supply, collecting the bottleneck
        let mut path = Vec::new();
        let mut v = n + j_end;
        let mut bottleneck = rem_d[j_end];
        while pred[v] != usize::MAX {
            let u = pred[v];
            path.push((u, v));
            if u >= n {
                // backward arc demand u -> supply v
                bottleneck = bottleneck.min(flow[v][u - n]);
            }
            v = u;
            if path.len() > 2 * nodes {
                return Err(Error::Lp("negative cycle in residual graph".into()));
            }
        }
        bottleneck = bottleneck.min(rem_s[v]);
        if bottleneck <= CAP_EPS {
            return Err(Error::Lp("degenerate augmenting path".into()));
        }
        rem_s[v] -= bottleneck;
        rem_d[j_end] -= bottleneck;
        total += bottleneck;
        for (u, w) in path {
            if u < n {
                flow[u][w - n] += bottleneck;
            } else {
                flow[w][u - n] -= bottleneck;
            }
        }
    }
    Err(Error::Lp("augmentation limit reached".into()))
}

fn total_cost(flow: &[Vec<f64>], cost: &[Vec<Option<f64>>]) -> f64 {
    flow.iter()
        .zip(cost)
        .flat_map(|(f, c)| f.iter().zip(c))
        .map(|(f, c)| if *f > 0.0 { f * c.unwrap_or(0.0) } else { 0.0 })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_prefers_cheaper_matching() {
        let c = vec![vec![Some(1.0), Some(4.0)], vec![Some(4.0), Some(1.0)]];
        let s = transport(&[0.5, 0.5], &[0.5, 0.5], &c).unwrap();
        assert!((s.cost - 1.0).abs() < 1e-15);
        assert!((s.shipped - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rerouting_uses_backward_arcs() {
        // greedy would send supply 0 to the cheap demand 0 and strand supply 1
        let c = vec![vec![Some(0.0), Some(1.0)], vec![Some(0.0), None]];
        let s = transport(&[1.0, 1.0], &[1.0, 1.0], &c).unwrap();
        assert!((s.shipped - 2.0).abs() < 1e-15);
        assert!((s.cost - 1.0).abs() < 1e-15);
    }

    #[test]
    fn missing_arcs_limit_shipment() {
        let c = vec![vec![Some(1.0), None]];
        let s = transport(&[1.0], &[0.5, 0.5], &c).unwrap();
        assert!((s.shipped - 0.5).abs() < 1e-15);
    }
}
