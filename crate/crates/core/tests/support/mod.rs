//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use eigenloop_core::Matrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn unit_rows<R: Rng>(rng: &mut R, rows: usize, dim: usize) -> Matrix {
    let mut data = Vec::with_capacity(rows * dim);
    for _ in 0..rows {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        data.extend(v.iter().map(|x| x / n));
    }
    Matrix::from_vec(rows, dim, data).unwrap()
}

/// Contrastive loss straight from its definition: one term per anchor,
/// denominators summed without any stabilization.
pub fn naive_info_nce(z: &Matrix, tau: f64) -> f64 {
    let n = z.rows();
    let sim = |a: usize, b: usize| -> f64 {
        let (u, v) = (z.row(a), z.row(b));
        let d: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
        let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        d / (nu * nv)
    };
    let mut total = 0.0;
    for i in 0..n {
        let pos = i ^ 1;
        let mut denom = 0.0;
        for k in 0..n {
            if k != i {
                denom += (sim(i, k) / tau).exp();
            }
        }
        total += -((sim(i, pos) / tau).exp() / denom).ln();
    }
    total / n as f64
}

/// Mean over samples of the same-label fraction of its cluster, pairwise.
pub fn brute_bcubed(assignment: &[usize], labels: &[usize]) -> f64 {
    let n = assignment.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut same_cluster = 0usize;
        let mut both = 0usize;
        for j in 0..n {
            if assignment[j] == assignment[i] {
                same_cluster += 1;
                if labels[j] == labels[i] {
                    both += 1;
                }
            }
        }
        acc += both as f64 / same_cluster as f64;
    }
    acc / n as f64
}

pub struct LloydStep {
    pub assignment: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
}

fn d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Plain Lloyd iterations from `init`; an emptied center jumps to the sample
/// farthest from the other centers. Stops when assignments repeat.
pub fn reference_kmeans(x: &[Vec<f64>], init: &[Vec<f64>], t_max: usize) -> Vec<LloydStep> {
    let k = init.len();
    let mut centers = init.to_vec();
    let mut steps: Vec<LloydStep> = Vec::new();
    for _ in 0..t_max {
        let assignment: Vec<usize> = x
            .iter()
            .map(|p| {
                let mut best = 0;
                for j in 1..k {
                    if d2(p, &centers[j]) < d2(p, &centers[best]) {
                        best = j;
                    }
                }
                best
            })
            .collect();
        if steps.last().map(|s| &s.assignment) == Some(&assignment) {
            break;
        }
        let mut empty = Vec::new();
        for j in 0..k {
            let members: Vec<&Vec<f64>> =
                x.iter().zip(&assignment).filter(|(_, &a)| a == j).map(|(p, _)| p).collect();
            if members.is_empty() {
                empty.push(j);
                continue;
            }
            let mut mean = vec![0.0; x[0].len()];
            for p in &members {
                for (m, v) in mean.iter_mut().zip(p.iter()) {
                    *m += v;
                }
            }
            let c = members.len() as f64;
            centers[j] = mean.iter().map(|m| m / c).collect();
        }
        for j in empty {
            let mut far = 0;
            let mut far_d = f64::NEG_INFINITY;
            for (i, p) in x.iter().enumerate() {
                let d = (0..k).filter(|&c| c != j).map(|c| d2(p, &centers[c])).fold(f64::INFINITY, f64::min);
                if d > far_d {
                    far_d = d;
                    far = i;
                }
            }
            centers[j] = x[far].clone();
        }
        steps.push(LloydStep {
            assignment,
            centers: centers.clone(),
        });
    }
    steps
}

/// Max relative error between analytic and central-difference gradients of
/// `f` at `params`.
pub fn fd_max_rel_err(
    params: &[f64],
    analytic: &[f64],
    h: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = f(&p);
        p[i] = orig - h;
        let down = f(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = numeric.abs().max(analytic[i].abs()).max(1e-6);
        worst = worst.max((numeric - analytic[i]).abs() / denom);
    }
    worst
}
