//! Loop-by-loop clustering formulas with no shared code paths.

pub fn q_scalar(x: &[f64], mus: &[Vec<f64>], alpha: f64) -> Vec<f64> {
    let k: Vec<f64> = mus
        .iter()
        .map(|m| {
            let d2: f64 = x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
            (1.0 + d2 / alpha).powf(-(alpha + 1.0) / 2.0)
        })
        .collect();
    let z: f64 = k.iter().sum();
    k.iter().map(|v| v / z).collect()
}

pub fn t_scalar(q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let kk = q[0].len();
    let f: Vec<f64> = (0..kk).map(|k| q.iter().map(|r| r[k]).sum()).collect();
    q.iter()
        .map(|r| {
            let w: Vec<f64> = (0..kk).map(|k| r[k] * r[k] / f[k]).collect();
            let z: f64 = w.iter().sum();
            w.iter().map(|v| v / z).collect()
        })
        .collect()
}
