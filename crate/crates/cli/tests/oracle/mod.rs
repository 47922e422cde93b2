//! Reference implementations written directly from textbook formulas with
//! explicit inverses and full matrices. They share no code with the library.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

pub fn density(z: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = z.len() as f64;
    let d = z - mean;
    let inv = cov.clone().try_inverse().expect("invertible covariance");
    let quad = (d.transpose() * inv * &d)[(0, 0)];
    (-0.5 * quad).exp() / ((2.0 * std::f64::consts::PI).powf(n) * cov.determinant()).sqrt()
}

pub struct LinearGaussian {
    pub f: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

pub struct KalmanOutput {
    pub filtered: Vec<(DVector<f64>, DMatrix<f64>)>,
    pub smoothed: Vec<DVector<f64>>,
}

/// Kalman filter from prior `N(m0, p0)` on the first state, updated with
/// `zs[0]`, then Rauch–Tung–Striebel smoothing over the whole interval.
pub fn kalman_rts(sys: &LinearGaussian, m0: &DVector<f64>, p0: &DMatrix<f64>, zs: &[DVector<f64>]) -> KalmanOutput {
    let mut predicted: Vec<(DVector<f64>, DMatrix<f64>)> = Vec::new();
    let mut filtered: Vec<(DVector<f64>, DMatrix<f64>)> = Vec::new();
    for (t, z) in zs.iter().enumerate() {
        let (mp, pp) = if t == 0 {
            (m0.clone(), p0.clone())
        } else {
            let (m, p) = &filtered[t - 1];
            (&sys.f * m, &sys.f * p * sys.f.transpose() + &sys.q)
        };
        let s = &sys.h * &pp * sys.h.transpose() + &sys.r;
        let k = &pp * sys.h.transpose() * s.try_inverse().unwrap();
        let m = &mp + &k * (z - &sys.h * &mp);
        let i = DMatrix::identity(mp.len(), mp.len());
        let p = (&i - &k * &sys.h) * &pp;
        predicted.push((mp, pp));
        filtered.push((m, p));
    }
    let n = zs.len();
    let mut smoothed = vec![filtered[n - 1].0.clone(); n];
    for t in (0..n - 1).rev() {
        let (m, p) = &filtered[t];
        let (mp, pp) = &predicted[t + 1];
        let g = p * sys.f.transpose() * pp.clone().try_inverse().unwrap();
        smoothed[t] = m + g * (&smoothed[t + 1] - mp);
    }
    KalmanOutput { filtered, smoothed }
}

#[derive(Debug, Clone)]
pub struct GmComponent {
    pub w: f64,
    pub m: DVector<f64>,
    pub p: DMatrix<f64>,
}

pub struct PhdParams {
    pub ps: f64,
    pub pd: f64,
    pub kappa: f64,
    pub prune: f64,
}

/// One predict/update/prune cycle of the Gaussian-mixture PHD filter on
/// current states only.
pub fn gmphd_step(
    prior: &[GmComponent],
    births: &[GmComponent],
    sys: &LinearGaussian,
    par: &PhdParams,
    zs: &[DVector<f64>],
) -> Vec<GmComponent> {
    let mut pred: Vec<GmComponent> = births.to_vec();
    for c in prior {
        pred.push(GmComponent {
            w: par.ps * c.w,
            m: &sys.f * &c.m,
            p: &sys.f * &c.p * sys.f.transpose() + &sys.q,
        });
    }
    let mut out: Vec<GmComponent> = pred
        .iter()
        .map(|c| GmComponent {
            w: (1.0 - par.pd) * c.w,
            ..c.clone()
        })
        .collect();
    for z in zs {
        let parts: Vec<(f64, GmComponent)> = pred
            .iter()
            .map(|c| {
                let s = &sys.h * &c.p * sys.h.transpose() + &sys.r;
                let eta = &sys.h * &c.m;
                let q = density(z, &eta, &s);
                let k = &c.p * sys.h.transpose() * s.try_inverse().unwrap();
                let i = DMatrix::identity(c.m.len(), c.m.len());
                (
                    par.pd * c.w * q,
                    GmComponent {
                        w: 0.0,
                        m: &c.m + &k * (z - eta),
                        p: (&i - &k * &sys.h) * &c.p,
                    },
                )
            })
            .collect();
        let total: f64 = parts.iter().map(|(v, _)| v).sum();
        for (v, mut c) in parts {
            c.w = v / (par.kappa + total);
            out.push(c);
        }
    }
    out.retain(|c| c.w >= par.prune);
    out
}

/// A Gaussian over a whole stacked trajectory.
#[derive(Debug, Clone)]
pub struct TrajComponent {
    pub beta: usize,
    pub w: f64,
    pub m: DVector<f64>,
    pub u: DMatrix<f64>,
}

/// Single-model trajectory PHD prediction with full matrices: newborn
/// components first, then every prior component extended by the augmented
/// linear map `[I; 0 … F]`.
pub fn trajectory_predict(
    prior: &[TrajComponent],
    births: &[GmComponent],
    sys: &LinearGaussian,
    ps: f64,
    time: usize,
) -> Vec<TrajComponent> {
    let nx = sys.f.nrows();
    let mut out: Vec<TrajComponent> = births
        .iter()
        .map(|b| TrajComponent {
            beta: time,
            w: b.w,
            m: b.m.clone(),
            u: b.p.clone(),
        })
        .collect();
    for c in prior {
        let d = c.m.len();
        let mut a = DMatrix::zeros(d + nx, d);
        a.view_mut((0, 0), (d, d)).fill_with_identity();
        a.view_mut((d, d - nx), (nx, nx)).copy_from(&sys.f);
        let mut g = DMatrix::zeros(d + nx, nx);
        g.view_mut((d, 0), (nx, nx)).fill_with_identity();
        out.push(TrajComponent {
            beta: c.beta,
            w: ps * c.w,
            m: &a * &c.m,
            u: &a * &c.u * a.transpose() + &g * &sys.q * g.transpose(),
        });
    }
    out
}

/// Full-matrix Kalman update of every trajectory component: per component,
/// the missed-detection term first, then one term per measurement.
pub fn trajectory_update(
    pred: &[TrajComponent],
    sys: &LinearGaussian,
    pd: f64,
    kappa: f64,
    zs: &[DVector<f64>],
) -> Vec<TrajComponent> {
    let nx = sys.f.nrows();
    let nz = sys.h.nrows();
    let stacked: Vec<DMatrix<f64>> = pred
        .iter()
        .map(|c| {
            let d = c.m.len();
            let mut h = DMatrix::zeros(nz, d);
            h.view_mut((0, d - nx), (nz, nx)).copy_from(&sys.h);
            h
        })
        .collect();
    let likelihood: Vec<Vec<f64>> = pred
        .iter()
        .zip(&stacked)
        .map(|(c, h)| {
            let s = h * &c.u * h.transpose() + &sys.r;
            zs.iter().map(|z| density(z, &(h * &c.m), &s)).collect()
        })
        .collect();
    let totals: Vec<f64> = (0..zs.len())
        .map(|j| pred.iter().zip(&likelihood).map(|(c, l)| pd * c.w * l[j]).sum())
        .collect();
    let mut out = Vec::new();
    for ((c, h), l) in pred.iter().zip(&stacked).zip(&likelihood) {
        out.push(TrajComponent {
            w: (1.0 - pd) * c.w,
            ..c.clone()
        });
        let s = h * &c.u * h.transpose() + &sys.r;
        let k = &c.u * h.transpose() * s.clone().try_inverse().unwrap();
        let u = &c.u - &k * &s * k.transpose();
        for (j, z) in zs.iter().enumerate() {
            out.push(TrajComponent {
                beta: c.beta,
                w: pd * c.w * l[j] / (kappa + totals[j]),
                m: &c.m + &k * (z - h * &c.m),
                u: u.clone(),
            });
        }
    }
    out
}
