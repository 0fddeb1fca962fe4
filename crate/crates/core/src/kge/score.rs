use super::KgeMethod;
use crate::error::{Error, Result};

/// Turns a stored relation row into the vector the scoring functions use.
/// For RotatE the phases θ become `[cos θ ‖ sin θ]`; other methods use the
/// row as is.
pub fn relation_repr(method: KgeMethod, params: &[f64]) -> Vec<f64> {
    match method {
        KgeMethod::RotatE => {
            let mut out = Vec::with_capacity(2 * params.len());
            out.extend(params.iter().map(|p| p.cos()));
            out.extend(params.iter().map(|p| p.sin()));
            out
        }
        KgeMethod::TransE | KgeMethod::ComplEx => params.to_vec(),
    }
}

/// Scores a triple from stored parameters. Higher is more plausible.
pub fn score(method: KgeMethod, head: &[f64], relation: &[f64], tail: &[f64]) -> Result<f64> {
    let ew = match method {
        KgeMethod::TransE | KgeMethod::ComplEx => relation.len(),
        KgeMethod::RotatE => 2 * relation.len(),
    };
    let odd_complex = method == KgeMethod::ComplEx && relation.len() % 2 == 1;
    if head.len() != ew || tail.len() != ew || relation.is_empty() || odd_complex {
        return Err(Error::Shape(format!(
            "{method}: head {}, relation {}, tail {}",
            head.len(),
            relation.len(),
            tail.len()
        )));
    }
    if !head.iter().chain(relation).chain(tail).all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("{method} score input")));
    }
    Ok(score_repr(method, head, &relation_repr(method, relation), tail))
}

/// Score on a prepared relation representation (see [`relation_repr`]).
pub fn score_repr(method: KgeMethod, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    match method {
        KgeMethod::TransE => -h
            .iter()
            .zip(r)
            .zip(t)
            .map(|((h, r), t)| {
                let d = h + r - t;
                d * d
            })
            .sum::<f64>()
            .sqrt(),
        KgeMethod::RotatE => {
            let d = h.len() / 2;
            let (hr, hi) = h.split_at(d);
            let (c, s) = r.split_at(d);
            let (tr, ti) = t.split_at(d);
            let mut acc = 0.0;
            for k in 0..d {
                let re = hr[k] * c[k] - hi[k] * s[k] - tr[k];
                let im = hr[k] * s[k] + hi[k] * c[k] - ti[k];
                acc += re * re + im * im;
            }
            -acc.sqrt()
        }
        KgeMethod::ComplEx => {
            let d = h.len() / 2;
            let (hr, hi) = h.split_at(d);
            let (rr, ri) = r.split_at(d);
            let (tr, ti) = t.split_at(d);
            let mut acc = 0.0;
            for k in 0..d {
                let a = hr[k] * rr[k] - hi[k] * ri[k];
                let b = hr[k] * ri[k] + hi[k] * rr[k];
                acc += a * tr[k] + b * ti[k];
            }
            acc
        }
    }
}

/// Returns the score and accumulates `upstream · ∂score/∂x` into the
/// gradient slices. The relation gradient is with respect to the
/// representation, not the stored parameters.
pub fn score_repr_grad(
    method: KgeMethod,
    h: &[f64],
    r: &[f64],
    t: &[f64],
    upstream: f64,
    gh: &mut [f64],
    gr: &mut [f64],
    gt: &mut [f64],
) -> f64 {
    match method {
        KgeMethod::TransE => {
            let norm = h
                .iter()
                .zip(r)
                .zip(t)
                .map(|((h, r), t)| (h + r - t) * (h + r - t))
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 && upstream != 0.0 {
                let f = upstream / norm;
                for k in 0..h.len() {
                    let d = (h[k] + r[k] - t[k]) * f;
                    gh[k] -= d;
                    gr[k] -= d;
                    gt[k] += d;
                }
            }
            -norm
        }
        KgeMethod::RotatE => {
            let d = h.len() / 2;
            let mut re = vec![0.0; d];
            let mut im = vec![0.0; d];
            let mut acc = 0.0;
            for k in 0..d {
                let (hr, hi, c, s) = (h[k], h[d + k], r[k], r[d + k]);
                re[k] = hr * c - hi * s - t[k];
                im[k] = hr * s + hi * c - t[d + k];
                acc += re[k] * re[k] + im[k] * im[k];
            }
            let norm = acc.sqrt();
            if norm > 0.0 && upstream != 0.0 {
                let f = upstream / norm;
                for k in 0..d {
                    let (hr, hi, c, s) = (h[k], h[d + k], r[k], r[d + k]);
                    let (dre, dim) = (re[k] * f, im[k] * f);
                    gh[k] -= dre * c + dim * s;
                    gh[d + k] -= -dre * s + dim * c;
                    gr[k] -= dre * hr + dim * hi;
                    gr[d + k] -= -dre * hi + dim * hr;
                    gt[k] += dre;
                    gt[d + k] += dim;
                }
            }
            -norm
        }
        KgeMethod::ComplEx => {
            let d = h.len() / 2;
            let mut acc = 0.0;
            for k in 0..d {
                let (hr, hi, rr, ri, tr, ti) = (h[k], h[d + k], r[k], r[d + k], t[k], t[d + k]);
                let a = hr * rr - hi * ri;
                let b = hr * ri + hi * rr;
                acc += a * tr + b * ti;
                if upstream != 0.0 {
                    gh[k] += upstream * (rr * tr + ri * ti);
                    gh[d + k] += upstream * (-ri * tr + rr * ti);
                    gr[k] += upstream * (hr * tr + hi * ti);
                    gr[d + k] += upstream * (-hi * tr + hr * ti);
                    gt[k] += upstream * a;
                    gt[d + k] += upstream * b;
                }
            }
            acc
        }
    }
}

/// Maps a representation-space relation gradient back onto stored parameters.
pub(crate) fn relation_param_grad(method: KgeMethod, params: &[f64], repr_grad: &[f64], out: &mut [f64]) {
    match method {
        KgeMethod::RotatE => {
            let d = params.len();
            for k in 0..d {
                let (s, c) = params[k].sin_cos();
                out[k] += -s * repr_grad[k] + c * repr_grad[d + k];
            }
        }
        KgeMethod::TransE | KgeMethod::ComplEx => {
            for (o, g) in out.iter_mut().zip(repr_grad) {
                *o += g;
            }
        }
    }
}
