//! Plain-array reference implementations used as oracles.

#![allow(dead_code)]

use fwqa::model::ModelKind;
use fwqa::params::ParamStore;
use fwqa::tensor::Tensor;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn mat(p: &ParamStore, name: &str) -> Mat {
    to_mat(p.get(name).unwrap())
}

pub fn vec_of(p: &ParamStore, name: &str) -> Vec<f64> {
    p.get(name).unwrap().data().to_vec()
}

pub fn mv(m: &Mat, v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| {
            assert_eq!(row.len(), v.len());
            let mut s = 0.0;
            for j in 0..v.len() {
                s += row[j] * v[j];
            }
            s
        })
        .collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// One LSTM direction, one scalar at a time. Gate rows are ordered input,
/// forget, output, candidate.
pub fn lstm(w: &Mat, u: &Mat, b: &[f64], xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = u[0].len();
    let mut h = vec![0.0; d];
    let mut c = vec![0.0; d];
    let mut out = Vec::new();
    for x in xs {
        let mut next_h = vec![0.0; d];
        let mut next_c = vec![0.0; d];
        for k in 0..d {
            let pre = |gate: usize| {
                let r = gate * d + k;
                let mut s = b[r];
                for j in 0..x.len() {
                    s += w[r][j] * x[j];
                }
                for j in 0..d {
                    s += u[r][j] * h[j];
                }
                s
            };
            let i = sigmoid(pre(0));
            let f = sigmoid(pre(1));
            let o = sigmoid(pre(2));
            let g = pre(3).tanh();
            next_c[k] = f * c[k] + i * g;
            next_h[k] = o * next_c[k].tanh();
        }
        h = next_h;
        c = next_c;
        out.push(h.clone());
    }
    out
}

pub struct Side {
    pub joint: Mat,
    pub summary: Vec<f64>,
}

pub fn encode(p: &ParamStore, prefix: &str, raw: &Tensor) -> Side {
    let rows = to_mat(raw);
    let xs: Mat = match p.get(&format!("{prefix}.in")) {
        Ok(w) => rows.iter().map(|r| mv(&to_mat(w), r)).collect(),
        Err(_) => rows,
    };
    let dir = |d: &str| {
        (
            mat(p, &format!("{prefix}.{d}.w")),
            mat(p, &format!("{prefix}.{d}.u")),
            vec_of(p, &format!("{prefix}.{d}.b")),
        )
    };
    let (fw, fu, fb) = dir("fwd");
    let (bw, bu, bb) = dir("bwd");
    let fwd = lstm(&fw, &fu, &fb, &xs);
    let rev: Mat = xs.iter().rev().cloned().collect();
    let mut bwd = lstm(&bw, &bu, &bb, &rev);
    bwd.reverse();
    let n = xs.len();
    let ys: Mat = (0..n)
        .map(|t| [fwd[t].clone(), bwd[t].clone()].concat())
        .collect();
    let u = [fwd[n - 1].clone(), bwd[0].clone()].concat();
    match p.get(&format!("{prefix}.out")) {
        Ok(o) => {
            let o = to_mat(o);
            Side {
                joint: ys.iter().map(|y| mv(&o, y)).collect(),
                summary: mv(&o, &u),
            }
        }
        Err(_) => Side {
            joint: ys,
            summary: u,
        },
    }
}

/// Attention recurrence: each row of `queries` attends over `attended`.
/// Returns the final memory and the attention rows.
#[allow(clippy::too_many_arguments)]
pub fn attend(
    p: &ParamStore,
    queries: &Side,
    q_key: &str,
    attended: &Side,
    a_key: &str,
    w_mem: &str,
    w_ctx: &str,
    w_rec: &str,
) -> (Vec<f64>, Mat) {
    let wq = mat(p, q_key);
    let wa = mat(p, a_key);
    let wm = mat(p, w_mem);
    let ws = vec_of(p, "att.w_ms");
    let wc = mat(p, w_ctx);
    let wr = mat(p, w_rec);
    let mut r = vec![0.0; wr.len()];
    let mut rows = Vec::new();
    for q in &queries.joint {
        let offset = add(&mv(&wm, &r), &mv(&wq, q));
        let logits: Vec<f64> = attended
            .joint
            .iter()
            .map(|a| {
                let m: Vec<f64> = add(&mv(&wa, a), &offset).iter().map(|x| x.tanh()).collect();
                m.iter().zip(&ws).map(|(x, y)| x * y).sum()
            })
            .collect();
        let s = softmax(&logits);
        let dim = attended.joint[0].len();
        let mut ctx = vec![0.0; dim];
        for (weight, a) in s.iter().zip(&attended.joint) {
            for j in 0..dim {
                ctx[j] += weight * a[j];
            }
        }
        let carried: Vec<f64> = mv(&wr, &r).iter().map(|x| x.tanh()).collect();
        r = add(&mv(&wc, &ctx), &carried);
        rows.push(s);
    }
    (r, rows)
}

pub struct Reference {
    pub score: f64,
    pub rewatch: Option<Mat>,
    pub reread: Option<Mat>,
}

/// Full forward pass for one QA-sentence.
pub fn score(kind: ModelKind, p: &ParamStore, video: &Tensor, qa: &Tensor) -> Reference {
    let v = encode(p, "video", video);
    let c = encode(p, "text", qa);
    let rewatch = matches!(kind, ModelKind::Rewatcher | ModelKind::Forgettable).then(|| {
        attend(
            p, &c, "att.w_cm", &v, "att.w_vm", "att.w_rm", "att.w_vr", "att.w_rr",
        )
    });
    let reread = matches!(kind, ModelKind::Rereader | ModelKind::Forgettable).then(|| {
        attend(
            p, &v, "att.w_vm", &c, "att.w_cm", "att.w_wm", "att.w_cr", "att.w_ww",
        )
    });
    let mut pre = vec![0.0; p.get("head.w_cg").unwrap().rows()];
    if let Some((r, _)) = &rewatch {
        pre = add(&pre, &mv(&mat(p, "head.w_rg"), r));
    }
    if let Some((w, _)) = &reread {
        pre = add(&pre, &mv(&mat(p, "head.w_wg"), w));
    }
    if kind == ModelKind::Straightforward {
        pre = add(&pre, &mv(&mat(p, "head.w_vg"), &v.summary));
    }
    pre = add(&pre, &mv(&mat(p, "head.w_cg"), &c.summary));
    let mut x: Vec<f64> = pre.iter().map(|z| z.tanh()).collect();
    let mut layer = 0;
    loop {
        let y = add(
            &mv(&mat(p, &format!("head.fc{layer}.w")), &x),
            &vec_of(p, &format!("head.fc{layer}.b")),
        );
        layer += 1;
        if !p.contains(&format!("head.fc{layer}.w")) {
            return Reference {
                score: y[0],
                rewatch: rewatch.map(|(_, rows)| rows),
                reread: reread.map(|(_, rows)| rows),
            };
        }
        x = y.iter().map(|z| z.max(0.0)).collect();
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
