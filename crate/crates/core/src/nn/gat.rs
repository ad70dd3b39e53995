//! Single-head graph attention encoder.
//!
//! For agent `i` with state `h_i` and neighbour states `h_j`:
//!
//! ```text
//! e_ij  = LeakyReLU(aᵀ [W_q h_i ‖ W_k h_j])
//! α_ji  = softmax_j(e_ij)            (over unmasked neighbours only)
//! s'_i  = sigmoid(Σ_j α_ji W_v h_j)
//! ```
//!
//! Masked (padding) neighbours get `α = 0` and carry no forward value, so
//! they receive no gradient through the aggregation.

use super::{Graph, Tensor, Var};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GatParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    /// `[1, 2·d_out]`.
    pub a: Tensor,
    pub leaky_slope: f64,
}

impl GatParams {
    pub fn new(d_in: usize, d_out: usize, leaky_slope: f64, rng: &mut Rng) -> Self {
        let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self {
            w_q: Tensor::uniform(&[d_out, d_in], glorot(d_in, d_out), rng),
            w_k: Tensor::uniform(&[d_out, d_in], glorot(d_in, d_out), rng),
            w_v: Tensor::uniform(&[d_out, d_in], glorot(d_in, d_out), rng),
            a: Tensor::uniform(&[1, 2 * d_out], glorot(2 * d_out, 1), rng),
            leaky_slope,
        }
    }

    pub fn d_in(&self) -> usize {
        self.w_q.shape[1]
    }

    pub fn d_out(&self) -> usize {
        self.w_q.shape[0]
    }

    pub fn bind<'p>(&'p self, g: &mut Graph<'p>) -> GatVars {
        GatVars {
            w_q: g.param(&self.w_q),
            w_k: g.param(&self.w_k),
            w_v: g.param(&self.w_v),
            a: g.param(&self.a),
            slope: self.leaky_slope,
        }
    }

    pub fn named(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        vec![
            (format!("{prefix}.w_q"), &self.w_q),
            (format!("{prefix}.w_k"), &self.w_k),
            (format!("{prefix}.w_v"), &self.w_v),
            (format!("{prefix}.a"), &self.a),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w_q, &mut self.w_k, &mut self.w_v, &mut self.a]
    }
}

pub struct GatVars {
    w_q: Var,
    w_k: Var,
    w_v: Var,
    a: Var,
    slope: f64,
}

impl GatVars {
    /// Parameter handles in [`GatParams::named`] order.
    pub fn vars(&self) -> Vec<Var> {
        vec![self.w_q, self.w_k, self.w_v, self.a]
    }

    /// Attention weights `[B, n]` for ego states `h: [B, d_in]` and
    /// neighbour states `nbr: [B·n, d_in]` (row `b·n + j` is neighbour `j`
    /// of sample `b`).
    pub fn attention(&self, g: &mut Graph, h: Var, nbr: Var, mask: &[bool]) -> Result<Var> {
        let batch = g.shape(h)[0];
        let rows = g.shape(nbr)[0];
        if batch == 0 || !rows.is_multiple_of(batch) || mask.len() != rows {
            return Err(Error::Shape(format!(
                "gat: {batch} ego rows, {rows} neighbour rows, {} mask entries",
                mask.len()
            )));
        }
        let n = rows / batch;
        let q = g.matmul_nt(h, self.w_q)?;
        let k = g.matmul_nt(nbr, self.w_k)?;
        let q = g.repeat_rows(q, n);
        let qk = g.concat(q, k)?;
        let e = g.matmul_nt(qk, self.a)?;
        let e = g.leaky_relu(e, self.slope);
        let e = g.reshape(e, &[batch, n])?;
        g.masked_softmax(e, mask)
    }

    /// Encoded state `[B, d_out]`.
    pub fn encode(&self, g: &mut Graph, h: Var, nbr: Var, mask: &[bool]) -> Result<Var> {
        let alpha = self.attention(g, h, nbr, mask)?;
        let v = g.matmul_nt(nbr, self.w_v)?;
        let agg = g.weighted_row_sum(alpha, v)?;
        Ok(g.sigmoid(agg))
    }
}

fn single<'p>(
    g: &mut Graph<'p>,
    params: &'p GatParams,
    h_i: &[f64],
    neighbours: &[f64],
    mask: &[bool],
) -> Result<(GatVars, Var, Var)> {
    let d = params.d_in();
    let vars = params.bind(g);
    let h = g.input(h_i.to_vec(), &[1, d])?;
    let nbr = g.input(neighbours.to_vec(), &[mask.len(), d])?;
    Ok((vars, h, nbr))
}

/// Attention coefficients for one agent; `neighbours` is `mask.len()` rows
/// of `d_in` values. All-masked input gives all zeros.
pub fn attention_coefficients(h_i: &[f64], neighbours: &[f64], mask: &[bool], params: &GatParams) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let (vars, h, nbr) = single(&mut g, params, h_i, neighbours, mask)?;
    let alpha = vars.attention(&mut g, h, nbr, mask)?;
    Ok(g.value(alpha).to_vec())
}

/// Encoded state for one agent. All-masked input gives `sigmoid(0) = 0.5`.
pub fn gat_encode(h_i: &[f64], neighbours: &[f64], mask: &[bool], params: &GatParams) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let (vars, h, nbr) = single(&mut g, params, h_i, neighbours, mask)?;
    let s = vars.encode(&mut g, h, nbr, mask)?;
    Ok(g.value(s).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::leaky_relu;
    use crate::rng::{stream, Stream};

    fn params(seed: u64) -> GatParams {
        GatParams::new(6, 4, 0.01, &mut stream(seed, Stream::Init))
    }

    /// Scalar-loop transcription of the attention formula.
    fn oracle_alpha(p: &GatParams, h: &[f64], nbrs: &[f64], mask: &[bool]) -> Vec<f64> {
        let (d_in, d_out) = (p.d_in(), p.d_out());
        let proj = |w: &Tensor, x: &[f64]| -> Vec<f64> {
            (0..d_out)
                .map(|r| (0..d_in).map(|c| w.data[r * d_in + c] * x[c]).sum())
                .collect()
        };
        let q = proj(&p.w_q, h);
        let mut scores = Vec::new();
        for (j, &m) in mask.iter().enumerate() {
            let k = proj(&p.w_k, &nbrs[j * d_in..(j + 1) * d_in]);
            let mut s = 0.0;
            for r in 0..d_out {
                s += p.a.data[r] * q[r] + p.a.data[d_out + r] * k[r];
            }
            scores.push(if m { Some(leaky_relu(s, p.leaky_slope).exp()) } else { None });
        }
        let z: f64 = scores.iter().flatten().sum();
        scores.iter().map(|s| s.map_or(0.0, |v| v / z)).collect()
    }

    #[test]
    fn single_neighbour_gets_full_weight() {
        let p = params(1);
        let a = attention_coefficients(&[0.1; 6], &[0.3; 6], &[true], &p).unwrap();
        assert_eq!(a, vec![1.0]);
    }

    #[test]
    fn identical_neighbours_split_evenly() {
        let p = params(2);
        let nb = [0.2, -0.1, 0.5, 1.0, 0.0, -0.3];
        let both: Vec<f64> = nb.iter().chain(&nb).copied().collect();
        let a = attention_coefficients(&[0.0; 6], &both, &[true, true], &p).unwrap();
        assert_eq!(a, vec![0.5, 0.5]);
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = stream(5, Stream::Init);
        for seed in 0..20 {
            let p = params(seed);
            let h = Tensor::uniform(&[6], 2.0, &mut rng).data;
            let nb = Tensor::uniform(&[4, 6], 2.0, &mut rng).data;
            let mask = [true, seed % 2 == 0, true, seed % 3 != 0];
            let a = attention_coefficients(&h, &nb, &mask, &p).unwrap();
            let o = oracle_alpha(&p, &h, &nb, &mask);
            for (x, y) in a.iter().zip(&o) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn all_masked_encodes_to_one_half() {
        let p = params(3);
        let s = gat_encode(&[1.0; 6], &[0.0; 18], &[false; 3], &p).unwrap();
        assert_eq!(s, vec![0.5; 4]);
        let a = attention_coefficients(&[1.0; 6], &[0.0; 18], &[false; 3], &p).unwrap();
        assert_eq!(a, vec![0.0; 3]);
    }

    #[test]
    fn single_neighbour_encoding_is_sigmoid_of_projection() {
        let p = params(4);
        let hj = [0.4, -0.2, 0.9, 0.1, 0.0, -1.0];
        let s = gat_encode(&[0.0; 6], &hj, &[true], &p).unwrap();
        for (r, v) in s.iter().enumerate() {
            let z: f64 = (0..6).map(|c| p.w_v.data[r * 6 + c] * hj[c]).sum();
            assert!((v - crate::nn::sigmoid(z)).abs() < 1e-15);
            assert!(*v > 0.0 && *v < 1.0);
        }
    }

    #[test]
    fn masked_neighbour_gets_no_value_gradient() {
        let p = params(6);
        let mut g = Graph::new();
        let vars = p.bind(&mut g);
        let h = g.input(vec![0.1; 6], &[1, 6]).unwrap();
        // neighbour 0 is real, neighbour 1 is masked but non-zero
        let mut nb = vec![0.3; 6];
        nb.extend([5.0; 6]);
        let nbr = g.param_owned(Tensor::from_vec(nb, &[2, 6]).unwrap());
        let s = vars.encode(&mut g, h, nbr, &[true, false]).unwrap();
        let l = g.sum(s);
        g.backward(l).unwrap();
        let gn = g.grad(nbr).unwrap();
        assert!(gn[..6].iter().any(|v| *v != 0.0));
        assert!(gn[6..].iter().all(|v| *v == 0.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn coefficients_normalised_and_permutation_equivariant(
                seed in 0u64..1000,
                h in prop::collection::vec(-3.0f64..3.0, 6),
                nb in prop::collection::vec(-3.0f64..3.0, 30),
                mask in prop::collection::vec(any::<bool>(), 5),
            ) {
                let p = params(seed);
                let a = attention_coefficients(&h, &nb, &mask, &p).unwrap();
                if mask.iter().any(|&m| m) {
                    prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
                prop_assert!(a.iter().all(|&v| v >= 0.0));
                for (v, m) in a.iter().zip(&mask) {
                    if !m { prop_assert_eq!(*v, 0.0); }
                }

                // reverse neighbour order
                let perm: Vec<usize> = (0..5).rev().collect();
                let nb_p: Vec<f64> = perm.iter().flat_map(|&j| nb[j * 6..(j + 1) * 6].to_vec()).collect();
                let mask_p: Vec<bool> = perm.iter().map(|&j| mask[j]).collect();
                let a_p = attention_coefficients(&h, &nb_p, &mask_p, &p).unwrap();
                for (k, &j) in perm.iter().enumerate() {
                    prop_assert!((a_p[k] - a[j]).abs() < 1e-14);
                }
                let s = gat_encode(&h, &nb, &mask, &p).unwrap();
                let s_p = gat_encode(&h, &nb_p, &mask_p, &p).unwrap();
                for (x, y) in s.iter().zip(&s_p) {
                    prop_assert!((x - y).abs() < 1e-14);
                }
            }
        }
    }
}
