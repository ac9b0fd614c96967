//! Gated recurrent unit without bias terms, forward pass and
//! backpropagation through time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::{Matrix, Vector};

/// One direction of a GRU: input maps `d_h × d_p`, recurrent maps `d_h × d_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_r: Matrix,
    pub u_r: Matrix,
    pub w_z: Matrix,
    pub u_z: Matrix,
    pub w: Matrix,
    pub u: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl GruParams {
    pub fn zeros(d_p: usize, d_h: usize) -> Self {
        Self {
            w_r: Matrix::zeros(d_h, d_p),
            u_r: Matrix::zeros(d_h, d_h),
            w_z: Matrix::zeros(d_h, d_p),
            u_z: Matrix::zeros(d_h, d_h),
            w: Matrix::zeros(d_h, d_p),
            u: Matrix::zeros(d_h, d_h),
        }
    }

    /// Glorot-uniform draws for every matrix.
    pub fn glorot(d_p: usize, d_h: usize, rng: &mut impl Rng) -> Self {
        Self {
            w_r: glorot(d_h, d_p, rng),
            u_r: glorot(d_h, d_h, rng),
            w_z: glorot(d_h, d_p, rng),
            u_z: glorot(d_h, d_h, rng),
            w: glorot(d_h, d_p, rng),
            u: glorot(d_h, d_h, rng),
        }
    }

    pub fn d_h(&self) -> usize {
        self.u.nrows()
    }

    pub fn d_p(&self) -> usize {
        self.w.ncols()
    }

    /// Matrices in the order `W_r, U_r, W_z, U_z, W, U`.
    pub fn matrices(&self) -> [&Matrix; 6] {
        [&self.w_r, &self.u_r, &self.w_z, &self.u_z, &self.w, &self.u]
    }

    pub fn matrices_mut(&mut self) -> [&mut Matrix; 6] {
        [&mut self.w_r, &mut self.u_r, &mut self.w_z, &mut self.u_z, &mut self.w, &mut self.u]
    }

    fn check(&self) -> Result<()> {
        let (h, p) = (self.d_h(), self.d_p());
        for (i, m) in self.matrices().iter().enumerate() {
            let want = if i % 2 == 0 { (h, p) } else { (h, h) };
            if m.shape() != want {
                return invalid(format!("GRU matrix {i} has shape {:?}, expected {want:?}", m.shape()));
            }
        }
        Ok(())
    }
}

pub(crate) fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Per-step activations kept for the backward pass, in processing order.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub direction: Direction,
    /// `h_0 = 0, h_1, …, h_l`.
    pub h: Vec<Vector>,
    pub r: Vec<Vector>,
    pub z: Vec<Vector>,
    pub h_tilde: Vec<Vector>,
}

impl GruCache {
    pub fn final_state(&self) -> &Vector {
        self.h.last().expect("h_0 is always present")
    }
}

fn step_index(len: usize, k: usize, dir: Direction) -> usize {
    match dir {
        Direction::Forward => k,
        Direction::Backward => len - 1 - k,
    }
}

/// Runs the GRU over the columns of `seq` (`d_p × l`), in reverse column
/// order for [`Direction::Backward`].
pub fn gru_forward(params: &GruParams, seq: &Matrix, dir: Direction) -> Result<GruCache> {
    params.check()?;
    if seq.ncols() == 0 {
        return invalid("empty sequence");
    }
    if seq.nrows() != params.d_p() {
        return invalid(format!("sequence has {} features, GRU expects {}", seq.nrows(), params.d_p()));
    }
    let len = seq.ncols();
    let mut cache = GruCache {
        direction: dir,
        h: Vec::with_capacity(len + 1),
        r: Vec::with_capacity(len),
        z: Vec::with_capacity(len),
        h_tilde: Vec::with_capacity(len),
    };
    cache.h.push(Vector::zeros(params.d_h()));
    for k in 0..len {
        let x = seq.column(step_index(len, k, dir));
        let hp = &cache.h[k];
        let r = (&params.w_r * x + &params.u_r * hp).map(sigmoid);
        let z = (&params.w_z * x + &params.u_z * hp).map(sigmoid);
        let ht = (&params.w * x + &params.u * r.component_mul(hp)).map(f64::tanh);
        let h = z.component_mul(hp) + (z.map(|v| 1.0 - v)).component_mul(&ht);
        cache.r.push(r);
        cache.z.push(z);
        cache.h_tilde.push(ht);
        cache.h.push(h);
    }
    Ok(cache)
}

/// Gradients of a scalar loss with respect to all six matrices, given
/// `∂loss/∂h_l` for the final state.
pub fn gru_backward(params: &GruParams, seq: &Matrix, cache: &GruCache, d_final: &Vector) -> GruParams {
    let mut g = GruParams::zeros(params.d_p(), params.d_h());
    let len = seq.ncols();
    let mut dh = d_final.clone();
    for k in (0..len).rev() {
        let x = seq.column(step_index(len, k, cache.direction));
        let hp = &cache.h[k];
        let (r, z, ht) = (&cache.r[k], &cache.z[k], &cache.h_tilde[k]);

        let dz = dh.component_mul(&(hp - ht));
        let dht = dh.component_mul(&z.map(|v| 1.0 - v));
        let mut dhp = dh.component_mul(z);

        let da_h = dht.component_mul(&ht.map(|v| 1.0 - v * v));
        let rh = r.component_mul(hp);
        g.w += &da_h * x.transpose();
        g.u += &da_h * rh.transpose();
        let drh = params.u.transpose() * &da_h;
        let dr = drh.component_mul(hp);
        dhp += drh.component_mul(r);

        let da_z = dz.component_mul(&z.map(|v| v * (1.0 - v)));
        g.w_z += &da_z * x.transpose();
        g.u_z += &da_z * hp.transpose();
        dhp += params.u_z.transpose() * &da_z;

        let da_r = dr.component_mul(&r.map(|v| v * (1.0 - v)));
        g.w_r += &da_r * x.transpose();
        g.u_r += &da_r * hp.transpose();
        dhp += params.u_r.transpose() * &da_r;

        dh = dhp;
    }
    g
}
