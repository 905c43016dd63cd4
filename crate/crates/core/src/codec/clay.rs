//! Coupled-layer (Clay) MSR code.
//!
//! Node `i` sits at grid position `(x, y) = (i % q, i / q)` with `q = d - k + 1`
//! and `t = n / q` columns. Each chunk holds `alpha = q^t` sub-chunks, one per
//! layer `z`, where layer `z` is read as a base-`q` vector `(z_0, .., z_{t-1})`.
//!
//! Stored (coupled) symbols `C` relate to uncoupled symbols `U` through a
//! pairwise transform. A point `(x, y, z)` with `z_y == x` is unpaired and
//! `C = U`. Otherwise it is paired with `(z_y, y, z')`, `z' = z` with digit `y`
//! set to `x`, and
//!
//! ```text
//! C(x, y, z)   = U(x, y, z)   + g * U(z_y, y, z')
//! C(z_y, y, z') = U(z_y, y, z') + g * U(x, y, z)
//! ```
//!
//! In every layer the `n` uncoupled symbols form a codeword of the scalar
//! `[n, k]` MDS code.

use super::gf::{mul_add_slice, mul_slice, scale_slice, xor_slice, Gf};
use super::mds::MdsCode;
use super::CodecError;

/// Coupling coefficient. Must satisfy `g != 0` and `g^2 != 1`.
const GAMMA: Gf = Gf(2);

#[derive(Clone, Debug)]
pub struct ClayCode {
    k: usize,
    n: usize,
    q: usize,
    t: usize,
    alpha: usize,
    pow_q: Vec<usize>,
    mds: MdsCode,
}

impl ClayCode {
    pub fn new(k: usize, m: usize, d: usize) -> Result<Self, CodecError> {
        let n = k + m;
        if k == 0 || m == 0 {
            return Err(CodecError::InvalidParams(format!(
                "Clay code needs k >= 1 and m >= 1, got k={k} m={m}"
            )));
        }
        if d != n - 1 {
            return Err(CodecError::InvalidParams(format!(
                "Clay repair degree must be d = n - 1 = {}, got {d}",
                n - 1
            )));
        }
        let q = d - k + 1;
        if q < 2 || !n.is_multiple_of(q) {
            return Err(CodecError::InvalidParams(format!(
                "Clay code needs n = q * t with q = d - k + 1 = {q}, n = {n}"
            )));
        }
        let t = n / q;
        let alpha = q
            .checked_pow(t as u32)
            .filter(|&a| a <= 1 << 16)
            .ok_or_else(|| {
                CodecError::InvalidParams(format!("sub-packetization {q}^{t} too large"))
            })?;
        let pow_q = (0..t).map(|y| q.pow(y as u32)).collect();
        Ok(ClayCode {
            k,
            n,
            q,
            t,
            alpha,
            pow_q,
            mds: MdsCode::new(k, n)?,
        })
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn t(&self) -> usize {
        self.t
    }

    fn xy(&self, node: usize) -> (usize, usize) {
        (node % self.q, node / self.q)
    }

    fn node(&self, x: usize, y: usize) -> usize {
        y * self.q + x
    }

    fn digit(&self, z: usize, y: usize) -> usize {
        (z / self.pow_q[y]) % self.q
    }

    fn with_digit(&self, z: usize, y: usize, x: usize) -> usize {
        z - self.digit(z, y) * self.pow_q[y] + x * self.pow_q[y]
    }

    /// Fill every `None` entry of `chunks` (at most `n - k` of them).
    pub fn decode_erasures(&self, chunks: &mut [Option<Vec<u8>>]) -> Result<(), CodecError> {
        assert_eq!(chunks.len(), self.n);
        let erased: Vec<bool> = chunks.iter().map(Option::is_none).collect();
        let wanted: Vec<usize> = (0..self.n).filter(|&i| erased[i]).collect();
        if wanted.is_empty() {
            return Ok(());
        }
        let present: Vec<usize> = (0..self.n).filter(|&i| !erased[i]).collect();
        if present.len() < self.k {
            return Err(CodecError::InsufficientShards {
                have: present.len(),
                need: self.k,
            });
        }
        let chunk_len = chunks[present[0]].as_ref().map(Vec::len).unwrap_or(0);
        let sub = chunk_len / self.alpha;
        let plan = self.mds.plan(&present, &wanted)?;

        // Process layers in order of how many erased nodes are unpaired in them.
        let mut layers: Vec<(usize, usize)> = (0..self.alpha)
            .map(|z| {
                let score = wanted
                    .iter()
                    .filter(|&&e| {
                        let (x, y) = self.xy(e);
                        self.digit(z, y) == x
                    })
                    .count();
                (score, z)
            })
            .collect();
        layers.sort_unstable();

        let mut u: Vec<Vec<u8>> = vec![vec![0u8; chunk_len]; self.n];
        let inv_det = (Gf::ONE + GAMMA * GAMMA).inv();
        let mut tmp = vec![0u8; sub];
        let mut inputs = vec![0u8; self.k * sub];
        let mut outputs = vec![0u8; wanted.len() * sub];

        for &(_, z) in &layers {
            let at = |layer: usize| layer * sub..(layer + 1) * sub;
            for &node in &present {
                let (x, y) = self.xy(node);
                let zy = self.digit(z, y);
                let c = &chunks[node].as_ref().expect("present")[at(z)];
                if zy == x {
                    u[node][at(z)].copy_from_slice(c);
                    continue;
                }
                let partner = self.node(zy, y);
                let zp = self.with_digit(z, y, x);
                match &chunks[partner] {
                    Some(pc) => {
                        // U = (C + g C*) / (1 + g^2)
                        tmp.copy_from_slice(c);
                        mul_add_slice(&mut tmp, &pc[at(zp)], GAMMA);
                        scale_slice(&mut tmp, inv_det);
                    }
                    None => {
                        // Partner is erased; its U in layer zp was recovered earlier.
                        tmp.copy_from_slice(c);
                        mul_add_slice(&mut tmp, &u[partner][at(zp)], GAMMA);
                    }
                }
                u[node][at(z)].copy_from_slice(&tmp);
            }

            for (j, &node) in plan.known.iter().enumerate() {
                inputs[j * sub..(j + 1) * sub].copy_from_slice(&u[node][at(z)]);
            }
            {
                let ins: Vec<&[u8]> = inputs.chunks(sub.max(1)).take(self.k).collect();
                let mut outs: Vec<&mut [u8]> =
                    outputs.chunks_mut(sub.max(1)).take(wanted.len()).collect();
                if sub > 0 {
                    plan.apply(&ins, &mut outs);
                }
            }
            for (j, &node) in wanted.iter().enumerate() {
                u[node][at(z)].copy_from_slice(&outputs[j * sub..(j + 1) * sub]);
            }
        }

        // Re-couple the erased nodes.
        for &e in &wanted {
            let (x, y) = self.xy(e);
            let mut out = vec![0u8; chunk_len];
            for z in 0..self.alpha {
                let zy = self.digit(z, y);
                let dst = &mut out[z * sub..(z + 1) * sub];
                dst.copy_from_slice(&u[e][z * sub..(z + 1) * sub]);
                if zy != x {
                    let partner = self.node(zy, y);
                    let zp = self.with_digit(z, y, x);
                    mul_add_slice(dst, &u[partner][zp * sub..(zp + 1) * sub], GAMMA);
                }
            }
            chunks[e] = Some(out);
        }
        Ok(())
    }

    /// Layers a helper must ship to rebuild `lost`.
    pub fn repair_layers(&self, lost: usize) -> Vec<usize> {
        let (x0, y0) = self.xy(lost);
        (0..self.alpha)
            .filter(|&z| self.digit(z, y0) == x0)
            .collect()
    }

    /// Bandwidth-optimal single-node repair from all `n - 1` survivors.
    ///
    /// `fetch(node, layer)` returns the helper's sub-chunk for that layer; each
    /// (node, layer) pair is requested exactly once. Returns the rebuilt chunk.
    pub fn repair_optimal<'a, F>(&self, lost: usize, sub: usize, mut fetch: F) -> Vec<u8>
    where
        F: FnMut(usize, usize) -> &'a [u8],
    {
        let (x0, y0) = self.xy(lost);
        let layers = self.repair_layers(lost);
        let mut slot = vec![usize::MAX; self.alpha];
        for (i, &z) in layers.iter().enumerate() {
            slot[z] = i;
        }

        // Download phase: helper sub-chunks for the repair layers only.
        let mut c: Vec<Vec<u8>> = vec![Vec::new(); self.n];
        for node in (0..self.n).filter(|&i| i != lost) {
            let mut buf = Vec::with_capacity(layers.len() * sub);
            for &z in &layers {
                buf.extend_from_slice(fetch(node, z));
            }
            c[node] = buf;
        }
        let at = |z: usize| slot[z] * sub..(slot[z] + 1) * sub;

        let column: Vec<usize> = (0..self.q).map(|x| self.node(x, y0)).collect();
        let known: Vec<usize> = (0..self.n).filter(|i| i / self.q != y0).collect();
        let plan = self
            .mds
            .plan(&known, &column)
            .expect("n - q = k nodes lie outside the failed column");
        let inv_det = (Gf::ONE + GAMMA * GAMMA).inv();
        let gamma_inv = GAMMA.inv();

        let mut out = vec![0u8; self.alpha * sub];
        let mut u_known: Vec<Vec<u8>> = vec![vec![0u8; sub]; known.len()];
        let mut u_col: Vec<Vec<u8>> = vec![vec![0u8; sub]; self.q];

        for &z in &layers {
            for (j, &node) in known.iter().enumerate() {
                let (x, y) = self.xy(node);
                let zy = self.digit(z, y);
                let dst = &mut u_known[j];
                dst.copy_from_slice(&c[node][at(z)]);
                if zy != x {
                    // Partner shares column y != y0, so layer zp is also a repair layer.
                    let partner = self.node(zy, y);
                    let zp = self.with_digit(z, y, x);
                    mul_add_slice(dst, &c[partner][at(zp)], GAMMA);
                    scale_slice(dst, inv_det);
                }
            }
            {
                let ins: Vec<&[u8]> = u_known.iter().map(Vec::as_slice).collect();
                let mut outs: Vec<&mut [u8]> = u_col.iter_mut().map(Vec::as_mut_slice).collect();
                plan.apply(&ins, &mut outs);
            }
            // Unpaired in this layer: C = U.
            out[z * sub..(z + 1) * sub].copy_from_slice(&u_col[x0]);

            for x in (0..self.q).filter(|&x| x != x0) {
                let helper = self.node(x, y0);
                let zp = self.with_digit(z, y0, x);
                let u_h = &u_col[x];
                // C(h, z) = U(h, z) + g U(lost, zp)
                let mut u_lost = c[helper][at(z)].to_vec();
                xor_slice(&mut u_lost, u_h);
                scale_slice(&mut u_lost, gamma_inv);
                // C(lost, zp) = U(lost, zp) + g U(h, z)
                let dst = &mut out[zp * sub..(zp + 1) * sub];
                mul_slice(dst, u_h, GAMMA);
                xor_slice(dst, &u_lost);
            }
        }
        out
    }
}
