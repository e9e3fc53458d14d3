//! Convolution and pooling kernels behind the graph ops.
//!
//! Convolutions run as im2col + GEMM per batch item, threaded over the batch.
//! Stride is always 1 with "same" padding (`k/2` per axis); pooling is kernel
//! 2, stride 2, floor-division output extents. Work is split into fixed-size
//! batch chunks and reduced in chunk order, so results do not depend on the
//! worker count.

use crate::error::{Error, Result};
use crate::numerics::element::Element;
use crate::numerics::parallel::run_chunks;

/// Batch items per work chunk; fixed so that partial reductions (and thus the
/// f32 summation order) are identical for every thread count.
const CHUNK: usize = 4;

struct ConvDims {
    n: usize,
    c_in: usize,
    c_out: usize,
    spatial: Vec<usize>,
    kernel: Vec<usize>,
    pad: Vec<usize>,
    /// im2col rows: c_in * prod(kernel)
    rows: usize,
    /// output positions: prod(spatial) (same padding keeps extents for odd k)
    cols: usize,
    img_in: usize,
    img_out: usize,
}

fn conv_dims(x_shape: &[usize], w_shape: &[usize]) -> Result<ConvDims> {
    let dims = x_shape.len() - 2;
    let spatial = x_shape[2..].to_vec();
    let kernel = w_shape[2..].to_vec();
    let pad: Vec<usize> = kernel.iter().map(|&k| k / 2).collect();
    // Same padding: out = in + 2*pad - k + 1. Equal to `in` for odd kernels.
    let out_sp: Vec<usize> = spatial
        .iter()
        .zip(&kernel)
        .zip(&pad)
        .map(|((&s, &k), &p)| (s + 2 * p).saturating_sub(k - 1))
        .collect();
    if out_sp.contains(&0) {
        return Err(Error::Shape(format!(
            "conv: kernel {kernel:?} larger than padded input {spatial:?}"
        )));
    }
    if out_sp != spatial {
        // Only odd kernels preserve extents under same padding; the model
        // uses k = 1 and k = 3 exclusively.
        return Err(Error::Shape(format!(
            "conv: even kernel {kernel:?} unsupported (output {out_sp:?} != input {spatial:?})"
        )));
    }
    let rows = x_shape[1] * kernel.iter().product::<usize>();
    let cols = spatial.iter().product::<usize>();
    let _ = dims;
    Ok(ConvDims {
        n: x_shape[0],
        c_in: x_shape[1],
        c_out: w_shape[0],
        img_in: x_shape[1] * cols,
        img_out: w_shape[0] * cols,
        spatial,
        kernel,
        pad,
        rows,
        cols,
    })
}

/// Fill `col` (rows x cols, zero-initialized) from one image `[c_in, spatial…]`.
fn im2col<E: Element>(img: &[E], d: &ConvDims, col: &mut [E]) {
    match d.spatial.len() {
        2 => {
            let (h, w) = (d.spatial[0], d.spatial[1]);
            let (kh, kw) = (d.kernel[0], d.kernel[1]);
            let (ph, pw) = (d.pad[0], d.pad[1]);
            for ci in 0..d.c_in {
                let plane = &img[ci * h * w..(ci + 1) * h * w];
                for dy in 0..kh {
                    for dx in 0..kw {
                        let row = ((ci * kh + dy) * kw + dx) * d.cols;
                        // Valid output column range for this kernel offset.
                        let ox_lo = pw.saturating_sub(dx);
                        let ox_hi = (w + pw).saturating_sub(dx).min(w);
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        for oy in 0..h {
                            let iy = oy + dy;
                            if iy < ph || iy >= h + ph {
                                continue;
                            }
                            let iy = iy - ph;
                            let src = iy * w + (ox_lo + dx - pw);
                            let dst = row + oy * w + ox_lo;
                            col[dst..dst + (ox_hi - ox_lo)]
                                .copy_from_slice(&plane[src..src + (ox_hi - ox_lo)]);
                        }
                    }
                }
            }
        }
        3 => {
            let (h, w, c) = (d.spatial[0], d.spatial[1], d.spatial[2]);
            let (kh, kw, kc) = (d.kernel[0], d.kernel[1], d.kernel[2]);
            let (ph, pw, pc) = (d.pad[0], d.pad[1], d.pad[2]);
            for ci in 0..d.c_in {
                let plane = &img[ci * h * w * c..(ci + 1) * h * w * c];
                for dz in 0..kh {
                    for dy in 0..kw {
                        for dx in 0..kc {
                            let row = (((ci * kh + dz) * kw + dy) * kc + dx) * d.cols;
                            let ox_lo = pc.saturating_sub(dx);
                            let ox_hi = (c + pc).saturating_sub(dx).min(c);
                            if ox_lo >= ox_hi {
                                continue;
                            }
                            for oz in 0..h {
                                let iz = oz + dz;
                                if iz < ph || iz >= h + ph {
                                    continue;
                                }
                                let iz = iz - ph;
                                for oy in 0..w {
                                    let iy = oy + dy;
                                    if iy < pw || iy >= w + pw {
                                        continue;
                                    }
                                    let iy = iy - pw;
                                    let src = (iz * w + iy) * c + (ox_lo + dx - pc);
                                    let dst = row + (oz * w + oy) * c + ox_lo;
                                    col[dst..dst + (ox_hi - ox_lo)]
                                        .copy_from_slice(&plane[src..src + (ox_hi - ox_lo)]);
                                }
                            }
                        }
                    }
                }
            }
        }
        _ => unreachable!("conv dims checked by caller"),
    }
}

/// Scatter-add `col` (rows x cols) back into one image gradient.
fn col2im_add<E: Element>(col: &[E], d: &ConvDims, img: &mut [E]) {
    match d.spatial.len() {
        2 => {
            let (h, w) = (d.spatial[0], d.spatial[1]);
            let (kh, kw) = (d.kernel[0], d.kernel[1]);
            let (ph, pw) = (d.pad[0], d.pad[1]);
            for ci in 0..d.c_in {
                let plane = &mut img[ci * h * w..(ci + 1) * h * w];
                for dy in 0..kh {
                    for dx in 0..kw {
                        let row = ((ci * kh + dy) * kw + dx) * d.cols;
                        let ox_lo = pw.saturating_sub(dx);
                        let ox_hi = (w + pw).saturating_sub(dx).min(w);
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        for oy in 0..h {
                            let iy = oy + dy;
                            if iy < ph || iy >= h + ph {
                                continue;
                            }
                            let iy = iy - ph;
                            let src = row + oy * w + ox_lo;
                            let dst = iy * w + (ox_lo + dx - pw);
                            for i in 0..(ox_hi - ox_lo) {
                                plane[dst + i] += col[src + i];
                            }
                        }
                    }
                }
            }
        }
        3 => {
            let (h, w, c) = (d.spatial[0], d.spatial[1], d.spatial[2]);
            let (kh, kw, kc) = (d.kernel[0], d.kernel[1], d.kernel[2]);
            let (ph, pw, pc) = (d.pad[0], d.pad[1], d.pad[2]);
            for ci in 0..d.c_in {
                let plane = &mut img[ci * h * w * c..(ci + 1) * h * w * c];
                for dz in 0..kh {
                    for dy in 0..kw {
                        for dx in 0..kc {
                            let row = (((ci * kh + dz) * kw + dy) * kc + dx) * d.cols;
                            let ox_lo = pc.saturating_sub(dx);
                            let ox_hi = (c + pc).saturating_sub(dx).min(c);
                            if ox_lo >= ox_hi {
                                continue;
                            }
                            for oz in 0..h {
                                let iz = oz + dz;
                                if iz < ph || iz >= h + ph {
                                    continue;
                                }
                                let iz = iz - ph;
                                for oy in 0..w {
                                    let iy = oy + dy;
                                    if iy < pw || iy >= w + pw {
                                        continue;
                                    }
                                    let iy = iy - pw;
                                    let src = row + (oz * w + oy) * c + ox_lo;
                                    let dst = (iz * w + iy) * c + (ox_lo + dx - pc);
                                    for i in 0..(ox_hi - ox_lo) {
                                        plane[dst + i] += col[src + i];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        _ => unreachable!(),
    }
}

#[allow(clippy::type_complexity)]
pub(crate) fn conv_forward<E: Element>(
    x: &[E],
    x_shape: &[usize],
    w: &[E],
    w_shape: &[usize],
    bias: Option<&[E]>,
    threads: usize,
) -> Result<(Vec<E>, Vec<usize>, Vec<E>)> {
    let d = conv_dims(x_shape, w_shape)?;
    let mut out = vec![E::zero(); d.n * d.img_out];
    let mut cols = vec![E::zero(); d.n * d.rows * d.cols];
    let img_cols = d.rows * d.cols;

    {
        let out_chunks: Vec<&mut [E]> = out.chunks_mut(CHUNK * d.img_out).collect();
        let col_chunks: Vec<&mut [E]> = cols.chunks_mut(CHUNK * img_cols).collect();
        let work: Vec<(&mut [E], &mut [E])> = out_chunks.into_iter().zip(col_chunks).collect();
        let d = &d;
        run_chunks(work, threads, move |chunk_idx, (out_chunk, col_chunk)| {
            let in_chunk = out_chunk.len() / d.img_out;
            for i in 0..in_chunk {
                let item = chunk_idx * CHUNK + i;
                let img = &x[item * d.img_in..(item + 1) * d.img_in];
                let col = &mut col_chunk[i * img_cols..(i + 1) * img_cols];
                im2col(img, d, col);
                let o = &mut out_chunk[i * d.img_out..(i + 1) * d.img_out];
                E::gemm(d.c_out, d.rows, d.cols, E::one(), w, col, E::zero(), o);
                if let Some(b) = bias {
                    for (oc, &bv) in b.iter().enumerate() {
                        for v in &mut o[oc * d.cols..(oc + 1) * d.cols] {
                            *v += bv;
                        }
                    }
                }
            }
        });
    }

    let mut out_shape = vec![d.n, d.c_out];
    out_shape.extend_from_slice(&d.spatial);
    Ok((out, out_shape, cols))
}

/// Gradients for conv: (dx, dw, dbias), each present only when requested.
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
pub(crate) fn conv_backward<E: Element>(
    dy: &[E],
    _y_shape: &[usize],
    _x: &[E],
    x_shape: &[usize],
    w: &[E],
    w_shape: &[usize],
    cols: &[E],
    need_dx: bool,
    need_dw: bool,
    need_db: bool,
    threads: usize,
) -> (Option<Vec<E>>, Option<Vec<E>>, Option<Vec<E>>) {
    let d = conv_dims(x_shape, w_shape).expect("shapes validated at forward time");
    let img_cols = d.rows * d.cols;
    let n_chunks = d.n.div_ceil(CHUNK);

    let dx = need_dx.then(|| vec![E::zero(); d.n * d.img_in]);
    let mut dx = dx;
    if let Some(dx_buf) = dx.as_mut() {
        let dx_chunks: Vec<&mut [E]> = dx_buf.chunks_mut(CHUNK * d.img_in).collect();
        let d = &d;
        run_chunks(dx_chunks, threads, move |chunk_idx, dx_chunk| {
            let in_chunk = dx_chunk.len() / d.img_in;
            let mut colgrad = vec![E::zero(); img_cols];
            for i in 0..in_chunk {
                let item = chunk_idx * CHUNK + i;
                let dy_img = &dy[item * d.img_out..(item + 1) * d.img_out];
                // colgrad = W^T @ dY
                E::gemm_strided(
                    d.rows,
                    d.c_out,
                    d.cols,
                    E::one(),
                    w,
                    1,
                    d.rows as isize,
                    dy_img,
                    d.cols as isize,
                    1,
                    E::zero(),
                    &mut colgrad,
                    d.cols as isize,
                    1,
                );
                col2im_add(&colgrad, d, &mut dx_chunk[i * d.img_in..(i + 1) * d.img_in]);
            }
        });
    }

    let dw = if need_dw {
        // Per-chunk partial weight gradients, reduced in chunk order.
        let w_len = w.len();
        let mut partials = vec![E::zero(); n_chunks * w_len];
        {
            let parts: Vec<&mut [E]> = partials.chunks_mut(w_len).collect();
            let d = &d;
            run_chunks(parts, threads, move |chunk_idx, part| {
                let lo = chunk_idx * CHUNK;
                let hi = (lo + CHUNK).min(d.n);
                for item in lo..hi {
                    let dy_img = &dy[item * d.img_out..(item + 1) * d.img_out];
                    let col = &cols[item * img_cols..(item + 1) * img_cols];
                    // dW += dY @ col^T
                    E::gemm_strided(
                        d.c_out,
                        d.cols,
                        d.rows,
                        E::one(),
                        dy_img,
                        d.cols as isize,
                        1,
                        col,
                        1,
                        d.cols as isize,
                        E::one(),
                        part,
                        d.rows as isize,
                        1,
                    );
                }
            });
        }
        let mut dw = vec![E::zero(); w_len];
        for c in 0..n_chunks {
            for (acc, &p) in dw.iter_mut().zip(&partials[c * w_len..(c + 1) * w_len]) {
                *acc += p;
            }
        }
        Some(dw)
    } else {
        None
    };

    let db = need_db.then(|| {
        let mut db = vec![E::zero(); d.c_out];
        for item in 0..d.n {
            let dy_img = &dy[item * d.img_out..(item + 1) * d.img_out];
            for (oc, acc) in db.iter_mut().enumerate() {
                for &g in &dy_img[oc * d.cols..(oc + 1) * d.cols] {
                    *acc += g;
                }
            }
        }
        db
    });

    (dx, dw, db)
}

/// Max pooling (kernel 2, stride 2). Returns (values, out shape, argmax flat
/// input indices). Ties resolve to the first element in scan order.
pub(crate) fn max_pool_forward<E: Element>(
    x: &[E],
    x_shape: &[usize],
) -> (Vec<E>, Vec<usize>, Vec<u32>) {
    let (n, c) = (x_shape[0], x_shape[1]);
    let spatial = &x_shape[2..];
    let out_sp: Vec<usize> = spatial.iter().map(|&e| e / 2).collect();
    let in_pos: usize = spatial.iter().product();
    let out_pos: usize = out_sp.iter().product();
    let mut out = vec![E::zero(); n * c * out_pos];
    let mut argmax = vec![0u32; n * c * out_pos];

    let two_d = spatial.len() == 2;
    for img in 0..n * c {
        let base_in = img * in_pos;
        let base_out = img * out_pos;
        if two_d {
            let w = spatial[1];
            let (oh, ow) = (out_sp[0], out_sp[1]);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = E::neg_infinity();
                    let mut best_idx = 0usize;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let idx = (oy * 2 + dy) * w + ox * 2 + dx;
                            if x[base_in + idx] > best {
                                best = x[base_in + idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out[base_out + oy * ow + ox] = best;
                    argmax[base_out + oy * ow + ox] = (base_in + best_idx) as u32;
                }
            }
        } else {
            let (h, w, cc) = (spatial[0], spatial[1], spatial[2]);
            let _ = h;
            let (oh, ow, oc) = (out_sp[0], out_sp[1], out_sp[2]);
            for oz in 0..oh {
                for oy in 0..ow {
                    for ox in 0..oc {
                        let mut best = E::neg_infinity();
                        let mut best_idx = 0usize;
                        for dz in 0..2 {
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    let idx = ((oz * 2 + dz) * w + oy * 2 + dy) * cc + ox * 2 + dx;
                                    if x[base_in + idx] > best {
                                        best = x[base_in + idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                        }
                        let o = (oz * ow + oy) * oc + ox;
                        out[base_out + o] = best;
                        argmax[base_out + o] = (base_in + best_idx) as u32;
                    }
                }
            }
        }
    }
    let mut out_shape = vec![n, c];
    out_shape.extend_from_slice(&out_sp);
    (out, out_shape, argmax)
}
