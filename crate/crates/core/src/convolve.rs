//! Group convolution `u(z) = ∫ K(ζ^{-1} ∘ z) f(ζ) dζ` by node quadrature.
//!
//! The sum is organised so that it costs one kernel table per pair of
//! "keyed" source/target lines. Along the last block of spatial
//! coordinates the kernel argument depends only on the index difference
//! (the shear `E(s)ξ` never involves those coordinates), so each line pair
//! is a discrete correlation. For the Euclidean group every axis is of
//! that kind. Cells whose image `ζ^{-1}∘z` lies within one cell diameter
//! of the pole are re-integrated on subcells; the cell that contains the
//! pole uses the exact dilation identity
//!
//! ```text
//! (1 − 2^{α−Q̃}) ∫_W K = ∫_W K(v) (1[D(2)v ∉ W] − 2^{α−Q̃} 1[D(½)v ∉ W]) dv
//! ```
//!
//! whose integrand vanishes near the pole.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::fundamental::{kernel_argument, KernelArgument};
use crate::grid::{Axis, GridFunction, GridSpec};
use crate::group::{GroupGeometry, MAX_DIM};
use crate::kernel::{GridKernel, HomogeneousKernel, Kernel, KernelSlice};
use crate::par::{map_indices, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvolveOptions {
    /// Subcells per axis for cells near the pole.
    pub near_subdivisions: usize,
    /// Subcells per axis (even) for the cell containing the pole.
    pub pole_subdivisions: usize,
    /// Cells with `‖ζ^{-1}∘z‖ < near_factor · diam` are refined.
    pub near_factor: f64,
    pub argument: KernelArgument,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for ConvolveOptions {
    fn default() -> Self {
        ConvolveOptions {
            near_subdivisions: 4,
            pole_subdivisions: 8,
            near_factor: 1.0,
            argument: KernelArgument::GroupInverse,
            execution: Execution::default(),
        }
    }
}

impl ConvolveOptions {
    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }
}

/// One axis of a node set: coordinates, quadrature weights and cell width
/// (0 for a single-point axis such as an initial time slice).
#[derive(Clone, Debug)]
pub(crate) struct LatticeAxis {
    pub coords: Vec<f64>,
    pub weights: Vec<f64>,
    pub width: f64,
    pub uniform: Option<(f64, f64)>,
}

impl LatticeAxis {
    pub fn from_axis(a: &Axis) -> Self {
        LatticeAxis {
            coords: (0..a.count).map(|i| a.coord(i)).collect(),
            weights: (0..a.count).map(|i| a.weight(i)).collect(),
            width: a.spacing(),
            uniform: Some((a.lo, a.spacing())),
        }
    }

    pub fn point(c: f64) -> Self {
        LatticeAxis { coords: vec![c], weights: vec![1.0], width: 0.0, uniform: None }
    }

    pub fn list(coords: Vec<f64>) -> Self {
        let n = coords.len();
        LatticeAxis { coords, weights: vec![1.0; n], width: 0.0, uniform: None }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Lattice {
    pub axes: Vec<LatticeAxis>,
}

impl Lattice {
    pub fn from_spec(spec: &GridSpec) -> Self {
        Lattice { axes: spec.axes.iter().map(LatticeAxis::from_axis).collect() }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.coords.len()).product()
    }

    fn counts(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.coords.len()).collect()
    }
}

fn unflatten(mut flat: usize, counts: &[usize], out: &mut [usize]) {
    for k in (0..counts.len()).rev() {
        out[k] = flat % counts[k];
        flat /= counts[k];
    }
}

struct SourceLine {
    keyed_idx: Vec<usize>,
    keyed_coords: Vec<f64>,
    // weighted values along the free axes, flat order reversed
    rev: Vec<f64>,
}

struct Plan<'a> {
    kernel: &'a dyn Kernel,
    g: &'a GroupGeometry,
    opts: ConvolveOptions,
    d: usize,
    time_axis: Option<usize>,
    free: Vec<usize>,
    keyed: Vec<usize>,
    nt_free: Vec<usize>,
    ns_free: Vec<usize>,
    table_dims: Vec<usize>,
    free_spacing: Vec<f64>,
    free_offset: Vec<f64>,
    free_lo_t: Vec<f64>,
    free_lo_s: Vec<f64>,
    widths: Vec<f64>,
    near_radius: f64,
    singular: Option<f64>,
    slices: Option<Vec<Box<dyn KernelSlice>>>,
    n_src_time: usize,
}

impl Plan<'_> {
    fn time_sign(&self) -> f64 {
        match self.opts.argument {
            KernelArgument::GroupInverse => 1.0,
            KernelArgument::ReflectedShear => -1.0,
        }
    }

    fn preimage(&self, z: &[f64], w: &[f64], out: &mut [f64]) {
        let d = self.d;
        match self.time_axis {
            None => {
                for k in 0..d {
                    out[k] = z[k] - w[k];
                }
            }
            Some(n) => {
                let s = w[n];
                let mut diff = [0.0; MAX_DIM];
                for k in 0..n {
                    diff[k] = z[k] - w[k];
                }
                // ξ = E(∓s)(x − w_x)
                self.g.apply_propagator(-self.time_sign() * s, &diff[..n], &mut out[..n]);
                out[n] = z[n] - s;
            }
        }
    }

    fn in_cell(&self, zeta: &[f64], center: &[f64]) -> bool {
        (0..self.d).all(|k| (zeta[k] - center[k]).abs() <= 0.5 * self.widths[k])
    }

    /// Average of `K(ζ^{-1}∘z)` over the source cell centred at `center`.
    fn cell_average(&self, z: &[f64], center: &[f64], pole: bool) -> f64 {
        let d = self.d;
        let active: Vec<usize> = (0..d).filter(|&k| self.widths[k] > 0.0).collect();
        let use_pole = pole && active.len() == d && self.singular.is_some();
        let m = if use_pole { self.opts.pole_subdivisions } else { self.opts.near_subdivisions }.max(1);
        let total = m.pow(active.len() as u32);
        let ratio = self.singular.map(|a| 2f64.powf(a - self.g.hom_dim())).unwrap_or(0.0);
        let mut zeta = [0.0; MAX_DIM];
        let mut w = [0.0; MAX_DIM];
        let mut v = [0.0; MAX_DIM];
        let mut pre = [0.0; MAX_DIM];
        let mut acc = 0.0;
        for s in 0..total {
            zeta[..d].copy_from_slice(&center[..d]);
            let mut rem = s;
            for &k in &active {
                let sub = rem % m;
                rem /= m;
                zeta[k] += ((sub as f64 + 0.5) / m as f64 - 0.5) * self.widths[k];
            }
            kernel_argument(self.g, z, &zeta[..d], self.opts.argument, &mut w);
            if use_pole {
                let mut factor = 0.0;
                self.g.dilate_into(2.0, &w[..d], &mut v);
                self.preimage(z, &v[..d], &mut pre);
                if !self.in_cell(&pre[..d], center) {
                    factor += 1.0;
                }
                self.g.dilate_into(0.5, &w[..d], &mut v);
                self.preimage(z, &v[..d], &mut pre);
                if !self.in_cell(&pre[..d], center) {
                    factor -= ratio;
                }
                if factor != 0.0 {
                    acc += factor * self.kernel.eval(&w[..d]);
                }
            } else {
                acc += self.kernel.eval(&w[..d]);
            }
        }
        let avg = acc / total as f64;
        if use_pole {
            avg / (1.0 - ratio)
        } else {
            avg
        }
    }

    /// Fills `table` for one target/source line pair. `x` is the target
    /// point with free coordinates at the target lower corner.
    fn fill_table(&self, x: &[f64], src: &SourceLine, tgt_time_idx: usize, table: &mut [f64]) -> bool {
        let d = self.d;
        let mut xi = [0.0; MAX_DIM];
        for (k, &a) in self.keyed.iter().enumerate() {
            xi[a] = src.keyed_coords[k];
        }
        let s = self.time_axis.map(|n| x[n] - xi[n]).unwrap_or(0.0);
        if let Some(n) = self.time_axis {
            if self.kernel.causal() && s <= 0.0 && s <= -0.5 * self.widths[n] {
                return false;
            }
        }
        let mut w = [0.0; MAX_DIM];
        let mut e = [0.0; MAX_DIM];
        match self.time_axis {
            Some(n) => {
                // free coordinates of ξ are zero here, so e carries only the shear into them
                let mut xs = [0.0; MAX_DIM];
                for &a in &self.keyed {
                    if a < n {
                        xs[a] = xi[a];
                    }
                }
                self.g.apply_propagator(self.time_sign() * s, &xs[..n], &mut e);
                w[n] = s;
            }
            None => {
                for &a in &self.keyed {
                    e[a] = xi[a];
                }
            }
        }
        for &a in &self.keyed {
            if Some(a) != self.time_axis {
                w[a] = x[a] - e[a];
            }
        }
        let mut base = [0.0; MAX_DIM];
        for (fi, &a) in self.free.iter().enumerate() {
            base[fi] = self.free_offset[fi] - e[a];
        }

        let exps = self.g.dilation_exponents();
        // a point axis (zero width) at a nonzero offset keeps the pole out of reach
        let near_possible = self.singular.is_some()
            && self.keyed.iter().all(|&a| w[a].abs().powf(1.0 / exps[a]) < self.near_radius)
            && self.keyed.iter().all(|&a| self.widths[a] > 0.0 || w[a] == 0.0);
        let pole_possible = self.singular.is_some()
            && self.keyed.iter().all(|&a| (x[a] - xi[a]).abs() <= 0.5 * self.widths[a] && self.widths[a] > 0.0);

        let slice = match (&self.slices, self.time_axis) {
            (Some(sl), Some(_)) => {
                let jt = src.keyed_idx[self.keyed.len() - 1];
                Some(&sl[tgt_time_idx * self.n_src_time + jt])
            }
            _ => None,
        };

        let nf = self.free.len();
        let mut m = [0usize; MAX_DIM];
        for (flat, slot) in table.iter_mut().enumerate() {
            unflatten(flat, &self.table_dims, &mut m);
            for fi in 0..nf {
                let dd = m[fi] as f64 - (self.ns_free[fi] - 1) as f64;
                w[self.free[fi]] = base[fi] + dd * self.free_spacing[fi];
            }
            *slot = match slice {
                Some(sl) => sl.eval(&w[..d - 1]),
                None => self.kernel.eval(&w[..d]),
            };
            if near_possible || pole_possible {
                self.refine_entry(x, &xi, &m, &w, near_possible, pole_possible, slot);
            }
        }
        true
    }

    #[allow(clippy::too_many_arguments)]
    fn refine_entry(&self, x: &[f64], xi: &[f64], m: &[usize], w: &[f64], near: bool, pole_keyed: bool, slot: &mut f64) {
        let d = self.d;
        // concrete source cell centre: target free coordinate at its lower corner
        let mut center = [0.0; MAX_DIM];
        center[..d].copy_from_slice(&xi[..d]);
        let mut z = [0.0; MAX_DIM];
        z[..d].copy_from_slice(&x[..d]);
        let mut pole = pole_keyed;
        for (fi, &a) in self.free.iter().enumerate() {
            let dd = m[fi] as f64 - (self.ns_free[fi] - 1) as f64;
            z[a] = self.free_lo_t[fi];
            center[a] = self.free_lo_s[fi] - dd * self.free_spacing[fi];
            let gap = self.free_offset[fi] + dd * self.free_spacing[fi];
            pole &= gap.abs() <= 0.5 * self.free_spacing[fi] * (1.0 + 1e-9);
        }
        if pole || (near && self.g.norm_slice(&w[..d]) < self.near_radius) {
            *slot = self.cell_average(&z[..d], &center[..d], pole);
        }
    }
}

// out[i] += Σ_j table[i + j] rev[j] along every free axis
fn correlate(out: &mut [f64], table: &[f64], rev: &[f64], nt: &[usize], ns: &[usize], dims: &[usize]) {
    fn rec(
        axis: usize,
        out: &mut [f64],
        table: &[f64],
        rev: &[f64],
        nt: &[usize],
        ns: &[usize],
        dims: &[usize],
        (o_off, t_off, s_off): (usize, usize, usize),
    ) {
        let last = nt.len() - 1;
        if axis == last {
            let (n_t, n_s) = (nt[last], ns[last]);
            let trow = &table[t_off..t_off + dims[last]];
            let srow = &rev[s_off..s_off + n_s];
            for i in 0..n_t {
                out[o_off + i] += dot(&trow[i..i + n_s], srow);
            }
            return;
        }
        let o_stride: usize = nt[axis + 1..].iter().product();
        let t_stride: usize = dims[axis + 1..].iter().product();
        let s_stride: usize = ns[axis + 1..].iter().product();
        for i in 0..nt[axis] {
            for j in 0..ns[axis] {
                rec(
                    axis + 1,
                    out,
                    table,
                    rev,
                    nt,
                    ns,
                    dims,
                    (o_off + i * o_stride, t_off + (i + j) * t_stride, s_off + j * s_stride),
                );
            }
        }
    }
    if nt.is_empty() {
        out[0] += table[0] * rev[0];
    } else {
        rec(0, out, table, rev, nt, ns, dims, (0, 0, 0));
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn aligned(s: &LatticeAxis, t: &LatticeAxis) -> Option<(f64, f64)> {
    let ((ls, hs), (lt, ht)) = (s.uniform?, t.uniform?);
    if (hs - ht).abs() > 1e-12 * hs {
        return None;
    }
    let o = (lt - ls) / hs;
    ((o - o.round()).abs() < 1e-9).then_some((o.round() * hs, hs))
}

/// Core routine on general node sets.
pub(crate) fn convolve_lattice(
    kernel: &dyn Kernel,
    g: &GroupGeometry,
    source: &Lattice,
    values: &[f64],
    target: &Lattice,
    opts: ConvolveOptions,
) -> Result<Vec<f64>> {
    let d = g.point_dim();
    check_dim(d, source.axes.len())?;
    check_dim(d, target.axes.len())?;
    if values.len() != source.len() {
        return Err(invalid("source values do not match the source lattice"));
    }
    if let Some(a) = kernel.degree() {
        if a >= g.hom_dim() {
            return Err(invalid(format!("kernel degree {a} is not below the homogeneous dimension {}", g.hom_dim())));
        }
    }
    if !opts.pole_subdivisions.is_multiple_of(2) {
        return Err(invalid("pole_subdivisions must be even"));
    }
    let time_axis = g.is_kolmogorov().then_some(g.spatial_dim());

    let candidates: Vec<usize> = g.last_block().collect();
    let al: Vec<Option<(f64, f64)>> = candidates.iter().map(|&a| aligned(&source.axes[a], &target.axes[a])).collect();
    let free: Vec<usize> = if al.iter().all(Option::is_some) { candidates.clone() } else { vec![] };
    let keyed: Vec<usize> = (0..d).filter(|a| !free.contains(a)).collect();

    let nt_free: Vec<usize> = free.iter().map(|&a| target.axes[a].coords.len()).collect();
    let ns_free: Vec<usize> = free.iter().map(|&a| source.axes[a].coords.len()).collect();
    let table_dims: Vec<usize> = nt_free.iter().zip(&ns_free).map(|(t, s)| t + s - 1).collect();
    let table_len: usize = table_dims.iter().product();
    let (free_offset, free_spacing): (Vec<f64>, Vec<f64>) = if free.is_empty() {
        (vec![], vec![])
    } else {
        al.iter().map(|x| x.expect("aligned")).unzip()
    };
    let free_lo_t = free.iter().map(|&a| target.axes[a].coords[0]).collect();
    let free_lo_s = free.iter().map(|&a| source.axes[a].coords[0]).collect();

    let widths: Vec<f64> = source.axes.iter().map(|a| a.width).collect();
    let near_radius = opts.near_factor * g.norm_slice(&widths);
    let singular = kernel.degree();

    let n_src_time = time_axis.map(|n| source.axes[n].coords.len()).unwrap_or(1);
    let slices = match time_axis {
        Some(n) if kernel.slice(1.0).is_some() => {
            let tt = &target.axes[n].coords;
            let ts = &source.axes[n].coords;
            let mut v = Vec::with_capacity(tt.len() * ts.len());
            for &t in tt {
                for &tau in ts {
                    v.push(kernel.slice(t - tau).expect("kernel provides slices"));
                }
            }
            Some(v)
        }
        _ => None,
    };

    let plan = Plan {
        kernel,
        g,
        opts,
        d,
        time_axis,
        free: free.clone(),
        keyed: keyed.clone(),
        nt_free: nt_free.clone(),
        ns_free: ns_free.clone(),
        table_dims: table_dims.clone(),
        free_spacing,
        free_offset,
        free_lo_t,
        free_lo_s,
        widths,
        near_radius,
        singular,
        slices,
        n_src_time,
    };

    // gather source lines
    let s_counts = source.counts();
    let t_counts = target.counts();
    let keyed_s: Vec<usize> = keyed.iter().map(|&a| s_counts[a]).collect();
    let keyed_t: Vec<usize> = keyed.iter().map(|&a| t_counts[a]).collect();
    let n_lines_s: usize = keyed_s.iter().product();
    let n_lines_t: usize = keyed_t.iter().product();
    let nf_s: usize = ns_free.iter().product();
    let nf_t: usize = nt_free.iter().product();

    let mut lines = Vec::new();
    let mut kidx = [0usize; MAX_DIM];
    let mut fidx = [0usize; MAX_DIM];
    let mut full = [0usize; MAX_DIM];
    for l in 0..n_lines_s {
        unflatten(l, &keyed_s, &mut kidx);
        let mut rev = vec![0.0; nf_s];
        let mut any = false;
        for f in 0..nf_s {
            unflatten(f, &ns_free, &mut fidx);
            for (k, &a) in keyed.iter().enumerate() {
                full[a] = kidx[k];
            }
            for (k, &a) in free.iter().enumerate() {
                full[a] = fidx[k];
            }
            let flat = (0..d).fold(0, |acc, a| acc * s_counts[a] + full[a]);
            let v = values[flat];
            if v != 0.0 {
                let wgt: f64 = (0..d).map(|a| source.axes[a].weights[full[a]]).product();
                rev[nf_s - 1 - f] = v * wgt;
                any = true;
            }
        }
        if any {
            lines.push(SourceLine {
                keyed_idx: kidx[..keyed.len()].to_vec(),
                keyed_coords: keyed.iter().enumerate().map(|(k, &a)| source.axes[a].coords[kidx[k]]).collect(),
                rev,
            });
        }
    }

    let target_point = |l: usize| {
        let mut ki = [0usize; MAX_DIM];
        unflatten(l, &keyed_t, &mut ki);
        let mut x = [0.0; MAX_DIM];
        for (k, &a) in keyed.iter().enumerate() {
            x[a] = target.axes[a].coords[ki[k]];
        }
        for &a in &free {
            x[a] = target.axes[a].coords[0];
        }
        let tt = time_axis.map(|n| ki[keyed.iter().position(|&a| a == n).expect("time is keyed")]).unwrap_or(0);
        (x, tt)
    };

    let outputs: Vec<Vec<f64>> = if !keyed.is_empty() {
        map_indices(opts.execution, n_lines_t, |l| {
            let (x, tt) = target_point(l);
            let mut out = vec![0.0; nf_t];
            let mut table = vec![0.0; table_len];
            for src in &lines {
                if plan.fill_table(&x[..d], src, tt, &mut table) {
                    correlate(&mut out, &table, &src.rev, &nt_free, &ns_free, &table_dims);
                }
            }
            out
        })
    } else {
        // one line pair: parallelise inside the table and over target rows
        let (x, _) = target_point(0);
        let Some(src) = lines.first() else {
            return Ok(vec![0.0; target.len()]);
        };
        let row: usize = table_dims[1..].iter().product();
        let chunks = map_indices(opts.execution, table_dims[0], |r| {
            let mut part = vec![0.0; row];
            let sub = Plan { table_dims: table_dims[1..].to_vec(), ..plan.shallow() };
            sub.fill_row(&x[..d], src, r, &mut part);
            part
        });
        let table: Vec<f64> = chunks.concat();
        let nt0 = nt_free[0];
        let rows = map_indices(opts.execution, nt0, |i| {
            let mut out = vec![0.0; nf_t / nt0];
            let t_stride = row;
            let s_stride: usize = ns_free[1..].iter().product();
            for j in 0..ns_free[0] {
                let tslice = &table[(i + j) * t_stride..(i + j + 1) * t_stride];
                let sslice = &src.rev[j * s_stride..(j + 1) * s_stride];
                if nt_free.len() == 1 {
                    out[0] += tslice[0] * sslice[0];
                } else {
                    correlate(&mut out, tslice, sslice, &nt_free[1..], &ns_free[1..], &table_dims[1..]);
                }
            }
            out
        });
        vec![rows.concat()]
    };

    // scatter into target row-major order
    let mut result = vec![0.0; target.len()];
    let mut ki = [0usize; MAX_DIM];
    for (l, out) in outputs.iter().enumerate() {
        unflatten(l, &keyed_t, &mut ki);
        for (f, &v) in out.iter().enumerate() {
            unflatten(f, &nt_free, &mut fidx);
            for (k, &a) in keyed.iter().enumerate() {
                full[a] = ki[k];
            }
            for (k, &a) in free.iter().enumerate() {
                full[a] = fidx[k];
            }
            let flat = (0..d).fold(0, |acc, a| acc * t_counts[a] + full[a]);
            result[flat] = v;
        }
    }
    Ok(result)
}

impl Plan<'_> {
    fn shallow(&self) -> Self {
        Plan {
            kernel: self.kernel,
            g: self.g,
            opts: self.opts,
            d: self.d,
            time_axis: self.time_axis,
            free: self.free.clone(),
            keyed: self.keyed.clone(),
            nt_free: self.nt_free.clone(),
            ns_free: self.ns_free.clone(),
            table_dims: self.table_dims.clone(),
            free_spacing: self.free_spacing.clone(),
            free_offset: self.free_offset.clone(),
            free_lo_t: self.free_lo_t.clone(),
            free_lo_s: self.free_lo_s.clone(),
            widths: self.widths.clone(),
            near_radius: self.near_radius,
            singular: self.singular,
            slices: None,
            n_src_time: self.n_src_time,
        }
    }

    /// Euclidean path: table entries whose first free index is `r`.
    /// `self.table_dims` holds the remaining dimensions.
    fn fill_row(&self, x: &[f64], _src: &SourceLine, r: usize, out: &mut [f64]) {
        let d = self.d;
        let nf = self.free.len();
        let mut w = [0.0; MAX_DIM];
        let mut m = [0usize; MAX_DIM];
        let mut rest = [0usize; MAX_DIM];
        for (flat, slot) in out.iter_mut().enumerate() {
            m[0] = r;
            unflatten(flat, &self.table_dims, &mut rest);
            m[1..nf].copy_from_slice(&rest[..nf - 1]);
            for fi in 0..nf {
                let dd = m[fi] as f64 - (self.ns_free[fi] - 1) as f64;
                w[self.free[fi]] = self.free_offset[fi] + dd * self.free_spacing[fi];
            }
            *slot = self.kernel.eval(&w[..d]);
            if self.singular.is_some() {
                let xi = [0.0; MAX_DIM];
                self.refine_entry(x, &xi, &m, &w, true, true, slot);
            }
        }
    }
}

/// `K ∗ f` on the grid of `f`.
pub fn convolve(k: &HomogeneousKernel, f: &GridFunction) -> Result<GridFunction> {
    convolve_with(k, f, None, ConvolveOptions::default())
}

/// `K ∗ f` evaluated on `target` (defaults to the grid of `f`).
pub fn convolve_with(
    k: &HomogeneousKernel,
    f: &GridFunction,
    target: Option<&GridSpec>,
    opts: ConvolveOptions,
) -> Result<GridFunction> {
    check_dim(k.geometry().point_dim(), f.geometry().point_dim())?;
    let tspec = target.unwrap_or(f.spec()).clone();
    let vals = convolve_lattice(
        k.kernel().as_ref(),
        f.geometry(),
        &Lattice::from_spec(f.spec()),
        f.values(),
        &Lattice::from_spec(&tspec),
        opts,
    )?;
    GridFunction::new(tspec, vals, f.geometry().clone())
}

/// `K ∗ f` at one arbitrary point.
pub fn convolve_at(k: &HomogeneousKernel, f: &GridFunction, z: &[f64], opts: ConvolveOptions) -> Result<f64> {
    check_dim(f.geometry().point_dim(), z.len())?;
    let target = Lattice { axes: z.iter().map(|&c| LatticeAxis::list(vec![c])).collect() };
    let v = convolve_lattice(k.kernel().as_ref(), f.geometry(), &Lattice::from_spec(f.spec()), f.values(), &target, opts)?;
    Ok(v[0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YoungReport {
    pub ratio: f64,
    pub convolution_norm: f64,
    pub f_norm: f64,
    pub g_norm: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

/// `‖f ∗ g‖_q / (‖f‖_p ‖g‖_r)` with `(f ∗ g)(z) = ∫ f(ζ) g(ζ^{-1}∘z) dζ`,
/// evaluated on a grid covering the support of the product.
pub fn young_check(f: &GridFunction, g: &GridFunction, p: f64, q: f64, r: f64) -> Result<YoungReport> {
    young_check_with(f, g, p, q, r, Execution::default())
}

pub fn young_check_with(f: &GridFunction, g: &GridFunction, p: f64, q: f64, r: f64, exec: Execution) -> Result<YoungReport> {
    if ((1.0 + 1.0 / q) - (1.0 / p + 1.0 / r)).abs() > 1e-12 {
        return Err(crate::error::Error::Inadmissible(format!("1 + 1/q ≠ 1/p + 1/r for (p, q, r) = ({p}, {q}, {r})")));
    }
    if f.spec() != g.spec() {
        return Err(invalid("young_check expects f and g on the same grid"));
    }
    let geo = f.geometry().clone();
    let target = product_support_grid(&geo, f.spec(), g.spec())?;
    let kernel = HomogeneousKernel::new(std::sync::Arc::new(GridKernel::new(g.clone())), geo.clone());
    let conv = convolve_with(&kernel, f, Some(&target), ConvolveOptions::default().with_execution(exec))?;
    let (cn, fnorm, gnorm) = (conv.lp_norm(q)?, f.lp_norm(p)?, g.lp_norm(r)?);
    Ok(YoungReport { ratio: cn / (fnorm * gnorm), convolution_norm: cn, f_norm: fnorm, g_norm: gnorm, p, q, r })
}

/// Grid aligned with `fs` whose box contains `{ζ ∘ w : ζ ∈ box(fs), w ∈ box(gs)}`.
fn product_support_grid(g: &GroupGeometry, fs: &GridSpec, gs: &GridSpec) -> Result<GridSpec> {
    let d = g.point_dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let mut out = [0.0; MAX_DIM];
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    // corners of both boxes, refined along each axis so polynomial shears are covered
    let steps = 8usize;
    let per = steps + 1;
    let n = per.pow(d as u32);
    for i in 0..n {
        let mut rem = i;
        for k in 0..d {
            let s = (rem % per) as f64 / steps as f64;
            rem /= per;
            a[k] = fs.axes[k].lo + s * (fs.axes[k].hi - fs.axes[k].lo);
        }
        for j in 0..(1usize << d) {
            for k in 0..d {
                b[k] = if (j >> k) & 1 == 1 { gs.axes[k].hi } else { gs.axes[k].lo };
            }
            g.compose_into(&a, &b, &mut out);
            for k in 0..d {
                lo[k] = lo[k].min(out[k]);
                hi[k] = hi[k].max(out[k]);
            }
        }
    }
    let axes = (0..d)
        .map(|k| {
            let ax = &fs.axes[k];
            let h = ax.spacing();
            let i_lo = ((lo[k] - ax.lo) / h).floor() - 1.0;
            let i_hi = ((hi[k] - ax.lo) / h).ceil() + 1.0;
            let count = (i_hi - i_lo) as usize + 1;
            Axis::new(ax.lo + i_lo * h, ax.lo + i_lo * h + (count - 1) as f64 * h, count)
        })
        .collect::<Result<Vec<_>>>()?;
    GridSpec::new(axes)
}
