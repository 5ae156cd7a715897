#![allow(dead_code)]

use hbc_core::circuit::{AcSolution, Netlist, NetlistBuilder, NodeId};
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};

static MID_COUNTER: AtomicUsize = AtomicUsize::new(0);

/// Two-terminal branch made of one or two elements.
#[derive(Debug, Clone, Copy)]
pub enum Branch {
    R(f64),
    C(f64),
    Parallel(f64, f64),
    Series(f64, f64),
}

impl Branch {
    pub fn impedance(self, f: f64) -> Complex64 {
        let w = 2.0 * PI * f;
        let zc = |c: f64| Complex64::new(0.0, -1.0 / (w * c));
        match self {
            Branch::R(r) => Complex64::new(r, 0.0),
            Branch::C(c) => zc(c),
            Branch::Parallel(r, c) => {
                let zr = Complex64::new(r, 0.0);
                zr * zc(c) / (zr + zc(c))
            }
            Branch::Series(r, c) => Complex64::new(r, 0.0) + zc(c),
        }
    }

    pub fn add(self, b: &mut NetlistBuilder, a: NodeId, z: NodeId) {
        match self {
            Branch::R(r) => {
                b.resistor(a, z, r);
            }
            Branch::C(c) => {
                b.capacitor(a, z, c);
            }
            Branch::Parallel(r, c) => {
                b.resistor(a, z, r).capacitor(a, z, c);
            }
            Branch::Series(r, c) => {
                let id = MID_COUNTER.fetch_add(1, Ordering::Relaxed);
                let mid = b.node(&format!("mid{id}"));
                b.resistor(a, mid, r).capacitor(mid, z, c);
            }
        }
    }
}

pub fn random_branch<R: Rng>(rng: &mut R) -> Branch {
    let r = 10f64.powf(rng.random_range(0.0..7.0));
    let c = 10f64.powf(rng.random_range(-15.0..-9.0));
    match rng.random_range(0..4) {
        0 => Branch::R(r),
        1 => Branch::C(c),
        2 => Branch::Parallel(r, c),
        _ => Branch::Series(r, c),
    }
}

/// Series/shunt ladder driven by a 1 V source at the input, output at the
/// last shunt node.
pub fn ladder(sections: &[(Branch, Branch)]) -> Netlist {
    let mut b = NetlistBuilder::new();
    let g = b.ground();
    let input = b.node("in");
    b.voltage_source(input, g, 1.0);
    let mut prev = input;
    for (i, (series, shunt)) in sections.iter().enumerate() {
        let n = b.node(&format!("n{i}"));
        series.add(&mut b, prev, n);
        shunt.add(&mut b, n, g);
        prev = n;
    }
    b.output_node(prev);
    b.build().expect("ladder is well formed")
}

/// Same ladder evaluated by impedance recursion from the far end. Every sum
/// is of passive RC impedances, so nothing cancels.
pub fn ladder_transfer(sections: &[(Branch, Branch)], f: f64) -> Complex64 {
    let parallel = |x: Complex64, y: Complex64| x * y / (x + y);
    let mut z_next: Option<Complex64> = None;
    let mut ratios = Vec::with_capacity(sections.len());
    for (series, shunt) in sections.iter().rev() {
        let zp = match z_next {
            Some(z) => parallel(shunt.impedance(f), z),
            None => shunt.impedance(f),
        };
        let zs = series.impedance(f);
        ratios.push(zp / (zs + zp));
        z_next = Some(zs + zp);
    }
    ratios.iter().product()
}

pub fn random_ladder<R: Rng>(rng: &mut R) -> Vec<(Branch, Branch)> {
    let n = rng.random_range(1..=6);
    (0..n).map(|_| (random_branch(rng), random_branch(rng))).collect()
}

/// Arbitrary connected R/C graph on `n` non-ground nodes. Returns the element
/// list as `(a, b, branch)` with node 0 as ground.
pub fn random_graph<R: Rng>(rng: &mut R) -> (usize, Vec<(usize, usize, Branch)>) {
    let n = rng.random_range(2..=7);
    let mut edges = Vec::new();
    for i in 1..=n {
        let j = rng.random_range(0..i);
        edges.push((i, j, simple_branch(rng)));
    }
    for _ in 0..rng.random_range(0..=n) {
        let a = rng.random_range(0..=n);
        let mut b = rng.random_range(0..=n);
        while b == a {
            b = rng.random_range(0..=n);
        }
        edges.push((a, b, simple_branch(rng)));
    }
    (n, edges)
}

fn simple_branch<R: Rng>(rng: &mut R) -> Branch {
    if rng.random_bool(0.5) {
        Branch::R(10f64.powf(rng.random_range(0.0..7.0)))
    } else {
        Branch::C(10f64.powf(rng.random_range(-15.0..-9.0)))
    }
}

/// Builds a graph netlist with a 1 V source on `(drive, ground)` and the
/// output at `out`.
pub fn graph_netlist(n: usize, edges: &[(usize, usize, Branch)], drive: usize, out: usize) -> Netlist {
    let mut b = NetlistBuilder::new();
    let mut ids = vec![b.ground()];
    for i in 1..=n {
        ids.push(b.node(&format!("n{i}")));
    }
    for &(a, z, br) in edges {
        br.add(&mut b, ids[a], ids[z]);
    }
    b.voltage_source(ids[drive], ids[0], 1.0);
    b.output_node(ids[out]);
    b.build().expect("graph is connected")
}

pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo.log10()..hi.log10()))
}

/// Largest nodal current imbalance divided by the sum of `|y| (|Va| + |Vb|)`
/// over the elements at that node: a componentwise backward error that stays
/// meaningful when every branch current is tiny.
pub fn componentwise_kcl(net: &Netlist, s: &AcSolution) -> f64 {
    let omega = 2.0 * PI * s.frequency;
    let n = net.node_count();
    let mut imbalance = vec![Complex64::new(0.0, 0.0); n];
    let mut scale = vec![0.0; n];
    for e in net.elements() {
        let (va, vb) = (s.voltage(e.a), s.voltage(e.b));
        let (current, size) = match e.admittance(omega) {
            Some(y) => (y * (va - vb), y.norm() * (va.norm() + vb.norm())),
            None => (s.source_current, s.source_current.norm()),
        };
        imbalance[e.a.index()] += current;
        imbalance[e.b.index()] -= current;
        scale[e.a.index()] += size;
        scale[e.b.index()] += size;
    }
    (1..n)
        .filter(|&i| scale[i] > 0.0)
        .map(|i| imbalance[i].norm() / scale[i])
        .fold(0.0, f64::max)
}

/// Sum of `|y| (|Va| + |Vb|)^2`, the natural size of the real power terms.
pub fn power_scale(net: &Netlist, s: &AcSolution) -> f64 {
    let omega = 2.0 * PI * s.frequency;
    net.elements()
        .iter()
        .filter_map(|e| e.admittance(omega).map(|y| y.norm() * (s.voltage(e.a).norm() + s.voltage(e.b).norm()).powi(2)))
        .sum()
}
