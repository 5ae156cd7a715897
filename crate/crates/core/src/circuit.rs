//! Grounded linear R/C circuits driven by one independent voltage source,
//! solved in the frequency domain with complex nodal analysis.
//!
//! The system is the usual augmented nodal form: one KCL row per non-ground
//! node plus one branch-current unknown for the source. Admittances in the
//! channel models span many decades (MΩ loads next to 50 Ω sources, fF next
//! to nF), so the matrix is diagonally equilibrated before a dense LU with
//! complete pivoting, and the answer is polished with iterative refinement
//! against the unscaled system.

use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::HashMap;
use std::f64::consts::PI;
use thiserror::Error;

/// Label reserved for the reference node.
pub const GROUND_LABEL: &str = "gnd";

/// Relative KCL residual every solve is expected to meet.
pub const KCL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("element {index} connects node `{node}` to itself")]
    SelfLoop { index: usize, node: String },
    #[error("element {index} ({kind:?}) has invalid value {value}")]
    InvalidValue {
        index: usize,
        kind: ElementKind,
        value: f64,
    },
    #[error("netlist needs exactly one voltage source, found {0}")]
    SourceCount(usize),
    #[error("node `{0}` has no element path to ground")]
    FloatingNode(String),
    #[error("netlist has no output node")]
    MissingOutput,
    #[error("node id {0} does not belong to this netlist")]
    UnknownNode(usize),
    #[error("frequency must be finite and > 0, got {0}")]
    InvalidFrequency(f64),
    #[error("frequencies must be strictly increasing (at index {0})")]
    UnsortedFrequencies(usize),
    #[error("empty frequency list")]
    NoFrequencies,
    #[error("singular nodal system: no independent equation for {unknown}")]
    Singular { unknown: String },
    #[error("source amplitude is zero, transfer is undefined")]
    ZeroSource,
    #[error("at {frequency} Hz: {source}")]
    AtFrequency {
        frequency: f64,
        #[source]
        source: Box<CircuitError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub const GROUND: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0
    }

    pub fn is_ground(self) -> bool {
        self.0 == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    Resistor,
    Capacitor,
    VoltageSource,
}

/// A two-terminal element. For a voltage source `a` is the positive terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub kind: ElementKind,
    pub value: f64,
    pub a: NodeId,
    pub b: NodeId,
    pub label: Option<String>,
}

impl Element {
    /// Branch admittance at angular frequency `omega`; `None` for the source.
    pub fn admittance(&self, omega: f64) -> Option<Complex64> {
        match self.kind {
            ElementKind::Resistor => Some(Complex64::new(1.0 / self.value, 0.0)),
            ElementKind::Capacitor => Some(Complex64::new(0.0, omega * self.value)),
            ElementKind::VoltageSource => None,
        }
    }
}

/// Where the transfer function is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Output {
    /// Voltage of one node against ground.
    Node(NodeId),
    /// Difference `V(pos) - V(neg)`.
    Pair(NodeId, NodeId),
}

/// An immutable, validated circuit. Build one with [`NetlistBuilder`].
#[derive(Debug, Clone)]
pub struct Netlist {
    labels: Vec<String>,
    elements: Vec<Element>,
    output: Output,
    source: usize,
}

#[derive(Debug, Clone)]
pub struct NetlistBuilder {
    labels: Vec<String>,
    index: HashMap<String, NodeId>,
    elements: Vec<Element>,
    output: Option<Output>,
}

impl Default for NetlistBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl NetlistBuilder {
    pub fn new() -> Self {
        let mut index = HashMap::new();
        index.insert(GROUND_LABEL.to_string(), NodeId::GROUND);
        Self {
            labels: vec![GROUND_LABEL.to_string()],
            index,
            elements: Vec::new(),
            output: None,
        }
    }

    /// Returns the id for `label`, creating the node on first use.
    /// `"gnd"` always maps to [`NodeId::GROUND`].
    pub fn node(&mut self, label: &str) -> NodeId {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = NodeId(self.labels.len());
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        id
    }

    pub fn ground(&self) -> NodeId {
        NodeId::GROUND
    }

    fn push(&mut self, kind: ElementKind, a: NodeId, b: NodeId, value: f64, label: Option<&str>) {
        self.elements.push(Element {
            kind,
            value,
            a,
            b,
            label: label.map(str::to_string),
        });
    }

    pub fn resistor(&mut self, a: NodeId, b: NodeId, ohms: f64) -> &mut Self {
        self.push(ElementKind::Resistor, a, b, ohms, None);
        self
    }

    pub fn capacitor(&mut self, a: NodeId, b: NodeId, farads: f64) -> &mut Self {
        self.push(ElementKind::Capacitor, a, b, farads, None);
        self
    }

    pub fn labeled_resistor(&mut self, label: &str, a: NodeId, b: NodeId, ohms: f64) -> &mut Self {
        self.push(ElementKind::Resistor, a, b, ohms, Some(label));
        self
    }

    pub fn labeled_capacitor(
        &mut self,
        label: &str,
        a: NodeId,
        b: NodeId,
        farads: f64,
    ) -> &mut Self {
        self.push(ElementKind::Capacitor, a, b, farads, Some(label));
        self
    }

    /// Voltage source with `plus` at `volts` above `minus`.
    pub fn voltage_source(&mut self, plus: NodeId, minus: NodeId, volts: f64) -> &mut Self {
        self.push(ElementKind::VoltageSource, plus, minus, volts, Some("V_src"));
        self
    }

    pub fn output_node(&mut self, node: NodeId) -> &mut Self {
        self.output = Some(Output::Node(node));
        self
    }

    pub fn output_pair(&mut self, pos: NodeId, neg: NodeId) -> &mut Self {
        self.output = Some(Output::Pair(pos, neg));
        self
    }

    pub fn build(&self) -> Result<Netlist, CircuitError> {
        let n = self.labels.len();
        let check = |id: NodeId| {
            if id.0 < n {
                Ok(())
            } else {
                Err(CircuitError::UnknownNode(id.0))
            }
        };

        let mut sources = Vec::new();
        for (index, e) in self.elements.iter().enumerate() {
            check(e.a)?;
            check(e.b)?;
            if e.a == e.b {
                return Err(CircuitError::SelfLoop {
                    index,
                    node: self.labels[e.a.0].clone(),
                });
            }
            let valid = match e.kind {
                ElementKind::Resistor | ElementKind::Capacitor => e.value.is_finite() && e.value > 0.0,
                ElementKind::VoltageSource => e.value.is_finite() && e.value >= 0.0,
            };
            if !valid {
                return Err(CircuitError::InvalidValue {
                    index,
                    kind: e.kind,
                    value: e.value,
                });
            }
            if e.kind == ElementKind::VoltageSource {
                sources.push(index);
            }
        }
        if sources.len() != 1 {
            return Err(CircuitError::SourceCount(sources.len()));
        }

        let output = self.output.ok_or(CircuitError::MissingOutput)?;
        match output {
            Output::Node(p) => check(p)?,
            Output::Pair(p, q) => {
                check(p)?;
                check(q)?;
            }
        }

        // Every node must reach ground through some element, the source included.
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for e in &self.elements {
            let (ra, rb) = (find(&mut parent, e.a.0), find(&mut parent, e.b.0));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        let root = find(&mut parent, 0);
        for k in 1..n {
            if find(&mut parent, k) != root {
                return Err(CircuitError::FloatingNode(self.labels[k].clone()));
            }
        }

        Ok(Netlist {
            labels: self.labels.clone(),
            elements: self.elements.clone(),
            output,
            source: sources[0],
        })
    }
}

impl Netlist {
    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.labels[id.0]
    }

    pub fn find_node(&self, label: &str) -> Option<NodeId> {
        self.labels.iter().position(|l| l == label).map(NodeId)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &str)> {
        self.labels.iter().enumerate().map(|(i, l)| (NodeId(i), l.as_str()))
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn output(&self) -> Output {
        self.output
    }

    pub fn source(&self) -> &Element {
        &self.elements[self.source]
    }

    /// Copy of this netlist with the source amplitude replaced.
    pub fn with_source_amplitude(&self, volts: f64) -> Result<Netlist, CircuitError> {
        if !(volts.is_finite() && volts >= 0.0) {
            return Err(CircuitError::InvalidValue {
                index: self.source,
                kind: ElementKind::VoltageSource,
                value: volts,
            });
        }
        let mut out = self.clone();
        out.elements[self.source].value = volts;
        Ok(out)
    }

    /// Finds the first element carrying `label`.
    pub fn element_by_label(&self, label: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.label.as_deref() == Some(label))
    }

    fn unknown_name(&self, col: usize) -> String {
        let nodes = self.labels.len() - 1;
        if col < nodes {
            format!("node `{}`", self.labels[col + 1])
        } else {
            "the source branch current".to_string()
        }
    }

    /// Node voltages at frequency `f`.
    pub fn solve_ac(&self, f: f64) -> Result<AcSolution, CircuitError> {
        if !(f.is_finite() && f > 0.0) {
            return Err(CircuitError::InvalidFrequency(f));
        }
        let omega = 2.0 * PI * f;
        let nodes = self.labels.len() - 1;
        let m = nodes + 1;
        let row = |id: NodeId| if id.is_ground() { None } else { Some(id.0 - 1) };

        let mut a = vec![Complex64::new(0.0, 0.0); m * m];
        let mut rhs = vec![Complex64::new(0.0, 0.0); m];
        for e in &self.elements {
            match e.admittance(omega) {
                Some(y) => {
                    let (p, q) = (row(e.a), row(e.b));
                    if let Some(i) = p {
                        a[i * m + i] += y;
                    }
                    if let Some(j) = q {
                        a[j * m + j] += y;
                    }
                    if let (Some(i), Some(j)) = (p, q) {
                        a[i * m + j] -= y;
                        a[j * m + i] -= y;
                    }
                }
                None => {
                    let k = nodes;
                    if let Some(i) = row(e.a) {
                        a[i * m + k] += 1.0;
                        a[k * m + i] += 1.0;
                    }
                    if let Some(j) = row(e.b) {
                        a[j * m + k] -= 1.0;
                        a[k * m + j] -= 1.0;
                    }
                    rhs[k] = Complex64::new(1.0, 0.0);
                }
            }
        }

        // Symmetric diagonal equilibration: A' = S A S with s_i = 1/sqrt(max_j |a_ij|).
        let scale: Vec<f64> = (0..m)
            .map(|i| {
                let peak = (0..m).map(|j| a[i * m + j].norm()).fold(0.0, f64::max);
                if peak > 0.0 {
                    1.0 / peak.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let scaled: Vec<Complex64> = (0..m * m)
            .map(|idx| a[idx] * scale[idx / m] * scale[idx % m])
            .collect();
        let lu = DenseLu::factor(scaled, m).map_err(|col| CircuitError::Singular {
            unknown: self.unknown_name(col),
        })?;

        let solve_scaled = |b: &[Complex64]| -> Vec<Complex64> {
            let sb: Vec<Complex64> = b.iter().zip(&scale).map(|(v, s)| v * s).collect();
            lu.solve(&sb).into_iter().zip(&scale).map(|(v, s)| v * s).collect()
        };

        // Solve for a unit source and scale afterwards, so node voltages are
        // exactly proportional to the source amplitude.
        let mut x = solve_scaled(&rhs);
        let norm = |v: &[Complex64]| v.iter().map(|c| c.norm()).fold(0.0, f64::max);
        // The residual is summed branch by branch from voltage differences;
        // residuals from the assembled matrix would inherit the rounding of
        // each diagonal sum, which swamps femtofarad paths next to ohm-level
        // conductances.
        for _ in 0..8 {
            let r = self.branch_residual(omega, &x);
            if norm(&r) == 0.0 {
                break;
            }
            let dx = solve_scaled(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            if norm(&dx) <= f64::EPSILON * norm(&x) {
                break;
            }
        }
        let amplitude = self.source().value;
        for xi in &mut x {
            *xi *= amplitude;
        }

        let mut voltages = vec![Complex64::new(0.0, 0.0); nodes + 1];
        voltages[1..].copy_from_slice(&x[..nodes]);
        let mut solution = AcSolution {
            frequency: f,
            voltages,
            source_current: x[nodes],
            kcl_residual: 0.0,
        };
        solution.kcl_residual = self.kcl_residual(&solution);
        Ok(solution)
    }

    /// `b - A x` for the unit-source system, accumulated per branch in
    /// compensated arithmetic.
    fn branch_residual(&self, omega: f64, x: &[Complex64]) -> Vec<Complex64> {
        let nodes = self.labels.len() - 1;
        let volt = |id: NodeId| if id.is_ground() { Complex64::new(0.0, 0.0) } else { x[id.0 - 1] };
        let mut re: Vec<Dot2> = (0..=nodes).map(|_| Dot2::new(0.0)).collect();
        let mut im: Vec<Dot2> = (0..=nodes).map(|_| Dot2::new(0.0)).collect();
        for e in &self.elements {
            let (ra, rb) = (e.a.0.checked_sub(1), e.b.0.checked_sub(1));
            match e.admittance(omega) {
                Some(y) => {
                    let d = volt(e.a) - volt(e.b);
                    for (row, sign) in [(ra, -1.0), (rb, 1.0)] {
                        if let Some(i) = row {
                            re[i].add_product(sign * y.re, d.re);
                            re[i].add_product(-sign * y.im, d.im);
                            im[i].add_product(sign * y.re, d.im);
                            im[i].add_product(sign * y.im, d.re);
                        }
                    }
                }
                None => {
                    let current = x[nodes];
                    for (row, sign) in [(ra, -1.0), (rb, 1.0)] {
                        if let Some(i) = row {
                            re[i].add_product(sign, current.re);
                            im[i].add_product(sign, current.im);
                        }
                    }
                    let d = volt(e.a) - volt(e.b);
                    re[nodes].add_product(1.0, 1.0);
                    re[nodes].add_product(-1.0, d.re);
                    im[nodes].add_product(-1.0, d.im);
                }
            }
        }
        re.iter().zip(&im).map(|(r, i)| Complex64::new(r.value(), i.value())).collect()
    }

    /// Largest net current at any non-ground node, relative to the largest
    /// branch current in the circuit.
    pub fn kcl_residual(&self, solution: &AcSolution) -> f64 {
        let omega = 2.0 * PI * solution.frequency;
        let mut net = vec![Complex64::new(0.0, 0.0); self.labels.len()];
        let mut largest = 0.0f64;
        for e in &self.elements {
            let current = match e.admittance(omega) {
                Some(y) => y * (solution.voltage(e.a) - solution.voltage(e.b)),
                None => solution.source_current,
            };
            largest = largest.max(current.norm());
            net[e.a.0] += current;
            net[e.b.0] -= current;
        }
        if largest == 0.0 {
            return 0.0;
        }
        net.iter().skip(1).map(|c| c.norm()).fold(0.0, f64::max) / largest
    }

    /// `V(output) / V(source)` at frequency `f`.
    pub fn transfer(&self, f: f64) -> Result<Complex64, CircuitError> {
        let amplitude = self.source().value;
        if amplitude == 0.0 {
            return Err(CircuitError::ZeroSource);
        }
        let s = self.solve_ac(f)?;
        Ok(s.output_voltage(self.output) / amplitude)
    }

    /// Transfer at each frequency; solves run in parallel, results stay in
    /// frequency order.
    pub fn sweep(&self, frequencies: &[f64]) -> Result<FrequencyResponse, CircuitError> {
        validate_grid(frequencies)?;
        let points = frequencies
            .par_iter()
            .map(|&f| {
                self.transfer(f)
                    .map(|h| ResponsePoint { frequency: f, h })
                    .map_err(|e| CircuitError::AtFrequency {
                        frequency: f,
                        source: Box::new(e),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FrequencyResponse { points })
    }
}

/// Error-free product via fused multiply-add.
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Sum of products in twice the working precision.
struct Dot2 {
    sum: f64,
    err: f64,
}

impl Dot2 {
    fn new(start: f64) -> Self {
        Self { sum: start, err: 0.0 }
    }

    fn add_product(&mut self, a: f64, b: f64) {
        let (p, pe) = two_prod(a, b);
        let (s, se) = two_sum(self.sum, p);
        self.sum = s;
        self.err += pe + se;
    }

    fn value(&self) -> f64 {
        self.sum + self.err
    }
}

fn validate_grid(frequencies: &[f64]) -> Result<(), CircuitError> {
    if frequencies.is_empty() {
        return Err(CircuitError::NoFrequencies);
    }
    for (i, &f) in frequencies.iter().enumerate() {
        if !(f.is_finite() && f > 0.0) {
            return Err(CircuitError::InvalidFrequency(f));
        }
        if i > 0 && f <= frequencies[i - 1] {
            return Err(CircuitError::UnsortedFrequencies(i));
        }
    }
    Ok(())
}

/// Dense LU with complete pivoting, `P A Q = L U`.
struct DenseLu {
    lu: Vec<Complex64>,
    m: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl DenseLu {
    /// On failure returns the original column index that had no usable pivot.
    fn factor(mut lu: Vec<Complex64>, m: usize) -> Result<Self, usize> {
        let mut rows: Vec<usize> = (0..m).collect();
        let mut cols: Vec<usize> = (0..m).collect();
        let initial = lu.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let tiny = initial * f64::EPSILON * m as f64;
        if initial == 0.0 {
            return Err(0);
        }

        for k in 0..m {
            let (mut pr, mut pc, mut best) = (k, k, -1.0);
            for i in k..m {
                for j in k..m {
                    let v = lu[i * m + j].norm();
                    if v > best {
                        best = v;
                        pr = i;
                        pc = j;
                    }
                }
            }
            if best <= tiny {
                return Err(cols[k]);
            }
            if pr != k {
                for j in 0..m {
                    lu.swap(k * m + j, pr * m + j);
                }
                rows.swap(k, pr);
            }
            if pc != k {
                for i in 0..m {
                    lu.swap(i * m + k, i * m + pc);
                }
                cols.swap(k, pc);
            }
            let pivot = lu[k * m + k];
            for i in k + 1..m {
                let factor = lu[i * m + k] / pivot;
                lu[i * m + k] = factor;
                if factor.norm() == 0.0 {
                    continue;
                }
                for j in k + 1..m {
                    let t = lu[k * m + j];
                    lu[i * m + j] -= factor * t;
                }
            }
        }
        Ok(Self { lu, m, rows, cols })
    }

    fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let m = self.m;
        let mut y: Vec<Complex64> = self.rows.iter().map(|&r| b[r]).collect();
        for i in 0..m {
            let row = &self.lu[i * m..i * m + i];
            let acc = row.iter().zip(&y[..i]).map(|(l, v)| l * v).sum::<Complex64>();
            y[i] -= acc;
        }
        for i in (0..m).rev() {
            let row = &self.lu[i * m + i + 1..(i + 1) * m];
            let acc = y[i] - row.iter().zip(&y[i + 1..]).map(|(u, v)| u * v).sum::<Complex64>();
            y[i] = acc / self.lu[i * m + i];
        }
        let mut x = vec![Complex64::new(0.0, 0.0); m];
        for (k, &c) in self.cols.iter().enumerate() {
            x[c] = y[k];
        }
        x
    }
}

/// Node voltages from one AC solve.
#[derive(Debug, Clone)]
pub struct AcSolution {
    pub frequency: f64,
    voltages: Vec<Complex64>,
    /// Current through the source, flowing from its positive terminal into it.
    pub source_current: Complex64,
    pub kcl_residual: f64,
}

impl AcSolution {
    pub fn voltage(&self, node: NodeId) -> Complex64 {
        self.voltages[node.0]
    }

    pub fn output_voltage(&self, output: Output) -> Complex64 {
        match output {
            Output::Node(p) => self.voltage(p),
            Output::Pair(p, q) => self.voltage(p) - self.voltage(q),
        }
    }

    /// Voltages keyed by node label, ground included.
    pub fn to_map(&self, netlist: &Netlist) -> HashMap<String, Complex64> {
        netlist
            .nodes()
            .map(|(id, label)| (label.to_string(), self.voltage(id)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponsePoint {
    pub frequency: f64,
    pub h: Complex64,
}

/// Transfer samples on a strictly increasing positive frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    points: Vec<ResponsePoint>,
}

/// `20 log10 |h|`, or negative infinity for an exact zero.
pub fn loss_db(h: Complex64) -> f64 {
    let mag = h.norm();
    if mag == 0.0 {
        f64::NEG_INFINITY
    } else {
        20.0 * mag.log10()
    }
}

impl FrequencyResponse {
    pub fn new(points: Vec<ResponsePoint>) -> Result<Self, CircuitError> {
        let grid: Vec<f64> = points.iter().map(|p| p.frequency).collect();
        validate_grid(&grid)?;
        Ok(Self { points })
    }

    pub fn points(&self) -> &[ResponsePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.frequency).collect()
    }

    pub fn loss_db(&self) -> Vec<f64> {
        self.points.iter().map(|p| loss_db(p.h)).collect()
    }

    pub fn phase_deg(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.h.arg().to_degrees()).collect()
    }

    /// Arithmetic mean of the dB samples.
    pub fn mean_loss_db(&self) -> f64 {
        let db = self.loss_db();
        db.iter().sum::<f64>() / db.len() as f64
    }

    /// Max minus min of the dB samples.
    pub fn spread_db(&self) -> f64 {
        let db = self.loss_db();
        let hi = db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = db.iter().cloned().fold(f64::INFINITY, f64::min);
        hi - lo
    }

    /// Pointwise map over the transfer values, grid unchanged.
    pub fn map<E>(
        &self,
        mut f: impl FnMut(f64, Complex64) -> Result<Complex64, E>,
    ) -> Result<FrequencyResponse, E> {
        let points = self
            .points
            .iter()
            .map(|p| {
                f(p.frequency, p.h).map(|h| ResponsePoint {
                    frequency: p.frequency,
                    h,
                })
            })
            .collect::<Result<Vec<_>, E>>()?;
        Ok(FrequencyResponse { points })
    }
}

/// Logarithmic grid from `start` to `stop` inclusive with a fixed point
/// density per decade.
pub fn log_frequencies(start: f64, stop: f64, points_per_decade: usize) -> Vec<f64> {
    assert!(start > 0.0 && stop > start && points_per_decade > 0);
    let decades = (stop / start).log10();
    let steps = (decades * points_per_decade as f64).round().max(1.0) as usize;
    (0..=steps)
        .map(|k| {
            if k == steps {
                stop
            } else {
                start * 10f64.powf(decades * k as f64 / steps as f64)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn divider(z1: impl Fn(&mut NetlistBuilder, NodeId, NodeId), z2: impl Fn(&mut NetlistBuilder, NodeId, NodeId)) -> Netlist {
        let mut b = NetlistBuilder::new();
        let (src, out, g) = (b.node("src"), b.node("out"), b.ground());
        b.voltage_source(src, g, 1.0);
        z1(&mut b, src, out);
        z2(&mut b, out, g);
        b.output_node(out);
        b.build().unwrap()
    }

    #[test]
    fn rc_lowpass_pole_at_one_khz() {
        let net = divider(
            |b, x, y| {
                b.resistor(x, y, 1e3);
            },
            |b, x, y| {
                b.capacitor(x, y, 159.155e-9);
            },
        );
        let h = net.transfer(1e3).unwrap();
        assert_relative_eq!(h.norm(), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-5);
        assert_relative_eq!(h.arg().to_degrees(), -45.0, epsilon = 1e-3);
        assert_relative_eq!(loss_db(h), -3.0103, epsilon = 1e-3);
    }

    #[test]
    fn equal_capacitor_divider_is_half_at_any_frequency() {
        let net = divider(
            |b, x, y| {
                b.capacitor(x, y, 10e-12);
            },
            |b, x, y| {
                b.capacitor(x, y, 10e-12);
            },
        );
        for f in [1.0, 1e3, 1e6, 1e9] {
            assert_relative_eq!(net.transfer(f).unwrap().re, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn resistive_divider() {
        let net = divider(
            |b, x, y| {
                b.resistor(x, y, 50.0);
            },
            |b, x, y| {
                b.resistor(x, y, 50.0);
            },
        );
        assert_relative_eq!(net.transfer(1e5).unwrap().norm(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn two_capacitor_return_divider() {
        // 0.75 pF series, 13 pF shunt: Cg / (CL + Cg)
        let net = divider(
            |b, x, y| {
                b.capacitor(x, y, 0.75e-12);
            },
            |b, x, y| {
                b.capacitor(x, y, 13e-12);
            },
        );
        let h = net.transfer(1e5).unwrap();
        assert_relative_eq!(h.norm(), 0.75 / 13.75, max_relative = 1e-12);
        assert_relative_eq!(loss_db(h), -25.2642, epsilon = 1e-3);
    }

    #[test]
    fn symmetric_bridge_differential_output_is_zero() {
        let mut b = NetlistBuilder::new();
        let (p, n, l, r) = (b.node("p"), b.node("n"), b.node("l"), b.node("r"));
        b.voltage_source(p, n, 1.0);
        b.resistor(p, l, 1e3).resistor(l, n, 1e3);
        b.resistor(p, r, 1e3).resistor(r, n, 1e3);
        b.capacitor(n, b.ground(), 1e-9);
        b.output_pair(l, r);
        let net = b.build().unwrap();
        let h = net.transfer(1e4).unwrap();
        assert!(h.norm() < 1e-12, "{h}");
    }

    #[test]
    fn solution_satisfies_kcl_and_source_constraint() {
        let mut b = NetlistBuilder::new();
        let (s, m, o) = (b.node("s"), b.node("m"), b.node("o"));
        let g = b.ground();
        b.voltage_source(s, g, 2.5);
        b.resistor(s, m, 50.0).capacitor(m, o, 300e-15).resistor(o, g, 10e6).capacitor(m, g, 150e-12);
        b.output_node(o);
        let net = b.build().unwrap();
        let sol = net.solve_ac(1e6).unwrap();
        assert!(sol.kcl_residual <= KCL_TOLERANCE);
        assert_relative_eq!((sol.voltage(s) - sol.voltage(g)).re, 2.5, max_relative = 1e-12);
        let map = sol.to_map(&net);
        assert_eq!(map.len(), 4);
        assert_eq!(map["gnd"], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn floating_subnetwork_is_rejected_with_node_name() {
        let mut b = NetlistBuilder::new();
        let (s, x, y) = (b.node("s"), b.node("x"), b.node("island"));
        let g = b.ground();
        b.voltage_source(s, g, 1.0).resistor(s, x, 1.0).resistor(x, g, 1.0);
        let z = b.node("island2");
        b.resistor(y, z, 1.0);
        b.output_node(x);
        assert_eq!(b.build().unwrap_err(), CircuitError::FloatingNode("island".into()));
    }

    #[test]
    fn source_only_island_is_floating() {
        let mut b = NetlistBuilder::new();
        let (p, n) = (b.node("p"), b.node("n"));
        b.voltage_source(p, n, 1.0);
        b.output_node(p);
        assert!(matches!(b.build(), Err(CircuitError::FloatingNode(_))));
    }

    #[test]
    fn builder_rejects_bad_elements() {
        let mut b = NetlistBuilder::new();
        let s = b.node("s");
        let g = b.ground();
        b.voltage_source(s, g, 1.0).resistor(s, s, 1.0).output_node(s);
        assert!(matches!(b.build(), Err(CircuitError::SelfLoop { .. })));

        let mut b = NetlistBuilder::new();
        let s = b.node("s");
        b.voltage_source(s, NodeId::GROUND, 1.0).capacitor(s, NodeId::GROUND, 0.0).output_node(s);
        assert!(matches!(b.build(), Err(CircuitError::InvalidValue { .. })));

        let mut b = NetlistBuilder::new();
        let s = b.node("s");
        b.resistor(s, NodeId::GROUND, 1.0).output_node(s);
        assert_eq!(b.build().unwrap_err(), CircuitError::SourceCount(0));

        let mut b = NetlistBuilder::new();
        let s = b.node("s");
        b.voltage_source(s, NodeId::GROUND, 1.0).resistor(s, NodeId::GROUND, 1.0);
        assert_eq!(b.build().unwrap_err(), CircuitError::MissingOutput);
    }

    #[test]
    fn ground_label_is_reserved() {
        let mut b = NetlistBuilder::new();
        assert_eq!(b.node(GROUND_LABEL), NodeId::GROUND);
        let a = b.node("a");
        assert_eq!(b.node("a"), a);
    }

    #[test]
    fn zero_amplitude_source_has_no_transfer() {
        let net = divider(
            |b, x, y| {
                b.resistor(x, y, 1.0);
            },
            |b, x, y| {
                b.resistor(x, y, 1.0);
            },
        );
        let zero = net.with_source_amplitude(0.0).unwrap();
        assert_eq!(zero.transfer(1.0).unwrap_err(), CircuitError::ZeroSource);
        let sol = zero.solve_ac(1.0).unwrap();
        assert_eq!(sol.kcl_residual, 0.0);
    }

    #[test]
    fn singular_system_names_an_unknown() {
        // Subnormal capacitances whose admittance underflows to exactly zero
        // leave node x without any equation.
        let tiny = f64::from_bits(1);
        let mut b = NetlistBuilder::new();
        let (s, x) = (b.node("s"), b.node("x"));
        let g = b.ground();
        b.voltage_source(s, g, 1.0);
        b.capacitor(s, x, tiny).capacitor(x, g, tiny);
        b.output_node(x);
        let net = b.build().unwrap();
        match net.solve_ac(1e-3) {
            Err(CircuitError::Singular { unknown }) => assert!(unknown.contains('x'), "{unknown}"),
            other => panic!("expected singular, got {other:?}"),
        }
    }

    #[test]
    fn sweep_matches_pointwise_transfer_and_rejects_bad_grids() {
        let net = divider(
            |b, x, y| {
                b.resistor(x, y, 1e3);
            },
            |b, x, y| {
                b.capacitor(x, y, 159.155e-9);
            },
        );
        let one = net.sweep(&[2e3]).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.points()[0].h, net.transfer(2e3).unwrap());

        assert_eq!(net.sweep(&[]).unwrap_err(), CircuitError::NoFrequencies);
        assert_eq!(net.sweep(&[1.0, 1.0]).unwrap_err(), CircuitError::UnsortedFrequencies(1));
        assert_eq!(net.sweep(&[0.0]).unwrap_err(), CircuitError::InvalidFrequency(0.0));
    }

    #[test]
    fn first_order_asymptote_is_minus_twenty_db_per_decade() {
        let net = divider(
            |b, x, y| {
                b.resistor(x, y, 1e3);
            },
            |b, x, y| {
                b.capacitor(x, y, 159.155e-9);
            },
        );
        let r = net.sweep(&[1e4, 1e5]).unwrap().loss_db();
        assert!((r[1] - r[0] + 20.0).abs() < 0.5, "{r:?}");
    }

    #[test]
    fn capacitive_divider_is_flat() {
        let net = divider(
            |b, x, y| {
                b.capacitor(x, y, 0.75e-12);
            },
            |b, x, y| {
                b.capacitor(x, y, 13e-12);
            },
        );
        let r = net.sweep(&log_frequencies(1e4, 1e6, 50)).unwrap();
        assert!(r.spread_db() < 0.01);
    }

    #[test]
    fn log_grid_endpoints_and_density() {
        let g = log_frequencies(1e4, 1e6, 50);
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], 1e4);
        assert_eq!(g[100], 1e6);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn zero_magnitude_loss_is_negative_infinity() {
        assert_eq!(loss_db(Complex64::new(0.0, 0.0)), f64::NEG_INFINITY);
    }
}
