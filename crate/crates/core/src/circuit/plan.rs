use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::validate::structural_violations;
use super::{CircuitError, CircuitSpec, ElementType, Result, ScanVar, Value};
use crate::optics::{
    bs_apply, hwp_apply, mirror_apply, pbs_apply, phase_apply, ElementKind, JonesVector, ModeField,
    PhaseScope,
};

/// Values for the scan variables. Unset variables are only an error when
/// the plan actually references them.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Bindings {
    pub phi: Option<f64>,
    pub psi: Option<f64>,
    pub theta: Option<f64>,
}

impl Bindings {
    pub fn new(phi: f64, psi: f64, theta: f64) -> Self {
        Self {
            phi: Some(phi),
            psi: Some(psi),
            theta: Some(theta),
        }
    }

    pub fn get(&self, var: ScanVar) -> Option<f64> {
        match var {
            ScanVar::Phi => self.phi,
            ScanVar::Psi => self.psi,
            ScanVar::Theta => self.theta,
        }
    }

    pub fn set(&mut self, var: ScanVar, value: f64) {
        match var {
            ScanVar::Phi => self.phi = Some(value),
            ScanVar::Psi => self.psi = Some(value),
            ScanVar::Theta => self.theta = Some(value),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum StepOp {
    Fixed(ElementKind),
    ScanPhase { var: ScanVar, scope: PhaseScope },
}

/// One element application with its wiring resolved to field slots.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanStep {
    pub name: String,
    pub kind: ElementType,
    op: StepOp,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
}

impl PlanStep {
    /// The concrete element at the given bindings.
    pub fn element_at(&self, bindings: &Bindings) -> Result<ElementKind> {
        match self.op {
            StepOp::Fixed(kind) => Ok(kind),
            StepOp::ScanPhase { var, scope } => {
                let phase = bindings.get(var).ok_or(CircuitError::MissingBinding(var))?;
                Ok(ElementKind::Phase { phase, scope })
            }
        }
    }

    pub fn scan_var(&self) -> Option<ScanVar> {
        match self.op {
            StepOp::ScanPhase { var, .. } => Some(var),
            StepOp::Fixed(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct PlanSource {
    name: String,
    field: JonesVector,
    slot: usize,
}

/// A compiled, immutable circuit. Evaluation is a single pass over
/// topologically ordered steps writing into a flat slot array, one slot per
/// output port.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationPlan {
    sources: Vec<PlanSource>,
    steps: Vec<PlanStep>,
    detectors: Vec<(String, usize)>,
    open_ports: Vec<(String, usize)>,
    slot_names: Vec<String>,
    scan_vars: BTreeSet<ScanVar>,
}

/// Linear map from source modes to terminal modes (detectors, then open
/// ports), with `H`/`V` interleaved per port.
#[derive(Clone, Debug)]
pub struct TransferMatrix {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub matrix: DMatrix<Complex64>,
}

impl TransferMatrix {
    /// `max |M†M − I|` over all entries.
    pub fn isometry_defect(&self) -> f64 {
        let gram = self.matrix.adjoint() * &self.matrix;
        let n = gram.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

impl EvaluationPlan {
    pub fn steps(&self) -> &[PlanStep] {
        &self.steps
    }

    pub fn detector_names(&self) -> impl Iterator<Item = &str> {
        self.detectors.iter().map(|(n, _)| n.as_str())
    }

    pub fn detector_index(&self, name: &str) -> Option<usize> {
        self.detectors.iter().position(|(n, _)| n == name)
    }

    pub fn open_port_names(&self) -> impl Iterator<Item = &str> {
        self.open_ports.iter().map(|(n, _)| n.as_str())
    }

    pub fn source_names(&self) -> impl Iterator<Item = &str> {
        self.sources.iter().map(|s| s.name.as_str())
    }

    pub fn source_fields(&self) -> Vec<JonesVector> {
        self.sources.iter().map(|s| s.field).collect()
    }

    pub fn scan_variables(&self) -> &BTreeSet<ScanVar> {
        &self.scan_vars
    }

    fn check_bindings(&self, bindings: &Bindings) -> Result<()> {
        for &var in &self.scan_vars {
            if bindings.get(var).is_none() {
                return Err(CircuitError::MissingBinding(var));
            }
        }
        Ok(())
    }

    /// Propagate arbitrary source fields; returns the field on every slot.
    pub fn propagate_from(
        &self,
        bindings: &Bindings,
        source_fields: &[JonesVector],
    ) -> Result<Vec<JonesVector>> {
        self.check_bindings(bindings)?;
        if source_fields.len() != self.sources.len() {
            return Err(CircuitError::SourceCount {
                expected: self.sources.len(),
                got: source_fields.len(),
            });
        }
        let mut slots = vec![JonesVector::ZERO; self.slot_names.len()];
        for (src, field) in self.sources.iter().zip(source_fields) {
            slots[src.slot] = *field;
        }
        for step in &self.steps {
            match step.element_at(bindings)? {
                ElementKind::Bs => {
                    let (a, b) = bs_apply(slots[step.inputs[0]], slots[step.inputs[1]]);
                    slots[step.outputs[0]] = a;
                    slots[step.outputs[1]] = b;
                }
                ElementKind::Pbs => {
                    let (a, b) = pbs_apply(slots[step.inputs[0]], slots[step.inputs[1]]);
                    slots[step.outputs[0]] = a;
                    slots[step.outputs[1]] = b;
                }
                ElementKind::Hwp { angle } => {
                    slots[step.outputs[0]] = hwp_apply(slots[step.inputs[0]], angle)
                }
                ElementKind::Phase { phase, scope } => {
                    slots[step.outputs[0]] = phase_apply(slots[step.inputs[0]], phase, scope)
                }
                ElementKind::Mirror => slots[step.outputs[0]] = mirror_apply(slots[step.inputs[0]]),
                ElementKind::Source | ElementKind::Detector => unreachable!("not a plan step"),
            }
        }
        Ok(slots)
    }

    /// Fields at each detector, in declaration order.
    pub fn detector_fields(&self, bindings: &Bindings) -> Result<Vec<JonesVector>> {
        let slots = self.propagate_from(bindings, &self.source_fields())?;
        Ok(self
            .detectors
            .iter()
            .map(|(_, slot)| slots[*slot])
            .collect())
    }

    /// Fields at each detector channel.
    pub fn evaluate(&self, bindings: &Bindings) -> Result<BTreeMap<String, JonesVector>> {
        let fields = self.detector_fields(bindings)?;
        Ok(self
            .detectors
            .iter()
            .zip(fields)
            .map(|((name, _), f)| (name.clone(), f))
            .collect())
    }

    /// Fields on every output port, keyed `element.port`.
    pub fn port_fields(&self, bindings: &Bindings) -> Result<ModeField> {
        let slots = self.propagate_from(bindings, &self.source_fields())?;
        Ok(self.slot_names.iter().cloned().zip(slots).collect())
    }

    /// Fields on the terminal ports (detectors and open outputs).
    pub fn terminal_fields(&self, bindings: &Bindings) -> Result<ModeField> {
        let slots = self.propagate_from(bindings, &self.source_fields())?;
        Ok(self
            .detectors
            .iter()
            .chain(&self.open_ports)
            .map(|(name, slot)| (name.clone(), slots[*slot]))
            .collect())
    }

    pub fn transfer_matrix(&self, bindings: &Bindings) -> Result<TransferMatrix> {
        let terminals: Vec<&(String, usize)> =
            self.detectors.iter().chain(&self.open_ports).collect();
        let n_in = 2 * self.sources.len();
        let n_out = 2 * terminals.len();
        let mut matrix = DMatrix::from_element(n_out, n_in, Complex64::new(0.0, 0.0));
        let mut inputs = Vec::with_capacity(n_in);
        for (col, src) in self.sources.iter().enumerate() {
            for (pol, basis) in [
                ("H", JonesVector::horizontal()),
                ("V", JonesVector::vertical()),
            ] {
                let mut fields = vec![JonesVector::ZERO; self.sources.len()];
                fields[col] = basis;
                let slots = self.propagate_from(bindings, &fields)?;
                let c = inputs.len();
                for (row, (_, slot)) in terminals.iter().enumerate() {
                    matrix[(2 * row, c)] = slots[*slot].h;
                    matrix[(2 * row + 1, c)] = slots[*slot].v;
                }
                inputs.push(format!("{}:{pol}", src.name));
            }
        }
        let outputs = terminals
            .iter()
            .flat_map(|(name, _)| [format!("{name}:H"), format!("{name}:V")])
            .collect();
        Ok(TransferMatrix {
            inputs,
            outputs,
            matrix,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Node {
    Source(usize),
    Element(usize),
}

/// Compile a structurally valid spec into an evaluation plan.
///
/// Steps are ordered topologically; ties are broken by declaration order,
/// so the same spec always compiles to the same plan.
pub fn compile(spec: &CircuitSpec) -> Result<EvaluationPlan> {
    if let Some(v) = structural_violations(spec).into_iter().next() {
        return Err(v.into());
    }

    let mut nodes: HashMap<&str, Node> = HashMap::new();
    for (i, s) in spec.sources.iter().enumerate() {
        nodes.insert(&s.name, Node::Source(i));
    }
    for (i, e) in spec.elements.iter().enumerate() {
        nodes.insert(&e.name, Node::Element(i));
    }

    // One slot per output port.
    let mut slot_names = Vec::new();
    let mut output_slot: HashMap<(Node, &str), usize> = HashMap::new();
    for (i, s) in spec.sources.iter().enumerate() {
        output_slot.insert((Node::Source(i), "out"), slot_names.len());
        slot_names.push(format!("{}.out", s.name));
    }
    for (i, e) in spec.elements.iter().enumerate() {
        for &port in e.kind.output_ports() {
            output_slot.insert((Node::Element(i), port), slot_names.len());
            slot_names.push(format!("{}.{port}", e.name));
        }
    }

    let mut driver: HashMap<(&str, &str), usize> = HashMap::new();
    let mut used_outputs = vec![false; slot_names.len()];
    let mut deps: Vec<Vec<usize>> = vec![Vec::new(); spec.elements.len()];
    for c in &spec.connections {
        let from = nodes[c.from.element.as_str()];
        let slot = output_slot[&(from, c.from.port.as_str())];
        used_outputs[slot] = true;
        driver.insert((c.to.element.as_str(), c.to.port.as_str()), slot);
        if let (Node::Element(a), Some(Node::Element(b))) = (from, nodes.get(c.to.element.as_str()))
        {
            deps[*b].push(a);
        }
    }

    let mut indegree: Vec<usize> = deps.iter().map(Vec::len).collect();
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); spec.elements.len()];
    for (b, ds) in deps.iter().enumerate() {
        for &a in ds {
            dependents[a].push(b);
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..spec.elements.len())
        .filter(|&i| indegree[i] == 0)
        .map(Reverse)
        .collect();
    let mut order = Vec::with_capacity(spec.elements.len());
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &d in &dependents[i] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                ready.push(Reverse(d));
            }
        }
    }
    if order.len() != spec.elements.len() {
        let stuck = (0..spec.elements.len())
            .filter(|i| indegree[*i] > 0)
            .map(|i| spec.elements[i].name.clone())
            .collect();
        return Err(super::Violation::Cycle { elements: stuck }.into());
    }

    let mut scan_vars = BTreeSet::new();
    let steps = order
        .into_iter()
        .map(|i| {
            let e = &spec.elements[i];
            let op = match e.kind {
                ElementType::Bs => StepOp::Fixed(ElementKind::Bs),
                ElementType::Pbs => StepOp::Fixed(ElementKind::Pbs),
                ElementType::Mirror => StepOp::Fixed(ElementKind::Mirror),
                ElementType::Hwp => StepOp::Fixed(ElementKind::Hwp {
                    angle: e.hwp_angle(),
                }),
                ElementType::Phase => match e.params.get("phase") {
                    Some(Value::Scan(var)) => {
                        scan_vars.insert(*var);
                        StepOp::ScanPhase {
                            var: *var,
                            scope: e.phase_scope(),
                        }
                    }
                    Some(Value::Number(phase)) => StepOp::Fixed(ElementKind::Phase {
                        phase: *phase,
                        scope: e.phase_scope(),
                    }),
                    _ => StepOp::Fixed(ElementKind::Phase {
                        phase: 0.0,
                        scope: e.phase_scope(),
                    }),
                },
            };
            PlanStep {
                name: e.name.clone(),
                kind: e.kind,
                op,
                inputs: e
                    .kind
                    .input_ports()
                    .iter()
                    .map(|p| driver[&(e.name.as_str(), *p)])
                    .collect(),
                outputs: e
                    .kind
                    .output_ports()
                    .iter()
                    .map(|p| output_slot[&(Node::Element(i), *p)])
                    .collect(),
            }
        })
        .collect();

    let sources = spec
        .sources
        .iter()
        .enumerate()
        .map(|(i, s)| PlanSource {
            name: s.name.clone(),
            field: s.field(),
            slot: output_slot[&(Node::Source(i), "out")],
        })
        .collect();
    let detectors = spec
        .detectors
        .iter()
        .map(|d| (d.name.clone(), driver[&(d.name.as_str(), "in")]))
        .collect();
    let open_ports = used_outputs
        .iter()
        .enumerate()
        .filter(|(_, used)| !**used)
        .map(|(slot, _)| (slot_names[slot].clone(), slot))
        .collect();

    Ok(EvaluationPlan {
        sources,
        steps,
        detectors,
        open_ports,
        slot_names,
        scan_vars,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse;
    use crate::optics::intensity;

    #[test]
    fn empty_plan_is_identity() {
        let spec = parse(
            "source s { pol = 30deg, intensity = 2 }\ndetector d : SPCM\nconnect s.out -> d.in\n",
        )
        .unwrap();
        let plan = compile(&spec).unwrap();
        assert!(plan.steps().is_empty());
        let out = plan.evaluate(&Bindings::new(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(out["d"], spec.sources[0].field());
        // No scan variables referenced: empty bindings are fine too.
        assert_eq!(
            plan.evaluate(&Bindings::default()).unwrap()["d"],
            spec.sources[0].field()
        );
        let tm = plan.transfer_matrix(&Bindings::default()).unwrap();
        assert_eq!(tm.isometry_defect(), 0.0);
    }

    #[test]
    fn missing_binding_is_reported() {
        let spec = parse(
            "source s\nelement p : PHASE { phase = scan_theta }\ndetector d : SPCM\n\
             connect s.out -> p.in\nconnect p.out -> d.in\n",
        )
        .unwrap();
        let plan = compile(&spec).unwrap();
        let err = plan.evaluate(&Bindings {
            phi: Some(0.0),
            psi: Some(0.0),
            theta: None,
        });
        assert_eq!(
            err.unwrap_err(),
            CircuitError::MissingBinding(ScanVar::Theta)
        );
        let ok = plan
            .evaluate(&Bindings {
                theta: Some(1.0),
                ..Default::default()
            })
            .unwrap();
        assert!((intensity(&ok["d"]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn order_respects_connections_and_declaration() {
        let spec = parse(
            "source s\nsource z { intensity = 0 }\n\
             element late : BS\nelement early : MIRROR\nelement side : MIRROR\n\
             detector d1 : SPCM\ndetector d2 : SPCM\n\
             connect s.out -> early.in\nconnect early.out -> late.in1\nconnect z.out -> side.in\n\
             connect side.out -> late.in2\nconnect late.out1 -> d1.in\nconnect late.out2 -> d2.in\n",
        )
        .unwrap();
        let plan = compile(&spec).unwrap();
        let names: Vec<&str> = plan.steps().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["early", "side", "late"]);
        assert_eq!(plan.open_port_names().count(), 0);
    }
}
