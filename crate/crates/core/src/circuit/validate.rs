use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use super::{compile, Bindings, CircuitSpec, PortRef};

/// Tolerance on `max |M†M − I|` for the source-to-terminal map.
pub const ISOMETRY_TOLERANCE: f64 = 1e-10;

/// Bindings at which losslessness is probed. Any fixed generic points do;
/// the map is unitary for all bindings or for none.
const PROBE_BINDINGS: [(f64, f64, f64); 3] = [(0.0, 0.0, 0.0), (0.7, -1.3, 2.1), (3.0, 0.4, -0.9)];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Violation {
    #[error("no source declared")]
    NoSource,
    #[error("duplicate name `{name}`")]
    DuplicateName { name: String },
    #[error("connection {from} -> {to} references undeclared `{missing}`")]
    UnknownElement {
        from: PortRef,
        to: PortRef,
        missing: String,
    },
    #[error("`{port}` is not an {direction} port")]
    UnknownPort { port: PortRef, direction: Direction },
    #[error("input `{port}` has no incoming connection")]
    DanglingPort { port: PortRef },
    #[error("input `{port}` is driven by {}", join(.drivers))]
    DoublyDrivenPort {
        port: PortRef,
        drivers: Vec<PortRef>,
    },
    #[error("output `{port}` drives {}", join(.targets))]
    FanOut {
        port: PortRef,
        targets: Vec<PortRef>,
    },
    #[error("cycle detected through {}", .elements.join(", "))]
    Cycle { elements: Vec<String> },
    #[error("isometry defect {defect:e} exceeds {ISOMETRY_TOLERANCE:e}")]
    NotLossless { defect: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Input,
    Output,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Input => "input",
            Direction::Output => "output",
        })
    }
}

fn join(ports: &[PortRef]) -> String {
    ports
        .iter()
        .map(|p| format!("`{p}`"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::NoSource => "no-source",
            Violation::DuplicateName { .. } => "duplicate-name",
            Violation::UnknownElement { .. } => "unknown-element",
            Violation::UnknownPort { .. } => "unknown-port",
            Violation::DanglingPort { .. } => "dangling-port",
            Violation::DoublyDrivenPort { .. } => "doubly-driven-port",
            Violation::FanOut { .. } => "fan-out",
            Violation::Cycle { .. } => "cycle",
            Violation::NotLossless { .. } => "not-lossless",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn codes(&self) -> Vec<&'static str> {
        self.violations.iter().map(Violation::code).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "ok: no violations");
        }
        for v in &self.violations {
            writeln!(f, "{}: {v}", v.code())?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Owner {
    Source,
    Element(usize),
    Detector,
}

fn ports_of(spec: &CircuitSpec, owner: Owner, direction: Direction) -> &'static [&'static str] {
    match (owner, direction) {
        (Owner::Source, Direction::Output) => &["out"],
        (Owner::Detector, Direction::Input) => &["in"],
        (Owner::Element(i), Direction::Input) => spec.elements[i].kind.input_ports(),
        (Owner::Element(i), Direction::Output) => spec.elements[i].kind.output_ports(),
        _ => &[],
    }
}

/// Wiring and graph checks only; no field evaluation.
pub(crate) fn structural_violations(spec: &CircuitSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if spec.sources.is_empty() {
        out.push(Violation::NoSource);
    }

    let mut owners: HashMap<&str, Owner> = HashMap::new();
    let declared = spec
        .sources
        .iter()
        .map(|s| (s.name.as_str(), Owner::Source))
        .chain(
            spec.elements
                .iter()
                .enumerate()
                .map(|(i, e)| (e.name.as_str(), Owner::Element(i))),
        )
        .chain(
            spec.detectors
                .iter()
                .map(|d| (d.name.as_str(), Owner::Detector)),
        );
    for (name, owner) in declared {
        if owners.insert(name, owner).is_some() {
            out.push(Violation::DuplicateName {
                name: name.to_string(),
            });
        }
    }

    let mut drivers: BTreeMap<&PortRef, Vec<PortRef>> = BTreeMap::new();
    let mut targets: BTreeMap<&PortRef, Vec<PortRef>> = BTreeMap::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for c in &spec.connections {
        let mut ok = true;
        for (end, direction) in [(&c.from, Direction::Output), (&c.to, Direction::Input)] {
            match owners.get(end.element.as_str()) {
                None => {
                    out.push(Violation::UnknownElement {
                        from: c.from.clone(),
                        to: c.to.clone(),
                        missing: end.element.clone(),
                    });
                    ok = false;
                }
                Some(&owner) => {
                    if !ports_of(spec, owner, direction).contains(&end.port.as_str()) {
                        out.push(Violation::UnknownPort {
                            port: end.clone(),
                            direction,
                        });
                        ok = false;
                    }
                }
            }
        }
        if !ok {
            continue;
        }
        drivers.entry(&c.to).or_default().push(c.from.clone());
        targets.entry(&c.from).or_default().push(c.to.clone());
        if let (Some(Owner::Element(a)), Some(Owner::Element(b))) = (
            owners.get(c.from.element.as_str()),
            owners.get(c.to.element.as_str()),
        ) {
            edges.push((*a, *b));
        }
    }

    let inputs = spec
        .elements
        .iter()
        .flat_map(|e| {
            e.kind
                .input_ports()
                .iter()
                .map(move |p| PortRef::new(&e.name, *p))
        })
        .chain(spec.detectors.iter().map(|d| PortRef::new(&d.name, "in")));
    for port in inputs {
        match drivers.get(&port) {
            None => out.push(Violation::DanglingPort { port }),
            Some(ds) if ds.len() > 1 => out.push(Violation::DoublyDrivenPort {
                port,
                drivers: ds.clone(),
            }),
            Some(_) => {}
        }
    }
    for (port, ts) in &targets {
        if ts.len() > 1 {
            out.push(Violation::FanOut {
                port: (*port).clone(),
                targets: ts.clone(),
            });
        }
    }

    if let Some(elements) = find_cycle(spec.elements.len(), &edges) {
        out.push(Violation::Cycle {
            elements: elements
                .into_iter()
                .map(|i| spec.elements[i].name.clone())
                .collect(),
        });
    }
    out
}

/// Kahn's algorithm; returns the elements left with unresolved inputs.
fn find_cycle(n: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut indegree = vec![0usize; n];
    let mut next: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        indegree[b] += 1;
        next[a].push(b);
    }
    let mut stack: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut visited = 0;
    while let Some(i) = stack.pop() {
        visited += 1;
        for &j in &next[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                stack.push(j);
            }
        }
    }
    (visited < n).then(|| (0..n).filter(|&i| indegree[i] > 0).collect())
}

/// Check every invariant and report all violations found. The losslessness
/// probe only runs on structurally sound circuits.
pub fn validate(spec: &CircuitSpec) -> ValidationReport {
    let mut violations = structural_violations(spec);
    if violations.is_empty() {
        if let Ok(plan) = compile(spec) {
            let mut worst: f64 = 0.0;
            for (phi, psi, theta) in PROBE_BINDINGS {
                if let Ok(tm) = plan.transfer_matrix(&Bindings::new(phi, psi, theta)) {
                    worst = worst.max(tm.isometry_defect());
                }
            }
            if worst.is_nan() || worst > ISOMETRY_TOLERANCE {
                violations.push(Violation::NotLossless { defect: worst });
            }
        }
    }
    ValidationReport { violations }
}
