//! OpenQASM 3 text export and the matching parser.
//!
//! Every IR instruction is printed on its own line, so open-control gates
//! (emitted as `x c; cx c, t; x c;`) and basis-rotated measurements are
//! recovered exactly.

use super::{CircuitIR, CircuitMetadata, Gate, MeasureBasis, Polarity};
use crate::error::{Error, Result};
use crate::model::{AncillaScheme, QubitRole, RegisterLayout};

pub const QASM_HEADER: &str = "OPENQASM 3.0;";

const GATE_DEFS: &str = "\
gate rxx(theta) q0, q1 { h q0; h q1; cx q0, q1; rz(theta) q1; cx q0, q1; h q0; h q1; }
gate ryy(theta) q0, q1 { rx(pi/2) q0; rx(pi/2) q1; cx q0, q1; rz(theta) q1; cx q0, q1; rx(-pi/2) q0; rx(-pi/2) q1; }
gate rzx(theta) q0, q1 { h q1; cx q0, q1; rz(theta) q1; cx q0, q1; h q1; }
";

fn register_name(role: QubitRole) -> &'static str {
    match role {
        QubitRole::ResponseAncilla => "a",
        QubitRole::System(_) => "s",
        QubitRole::Pseudomode { .. } => "p",
        QubitRole::Collision(_) => "ac",
        QubitRole::ReactionCenter => "rc",
    }
}

/// `(register, index)` of every qubit.
fn qubit_names(layout: &RegisterLayout) -> Vec<(&'static str, usize)> {
    let mut counts = std::collections::HashMap::new();
    layout
        .roles()
        .iter()
        .map(|&r| {
            let name = register_name(r);
            let c = counts.entry(name).or_insert(0usize);
            *c += 1;
            (name, *c - 1)
        })
        .collect()
}

fn scheme_text(s: AncillaScheme) -> String {
    match s {
        AncillaScheme::Single => "single".into(),
        AncillaScheme::PerPseudomode => "per_pseudomode".into(),
        AncillaScheme::PerCollision { steps } => format!("per_collision:{steps}"),
    }
}

fn parse_scheme(s: &str) -> Option<AncillaScheme> {
    match s {
        "single" => Some(AncillaScheme::Single),
        "per_pseudomode" => Some(AncillaScheme::PerPseudomode),
        _ => s.strip_prefix("per_collision:")?.parse().ok().map(|steps| AncillaScheme::PerCollision { steps }),
    }
}

pub fn export_qasm(circuit: &CircuitIR) -> String {
    let layout = &circuit.layout;
    let names = qubit_names(layout);
    let q = |i: usize| format!("{}[{}]", names[i].0, names[i].1);
    let mut out = String::new();
    out.push_str(QASM_HEADER);
    out.push('\n');
    out.push_str("include \"stdgates.inc\";\n");
    let widths: Vec<String> = layout.pseudomode_widths().iter().map(|w| w.to_string()).collect();
    out.push_str(&format!(
        "// layout sites={} modes={} channels={} scheme={} rc={}\n",
        layout.n_sites(),
        if widths.is_empty() { "-".to_string() } else { widths.join(",") },
        layout.collision_channels(),
        scheme_text(layout.scheme()),
        layout.reaction_center().is_some()
    ));
    out.push_str(&format!("// label {}\n", circuit.metadata.label.replace('\n', " ")));
    let delays: Vec<String> = circuit.metadata.delays.iter().map(|d| format!("{d:?}")).collect();
    out.push_str(&format!("// delays {}\n", delays.join(" ")));
    out.push_str(&format!("// shots {}\n", circuit.metadata.shots));
    out.push_str(GATE_DEFS);
    let mut sizes: Vec<(&str, usize)> = Vec::new();
    for (name, _) in &names {
        match sizes.iter_mut().find(|(n, _)| n == name) {
            Some(e) => e.1 += 1,
            None => sizes.push((name, 1)),
        }
    }
    for (name, size) in sizes {
        out.push_str(&format!("qubit[{size}] {name};\n"));
    }
    out.push_str("bit[1] c;\n");
    for g in &circuit.instructions {
        let line = match *g {
            Gate::H(t) => format!("h {};", q(t)),
            Gate::X(t) => format!("x {};", q(t)),
            Gate::Y(t) => format!("y {};", q(t)),
            Gate::CX { control, target, polarity } | Gate::CY { control, target, polarity } => {
                let core = format!("{} {}, {};", g.name(), q(control), q(target));
                match polarity {
                    Polarity::Closed => core,
                    Polarity::Open => format!("x {c}; {core} x {c};", c = q(control)),
                }
            }
            Gate::RZ { qubit, theta } | Gate::RX { qubit, theta } => format!("{}({theta:?}) {};", g.name(), q(qubit)),
            Gate::RXX { a, b, theta } | Gate::RYY { a, b, theta } | Gate::RZX { a, b, theta } => {
                format!("{}({theta:?}) {}, {};", g.name(), q(a), q(b))
            }
            Gate::Reset(t) => format!("reset {};", q(t)),
            Gate::Measure { qubit, basis } => match basis {
                MeasureBasis::X => format!("h {t}; c[0] = measure {t};", t = q(qubit)),
                MeasureBasis::Y => format!("sdg {t}; h {t}; c[0] = measure {t};", t = q(qubit)),
            },
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

struct Parser {
    layout: Option<RegisterLayout>,
    metadata: CircuitMetadata,
    registers: Vec<(String, usize, usize)>,
}

impl Parser {
    fn qubit(&self, token: &str, line: usize) -> Result<usize> {
        let err = || Error::Parse { line, msg: format!("bad qubit reference `{token}`") };
        let token = token.trim();
        let open = token.find('[').ok_or_else(err)?;
        let name = &token[..open];
        let idx: usize = token[open + 1..].strip_suffix(']').ok_or_else(err)?.parse().map_err(|_| err())?;
        let (_, start, size) = self.registers.iter().find(|(n, _, _)| n == name).ok_or_else(err)?;
        if idx >= *size {
            return Err(err());
        }
        Ok(start + idx)
    }

    fn gate(&self, stmt: &str, line: usize) -> Result<Gate> {
        let err = |m: &str| Error::Parse { line, msg: format!("{m}: `{stmt}`") };
        let (head, args) = stmt.split_once(' ').ok_or_else(|| err("malformed statement"))?;
        let (name, theta) = match head.split_once('(') {
            Some((n, rest)) => {
                let v: f64 = rest.strip_suffix(')').ok_or_else(|| err("bad angle"))?.parse().map_err(|_| err("bad angle"))?;
                (n, Some(v))
            }
            None => (head, None),
        };
        let qs: Vec<usize> = args.split(',').map(|t| self.qubit(t, line)).collect::<Result<_>>()?;
        let want = |n: usize| if qs.len() == n { Ok(()) } else { Err(err("wrong operand count")) };
        let angle = || theta.ok_or_else(|| err("missing angle"));
        Ok(match name {
            "h" => {
                want(1)?;
                Gate::H(qs[0])
            }
            "x" => {
                want(1)?;
                Gate::X(qs[0])
            }
            "y" => {
                want(1)?;
                Gate::Y(qs[0])
            }
            "reset" => {
                want(1)?;
                Gate::Reset(qs[0])
            }
            "rz" => {
                want(1)?;
                Gate::RZ { qubit: qs[0], theta: angle()? }
            }
            "rx" => {
                want(1)?;
                Gate::RX { qubit: qs[0], theta: angle()? }
            }
            "cx" | "cy" => {
                want(2)?;
                let (control, target) = (qs[0], qs[1]);
                if name == "cx" {
                    Gate::CX { control, target, polarity: Polarity::Closed }
                } else {
                    Gate::CY { control, target, polarity: Polarity::Closed }
                }
            }
            "rxx" | "ryy" | "rzx" => {
                want(2)?;
                let (a, b, theta) = (qs[0], qs[1], angle()?);
                match name {
                    "rxx" => Gate::RXX { a, b, theta },
                    "ryy" => Gate::RYY { a, b, theta },
                    _ => Gate::RZX { a, b, theta },
                }
            }
            _ => return Err(err("unknown gate")),
        })
    }

    fn layout_line(&mut self, rest: &str, line: usize) -> Result<()> {
        let err = |m: &str| Error::Parse { line, msg: m.to_string() };
        let mut sites = None;
        let mut widths = Vec::new();
        let mut channels = None;
        let mut scheme = None;
        let mut rc = None;
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| err("bad layout field"))?;
            match k {
                "sites" => sites = v.parse().ok(),
                "modes" if v != "-" => {
                    widths = v.split(',').map(|w| w.parse()).collect::<std::result::Result<_, _>>().map_err(|_| err("bad modes"))?
                }
                "modes" => {}
                "channels" => channels = v.parse().ok(),
                "scheme" => scheme = parse_scheme(v),
                "rc" => rc = v.parse().ok(),
                _ => return Err(err("unknown layout field")),
            }
        }
        let layout = RegisterLayout::from_parts(
            sites.ok_or_else(|| err("missing sites"))?,
            &widths,
            channels.ok_or_else(|| err("missing channels"))?,
            scheme.ok_or_else(|| err("missing scheme"))?,
            rc.ok_or_else(|| err("missing rc"))?,
        );
        let names = qubit_names(&layout);
        for (i, (name, idx)) in names.iter().enumerate() {
            if *idx == 0 {
                self.registers.push((name.to_string(), i, 0));
            }
            self.registers.last_mut().unwrap().2 += 1;
        }
        self.layout = Some(layout);
        Ok(())
    }
}

/// Parses text produced by [`export_qasm`] back into the IR.
pub fn parse_qasm(text: &str) -> Result<CircuitIR> {
    let mut p = Parser { layout: None, metadata: CircuitMetadata::default(), registers: Vec::new() };
    let mut instructions = Vec::new();
    let mut saw_header = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix("//") {
            let comment = comment.trim_start();
            if let Some(rest) = comment.strip_prefix("layout ") {
                p.layout_line(rest, line_no)?;
            } else if let Some(rest) = comment.strip_prefix("label") {
                p.metadata.label = rest.strip_prefix(' ').unwrap_or(rest).to_string();
            } else if let Some(rest) = comment.strip_prefix("delays") {
                p.metadata.delays = rest
                    .split_whitespace()
                    .map(|d| d.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Parse { line: line_no, msg: "bad delays".into() })?;
            } else if let Some(rest) = comment.strip_prefix("shots") {
                p.metadata.shots = rest
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse { line: line_no, msg: "bad shot count".into() })?;
            }
            continue;
        }
        if line == QASM_HEADER {
            saw_header = true;
            continue;
        }
        if line.starts_with("include ") || line.starts_with("gate ") || line.starts_with("bit[") {
            continue;
        }
        if line.starts_with("qubit[") {
            if p.layout.is_none() {
                return Err(Error::Parse { line: line_no, msg: "register before layout".into() });
            }
            continue;
        }
        if p.layout.is_none() {
            return Err(Error::Parse { line: line_no, msg: "instruction before layout".into() });
        }
        let stmts: Vec<&str> = line.split(';').map(str::trim).filter(|s| !s.is_empty()).collect();
        let gate = if let Some(last) = stmts.last().filter(|s| s.contains("= measure")) {
            let target = last.split("= measure").nth(1).unwrap_or("");
            let qubit = p.qubit(target, line_no)?;
            let basis = match stmts.len() {
                2 => MeasureBasis::X,
                3 => MeasureBasis::Y,
                _ => return Err(Error::Parse { line: line_no, msg: "bad measurement prefix".into() }),
            };
            Gate::Measure { qubit, basis }
        } else if stmts.len() == 3 {
            match p.gate(stmts[1], line_no)? {
                Gate::CX { control, target, .. } => Gate::CX { control, target, polarity: Polarity::Open },
                Gate::CY { control, target, .. } => Gate::CY { control, target, polarity: Polarity::Open },
                _ => return Err(Error::Parse { line: line_no, msg: "bad open-control pattern".into() }),
            }
        } else if stmts.len() == 1 {
            p.gate(stmts[0], line_no)?
        } else {
            return Err(Error::Parse { line: line_no, msg: format!("unexpected statement group `{line}`") });
        };
        instructions.push(gate);
    }
    if !saw_header {
        return Err(Error::Parse { line: 1, msg: "missing OPENQASM header".into() });
    }
    let layout = p.layout.ok_or(Error::Parse { line: 0, msg: "missing layout comment".into() })?;
    let circuit = CircuitIR { layout, instructions, metadata: p.metadata };
    circuit.validate()?;
    Ok(circuit)
}
