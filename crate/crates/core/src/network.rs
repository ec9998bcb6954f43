//! Reaction network and reactor configuration.
//!
//! A network is read from a small line-oriented, sectioned text format:
//!
//! ```text
//! [species]
//! A cp=75.24 h_ref=0 s_ref=50.6
//! B cp=60 h_ref=-4575 s_ref=180.2
//! [reactions]
//! A -> B k0f=0.12e10 Ef=72331.8 k0b=1.33e8 Eb=74826
//! [reactor]
//! V=0.001 P=1e5 T_ref=300 lambda=0.05808 R_gas=8.314
//! [inlet]
//! T_in=310 c_A=2000
//! [noise]
//! rho1=0.1 rho2=5e-7 rho3=0.05
//! ```
//!
//! `#` starts a comment, blank lines are ignored, sections appear in the order
//! above and keys within a line may appear in any order. The order of the
//! `[species]` section fixes the index of every vector downstream.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use thiserror::Error;

pub const DEFAULT_GAS_CONSTANT: f64 = 8.314;

#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub name: String,
    /// Isobaric molar heat capacity, J/K/mol.
    pub cp: f64,
    /// Reference molar enthalpy, J/mol.
    pub h_ref: f64,
    /// Reference molar entropy, J/K/mol.
    pub s_ref: f64,
}

/// A reversible reaction `Σ z_j X_j ⇌ Σ z'_j X_j` with Arrhenius kinetics.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    /// Reactant coefficients `z·ᵢ`, one per species.
    pub reactants: Vec<u32>,
    /// Product coefficients `z'·ᵢ`, one per species.
    pub products: Vec<u32>,
    pub k0f: f64,
    /// Forward activation energy, J/mol.
    pub ef: f64,
    pub k0b: f64,
    /// Backward activation energy, J/mol.
    pub eb: f64,
}

impl Reaction {
    /// `z·ᵢ − z'·ᵢ`.
    pub fn stoich_difference(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.reactants.len(),
            self.reactants
                .iter()
                .zip(&self.products)
                .map(|(&z, &zp)| f64::from(z) - f64::from(zp)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactorSpec {
    /// Reaction volume, m³.
    pub volume: f64,
    /// Pressure, Pa.
    pub pressure: f64,
    /// Reference temperature, K.
    pub t_ref: f64,
    /// Jacket heat transfer coefficient, J/K/s.
    pub lambda: f64,
    /// Molar gas constant, J/K/mol.
    pub r_gas: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InletSpec {
    pub t_in: f64,
    /// Feed concentration per species, mol/m³.
    pub c_in: Vec<f64>,
}

/// Standard deviations of the reaction, flow and heat-exchange disturbances.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseSpec {
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
}

impl NoiseSpec {
    pub fn is_zero(&self) -> bool {
        self.rho1 == 0.0 && self.rho2 == 0.0 && self.rho3 == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    pub species: Vec<Species>,
    pub reactions: Vec<Reaction>,
    pub reactor: ReactorSpec,
    pub inlet: InletSpec,
    pub noise: NoiseSpec,
}

/// One invariant violation, addressed by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("section [{0}] is out of order or repeated")]
    SectionOrder(String),
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
    #[error("content outside of any section")]
    OutsideSection,
    #[error("expected key=value, found `{0}`")]
    ExpectedKeyValue(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("missing mandatory key `{key}` in [{section}]")]
    MissingKey { section: &'static str, key: String },
    #[error("value of `{key}` is not a finite number: `{value}`")]
    NotANumber { key: String, value: String },
    #[error("unknown species {0}")]
    UnknownSpecies(String),
    #[error("duplicate species {0}")]
    DuplicateSpecies(String),
    #[error("invalid species name `{0}`")]
    InvalidName(String),
    #[error("malformed reaction: {0}")]
    MalformedReaction(String),
    #[error("invalid stoichiometric coefficient `{0}`")]
    BadCoefficient(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Syntax(#[from] ParseError),
    #[error("invalid network: {}", join_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
}

fn join_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|d| d.message.as_str()).collect::<Vec<_>>().join("; ")
}

impl ReactionNetwork {
    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn n_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn heat_capacities(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_species(), self.species.iter().map(|s| s.cp))
    }

    pub fn reference_enthalpies(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_species(), self.species.iter().map(|s| s.h_ref))
    }

    pub fn inlet_concentration(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.inlet.c_in)
    }

    /// Copy of the network with different disturbance magnitudes.
    pub fn with_noise(&self, noise: NoiseSpec) -> Self {
        Self {
            noise,
            ..self.clone()
        }
    }

    /// Every invariant violation; empty iff the network is valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let p = self.n_species();
        if p == 0 {
            out.push(Diagnostic::new("species", "species must not be empty"));
        }

        let mut seen: HashMap<&str, usize> = HashMap::new();
        for sp in &self.species {
            let base = format!("species.{}", sp.name);
            if !is_identifier(&sp.name) {
                out.push(Diagnostic::new(
                    base.clone(),
                    format!("{base} has an invalid name"),
                ));
            }
            let count = seen.entry(sp.name.as_str()).or_insert(0);
            *count += 1;
            if *count == 2 {
                out.push(Diagnostic::new(
                    base.clone(),
                    format!("{base} is declared more than once"),
                ));
            }
            positive(&mut out, &format!("{base}.cp"), sp.cp);
            finite(&mut out, &format!("{base}.h_ref"), sp.h_ref);
            finite(&mut out, &format!("{base}.s_ref"), sp.s_ref);
        }

        for (i, r) in self.reactions.iter().enumerate() {
            let base = format!("reactions.{i}");
            let mut lengths_ok = true;
            for (field, v) in [("reactants", &r.reactants), ("products", &r.products)] {
                if v.len() != p {
                    lengths_ok = false;
                    out.push(Diagnostic::new(
                        format!("{base}.{field}"),
                        format!("{base}.{field} has length {}, expected {p}", v.len()),
                    ));
                }
            }
            if lengths_ok && r.reactants == r.products {
                out.push(Diagnostic::new(
                    base.clone(),
                    format!("reaction {i} has zero net stoichiometry"),
                ));
            }
            non_negative(&mut out, &format!("{base}.k0f"), r.k0f);
            non_negative(&mut out, &format!("{base}.Ef"), r.ef);
            non_negative(&mut out, &format!("{base}.k0b"), r.k0b);
            non_negative(&mut out, &format!("{base}.Eb"), r.eb);
        }

        let rx = &self.reactor;
        positive(&mut out, "reactor.V", rx.volume);
        non_negative(&mut out, "reactor.P", rx.pressure);
        positive(&mut out, "reactor.T_ref", rx.t_ref);
        non_negative(&mut out, "reactor.lambda", rx.lambda);
        positive(&mut out, "reactor.R_gas", rx.r_gas);

        positive(&mut out, "inlet.T_in", self.inlet.t_in);
        if self.inlet.c_in.len() != p {
            out.push(Diagnostic::new(
                "inlet.c_in",
                format!(
                    "inlet.c_in has length {}, expected {p}",
                    self.inlet.c_in.len()
                ),
            ));
        } else {
            for (sp, &c) in self.species.iter().zip(&self.inlet.c_in) {
                non_negative(&mut out, &format!("inlet.c_{}", sp.name), c);
            }
        }
        if p > 0 && !self.inlet.c_in.iter().any(|&c| c > 0.0) {
            out.push(Diagnostic::new(
                "inlet.c_in",
                "inlet.c_in must have at least one positive entry",
            ));
        }

        non_negative(&mut out, "noise.rho1", self.noise.rho1);
        non_negative(&mut out, "noise.rho2", self.noise.rho2);
        non_negative(&mut out, "noise.rho3", self.noise.rho3);
        out
    }

    /// Render as a configuration document; parsing it yields `self` again.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        s.push_str("[species]\n");
        for sp in &self.species {
            s.push_str(&format!(
                "{} cp={} h_ref={} s_ref={}\n",
                sp.name,
                fmt_num(sp.cp),
                fmt_num(sp.h_ref),
                fmt_num(sp.s_ref)
            ));
        }
        s.push_str("\n[reactions]\n");
        for r in &self.reactions {
            s.push_str(&format!(
                "{} -> {} k0f={} Ef={} k0b={} Eb={}\n",
                self.complex_string(&r.reactants),
                self.complex_string(&r.products),
                fmt_num(r.k0f),
                fmt_num(r.ef),
                fmt_num(r.k0b),
                fmt_num(r.eb)
            ));
        }
        let rx = &self.reactor;
        s.push_str(&format!(
            "\n[reactor]\nV={} P={} T_ref={} lambda={} R_gas={}\n",
            fmt_num(rx.volume),
            fmt_num(rx.pressure),
            fmt_num(rx.t_ref),
            fmt_num(rx.lambda),
            fmt_num(rx.r_gas)
        ));
        s.push_str(&format!("\n[inlet]\nT_in={}", fmt_num(self.inlet.t_in)));
        for (sp, &c) in self.species.iter().zip(&self.inlet.c_in) {
            s.push_str(&format!(" c_{}={}", sp.name, fmt_num(c)));
        }
        s.push_str(&format!(
            "\n\n[noise]\nrho1={} rho2={} rho3={}\n",
            fmt_num(self.noise.rho1),
            fmt_num(self.noise.rho2),
            fmt_num(self.noise.rho3)
        ));
        s
    }

    fn complex_string(&self, coeffs: &[u32]) -> String {
        let terms: Vec<String> = coeffs
            .iter()
            .zip(&self.species)
            .filter(|(&k, _)| k > 0)
            .map(|(&k, sp)| {
                if k == 1 {
                    sp.name.clone()
                } else {
                    format!("{k} {}", sp.name)
                }
            })
            .collect();
        if terms.is_empty() {
            "0".to_string()
        } else {
            terms.join(" + ")
        }
    }
}

impl FromStr for ReactionNetwork {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_network(s)
    }
}

/// Parse and validate a configuration document.
pub fn parse_network(text: &str) -> Result<ReactionNetwork, NetworkError> {
    let net = Parser::default().run(text)?;
    let diagnostics = net.validate();
    if diagnostics.is_empty() {
        Ok(net)
    } else {
        Err(NetworkError::Invalid(diagnostics))
    }
}

pub fn serialize_network(net: &ReactionNetwork) -> String {
    net.to_config_string()
}

/// Shortest decimal text that parses back to exactly `x`.
fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn positive(out: &mut Vec<Diagnostic>, path: &str, v: f64) {
    if !v.is_finite() {
        out.push(Diagnostic::new(path, format!("{path} must be finite")));
    } else if v <= 0.0 {
        out.push(Diagnostic::new(path, format!("{path} must be > 0")));
    }
}

fn non_negative(out: &mut Vec<Diagnostic>, path: &str, v: f64) {
    if !v.is_finite() {
        out.push(Diagnostic::new(path, format!("{path} must be finite")));
    } else if v < 0.0 {
        out.push(Diagnostic::new(path, format!("{path} must be >= 0")));
    }
}

fn finite(out: &mut Vec<Diagnostic>, path: &str, v: f64) {
    if !v.is_finite() {
        out.push(Diagnostic::new(path, format!("{path} must be finite")));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Species,
    Reactions,
    Reactor,
    Inlet,
    Noise,
}

impl Section {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "species" => Self::Species,
            "reactions" => Self::Reactions,
            "reactor" => Self::Reactor,
            "inlet" => Self::Inlet,
            "noise" => Self::Noise,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::Species => "species",
            Self::Reactions => "reactions",
            Self::Reactor => "reactor",
            Self::Inlet => "inlet",
            Self::Noise => "noise",
        }
    }
}

#[derive(Debug, Clone)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

/// Split on whitespace, remembering 1-based character columns.
fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    for (col, (byte, c)) in line.char_indices().enumerate() {
        if c.is_whitespace() {
            if let Some((b, cc)) = start.take() {
                out.push(Token {
                    text: &line[b..byte],
                    column: cc + 1,
                });
            }
        } else if start.is_none() {
            start = Some((byte, col));
        }
    }
    if let Some((b, cc)) = start {
        out.push(Token {
            text: &line[b..],
            column: cc + 1,
        });
    }
    out
}

/// Key/value pairs of one section, with the location of each key.
#[derive(Default)]
struct KeyValues {
    entries: HashMap<String, (String, usize, usize)>,
}

impl KeyValues {
    fn insert(&mut self, tok: &Token<'_>, line: usize) -> Result<(), ParseError> {
        let (k, v) = split_kv(tok, line)?;
        if self.entries.contains_key(k) {
            return Err(err(line, tok.column, ParseErrorKind::DuplicateKey(k.into())));
        }
        self.entries.insert(k.into(), (v.into(), line, tok.column));
        Ok(())
    }

    fn take_number(
        &mut self,
        key: &str,
        section: Section,
        header_line: usize,
    ) -> Result<f64, ParseError> {
        match self.take_optional(key)? {
            Some(v) => Ok(v),
            None => Err(err(
                header_line,
                1,
                ParseErrorKind::MissingKey {
                    section: section.name(),
                    key: key.into(),
                },
            )),
        }
    }

    fn take_optional(&mut self, key: &str) -> Result<Option<f64>, ParseError> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line, col)) => parse_number(key, &v, line, col).map(Some),
        }
    }

    fn reject_leftovers(self) -> Result<(), ParseError> {
        let mut left: Vec<_> = self.entries.into_iter().collect();
        left.sort_by_key(|(_, (_, line, col))| (*line, *col));
        match left.into_iter().next() {
            Some((k, (_, line, col))) => Err(err(line, col, ParseErrorKind::UnknownKey(k))),
            None => Ok(()),
        }
    }
}

fn err(line: usize, column: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { line, column, kind }
}

fn split_kv<'a>(tok: &Token<'a>, line: usize) -> Result<(&'a str, &'a str), ParseError> {
    match tok.text.split_once('=') {
        Some((k, v)) if !k.is_empty() && !v.is_empty() => Ok((k, v)),
        _ => Err(err(
            line,
            tok.column,
            ParseErrorKind::ExpectedKeyValue(tok.text.into()),
        )),
    }
}

fn parse_number(key: &str, v: &str, line: usize, col: usize) -> Result<f64, ParseError> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(err(
            line,
            col,
            ParseErrorKind::NotANumber {
                key: key.into(),
                value: v.into(),
            },
        )),
    }
}

struct RawReaction {
    lhs: String,
    rhs: String,
    eq_column: usize,
    line: usize,
    kv: KeyValues,
}

#[derive(Default)]
struct Parser {
    species: Vec<Species>,
    raw_reactions: Vec<RawReaction>,
    reactor: KeyValues,
    inlet: KeyValues,
    noise: KeyValues,
    headers: HashMap<&'static str, usize>,
}

impl Parser {
    fn run(mut self, text: &str) -> Result<ReactionNetwork, ParseError> {
        let mut current: Option<Section> = None;
        let mut last_line = 0;
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            last_line = line_no;
            let line = raw_line.split('#').next().unwrap_or("");
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                let column = line.find('[').map_or(1, |b| line[..b].chars().count() + 1);
                let name = rest.strip_suffix(']').map(str::trim).ok_or_else(|| {
                    err(line_no, column, ParseErrorKind::UnknownSection(rest.into()))
                })?;
                let section = Section::from_name(name).ok_or_else(|| {
                    err(line_no, column, ParseErrorKind::UnknownSection(name.into()))
                })?;
                if current.is_some_and(|c| c >= section) || self.headers.contains_key(section.name())
                {
                    return Err(err(
                        line_no,
                        column,
                        ParseErrorKind::SectionOrder(name.into()),
                    ));
                }
                self.headers.insert(section.name(), line_no);
                current = Some(section);
                continue;
            }
            let tokens = tokenize(line);
            match current {
                None => {
                    return Err(err(line_no, tokens[0].column, ParseErrorKind::OutsideSection))
                }
                Some(Section::Species) => self.species_line(&tokens, line_no)?,
                Some(Section::Reactions) => self.reaction_line(&tokens, line_no)?,
                Some(Section::Reactor) => {
                    for t in &tokens {
                        self.reactor.insert(t, line_no)?;
                    }
                }
                Some(Section::Inlet) => {
                    for t in &tokens {
                        self.inlet.insert(t, line_no)?;
                    }
                }
                Some(Section::Noise) => {
                    for t in &tokens {
                        self.noise.insert(t, line_no)?;
                    }
                }
            }
        }
        self.finish(last_line + 1)
    }

    fn species_line(&mut self, tokens: &[Token<'_>], line: usize) -> Result<(), ParseError> {
        let name_tok = &tokens[0];
        if !is_identifier(name_tok.text) {
            return Err(err(
                line,
                name_tok.column,
                ParseErrorKind::InvalidName(name_tok.text.into()),
            ));
        }
        if self.species.iter().any(|s| s.name == name_tok.text) {
            return Err(err(
                line,
                name_tok.column,
                ParseErrorKind::DuplicateSpecies(name_tok.text.into()),
            ));
        }
        let mut kv = KeyValues::default();
        for t in &tokens[1..] {
            kv.insert(t, line)?;
        }
        let cp = kv.take_number("cp", Section::Species, line)?;
        let h_ref = kv.take_number("h_ref", Section::Species, line)?;
        let s_ref = kv.take_number("s_ref", Section::Species, line)?;
        kv.reject_leftovers()?;
        self.species.push(Species {
            name: name_tok.text.into(),
            cp,
            h_ref,
            s_ref,
        });
        Ok(())
    }

    fn reaction_line(&mut self, tokens: &[Token<'_>], line: usize) -> Result<(), ParseError> {
        let mut kv = KeyValues::default();
        let mut eq_parts = Vec::new();
        let mut eq_column = tokens[0].column;
        for t in tokens {
            if t.text.contains('=') {
                kv.insert(t, line)?;
            } else {
                if eq_parts.is_empty() {
                    eq_column = t.column;
                }
                eq_parts.push(t.text);
            }
        }
        let equation = eq_parts.join(" ");
        let (lhs, rhs) = match equation.split_once("->") {
            Some((l, r)) if !r.contains("->") => (l.trim().to_string(), r.trim().to_string()),
            _ => {
                return Err(err(
                    line,
                    eq_column,
                    ParseErrorKind::MalformedReaction(format!(
                        "expected exactly one `->` in `{equation}`"
                    )),
                ))
            }
        };
        self.raw_reactions.push(RawReaction {
            lhs,
            rhs,
            eq_column,
            line,
            kv,
        });
        Ok(())
    }

    fn finish(mut self, eof_line: usize) -> Result<ReactionNetwork, ParseError> {
        for section in [
            Section::Species,
            Section::Reactor,
            Section::Inlet,
            Section::Noise,
        ] {
            if !self.headers.contains_key(section.name()) {
                return Err(err(
                    eof_line,
                    1,
                    ParseErrorKind::MissingSection(section.name()),
                ));
            }
        }
        let header = |s: Section| self.headers.get(s.name()).copied().unwrap_or(eof_line);

        let raw = std::mem::take(&mut self.raw_reactions);
        let mut reactions = Vec::with_capacity(raw.len());
        for mut r in raw {
            let reactants = self.complex(&r.lhs, r.line, r.eq_column)?;
            let products = self.complex(&r.rhs, r.line, r.eq_column)?;
            let k0f = r.kv.take_number("k0f", Section::Reactions, r.line)?;
            let ef = r.kv.take_number("Ef", Section::Reactions, r.line)?;
            let k0b = r.kv.take_number("k0b", Section::Reactions, r.line)?;
            let eb = r.kv.take_number("Eb", Section::Reactions, r.line)?;
            r.kv.reject_leftovers()?;
            reactions.push(Reaction {
                reactants,
                products,
                k0f,
                ef,
                k0b,
                eb,
            });
        }

        let rl = header(Section::Reactor);
        let reactor = ReactorSpec {
            volume: self.reactor.take_number("V", Section::Reactor, rl)?,
            pressure: self.reactor.take_number("P", Section::Reactor, rl)?,
            t_ref: self.reactor.take_number("T_ref", Section::Reactor, rl)?,
            lambda: self.reactor.take_number("lambda", Section::Reactor, rl)?,
            r_gas: self
                .reactor
                .take_optional("R_gas")?
                .unwrap_or(DEFAULT_GAS_CONSTANT),
        };
        std::mem::take(&mut self.reactor).reject_leftovers()?;

        let il = header(Section::Inlet);
        let t_in = self.inlet.take_number("T_in", Section::Inlet, il)?;
        let mut c_in = vec![0.0; self.species.len()];
        let mut inlet = std::mem::take(&mut self.inlet);
        let mut keys: Vec<_> = inlet.entries.keys().cloned().collect();
        keys.sort();
        for key in keys {
            if let Some(name) = key.strip_prefix("c_") {
                let (_, line, col) = inlet.entries[&key].clone();
                let idx = self.species.iter().position(|s| s.name == name).ok_or_else(|| {
                    err(line, col, ParseErrorKind::UnknownSpecies(name.into()))
                })?;
                c_in[idx] = inlet.take_number(&key, Section::Inlet, il)?;
            }
        }
        inlet.reject_leftovers()?;

        let nl = header(Section::Noise);
        let noise = NoiseSpec {
            rho1: self.noise.take_number("rho1", Section::Noise, nl)?,
            rho2: self.noise.take_number("rho2", Section::Noise, nl)?,
            rho3: self.noise.take_number("rho3", Section::Noise, nl)?,
        };
        std::mem::take(&mut self.noise).reject_leftovers()?;

        Ok(ReactionNetwork {
            species: self.species,
            reactions,
            reactor,
            inlet: InletSpec { t_in, c_in },
            noise,
        })
    }

    /// Parse one side of a reaction, e.g. `2 A + B`, `2*A+B` or `0`.
    fn complex(&self, side: &str, line: usize, column: usize) -> Result<Vec<u32>, ParseError> {
        let mut coeffs = vec![0u32; self.species.len()];
        if side.is_empty() || side == "0" {
            return Ok(coeffs);
        }
        for term in side.split('+') {
            let term = term.trim();
            let digits_end = term
                .find(|c: char| !c.is_ascii_digit())
                .unwrap_or(term.len());
            let (num, rest) = term.split_at(digits_end);
            let name = rest.trim_start().trim_start_matches('*').trim();
            if name.is_empty() {
                return Err(err(
                    line,
                    column,
                    ParseErrorKind::MalformedReaction(format!("missing species in `{term}`")),
                ));
            }
            let k: u32 = if num.is_empty() {
                1
            } else {
                match num.parse() {
                    Ok(k) if k > 0 => k,
                    _ => return Err(err(line, column, ParseErrorKind::BadCoefficient(num.into()))),
                }
            };
            if !is_identifier(name) {
                return Err(err(line, column, ParseErrorKind::InvalidName(name.into())));
            }
            let idx = self
                .species
                .iter()
                .position(|s| s.name == name)
                .ok_or_else(|| err(line, column, ParseErrorKind::UnknownSpecies(name.into())))?;
            coeffs[idx] += k;
        }
        Ok(coeffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1: &str = include_str!("../data/ab_case_study.cstr");

    #[test]
    fn parses_case_study_table() {
        let net = parse_network(TABLE1).unwrap();
        assert_eq!(net.n_species(), 2);
        assert_eq!(net.n_reactions(), 1);
        assert_eq!(net.species[0].name, "A");
        assert_eq!(net.species[1].h_ref, -4575.0);
        assert_eq!(net.reactions[0].reactants, vec![1, 0]);
        assert_eq!(net.reactions[0].products, vec![0, 1]);
        assert_eq!(net.reactions[0].k0f, 1.2e9);
        assert_eq!(net.reactions[0].eb, 74826.0);
        assert_eq!(net.reactor.volume, 0.001);
        assert_eq!(net.reactor.lambda, 0.05808);
        assert_eq!(net.inlet.c_in, vec![2000.0, 0.0]);
        assert_eq!(net.noise.rho2, 5e-7);
        assert!(net.validate().is_empty());
    }

    #[test]
    fn zero_reactions_single_species() {
        let doc = "[species]\nA cp=75 h_ref=0 s_ref=50\n[reactions]\n[reactor]\nV=1e-3 P=1e5 T_ref=300 lambda=0\n[inlet]\nT_in=300 c_A=10\n[noise]\nrho1=0 rho2=0 rho3=0\n";
        let net = parse_network(doc).unwrap();
        assert_eq!(net.n_reactions(), 0);
        assert_eq!(net.reactor.r_gas, DEFAULT_GAS_CONSTANT);
        let text = net.to_config_string();
        assert!(text.contains("[reactions]\n\n[reactor]"));
        assert_eq!(parse_network(&text).unwrap(), net);
    }

    #[test]
    fn reactions_section_may_be_omitted() {
        let doc = "[species]\nA cp=75 h_ref=0 s_ref=50\n[reactor]\nV=1e-3 P=1e5 T_ref=300 lambda=0\n[inlet]\nT_in=300 c_A=10\n[noise]\nrho1=0 rho2=0 rho3=0\n";
        assert_eq!(parse_network(doc).unwrap().n_reactions(), 0);
    }

    #[test]
    fn unknown_species_in_reaction() {
        let doc = TABLE1.replace("A -> B", "A -> C");
        let e = parse_network(&doc).unwrap_err();
        assert!(e.to_string().contains("unknown species C"), "{e}");
        match e {
            NetworkError::Syntax(p) => assert_eq!(p.line, 9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_species_in_inlet() {
        let doc = TABLE1.replace("c_A=2000", "c_A=2000 c_Z=1");
        let e = parse_network(&doc).unwrap_err();
        assert!(e.to_string().contains("unknown species Z"), "{e}");
    }

    #[test]
    fn key_order_is_irrelevant() {
        let doc = TABLE1
            .replace("V=0.001 P=1e5 T_ref=300", "T_ref=300 P=1e5 V=0.001")
            .replace("cp=60    h_ref=-4575 s_ref=180.2", "s_ref=180.2 cp=60 h_ref=-4575")
            .replace(
                "k0f=0.12e10 Ef=72331.8 k0b=1.33e8 Eb=74826",
                "Eb=74826 k0b=1.33e8 Ef=72331.8 k0f=0.12e10",
            );
        assert_eq!(parse_network(&doc).unwrap(), parse_network(TABLE1).unwrap());
    }

    #[test]
    fn error_locations() {
        let doc = TABLE1.replace("rho2=5e-7", "rho2=five");
        match parse_network(&doc).unwrap_err() {
            NetworkError::Syntax(p) => {
                assert_eq!(p.line, 18);
                assert_eq!(p.column, 10);
                assert!(matches!(p.kind, ParseErrorKind::NotANumber { .. }));
            }
            other => panic!("{other:?}"),
        }

        let doc = TABLE1.replace("lambda=0.05808 ", "");
        let e = parse_network(&doc).unwrap_err();
        assert!(e.to_string().contains("missing mandatory key `lambda`"), "{e}");

        let doc = TABLE1.replace("B cp=60", "A cp=60");
        let e = parse_network(&doc).unwrap_err();
        assert!(e.to_string().contains("duplicate species A"), "{e}");

        let doc = TABLE1.replace("[noise]", "[reactor2]");
        assert!(matches!(
            parse_network(&doc).unwrap_err(),
            NetworkError::Syntax(ParseError {
                kind: ParseErrorKind::UnknownSection(_),
                ..
            })
        ));
    }

    #[test]
    fn sections_must_follow_fixed_order() {
        let doc = "[reactor]\nV=1 P=0 T_ref=300 lambda=0\n[species]\nA cp=1 h_ref=0 s_ref=0\n";
        let e = parse_network(doc).unwrap_err();
        assert!(e.to_string().contains("out of order"), "{e}");
    }

    #[test]
    fn coefficients_and_empty_sides() {
        let doc = "[species]\nA cp=1 h_ref=0 s_ref=0\nB cp=1 h_ref=0 s_ref=0\n[reactions]\n2A + B -> 3*B k0f=1 Ef=0 k0b=0 Eb=0\nA -> 0 k0f=1 Ef=0 k0b=0 Eb=0\n[reactor]\nV=1 P=0 T_ref=300 lambda=0\n[inlet]\nT_in=300 c_A=1\n[noise]\nrho1=0 rho2=0 rho3=0\n";
        let net = parse_network(doc).unwrap();
        assert_eq!(net.reactions[0].reactants, vec![2, 1]);
        assert_eq!(net.reactions[0].products, vec![0, 3]);
        assert_eq!(net.reactions[1].products, vec![0, 0]);
        assert_eq!(parse_network(&net.to_config_string()).unwrap(), net);
    }

    #[test]
    fn validate_reports_every_violation() {
        let mut net = parse_network(TABLE1).unwrap();
        net.species[0].cp = -1.0;
        let d = net.validate();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].to_string(), "species.A.cp must be > 0");
        assert_eq!(d[0].path, "species.A.cp");

        net.reactions[0].products = net.reactions[0].reactants.clone();
        net.noise.rho3 = -0.5;
        net.reactor.volume = 0.0;
        let d = net.validate();
        let msgs: Vec<String> = d.iter().map(ToString::to_string).collect();
        assert_eq!(d.len(), 4, "{msgs:?}");
        assert!(msgs.contains(&"reaction 0 has zero net stoichiometry".to_string()));
        assert!(msgs.contains(&"noise.rho3 must be >= 0".to_string()));
        assert!(msgs.contains(&"reactor.V must be > 0".to_string()));
    }

    #[test]
    fn parse_rejects_invalid_values() {
        let doc = TABLE1.replace("cp=75.24", "cp=-75.24");
        match parse_network(&doc).unwrap_err() {
            NetworkError::Invalid(d) => assert_eq!(d[0].path, "species.A.cp"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn number_formatting_round_trips() {
        for x in [0.0, 1.2e9, 5e-7, 0.05808, -4575.0, 1e-300, 6.02214076e23, 0.1 + 0.2] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
    }
    fn three_species_network() -> ReactionNetwork {
        let sp = |name: &str, cp: f64, h_ref: f64, s_ref: f64| Species {
            name: name.into(),
            cp,
            h_ref,
            s_ref,
        };
        ReactionNetwork {
            species: vec![
                sp("A", 75.24, 0.0, 50.6),
                sp("B_2", 60.0, -4575.0, 180.2),
                sp("Cx", 33.3, 1.25e4, 1e-3),
            ],
            reactions: vec![
                Reaction {
                    reactants: vec![2, 0, 0],
                    products: vec![0, 1, 0],
                    k0f: 1.2e9,
                    ef: 72331.8,
                    k0b: 1.33e8,
                    eb: 74826.0,
                },
                Reaction {
                    reactants: vec![0, 1, 0],
                    products: vec![1, 0, 3],
                    k0f: 3.5e-5,
                    ef: 0.0,
                    k0b: 0.0,
                    eb: 1e5,
                },
            ],
            reactor: ReactorSpec {
                volume: 2.5e-3,
                pressure: 101325.0,
                t_ref: 298.15,
                lambda: 0.0,
                r_gas: 8.314462618,
            },
            inlet: InletSpec {
                t_in: 310.0,
                c_in: vec![2000.0, 0.0, 12.5],
            },
            noise: NoiseSpec {
                rho1: 0.1,
                rho2: 5e-7,
                rho3: 0.0,
            },
        }
    }

    #[test]
    fn programmatic_network_round_trips() {
        let net = three_species_network();
        assert!(net.validate().is_empty(), "{:?}", net.validate());
        let text = serialize_network(&net);
        assert_eq!(parse_network(&text).unwrap(), net);
        assert_eq!(text.parse::<ReactionNetwork>().unwrap(), net);
        assert_eq!(serialize_network(&parse_network(&text).unwrap()), text);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn arb_f(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
            prop_oneof![lo..hi, Just(lo.max(0.0)), (lo.max(1e-30)..hi.max(1e-29)).prop_map(|x| x * 1e-7)]
        }

        fn arb_network() -> impl Strategy<Value = ReactionNetwork> {
            (1usize..5).prop_flat_map(|p| {
                let species = prop::collection::vec((1e-3f64..500.0, -1e5f64..1e5, -500.0f64..500.0), p);
                let reaction = (
                    prop::collection::vec(0u32..4, p),
                    prop::collection::vec(0u32..4, p),
                    arb_f(0.0, 1e12),
                    arb_f(0.0, 2e5),
                    arb_f(0.0, 1e12),
                    arb_f(0.0, 2e5),
                )
                    .prop_filter("net stoichiometry", |(z, zp, ..)| z != zp)
                    .prop_map(|(reactants, products, k0f, ef, k0b, eb)| Reaction {
                        reactants,
                        products,
                        k0f,
                        ef,
                        k0b,
                        eb,
                    });
                (
                    species,
                    prop::collection::vec(reaction, 0..4),
                    (1e-6f64..10.0, 0.0f64..1e7, 200.0f64..500.0, arb_f(0.0, 10.0), 1.0f64..10.0),
                    (200.0f64..500.0, prop::collection::vec(arb_f(0.0, 1e4), p)),
                    (arb_f(0.0, 1.0), arb_f(0.0, 1.0), arb_f(0.0, 1.0)),
                )
                    .prop_filter("positive feed", |(_, _, _, (_, c), _)| c.iter().any(|&x| x > 0.0))
                    .prop_map(|(species, reactions, (v, pr, tr, lam, rg), (t_in, c_in), (r1, r2, r3))| {
                        ReactionNetwork {
                            species: species
                                .into_iter()
                                .enumerate()
                                .map(|(i, (cp, h_ref, s_ref))| Species {
                                    name: format!("S{i}"),
                                    cp,
                                    h_ref,
                                    s_ref,
                                })
                                .collect(),
                            reactions,
                            reactor: ReactorSpec {
                                volume: v,
                                pressure: pr,
                                t_ref: tr,
                                lambda: lam,
                                r_gas: rg,
                            },
                            inlet: InletSpec { t_in, c_in },
                            noise: NoiseSpec {
                                rho1: r1,
                                rho2: r2,
                                rho3: r3,
                            },
                        }
                    })
            })
        }

        proptest! {
            #[test]
            fn serialize_then_parse_is_identity(net in arb_network()) {
                prop_assert!(net.validate().is_empty(), "{:?}", net.validate());
                let text = serialize_network(&net);
                prop_assert_eq!(parse_network(&text).unwrap(), net);
            }
        }
    }
}
