//! Reading and writing networks in the BIF interchange format.
//!
//! The supported subset covers the discrete networks the benchmark corpora
//! ship in:
//!
//! ```text
//! network <name> { <property>* }
//! variable <name> {
//!   type discrete [ <n> ] { <state>, ... };
//!   <property>*
//! }
//! probability ( <child> ) { table <v>, ...; }
//! probability ( <child> | <parent>, ... ) {
//!   ( <state>, ... ) <v>, ...;
//!   ...
//! }
//! ```
//!
//! Line comments `//` and block comments `/* */` are skipped everywhere;
//! `property` lines are kept verbatim as opaque strings. Identifiers are
//! case sensitive. `decision` and `utility` node types are rejected.
//!
//! Parsing is total: every input produces either a document satisfying all
//! invariants or a typed error with a source position. Variable, state, and
//! row order are preserved exactly as written because parameter indices
//! depend on them. Rows must sum to 1 within 1e-6 and are then renormalized
//! to sum exactly to 1 (the largest entry absorbs the residue), since the
//! coefficient identities downstream assume exact unit sums.
//!
//! Serialization prints probabilities with 16 fractional digits, switching
//! to scientific notation below 1e-4 so small values keep their significant
//! digits. A serialize and re-parse round trip reproduces the document with
//! per-entry error below 1e-12.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{BayesianNetwork, Cpt, ModelError, Variable};

/// One declared variable: name, ordered states, raw property lines.
#[derive(Debug, Clone, PartialEq)]
pub struct BifVariable {
    pub name: String,
    pub states: Vec<String>,
    pub properties: Vec<String>,
}

/// One probability block. Rows are keyed by parent-state tuples (state
/// names, matching `parents` in order) and kept in declaration order; a
/// parentless block has a single row with an empty tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct BifProbability {
    pub child: String,
    pub parents: Vec<String>,
    pub rows: Vec<(Vec<String>, Vec<f64>)>,
}

/// A parsed BIF file.
#[derive(Debug, Clone, PartialEq)]
pub struct BifDocument {
    pub network_name: String,
    pub network_properties: Vec<String>,
    pub variables: Vec<BifVariable>,
    pub probabilities: Vec<BifProbability>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BifError {
    #[error("{line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("{line}:{col}: variable type {kind} is not supported, only discrete")]
    UnsupportedType { line: usize, col: usize, kind: String },
    #[error("{line}:{col}: unknown variable {name}")]
    UnknownVariable { line: usize, col: usize, name: String },
    #[error("{line}:{col}: variable {variable} has no state named {state}")]
    UnknownState { line: usize, col: usize, variable: String, state: String },
    #[error("{line}:{col}: row for {child} has {got} values but the child has {want} states")]
    ArityMismatch { line: usize, col: usize, child: String, got: usize, want: usize },
    #[error("probability block for {child} has no row for ( {tuple} )")]
    MissingRow { child: String, tuple: String },
    #[error("{line}:{col}: row for {child} sums to {sum} which is more than 1e-6 away from 1")]
    RowSumViolation { line: usize, col: usize, child: String, sum: f64 },
    #[error("{line}:{col}: duplicate declaration of {what}")]
    DuplicateDeclaration { line: usize, col: usize, what: String },
    #[error("variable {variable} has no probability block")]
    MissingTable { variable: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Punct(char),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
}

const PUNCT: &[char] = &['{', '}', '(', ')', '[', ']', ',', ';', '|'];

impl Lexer {
    fn new(source: &str) -> Lexer {
        Lexer { chars: source.chars().collect(), pos: 0, line: 1, col: 1 }
    }

    fn peek_char(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump_char(&mut self) -> Option<char> {
        let c = self.peek_char()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) -> Result<(), BifError> {
        loop {
            match self.peek_char() {
                Some(c) if c.is_whitespace() => {
                    self.bump_char();
                }
                Some('/') if self.chars.get(self.pos + 1) == Some(&'/') => {
                    while let Some(c) = self.bump_char() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                Some('/') if self.chars.get(self.pos + 1) == Some(&'*') => {
                    let (line, col) = (self.line, self.col);
                    self.bump_char();
                    self.bump_char();
                    let mut closed = false;
                    while let Some(c) = self.bump_char() {
                        if c == '*' && self.peek_char() == Some('/') {
                            self.bump_char();
                            closed = true;
                            break;
                        }
                    }
                    if !closed {
                        return Err(BifError::Syntax {
                            line,
                            col,
                            message: "unterminated block comment".into(),
                        });
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn next_token(&mut self) -> Result<Token, BifError> {
        self.skip_trivia()?;
        let (line, col) = (self.line, self.col);
        let Some(c) = self.peek_char() else {
            return Ok(Token { tok: Tok::Eof, line, col });
        };
        if PUNCT.contains(&c) {
            self.bump_char();
            return Ok(Token { tok: Tok::Punct(c), line, col });
        }
        let mut word = String::new();
        while let Some(c) = self.peek_char() {
            if c.is_whitespace() || PUNCT.contains(&c) || c == '/' {
                break;
            }
            word.push(c);
            self.bump_char();
        }
        if word.is_empty() {
            return Err(BifError::Syntax {
                line,
                col,
                message: format!("unexpected character {c:?}"),
            });
        }
        Ok(Token { tok: Tok::Word(word), line, col })
    }

    /// Raw text up to (and consuming) the next semicolon, surrounding
    /// whitespace trimmed. Property payloads are opaque, so no tokenization.
    fn raw_until_semicolon(&mut self) -> Result<String, BifError> {
        let (line, col) = (self.line, self.col);
        let mut raw = String::new();
        loop {
            match self.bump_char() {
                Some(';') => return Ok(raw.trim().to_string()),
                Some(c) => raw.push(c),
                None => {
                    return Err(BifError::Syntax {
                        line,
                        col,
                        message: "property is missing its closing semicolon".into(),
                    })
                }
            }
        }
    }
}

/// One row as written, before names are resolved: the parent tuple with
/// positions (`None` for a `table` row), the values, and the row position.
struct RawRow {
    tuple: Option<Vec<(String, usize, usize)>>,
    values: Vec<f64>,
    line: usize,
    col: usize,
}

struct RawProbability {
    child: (String, usize, usize),
    parents: Vec<(String, usize, usize)>,
    rows: Vec<RawRow>,
}

struct Parser {
    lexer: Lexer,
}

impl Parser {
    fn bump(&mut self) -> Result<Token, BifError> {
        self.lexer.next_token()
    }

    fn expect_punct(&mut self, want: char) -> Result<Token, BifError> {
        let t = self.bump()?;
        match t.tok {
            Tok::Punct(c) if c == want => Ok(t),
            _ => Err(syntax(&t, &format!("expected {want:?}"))),
        }
    }

    fn expect_word(&mut self) -> Result<(String, usize, usize), BifError> {
        let t = self.bump()?;
        match t.tok {
            Tok::Word(w) => Ok((w, t.line, t.col)),
            _ => Err(syntax(&t, "expected an identifier")),
        }
    }

    fn expect_keyword(&mut self, want: &str) -> Result<(), BifError> {
        let t = self.bump()?;
        match &t.tok {
            Tok::Word(w) if w == want => Ok(()),
            _ => Err(syntax(&t, &format!("expected keyword {want}"))),
        }
    }

    fn expect_number(&mut self) -> Result<(f64, usize, usize), BifError> {
        let t = self.bump()?;
        match &t.tok {
            Tok::Word(w) => match w.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok((v, t.line, t.col)),
                _ => Err(syntax(&t, &format!("expected a probability, found {w}"))),
            },
            _ => Err(syntax(&t, "expected a probability")),
        }
    }

    /// Comma-separated identifiers terminated by `stop` (consumed).
    fn name_list(&mut self, stop: char) -> Result<Vec<(String, usize, usize)>, BifError> {
        let mut names = vec![self.expect_word()?];
        loop {
            let t = self.bump()?;
            match t.tok {
                Tok::Punct(',') => names.push(self.expect_word()?),
                Tok::Punct(c) if c == stop => return Ok(names),
                _ => return Err(syntax(&t, &format!("expected ',' or {stop:?}"))),
            }
        }
    }

    /// Comma-separated numbers terminated by `;` (consumed).
    fn number_list(&mut self) -> Result<Vec<f64>, BifError> {
        let mut values = vec![self.expect_number()?.0];
        loop {
            let t = self.bump()?;
            match t.tok {
                Tok::Punct(',') => values.push(self.expect_number()?.0),
                Tok::Punct(';') => return Ok(values),
                _ => return Err(syntax(&t, "expected ',' or ';'")),
            }
        }
    }
}

fn syntax(t: &Token, message: &str) -> BifError {
    let found = match &t.tok {
        Tok::Word(w) => format!("{message}, found {w}"),
        Tok::Punct(c) => format!("{message}, found {c:?}"),
        Tok::Eof => format!("{message}, found end of input"),
    };
    BifError::Syntax { line: t.line, col: t.col, message: found }
}

/// Parses BIF source into a document satisfying all invariants.
pub fn parse_bif(source: &str) -> Result<BifDocument, BifError> {
    let mut p = Parser { lexer: Lexer::new(source) };

    p.expect_keyword("network")?;
    let (network_name, ..) = p.expect_word()?;
    p.expect_punct('{')?;
    let mut network_properties = Vec::new();
    loop {
        let t = p.bump()?;
        match &t.tok {
            Tok::Punct('}') => break,
            Tok::Word(w) if w == "property" => network_properties.push(p.lexer.raw_until_semicolon()?),
            _ => return Err(syntax(&t, "expected 'property' or '}'")),
        }
    }

    let mut variables: Vec<BifVariable> = Vec::new();
    let mut raw_probabilities: Vec<RawProbability> = Vec::new();
    loop {
        let t = p.bump()?;
        match &t.tok {
            Tok::Eof => break,
            Tok::Word(w) if w == "variable" => {
                let var = parse_variable(&mut p)?;
                if variables.iter().any(|v| v.name == var.0.name) {
                    return Err(BifError::DuplicateDeclaration {
                        line: var.1,
                        col: var.2,
                        what: format!("variable {}", var.0.name),
                    });
                }
                variables.push(var.0);
            }
            Tok::Word(w) if w == "probability" => raw_probabilities.push(parse_probability(&mut p)?),
            _ => return Err(syntax(&t, "expected 'variable' or 'probability'")),
        }
    }

    let probabilities = resolve(&variables, raw_probabilities)?;
    Ok(BifDocument { network_name, network_properties, variables, probabilities })
}

/// `variable` has been consumed; returns the variable and its name position.
fn parse_variable(p: &mut Parser) -> Result<(BifVariable, usize, usize), BifError> {
    let (name, line, col) = p.expect_word()?;
    p.expect_punct('{')?;
    let mut states: Option<Vec<String>> = None;
    let mut properties = Vec::new();
    loop {
        let t = p.bump()?;
        match &t.tok {
            Tok::Punct('}') => break,
            Tok::Word(w) if w == "property" => properties.push(p.lexer.raw_until_semicolon()?),
            Tok::Word(w) if w == "type" => {
                let kind = p.bump()?;
                match &kind.tok {
                    Tok::Word(k) if k == "discrete" => {}
                    Tok::Word(k) => {
                        return Err(BifError::UnsupportedType {
                            line: kind.line,
                            col: kind.col,
                            kind: k.clone(),
                        })
                    }
                    _ => return Err(syntax(&kind, "expected a variable type")),
                }
                if states.is_some() {
                    return Err(BifError::DuplicateDeclaration {
                        line: t.line,
                        col: t.col,
                        what: format!("type of variable {name}"),
                    });
                }
                p.expect_punct('[')?;
                let (count, cline, ccol) = p.expect_number()?;
                p.expect_punct(']')?;
                p.expect_punct('{')?;
                let names = p.name_list('}')?;
                p.expect_punct(';')?;
                if count != names.len() as f64 {
                    return Err(BifError::Syntax {
                        line: cline,
                        col: ccol,
                        message: format!("declared {count} states but listed {}", names.len()),
                    });
                }
                states = Some(names.into_iter().map(|(n, ..)| n).collect());
            }
            _ => return Err(syntax(&t, "expected 'type', 'property', or '}'")),
        }
    }
    let states = states.ok_or(BifError::Syntax {
        line,
        col,
        message: format!("variable {name} has no type declaration"),
    })?;
    Ok((BifVariable { name, states, properties }, line, col))
}

/// `probability` has been consumed.
fn parse_probability(p: &mut Parser) -> Result<RawProbability, BifError> {
    p.expect_punct('(')?;
    let child = p.expect_word()?;
    let t = p.bump()?;
    let parents = match t.tok {
        Tok::Punct(')') => Vec::new(),
        Tok::Punct('|') => p.name_list(')')?,
        _ => return Err(syntax(&t, "expected '|' or ')'")),
    };
    p.expect_punct('{')?;
    let mut rows = Vec::new();
    loop {
        let t = p.bump()?;
        match &t.tok {
            Tok::Punct('}') => break,
            Tok::Word(w) if w == "table" => {
                if !parents.is_empty() {
                    return Err(syntax(&t, "'table' rows need a parentless block; use parent tuples"));
                }
                rows.push(RawRow { tuple: None, values: p.number_list()?, line: t.line, col: t.col });
            }
            Tok::Punct('(') => {
                if parents.is_empty() {
                    return Err(syntax(&t, "parent tuples need parents; use 'table'"));
                }
                let tuple = p.name_list(')')?;
                rows.push(RawRow {
                    tuple: Some(tuple),
                    values: p.number_list()?,
                    line: t.line,
                    col: t.col,
                });
            }
            _ => return Err(syntax(&t, "expected a row, 'table', or '}'")),
        }
    }
    Ok(RawProbability { child, parents, rows })
}

/// Semantic pass: resolves names, checks coverage, arity, and row sums, and
/// renormalizes rows to sum exactly to 1.
fn resolve(
    variables: &[BifVariable],
    raw: Vec<RawProbability>,
) -> Result<Vec<BifProbability>, BifError> {
    let index: BTreeMap<&str, usize> =
        variables.iter().enumerate().map(|(i, v)| (v.name.as_str(), i)).collect();
    let lookup = |name: &(String, usize, usize)| -> Result<usize, BifError> {
        index.get(name.0.as_str()).copied().ok_or(BifError::UnknownVariable {
            line: name.1,
            col: name.2,
            name: name.0.clone(),
        })
    };

    let mut seen_child = vec![false; variables.len()];
    let mut out = Vec::with_capacity(raw.len());
    for block in raw {
        let child = lookup(&block.child)?;
        if seen_child[child] {
            return Err(BifError::DuplicateDeclaration {
                line: block.child.1,
                col: block.child.2,
                what: format!("probability block for {}", block.child.0),
            });
        }
        seen_child[child] = true;
        let child_states = variables[child].states.len();
        let parents: Vec<usize> =
            block.parents.iter().map(lookup).collect::<Result<_, _>>()?;
        let cards: Vec<usize> = parents.iter().map(|&v| variables[v].states.len()).collect();
        let row_count: usize = cards.iter().product();

        let mut seen_row: Vec<Option<usize>> = vec![None; row_count];
        let mut resolved: Vec<(Vec<String>, Vec<f64>)> = Vec::with_capacity(block.rows.len());
        for row in block.rows {
            let (tuple_names, row_index) = match &row.tuple {
                None => (Vec::new(), 0),
                Some(tuple) => {
                    if tuple.len() != parents.len() {
                        return Err(BifError::Syntax {
                            line: row.line,
                            col: row.col,
                            message: format!(
                                "tuple names {} parents but the block declares {}",
                                tuple.len(),
                                parents.len()
                            ),
                        });
                    }
                    let mut idx = 0usize;
                    let mut names = Vec::with_capacity(tuple.len());
                    for (k, state) in tuple.iter().enumerate() {
                        let var = &variables[parents[k]];
                        let s = var.states.iter().position(|s| *s == state.0).ok_or(
                            BifError::UnknownState {
                                line: state.1,
                                col: state.2,
                                variable: var.name.clone(),
                                state: state.0.clone(),
                            },
                        )?;
                        idx = idx * cards[k] + s;
                        names.push(state.0.clone());
                    }
                    (names, idx)
                }
            };
            if row.values.len() != child_states {
                return Err(BifError::ArityMismatch {
                    line: row.line,
                    col: row.col,
                    child: block.child.0.clone(),
                    got: row.values.len(),
                    want: child_states,
                });
            }
            let sum: f64 = row.values.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(BifError::RowSumViolation {
                    line: row.line,
                    col: row.col,
                    child: block.child.0.clone(),
                    sum,
                });
            }
            if seen_row[row_index].is_some() {
                return Err(BifError::DuplicateDeclaration {
                    line: row.line,
                    col: row.col,
                    what: format!("row ( {} ) of {}", tuple_names.join(", "), block.child.0),
                });
            }
            seen_row[row_index] = Some(resolved.len());
            resolved.push((tuple_names, renormalize(&row.values)));
        }
        if let Some(missing) = seen_row.iter().position(|r| r.is_none()) {
            let tuple = decode_tuple(missing, &cards)
                .iter()
                .enumerate()
                .map(|(k, &s)| variables[parents[k]].states[s].clone())
                .collect::<Vec<_>>()
                .join(", ");
            return Err(BifError::MissingRow { child: block.child.0.clone(), tuple });
        }
        out.push(BifProbability {
            child: block.child.0,
            parents: block.parents.into_iter().map(|(n, ..)| n).collect(),
            rows: resolved,
        });
    }
    Ok(out)
}

/// Mixed-radix decode of a row index, last parent fastest.
fn decode_tuple(mut index: usize, cards: &[usize]) -> Vec<usize> {
    let mut tuple = vec![0; cards.len()];
    for k in (0..cards.len()).rev() {
        tuple[k] = index % cards[k];
        index /= cards[k];
    }
    tuple
}

/// Scales a near-unit row to sum exactly to 1; the largest entry absorbs
/// the rounding residue.
fn renormalize(values: &[f64]) -> Vec<f64> {
    let sum: f64 = values.iter().sum();
    let mut out: Vec<f64> = values.iter().map(|v| v / sum).collect();
    let largest = out
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("probabilities are finite"))
        .map(|(i, _)| i)
        .expect("rows are never empty");
    let rest: f64 = out.iter().enumerate().filter(|(i, _)| *i != largest).map(|(_, v)| v).sum();
    out[largest] = 1.0 - rest;
    out
}

/// Formats a probability with enough digits to round trip below 1e-12:
/// 16 fractional digits, scientific below 1e-4 to keep significant digits.
fn format_probability(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:.16e}")
    } else {
        format!("{v:.16}")
    }
}

/// Renders a document back to BIF text. The output re-parses to an equal
/// document (probabilities within 1e-12 per entry).
pub fn serialize_bif(doc: &BifDocument) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "network {} {{", doc.network_name);
    for p in &doc.network_properties {
        let _ = writeln!(s, "  property {p};");
    }
    s.push_str("}\n");
    for v in &doc.variables {
        let _ = writeln!(s, "variable {} {{", v.name);
        let _ = writeln!(
            s,
            "  type discrete [ {} ] {{ {} }};",
            v.states.len(),
            v.states.join(", ")
        );
        for p in &v.properties {
            let _ = writeln!(s, "  property {p};");
        }
        s.push_str("}\n");
    }
    for block in &doc.probabilities {
        if block.parents.is_empty() {
            let _ = writeln!(s, "probability ( {} ) {{", block.child);
        } else {
            let _ = writeln!(s, "probability ( {} | {} ) {{", block.child, block.parents.join(", "));
        }
        for (tuple, values) in &block.rows {
            let rendered: Vec<String> = values.iter().map(|&v| format_probability(v)).collect();
            if tuple.is_empty() {
                let _ = writeln!(s, "  table {};", rendered.join(", "));
            } else {
                let _ = writeln!(s, "  ( {} ) {};", tuple.join(", "), rendered.join(", "));
            }
        }
        s.push_str("}\n");
    }
    s
}

impl BifDocument {
    /// Builds the in-memory network: orders CPT rows by parent tuple (last
    /// parent fastest) and validates the result, so cyclic parent relations
    /// and missing blocks are rejected here.
    pub fn to_network(&self) -> Result<BayesianNetwork, BifError> {
        let index: BTreeMap<&str, usize> =
            self.variables.iter().enumerate().map(|(i, v)| (v.name.as_str(), i)).collect();
        let variables: Vec<Variable> = self
            .variables
            .iter()
            .map(|v| Variable { name: v.name.clone(), states: v.states.clone() })
            .collect();

        let mut parents: Vec<Option<Vec<usize>>> = vec![None; variables.len()];
        let mut cpts: Vec<Option<Cpt>> = vec![None; variables.len()];
        for block in &self.probabilities {
            let child = index[block.child.as_str()];
            let parent_idx: Vec<usize> =
                block.parents.iter().map(|p| index[p.as_str()]).collect();
            let cards: Vec<usize> =
                parent_idx.iter().map(|&v| variables[v].states.len()).collect();
            let states = variables[child].states.len();
            let rows: usize = cards.iter().product();
            let mut values = vec![0.0; rows * states];
            for (tuple, row) in &block.rows {
                let mut r = 0usize;
                for (k, state) in tuple.iter().enumerate() {
                    let s = self.variables[parent_idx[k]]
                        .states
                        .iter()
                        .position(|x| x == state)
                        .expect("document invariants hold");
                    r = r * cards[k] + s;
                }
                values[r * states..(r + 1) * states].copy_from_slice(row);
            }
            parents[child] = Some(parent_idx);
            cpts[child] = Some(Cpt { values, rows, states });
        }

        let mut bn_parents = Vec::with_capacity(variables.len());
        let mut bn_cpts = Vec::with_capacity(variables.len());
        for (i, (p, c)) in parents.into_iter().zip(cpts).enumerate() {
            match (p, c) {
                (Some(p), Some(c)) => {
                    bn_parents.push(p);
                    bn_cpts.push(c);
                }
                _ => {
                    return Err(BifError::MissingTable {
                        variable: self.variables[i].name.clone(),
                    })
                }
            }
        }
        let bn = BayesianNetwork {
            name: self.network_name.clone(),
            variables,
            parents: bn_parents,
            cpts: bn_cpts,
        };
        bn.validate()?;
        Ok(bn)
    }

    /// Renders a network as a document; parentless variables get `table`
    /// rows, conditioned ones a row per parent tuple in index order.
    pub fn from_network(bn: &BayesianNetwork) -> BifDocument {
        let variables: Vec<BifVariable> = bn
            .variables
            .iter()
            .map(|v| BifVariable {
                name: v.name.clone(),
                states: v.states.clone(),
                properties: Vec::new(),
            })
            .collect();
        let mut probabilities = Vec::with_capacity(bn.n_variables());
        for v in 0..bn.n_variables() {
            let cpt = &bn.cpts[v];
            let mut rows = Vec::with_capacity(cpt.rows);
            for r in 0..cpt.rows {
                let tuple: Vec<String> = bn
                    .parent_states(v, r)
                    .iter()
                    .enumerate()
                    .map(|(k, &s)| bn.variables[bn.parents[v][k]].states[s].clone())
                    .collect();
                rows.push((tuple, cpt.row(r).to_vec()));
            }
            probabilities.push(BifProbability {
                child: bn.variables[v].name.clone(),
                parents: bn.parents[v].iter().map(|&p| bn.variables[p].name.clone()).collect(),
                rows,
            });
        }
        BifDocument {
            network_name: bn.name.clone(),
            network_properties: Vec::new(),
            variables,
            probabilities,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::chain;
    use crate::gen::{self, GenSpec};

    const MINIMAL: &str = "network tiny {\n}\nvariable A {\n  type discrete [ 2 ] { yes, no };\n}\nprobability ( A ) {\n  table 0.7, 0.3;\n}\n";

    fn chain_source() -> String {
        serialize_bif(&BifDocument::from_network(&chain()))
    }

    fn assert_docs_close(a: &BifDocument, b: &BifDocument) {
        assert_eq!(a.network_name, b.network_name);
        assert_eq!(a.network_properties, b.network_properties);
        assert_eq!(a.variables, b.variables);
        assert_eq!(a.probabilities.len(), b.probabilities.len());
        for (pa, pb) in a.probabilities.iter().zip(&b.probabilities) {
            assert_eq!(pa.child, pb.child);
            assert_eq!(pa.parents, pb.parents);
            assert_eq!(pa.rows.len(), pb.rows.len());
            for ((ta, va), (tb, vb)) in pa.rows.iter().zip(&pb.rows) {
                assert_eq!(ta, tb);
                assert_eq!(va.len(), vb.len());
                for (x, y) in va.iter().zip(vb) {
                    assert!((x - y).abs() < 1e-12, "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn minimal_document_parses() {
        let doc = parse_bif(MINIMAL).unwrap();
        assert_eq!(doc.network_name, "tiny");
        assert_eq!(doc.variables.len(), 1);
        assert_eq!(doc.variables[0].states, vec!["yes", "no"]);
        assert_eq!(doc.probabilities.len(), 1);
        assert_eq!(doc.probabilities[0].rows, vec![(vec![], vec![0.7, 0.3])]);
    }

    #[test]
    fn minimal_document_round_trips() {
        let doc = parse_bif(MINIMAL).unwrap();
        let again = parse_bif(&serialize_bif(&doc)).unwrap();
        assert_eq!(doc, again);
    }

    #[test]
    fn thirds_survive_round_trip() {
        let source = "network n {\n}\nvariable A {\n  type discrete [ 3 ] { a, b, c };\n}\nprobability ( A ) {\n  table 0.333333333333, 0.333333333333, 0.333333333334;\n}\n";
        let doc = parse_bif(source).unwrap();
        let again = parse_bif(&serialize_bif(&doc)).unwrap();
        for (x, y) in doc.probabilities[0].rows[0].1.iter().zip(&again.probabilities[0].rows[0].1) {
            assert!((x - y).abs() < 1e-12);
        }
        let sum: f64 = again.probabilities[0].rows[0].1.iter().sum();
        assert_eq!(sum, 1.0, "renormalization makes sums exact");
    }

    #[test]
    fn tiny_probabilities_keep_their_digits() {
        assert_eq!(format_probability(0.25), "0.2500000000000000");
        let tiny = format_probability(1.25e-9);
        assert!(tiny.starts_with("1.25") && tiny.ends_with("e-9"), "{tiny}");
        let back: f64 = tiny.parse().unwrap();
        assert_eq!(back, 1.25e-9);
    }

    #[test]
    fn conditional_rows_map_every_tuple() {
        let doc = parse_bif(&chain_source()).unwrap();
        let block = doc.probabilities.iter().find(|p| p.child == "B").unwrap();
        assert_eq!(block.parents, vec!["A"]);
        assert_eq!(block.rows.len(), 2);
        assert_eq!(block.rows[0].0, vec!["1"]);
        assert_eq!(block.rows[1].0, vec!["0"]);
    }

    #[test]
    fn comments_and_properties_are_handled() {
        let source = "// leading comment\nnetwork n { /* block\n comment */ property author = nobody; }\nvariable A {\n  type discrete [ 2 ] { y, n }; // trailing\n  property position = (10, 20);\n}\nprobability ( A ) { table 0.5, 0.5; }\n";
        let doc = parse_bif(source).unwrap();
        assert_eq!(doc.network_properties, vec!["author = nobody"]);
        assert_eq!(doc.variables[0].properties, vec!["position = (10, 20)"]);
        let again = parse_bif(&serialize_bif(&doc)).unwrap();
        assert_eq!(doc, again);
    }

    #[test]
    fn row_sum_violation_is_reported_with_position() {
        let bad = MINIMAL.replace("0.7, 0.3", "0.7, 0.4");
        match parse_bif(&bad).unwrap_err() {
            BifError::RowSumViolation { line, child, sum, .. } => {
                assert_eq!(line, 7, "the offending row is on line 7");
                assert_eq!(child, "A");
                assert!((sum - 1.1).abs() < 1e-12);
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_bif("network n {\n}\nvariable A {\n  type discrete [ 2 ] { y, n }\n}\n").unwrap_err();
        match err {
            BifError::Syntax { line, .. } => assert_eq!(line, 5, "missing semicolon spotted at '}}'"),
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn unknown_names_are_rejected() {
        let source = MINIMAL.replace("( A )", "( Z )");
        assert!(matches!(parse_bif(&source).unwrap_err(), BifError::UnknownVariable { name, .. } if name == "Z"));
        let source = chain_source().replace("( 1 ) 0.9", "( maybe ) 0.9");
        assert!(matches!(
            parse_bif(&source).unwrap_err(),
            BifError::UnknownState { state, .. } if state == "maybe"
        ));
    }

    #[test]
    fn arity_mismatch_is_rejected() {
        let source = MINIMAL.replace("0.7, 0.3", "0.5, 0.3, 0.2");
        assert!(matches!(
            parse_bif(&source).unwrap_err(),
            BifError::ArityMismatch { got: 3, want: 2, .. }
        ));
    }

    #[test]
    fn missing_row_names_the_first_uncovered_tuple() {
        let source = chain_source().replace("  ( 0 ) 0.2000000000000000, 0.8000000000000000;\n", "");
        match parse_bif(&source).unwrap_err() {
            BifError::MissingRow { child, tuple } => {
                assert_eq!(child, "B");
                assert_eq!(tuple, "0");
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn duplicates_are_rejected() {
        let dup_var = format!("{MINIMAL}variable A {{\n  type discrete [ 2 ] {{ y, n }};\n}}\n");
        assert!(matches!(parse_bif(&dup_var).unwrap_err(), BifError::DuplicateDeclaration { .. }));
        let dup_block = format!("{MINIMAL}probability ( A ) {{ table 0.5, 0.5; }}\n");
        assert!(matches!(parse_bif(&dup_block).unwrap_err(), BifError::DuplicateDeclaration { .. }));
        let dup_row = chain_source().replace(
            "  ( 0 ) 0.2",
            "  ( 1 ) 0.9000000000000000, 0.1000000000000000;\n  ( 0 ) 0.2",
        );
        assert!(matches!(parse_bif(&dup_row).unwrap_err(), BifError::DuplicateDeclaration { .. }));
    }

    #[test]
    fn decision_nodes_are_unsupported() {
        let source = MINIMAL.replace("discrete", "decision");
        assert!(matches!(
            parse_bif(&source).unwrap_err(),
            BifError::UnsupportedType { kind, .. } if kind == "decision"
        ));
    }

    #[test]
    fn table_and_tuple_rows_do_not_mix() {
        let source = chain_source().replace("( 1 ) 0.9000000000000000, 0.1000000000000000;", "table 0.9, 0.1;");
        assert!(matches!(parse_bif(&source).unwrap_err(), BifError::Syntax { .. }));
        let source = MINIMAL.replace("table 0.7, 0.3;", "( yes ) 0.7, 0.3;");
        assert!(matches!(parse_bif(&source).unwrap_err(), BifError::Syntax { .. }));
    }

    #[test]
    fn network_round_trips_through_text() {
        let bn = chain();
        let doc = BifDocument::from_network(&bn);
        let back = parse_bif(&serialize_bif(&doc)).unwrap().to_network().unwrap();
        assert_eq!(back.name, bn.name);
        assert_eq!(back.parents, bn.parents);
        for (a, b) in back.cpts.iter().zip(&bn.cpts) {
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cyclic_documents_fail_network_validation() {
        let source = "network loop {\n}\nvariable A {\n  type discrete [ 2 ] { y, n };\n}\nvariable B {\n  type discrete [ 2 ] { y, n };\n}\nprobability ( A | B ) {\n  ( y ) 0.5, 0.5;\n  ( n ) 0.5, 0.5;\n}\nprobability ( B | A ) {\n  ( y ) 0.5, 0.5;\n  ( n ) 0.5, 0.5;\n}\n";
        let doc = parse_bif(source).unwrap();
        assert!(matches!(doc.to_network().unwrap_err(), BifError::Model(ModelError::CycleDetected { .. })));
    }

    #[test]
    fn missing_probability_block_is_rejected() {
        let source = "network n {\n}\nvariable A {\n  type discrete [ 2 ] { y, n };\n}\n";
        let doc = parse_bif(source).unwrap();
        assert!(matches!(
            doc.to_network().unwrap_err(),
            BifError::MissingTable { variable } if variable == "A"
        ));
    }

    #[test]
    fn random_documents_round_trip() {
        for seed in 0..12 {
            let bn = gen::random_network(&GenSpec::small(2 + (seed as usize % 7)), seed);
            let doc = BifDocument::from_network(&bn);
            let again = parse_bif(&serialize_bif(&doc)).unwrap();
            assert_docs_close(&doc, &again);
            let net = again.to_network().unwrap();
            assert_eq!(net.parents, bn.parents);
        }
    }
}
