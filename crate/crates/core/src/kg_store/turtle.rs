//! A Turtle subset: `@prefix`/`PREFIX` directives, `subject predicate object .`
//! statements (with `;` and `,` abbreviations and `a`), IRIs in angle brackets or
//! as prefixed names, double-quoted literals with an optional `^^` datatype, and
//! `#` comments. No blank nodes, collections or language tags.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::graph::Graph;
use super::term::{escape_literal, Iri, Literal, Object, Triple};
use super::KgError;

pub const KGMAS_NS: &str = "http://kgmas.example/vocab#";
pub const RDF_NS: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema#";

/// Prefixes written at the top of every dump, in this order.
pub const CANONICAL_PREFIXES: &[(&str, &str)] =
    &[("kgmas", KGMAS_NS), ("rdf", RDF_NS), ("xsd", XSD_NS)];

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col: usize,
    prefixes: BTreeMap<String, String>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0, line: 1, col: 1, prefixes: BTreeMap::new() }
    }

    fn err(&self, message: impl Into<String>) -> KgError {
        KgError::Parse { line: self.line, column: self.col, message: message.into() }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn expect(&mut self, c: char) -> Result<(), KgError> {
        self.skip_ws();
        match self.peek() {
            Some(found) if found == c => {
                self.bump();
                Ok(())
            }
            Some(found) => Err(self.err(format!("expected '{c}', found '{found}'"))),
            None => Err(self.err(format!("expected '{c}', found end of input"))),
        }
    }

    fn keyword(&mut self, kw: &str, case_insensitive: bool) -> bool {
        let rest = self.rest();
        if rest.len() < kw.len() || !rest.is_char_boundary(kw.len()) {
            return false;
        }
        let head = &rest[..kw.len()];
        let hit = if case_insensitive { head.eq_ignore_ascii_case(kw) } else { head == kw };
        let boundary = rest[kw.len()..].chars().next().is_none_or(|c| c.is_whitespace() || c == '<');
        if hit && boundary {
            for _ in 0..kw.chars().count() {
                self.bump();
            }
            true
        } else {
            false
        }
    }

    fn parse_document(&mut self) -> Result<Vec<Triple>, KgError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            if self.peek().is_none() {
                return Ok(out);
            }
            if self.keyword("@prefix", false) {
                self.parse_prefix_body()?;
                self.expect('.')?;
            } else if self.keyword("PREFIX", true) {
                self.parse_prefix_body()?;
            } else {
                self.parse_statement(&mut out)?;
            }
        }
    }

    fn parse_prefix_body(&mut self) -> Result<(), KgError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c == ':' {
                break;
            }
            if !(c.is_alphanumeric() || c == '_' || c == '-' || c == '.') {
                return Err(self.err(format!("invalid character '{c}' in prefix name")));
            }
            self.bump();
        }
        let name = self.src[start..self.pos].to_string();
        self.expect(':')?;
        self.skip_ws();
        let iri = self.parse_iriref()?;
        self.prefixes.insert(name, iri.as_str().to_string());
        Ok(())
    }

    fn parse_statement(&mut self, out: &mut Vec<Triple>) -> Result<(), KgError> {
        let subject = self.parse_iri()?;
        loop {
            self.skip_ws();
            let predicate = if self.keyword("a", false) {
                Iri::new(format!("{RDF_NS}type"))?
            } else {
                self.parse_iri()?
            };
            loop {
                let object = self.parse_object()?;
                out.push(Triple::new(subject.clone(), predicate.clone(), object));
                self.skip_ws();
                if self.peek() == Some(',') {
                    self.bump();
                } else {
                    break;
                }
            }
            self.skip_ws();
            match self.peek() {
                Some(';') => {
                    // repeated or trailing semicolons are allowed
                    while self.peek() == Some(';') {
                        self.bump();
                        self.skip_ws();
                    }
                    if self.peek() == Some('.') {
                        self.bump();
                        return Ok(());
                    }
                }
                Some('.') => {
                    self.bump();
                    return Ok(());
                }
                Some(c) => return Err(self.err(format!("expected '.', ';' or ',', found '{c}'"))),
                None => return Err(self.err("unterminated statement")),
            }
        }
    }

    fn parse_iri(&mut self) -> Result<Iri, KgError> {
        self.skip_ws();
        match self.peek() {
            Some('<') => self.parse_iriref(),
            Some('"') => Err(self.err("literal not allowed in subject or predicate position")),
            Some('_') if self.rest().starts_with("_:") => Err(self.err("blank nodes are not supported")),
            Some(_) => self.parse_prefixed_name(),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn parse_iriref(&mut self) -> Result<Iri, KgError> {
        let (line, col) = (self.line, self.col);
        self.expect('<')?;
        let start = self.pos;
        loop {
            match self.bump() {
                Some('>') => break,
                Some('\n') | None => return Err(self.err("unterminated IRI")),
                Some(_) => {}
            }
        }
        let text = &self.src[start..self.pos - 1];
        Iri::new(text).map_err(|e| KgError::Parse { line, column: col, message: e.to_string() })
    }

    fn parse_prefixed_name(&mut self) -> Result<Iri, KgError> {
        let (line, col) = (self.line, self.col);
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c == ':' {
                break;
            }
            if !(c.is_alphanumeric() || c == '_' || c == '-' || c == '.') {
                return Err(self.err(format!("unexpected character '{c}'")));
            }
            self.bump();
        }
        if self.peek() != Some(':') {
            return Err(self.err("expected a prefixed name or <IRI>"));
        }
        let prefix = self.src[start..self.pos].to_string();
        self.bump();
        let local_start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' || c == '-' || c == ':' {
                self.bump();
            } else if c == '.' {
                // a dot is part of the name only when followed by a name character
                let next = self.rest()[1..].chars().next();
                if next.is_some_and(|n| n.is_alphanumeric() || n == '_' || n == '-' || n == ':') {
                    self.bump();
                } else {
                    break;
                }
            } else {
                break;
            }
        }
        let local = &self.src[local_start..self.pos];
        let Some(ns) = self.prefixes.get(&prefix) else {
            return Err(KgError::Parse { line, column: col, message: format!("undeclared prefix '{prefix}:'") });
        };
        Iri::new(format!("{ns}{local}")).map_err(|e| KgError::Parse { line, column: col, message: e.to_string() })
    }

    fn parse_object(&mut self) -> Result<Object, KgError> {
        self.skip_ws();
        if self.peek() == Some('"') {
            return self.parse_literal().map(Object::Literal);
        }
        self.parse_iri().map(Object::Iri)
    }

    fn parse_literal(&mut self) -> Result<Literal, KgError> {
        let (line, column) = (self.line, self.col);
        let unterminated = || KgError::Parse { line, column, message: "unterminated literal".into() };
        self.expect('"')?;
        let mut lexical = String::new();
        loop {
            match self.bump() {
                Some('"') => break,
                Some('\\') => {
                    let c = match self.bump() {
                        Some('"') => '"',
                        Some('\\') => '\\',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('t') => '\t',
                        Some('\'') => '\'',
                        Some(c) => return Err(self.err(format!("unknown escape '\\{c}'"))),
                        None => return Err(unterminated()),
                    };
                    lexical.push(c);
                }
                Some('\n') | None => return Err(unterminated()),
                Some(c) => lexical.push(c),
            }
        }
        if self.rest().starts_with("^^") {
            self.bump();
            self.bump();
            let datatype = self.parse_iri()?;
            return Ok(Literal::typed(lexical, datatype));
        }
        if self.peek() == Some('@') {
            return Err(self.err("language tags are not supported"));
        }
        Ok(Literal::plain(lexical))
    }
}

/// Parse a document into its triples (possibly with repeats).
pub fn parse(text: &str) -> Result<Vec<Triple>, KgError> {
    Parser::new(text).parse_document()
}

fn is_safe_local(local: &str) -> bool {
    let mut chars = local.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn write_iri(out: &mut String, iri: &Iri) {
    for (prefix, ns) in CANONICAL_PREFIXES {
        if let Some(local) = iri.as_str().strip_prefix(ns) {
            if is_safe_local(local) {
                let _ = write!(out, "{prefix}:{local}");
                return;
            }
        }
    }
    let _ = write!(out, "<{}>", iri.as_str());
}

fn write_object(out: &mut String, o: &Object) {
    match o {
        Object::Iri(i) => write_iri(out, i),
        Object::Literal(l) => {
            let _ = write!(out, "\"{}\"", escape_literal(&l.lexical));
            if let Some(dt) = &l.datatype {
                out.push_str("^^");
                write_iri(out, dt);
            }
        }
    }
}

/// Canonical serialization: the prefix header, then one statement per line in
/// (subject, predicate, object) order.
pub fn serialize(graph: &Graph) -> String {
    let mut out = String::new();
    for (prefix, ns) in CANONICAL_PREFIXES {
        let _ = writeln!(out, "@prefix {prefix}: <{ns}> .");
    }
    for t in graph.iter() {
        write_iri(&mut out, &t.subject);
        out.push(' ');
        write_iri(&mut out, &t.predicate);
        out.push(' ');
        write_object(&mut out, &t.object);
        out.push_str(" .\n");
    }
    out
}
