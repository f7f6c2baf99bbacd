//! Rendering, simplification, and parsing of expression trees.
//!
//! Rendering is structure-preserving: the emitted infix string parses back
//! to the same operator tree, so evaluation agrees bit for bit. Display
//! strings round constants to 3 significant figures; the precise variant
//! emits shortest-round-trip decimals for lossless persistence.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gp::expr::{apply_op, slots_for_depth, ExprTree, Op, Symbol};

/// Parsed expressions may not nest deeper than this: template storage grows
/// exponentially with depth.
const MAX_PARSE_DEPTH: u32 = 12;

/// Recursive view of the active part of a template tree.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Const(f64),
    Var(String),
    Op(Op, Vec<Node>),
}

pub(crate) fn extract_node(tree: &ExprTree) -> Node {
    fn walk(tree: &ExprTree, k: usize) -> Node {
        match tree.nodes()[k] {
            Symbol::Const(c) => Node::Const(c),
            Symbol::Var(i) => Node::Var(tree.variables()[i as usize].clone()),
            Symbol::Op(op) => {
                let children = (0..op.arity()).map(|j| walk(tree, 3 * k + j + 1)).collect();
                Node::Op(op, children)
            }
        }
    }
    walk(tree, 0)
}

fn as_const(n: &Node) -> Option<f64> {
    match n {
        Node::Const(c) => Some(*c),
        _ => None,
    }
}

/// Bottom-up algebraic reduction: folds all-constant subtrees with the same
/// arithmetic evaluation uses, prunes additive/multiplicative identities, and
/// resolves constant conditions. Every rule preserves the evaluated value on
/// all inputs.
pub(crate) fn reduce_node(node: Node) -> Node {
    let node = match node {
        Node::Op(op, children) => {
            Node::Op(op, children.into_iter().map(reduce_node).collect())
        }
        terminal => return terminal,
    };
    let Node::Op(op, children) = node else {
        unreachable!()
    };

    // All children constant: fold through the shared operator semantics.
    if let Some(args) = children.iter().map(as_const).collect::<Option<Vec<f64>>>() {
        return Node::Const(apply_op(op, &args));
    }

    let is = |n: &Node, v: f64| as_const(n) == Some(v);
    match op {
        Op::Add => {
            if is(&children[1], 0.0) {
                return children.into_iter().next().unwrap();
            }
            if is(&children[0], 0.0) {
                return children.into_iter().nth(1).unwrap();
            }
        }
        Op::Sub => {
            if is(&children[1], 0.0) {
                return children.into_iter().next().unwrap();
            }
        }
        Op::Mul => {
            if is(&children[1], 1.0) {
                return children.into_iter().next().unwrap();
            }
            if is(&children[0], 1.0) {
                return children.into_iter().nth(1).unwrap();
            }
            if is(&children[0], 0.0) || is(&children[1], 0.0) {
                return Node::Const(0.0);
            }
        }
        Op::Div => {
            if is(&children[1], 1.0) {
                return children.into_iter().next().unwrap();
            }
        }
        Op::IfThenElse => {
            if let Some(c) = as_const(&children[0]) {
                let branch = if c != 0.0 { 1 } else { 2 };
                return children.into_iter().nth(branch).unwrap();
            }
        }
        Op::And => {
            // false AND x is false regardless of x.
            if is(&children[0], 0.0) || is(&children[1], 0.0) {
                return Node::Const(0.0);
            }
        }
        Op::Or => {
            // true OR x is true regardless of x.
            if children.iter().any(|c| matches!(as_const(c), Some(v) if v != 0.0)) {
                return Node::Const(1.0);
            }
        }
        _ => {}
    }
    Node::Op(op, children)
}

pub(crate) fn node_depth(node: &Node) -> u32 {
    match node {
        Node::Const(_) | Node::Var(_) => 0,
        Node::Op(_, children) => 1 + children.iter().map(node_depth).max().unwrap_or(0),
    }
}

/// Materializes a recursive node back into a heap template. With
/// `vocabulary: Some(v)`, variable names resolve against `v` (unknown names
/// are an error); otherwise the vocabulary is the variables in order of first
/// appearance.
pub(crate) fn node_to_tree(node: &Node, vocabulary: Option<&Arc<Vec<String>>>) -> Result<ExprTree> {
    let depth = node_depth(node);
    if depth > MAX_PARSE_DEPTH {
        return Err(Error::InvalidInput(format!(
            "expression nests {depth} levels deep; the template limit is {MAX_PARSE_DEPTH}"
        )));
    }
    let vars: Arc<Vec<String>> = match vocabulary {
        Some(v) => Arc::clone(v),
        None => {
            let mut names = Vec::new();
            collect_vars(node, &mut names);
            Arc::new(names)
        }
    };
    let index: HashMap<&str, u32> = vars
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i as u32))
        .collect();
    let mut nodes = vec![Symbol::Const(0.0); slots_for_depth(depth)];
    place(node, 0, &mut nodes, &index)?;
    ExprTree::from_parts(depth, nodes, vars)
}

fn collect_vars(node: &Node, names: &mut Vec<String>) {
    match node {
        Node::Var(v) => {
            if !names.iter().any(|n| n == v) {
                names.push(v.clone());
            }
        }
        Node::Op(_, children) => {
            for c in children {
                collect_vars(c, names);
            }
        }
        Node::Const(_) => {}
    }
}

fn place(
    node: &Node,
    k: usize,
    nodes: &mut [Symbol],
    index: &HashMap<&str, u32>,
) -> Result<()> {
    match node {
        Node::Const(c) => nodes[k] = Symbol::Const(*c),
        Node::Var(v) => {
            let i = index
                .get(v.as_str())
                .ok_or_else(|| Error::UnknownVariable(v.clone()))?;
            nodes[k] = Symbol::Var(*i);
        }
        Node::Op(op, children) => {
            nodes[k] = Symbol::Op(*op);
            for (j, c) in children.iter().enumerate() {
                place(c, 3 * k + j + 1, nodes, index)?;
            }
        }
    }
    Ok(())
}

/// Returns an evaluation-equivalent tree with constants folded, identities
/// pruned, and constant conditions resolved. The variable vocabulary is
/// preserved.
pub fn simplify(tree: &ExprTree) -> ExprTree {
    let reduced = reduce_node(extract_node(tree));
    node_to_tree(&reduced, Some(tree.vars_arc()))
        .expect("simplification cannot grow depth or invent variables")
}

// ── Rendering ─────────────────────────────────────────────────────────────

const PREC_CMP: u8 = 1;
const PREC_ADD: u8 = 2;
const PREC_MUL: u8 = 3;
const PREC_ATOM: u8 = 4;

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Op(Op::Lt | Op::Ge, _) => PREC_CMP,
        Node::Op(Op::Add | Op::Sub, _) => PREC_ADD,
        Node::Op(Op::Mul | Op::Div, _) => PREC_MUL,
        _ => PREC_ATOM,
    }
}

/// Rounds to 3 significant figures, then prints the rounded value's shortest
/// decimal form.
fn format_const_display(c: f64) -> String {
    if c == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{c:.2e}").parse().expect("scientific form is valid");
    format!("{rounded}")
}

fn format_const(c: f64, precise: bool) -> String {
    if precise {
        format!("{c}")
    } else {
        format_const_display(c)
    }
}

fn render(node: &Node, precise: bool) -> String {
    let wrap = |child: &Node, min_prec: u8| {
        let s = render(child, precise);
        if precedence(child) < min_prec {
            format!("({s})")
        } else {
            s
        }
    };
    match node {
        Node::Const(c) => format_const(*c, precise),
        Node::Var(v) => v.clone(),
        Node::Op(op, ch) => match op {
            Op::Add => {
                // Render a negative constant addend as subtraction.
                if let Node::Const(c) = ch[1] {
                    if c < 0.0 {
                        return format!("{} - {}", wrap(&ch[0], PREC_ADD), format_const(-c, precise));
                    }
                }
                format!("{} + {}", wrap(&ch[0], PREC_ADD), wrap(&ch[1], PREC_ADD + 1))
            }
            Op::Sub => format!("{} - {}", wrap(&ch[0], PREC_ADD), wrap(&ch[1], PREC_ADD + 1)),
            Op::Mul => format!("{} * {}", wrap(&ch[0], PREC_MUL), wrap(&ch[1], PREC_MUL + 1)),
            Op::Div => format!("{} / {}", wrap(&ch[0], PREC_MUL), wrap(&ch[1], PREC_MUL + 1)),
            Op::Lt => format!("{} < {}", wrap(&ch[0], PREC_CMP + 1), wrap(&ch[1], PREC_CMP + 1)),
            Op::Ge => format!("{} >= {}", wrap(&ch[0], PREC_CMP + 1), wrap(&ch[1], PREC_CMP + 1)),
            Op::And => format!("and({}, {})", render(&ch[0], precise), render(&ch[1], precise)),
            Op::Or => format!("or({}, {})", render(&ch[0], precise), render(&ch[1], precise)),
            Op::Not => format!("not({})", render(&ch[0], precise)),
            Op::IfThenElse => format!(
                "If({}) Then({}) Else({})",
                render(&ch[0], precise),
                render(&ch[1], precise),
                render(&ch[2], precise)
            ),
        },
    }
}

/// Human-readable infix rendering: simplified, minimal parentheses, constants
/// at 3 significant figures. The tree itself is not modified.
pub fn format_expr(tree: &ExprTree) -> String {
    render(&reduce_node(extract_node(tree)), false)
}

/// Lossless infix rendering: simplified structure with shortest-round-trip
/// constants, suitable for persistence and re-parsing.
pub fn format_expr_precise(tree: &ExprTree) -> String {
    render(&reduce_node(extract_node(tree)), true)
}

// ── Parsing ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Less,
    GreaterEq,
    LParen,
    RParen,
    Comma,
}

fn tokenize(s: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push((i, Tok::Plus));
                i += 1;
            }
            '-' => {
                out.push((i, Tok::Minus));
                i += 1;
            }
            '*' => {
                out.push((i, Tok::Star));
                i += 1;
            }
            '/' => {
                out.push((i, Tok::Slash));
                i += 1;
            }
            '<' => {
                out.push((i, Tok::Less));
                i += 1;
            }
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push((i, Tok::GreaterEq));
                    i += 2;
                } else {
                    return Err(Error::Parse {
                        position: i,
                        message: "expected '>=' (only '<' and '>=' comparisons exist)".into(),
                    });
                }
            }
            '(' => {
                out.push((i, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((i, Tok::RParen));
                i += 1;
            }
            ',' => {
                out.push((i, Tok::Comma));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // Optional exponent part.
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &s[start..i];
                let value: f64 = text.parse().map_err(|_| Error::Parse {
                    position: start,
                    message: format!("invalid number '{text}'"),
                })?;
                out.push((start, Tok::Num(value)));
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push((start, Tok::Ident(s[start..i].to_string())));
            }
            _ => {
                return Err(Error::Parse {
                    position: i,
                    message: format!("unexpected character '{c}'"),
                });
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [(usize, Tok)],
    pos: usize,
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.len, |(p, _)| *p)
    }

    fn bump(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t);
        self.pos += 1;
        t
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            position: self.here(),
            message: message.into(),
        })
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<()> {
        if self.peek() == Some(want) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected {what}"))
        }
    }

    fn expect_keyword(&mut self, word: &str) -> Result<()> {
        match self.peek() {
            Some(Tok::Ident(w)) if w == word => {
                self.pos += 1;
                Ok(())
            }
            _ => self.fail(format!("expected '{word}'")),
        }
    }

    /// expr := sum (('<' | '>=') sum)?
    fn expr(&mut self) -> Result<Node> {
        let left = self.sum()?;
        let op = match self.peek() {
            Some(Tok::Less) => Op::Lt,
            Some(Tok::GreaterEq) => Op::Ge,
            _ => return Ok(left),
        };
        self.pos += 1;
        let right = self.sum()?;
        Ok(Node::Op(op, vec![left, right]))
    }

    fn sum(&mut self) -> Result<Node> {
        let mut node = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => Op::Add,
                Some(Tok::Minus) => Op::Sub,
                _ => return Ok(node),
            };
            self.pos += 1;
            let rhs = self.term()?;
            node = Node::Op(op, vec![node, rhs]);
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut node = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => Op::Mul,
                Some(Tok::Slash) => Op::Div,
                _ => return Ok(node),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            node = Node::Op(op, vec![node, rhs]);
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            // A minus directly before a number negates the literal; anything
            // else becomes 0 - expr.
            if let Some(Tok::Num(v)) = self.peek() {
                let v = *v;
                self.pos += 1;
                return Ok(Node::Const(-v));
            }
            let inner = self.unary()?;
            return Ok(Node::Op(Op::Sub, vec![Node::Const(0.0), inner]));
        }
        self.atom()
    }

    fn call_args(&mut self, n: usize, what: &str) -> Result<Vec<Node>> {
        self.expect(&Tok::LParen, &format!("'(' after {what}"))?;
        let mut args = Vec::with_capacity(n);
        for j in 0..n {
            if j > 0 {
                self.expect(&Tok::Comma, "','")?;
            }
            args.push(self.expr()?);
        }
        self.expect(&Tok::RParen, "')'")?;
        Ok(args)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.bump().cloned() {
            Some(Tok::Num(v)) => Ok(Node::Const(v)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(&Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some(Tok::Ident(word)) => match word.as_str() {
                "If" => {
                    self.expect(&Tok::LParen, "'(' after If")?;
                    let cond = self.expr()?;
                    self.expect(&Tok::RParen, "')'")?;
                    self.expect_keyword("Then")?;
                    self.expect(&Tok::LParen, "'(' after Then")?;
                    let then = self.expr()?;
                    self.expect(&Tok::RParen, "')'")?;
                    self.expect_keyword("Else")?;
                    self.expect(&Tok::LParen, "'(' after Else")?;
                    let otherwise = self.expr()?;
                    self.expect(&Tok::RParen, "')'")?;
                    Ok(Node::Op(Op::IfThenElse, vec![cond, then, otherwise]))
                }
                "and" => Ok(Node::Op(Op::And, self.call_args(2, "and")?)),
                "or" => Ok(Node::Op(Op::Or, self.call_args(2, "or")?)),
                "not" => Ok(Node::Op(Op::Not, self.call_args(1, "not")?)),
                "Then" | "Else" => {
                    self.pos -= 1;
                    self.fail(format!("'{word}' is a reserved word"))
                }
                _ => Ok(Node::Var(word)),
            },
            _ => self.fail("expected a number, variable, or '('"),
        }
    }
}

/// Parses an infix expression back into a template tree. The vocabulary is
/// the variables in order of first appearance.
pub fn parse_expr(s: &str) -> Result<ExprTree> {
    let toks = tokenize(s)?;
    if toks.is_empty() {
        return Err(Error::Parse {
            position: 0,
            message: "empty expression".into(),
        });
    }
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        len: s.len(),
    };
    let node = p.expr()?;
    if p.pos != toks.len() {
        return p.fail("unexpected trailing input");
    }
    node_to_tree(&node, None)
}
