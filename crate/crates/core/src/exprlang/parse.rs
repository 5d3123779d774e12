use super::{BatchStat, BinaryOp, Expr, UnaryOp};

/// Parenthesis nesting accepted by the parser.
pub const MAX_NESTING: usize = 512;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {position}: expected one of {expected:?}, found {found:?}")]
    Syntax {
        position: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("arity error at byte {position}: `{op}` takes {want} argument(s), got {got}")]
    Arity {
        position: usize,
        op: String,
        got: usize,
        want: usize,
    },
    #[error("pow exponent at byte {position} must be a constant")]
    NonConstExponent { position: usize },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { position, .. }
            | ParseError::Arity { position, .. }
            | ParseError::NonConstExponent { position } => *position,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
    }

    /// Next token and its starting byte offset.
    fn next(&mut self) -> (Tok<'a>, usize) {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        match rest.chars().next() {
            None => (Tok::End, start),
            Some('(') => {
                self.pos += 1;
                (Tok::Open, start)
            }
            Some(')') => {
                self.pos += 1;
                (Tok::Close, start)
            }
            Some(_) => {
                let len = rest
                    .find(|c: char| c.is_whitespace() || c == '(' || c == ')')
                    .unwrap_or(rest.len());
                self.pos += len;
                (Tok::Atom(&rest[..len]), start)
            }
        }
    }

    fn peek(&mut self) -> (Tok<'a>, usize) {
        let saved = self.pos;
        let t = self.next();
        self.pos = saved;
        t
    }
}

fn is_number_literal(s: &str) -> bool {
    let b = s.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - int_start;
    if i < b.len() && b[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        digits += i - frac_start;
    }
    if digits == 0 {
        return false;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        let exp_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return false;
        }
    }
    i == b.len()
}

enum OpKind {
    Unary(UnaryOp),
    Binary(BinaryOp),
    Batch(BatchStat),
}

fn lookup_op(name: &str) -> Option<OpKind> {
    UnaryOp::ALL
        .iter()
        .find(|o| o.name() == name)
        .map(|&o| OpKind::Unary(o))
        .or_else(|| {
            BinaryOp::ALL
                .iter()
                .find(|o| o.name() == name)
                .map(|&o| OpKind::Binary(o))
        })
        .or_else(|| {
            BatchStat::ALL
                .iter()
                .find(|o| o.name() == name)
                .map(|&o| OpKind::Batch(o))
        })
}

fn all_op_names() -> Vec<String> {
    UnaryOp::ALL
        .iter()
        .map(|o| o.name())
        .chain(BinaryOp::ALL.iter().map(|o| o.name()))
        .chain(BatchStat::ALL.iter().map(|o| o.name()))
        .map(String::from)
        .collect()
}

fn describe(tok: &Tok<'_>) -> String {
    match tok {
        Tok::Open => "(".into(),
        Tok::Close => ")".into(),
        Tok::Atom(a) => (*a).into(),
        Tok::End => "end of input".into(),
    }
}

fn syntax(position: usize, expected: &[&str], tok: &Tok<'_>) -> ParseError {
    ParseError::Syntax {
        position,
        expected: expected.iter().map(|s| s.to_string()).collect(),
        found: describe(tok),
    }
}

const EXPR_START: [&str; 3] = ["x", "number", "("];

struct Parser<'a> {
    lex: Lexer<'a>,
}

impl<'a> Parser<'a> {
    fn expr(&mut self, nesting: usize) -> Result<Expr, ParseError> {
        let (tok, pos) = self.lex.next();
        match tok {
            Tok::Atom("x") => Ok(Expr::Input),
            Tok::Atom(a) if is_number_literal(a) => match a.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Expr::Const(v)),
                _ => Err(ParseError::Syntax {
                    position: pos,
                    expected: vec!["finite number".into()],
                    found: a.into(),
                }),
            },
            Tok::Open => {
                if nesting >= MAX_NESTING {
                    return Err(ParseError::Syntax {
                        position: pos,
                        expected: vec![format!("nesting depth <= {MAX_NESTING}")],
                        found: "(".into(),
                    });
                }
                self.application(pos, nesting + 1)
            }
            other => Err(syntax(pos, &EXPR_START, &other)),
        }
    }

    fn application(&mut self, open_pos: usize, nesting: usize) -> Result<Expr, ParseError> {
        let (tok, pos) = self.lex.next();
        let (name, kind) = match tok {
            Tok::Atom(a) => match lookup_op(a) {
                Some(k) => (a, k),
                None => {
                    return Err(ParseError::Syntax {
                        position: pos,
                        expected: all_op_names(),
                        found: a.into(),
                    })
                }
            },
            other => {
                return Err(ParseError::Syntax {
                    position: pos,
                    expected: all_op_names(),
                    found: describe(&other),
                })
            }
        };
        let mut args = Vec::new();
        let mut arg_pos = Vec::new();
        loop {
            let (tok, p) = self.lex.peek();
            match tok {
                Tok::Close => {
                    self.lex.next();
                    break;
                }
                Tok::End => {
                    let mut expected = EXPR_START.to_vec();
                    expected.push(")");
                    return Err(syntax(p, &expected, &tok));
                }
                _ => {
                    arg_pos.push(p);
                    args.push(self.expr(nesting)?);
                }
            }
        }
        let want = match kind {
            OpKind::Unary(_) | OpKind::Batch(_) => 1,
            OpKind::Binary(_) => 2,
        };
        if args.len() != want {
            return Err(ParseError::Arity {
                position: open_pos,
                op: name.into(),
                got: args.len(),
                want,
            });
        }
        let mut args = args.into_iter();
        let first = args.next().expect("arity checked");
        Ok(match kind {
            OpKind::Unary(op) => Expr::unary(op, first),
            OpKind::Batch(stat) => Expr::batch(stat, first),
            OpKind::Binary(op) => {
                let second = args.next().expect("arity checked");
                if op == BinaryOp::Pow && !matches!(second, Expr::Const(_)) {
                    return Err(ParseError::NonConstExponent {
                        position: arg_pos[1],
                    });
                }
                Expr::binary(op, first, second)
            }
        })
    }
}

/// Parse the s-expression text form of an activation.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        lex: Lexer { src: text, pos: 0 },
    };
    let e = p.expr(0)?;
    let (tok, pos) = p.lex.next();
    if tok != Tok::End {
        return Err(syntax(pos, &["end of input"], &tok));
    }
    Ok(e)
}
