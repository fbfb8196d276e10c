//! Prefix expression grammar for variety components: s-expressions over
//! named variables, exact rational literals and the operators
//! `+ - * / ^` (integer exponents, possibly negative, giving Laurent
//! monomials).
//!
//! Evaluation is exact; derivatives come from forward-mode dual numbers
//! over the rationals, so Jacobians are exact at every sample point.

use std::fmt::Write as _;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::rat::{format_rat, parse_rat, Rat};

/// Expression over variables indexed `0..nvars`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VExpr {
    Const(Rat),
    Var(usize),
    Add(Vec<VExpr>),
    Sub(Box<VExpr>, Box<VExpr>),
    Mul(Vec<VExpr>),
    Div(Box<VExpr>, Box<VExpr>),
    Pow(Box<VExpr>, i64),
}

impl VExpr {
    /// Exact evaluation; vanishing denominators are degenerate samples.
    pub fn eval(&self, args: &[Rat]) -> Result<Rat> {
        Ok(self.eval_dual(args, usize::MAX)?.0)
    }

    /// Forward-mode evaluation: value and derivative along variable
    /// `direction` (pass `usize::MAX` for value-only).
    pub fn eval_dual(&self, args: &[Rat], direction: usize) -> Result<(Rat, Rat)> {
        match self {
            VExpr::Const(c) => Ok((c.clone(), Rat::zero())),
            VExpr::Var(i) => {
                let v = args
                    .get(*i)
                    .cloned()
                    .ok_or(Error::BadIndex(*i))?;
                let d = if *i == direction { Rat::one() } else { Rat::zero() };
                Ok((v, d))
            }
            VExpr::Add(xs) => {
                let mut v = Rat::zero();
                let mut d = Rat::zero();
                for x in xs {
                    let (xv, xd) = x.eval_dual(args, direction)?;
                    v = &v + &xv;
                    d = &d + &xd;
                }
                Ok((v, d))
            }
            VExpr::Sub(a, b) => {
                let (av, ad) = a.eval_dual(args, direction)?;
                let (bv, bd) = b.eval_dual(args, direction)?;
                Ok((&av - &bv, &ad - &bd))
            }
            VExpr::Mul(xs) => {
                let mut v = Rat::one();
                let mut d = Rat::zero();
                for x in xs {
                    let (xv, xd) = x.eval_dual(args, direction)?;
                    d = &(&d * &xv) + &(&v * &xd);
                    v = &v * &xv;
                }
                Ok((v, d))
            }
            VExpr::Div(a, b) => {
                let (av, ad) = a.eval_dual(args, direction)?;
                let (bv, bd) = b.eval_dual(args, direction)?;
                if bv.is_zero() {
                    return Err(Error::DegenerateSample("division by zero".into()));
                }
                let v = &av / &bv;
                let d = &(&(&ad * &bv) - &(&av * &bd)) / &(&bv * &bv);
                Ok((v, d))
            }
            VExpr::Pow(b, k) => {
                let (bv, bd) = b.eval_dual(args, direction)?;
                if *k == 0 {
                    return Ok((Rat::one(), Rat::zero()));
                }
                if bv.is_zero() && *k < 0 {
                    return Err(Error::DegenerateSample("zero base at negative power".into()));
                }
                let e = k.unsigned_abs();
                let mut v = Rat::one();
                for _ in 0..e {
                    v = &v * &bv;
                }
                if *k < 0 {
                    v = Rat::one() / v;
                }
                // d(b^k) = k b^{k-1} b'
                let mut pm1 = Rat::one();
                if bv.is_zero() && *k == 1 {
                    // b^0 = 1
                } else if bv.is_zero() {
                    // k >= 2: derivative vanishes at 0 unless k == 1
                    pm1 = Rat::zero();
                } else {
                    let em1 = (*k - 1).unsigned_abs();
                    for _ in 0..em1 {
                        pm1 = &pm1 * &bv;
                    }
                    if *k - 1 < 0 {
                        pm1 = Rat::one() / pm1;
                    }
                }
                let d = &(&Rat::from_integer((*k).into()) * &pm1) * &bd;
                Ok((v, d))
            }
        }
    }

    /// Substitutes expressions for variables (composition).
    pub fn compose(&self, subs: &[VExpr]) -> VExpr {
        match self {
            VExpr::Const(c) => VExpr::Const(c.clone()),
            VExpr::Var(i) => subs[*i].clone(),
            VExpr::Add(xs) => VExpr::Add(xs.iter().map(|x| x.compose(subs)).collect()),
            VExpr::Sub(a, b) => {
                VExpr::Sub(Box::new(a.compose(subs)), Box::new(b.compose(subs)))
            }
            VExpr::Mul(xs) => VExpr::Mul(xs.iter().map(|x| x.compose(subs)).collect()),
            VExpr::Div(a, b) => {
                VExpr::Div(Box::new(a.compose(subs)), Box::new(b.compose(subs)))
            }
            VExpr::Pow(b, k) => VExpr::Pow(Box::new(b.compose(subs)), *k),
        }
    }

    /// Prefix form, the inverse of [`parse_expr`].
    pub fn to_prefix(&self, var_name: &dyn Fn(usize) -> String) -> String {
        let mut s = String::new();
        self.write_prefix(var_name, &mut s);
        s
    }

    fn write_prefix(&self, var_name: &dyn Fn(usize) -> String, out: &mut String) {
        match self {
            VExpr::Const(c) => {
                let _ = write!(out, "{}", format_rat(c));
            }
            VExpr::Var(i) => {
                let _ = write!(out, "{}", var_name(*i));
            }
            VExpr::Add(xs) => {
                out.push_str("(+");
                for x in xs {
                    out.push(' ');
                    x.write_prefix(var_name, out);
                }
                out.push(')');
            }
            VExpr::Sub(a, b) => {
                out.push_str("(- ");
                a.write_prefix(var_name, out);
                out.push(' ');
                b.write_prefix(var_name, out);
                out.push(')');
            }
            VExpr::Mul(xs) => {
                out.push_str("(*");
                for x in xs {
                    out.push(' ');
                    x.write_prefix(var_name, out);
                }
                out.push(')');
            }
            VExpr::Div(a, b) => {
                out.push_str("(/ ");
                a.write_prefix(var_name, out);
                out.push(' ');
                b.write_prefix(var_name, out);
                out.push(')');
            }
            VExpr::Pow(b, k) => {
                out.push_str("(^ ");
                b.write_prefix(var_name, out);
                let _ = write!(out, " {k})");
            }
        }
    }
}

/// Parses a prefix expression; `resolve` maps a variable token to its
/// index.
pub fn parse_expr(src: &str, resolve: &dyn Fn(&str) -> Option<usize>) -> Result<VExpr> {
    let tokens = tokenize(src)?;
    let mut pos = 0;
    let expr = parse_tokens(src, &tokens, &mut pos, resolve)?;
    if pos != tokens.len() {
        return Err(Error::BadExpression(
            src.to_string(),
            format!("trailing input at token {pos}"),
        ));
    }
    Ok(expr)
}

fn tokenize(src: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in src.chars() {
        match ch {
            '(' | ')' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    if out.is_empty() {
        return Err(Error::BadExpression(src.to_string(), "empty input".into()));
    }
    Ok(out)
}

fn parse_tokens(
    src: &str,
    tokens: &[String],
    pos: &mut usize,
    resolve: &dyn Fn(&str) -> Option<usize>,
) -> Result<VExpr> {
    let bad = |msg: &str| Error::BadExpression(src.to_string(), msg.to_string());
    let tok = tokens.get(*pos).ok_or_else(|| bad("unexpected end"))?;
    *pos += 1;
    if tok == "(" {
        let op = tokens.get(*pos).ok_or_else(|| bad("missing operator"))?.clone();
        *pos += 1;
        let mut args = Vec::new();
        while tokens.get(*pos).map(String::as_str) != Some(")") {
            if *pos >= tokens.len() {
                return Err(bad("unbalanced parenthesis"));
            }
            args.push(parse_tokens(src, tokens, pos, resolve)?);
        }
        *pos += 1; // consume ')'
        match op.as_str() {
            "+" => {
                if args.is_empty() {
                    return Err(bad("+ needs arguments"));
                }
                Ok(VExpr::Add(args))
            }
            "*" => {
                if args.is_empty() {
                    return Err(bad("* needs arguments"));
                }
                Ok(VExpr::Mul(args))
            }
            "-" => match args.len() {
                1 => Ok(VExpr::Sub(
                    Box::new(VExpr::Const(Rat::zero())),
                    Box::new(args.into_iter().next().unwrap()),
                )),
                2 => {
                    let mut it = args.into_iter();
                    Ok(VExpr::Sub(
                        Box::new(it.next().unwrap()),
                        Box::new(it.next().unwrap()),
                    ))
                }
                _ => Err(bad("- takes one or two arguments")),
            },
            "/" => {
                if args.len() != 2 {
                    return Err(bad("/ takes exactly two arguments"));
                }
                let mut it = args.into_iter();
                Ok(VExpr::Div(
                    Box::new(it.next().unwrap()),
                    Box::new(it.next().unwrap()),
                ))
            }
            "^" => {
                if args.len() != 2 {
                    return Err(bad("^ takes a base and an integer exponent"));
                }
                let mut it = args.into_iter();
                let base = it.next().unwrap();
                match it.next().unwrap() {
                    VExpr::Const(c) if c.is_integer() => {
                        let k: i64 = c
                            .to_integer()
                            .try_into()
                            .map_err(|_| bad("exponent out of range"))?;
                        Ok(VExpr::Pow(Box::new(base), k))
                    }
                    VExpr::Sub(a, b) => {
                        // Negative literal parsed as (0 - k).
                        match (*a, *b) {
                            (VExpr::Const(z), VExpr::Const(c))
                                if z.is_zero() && c.is_integer() =>
                            {
                                let k: i64 = c
                                    .to_integer()
                                    .try_into()
                                    .map_err(|_| bad("exponent out of range"))?;
                                Ok(VExpr::Pow(Box::new(base), -k))
                            }
                            _ => Err(bad("exponent must be an integer literal")),
                        }
                    }
                    _ => Err(bad("exponent must be an integer literal")),
                }
            }
            other => Err(bad(&format!("unknown operator `{other}`"))),
        }
    } else if tok == ")" {
        Err(bad("unexpected `)`"))
    } else if let Some(i) = resolve(tok) {
        Ok(VExpr::Var(i))
    } else if let Ok(c) = parse_rat(tok) {
        Ok(VExpr::Const(c))
    } else {
        Err(bad(&format!("unknown token `{tok}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::{rat, rat_int};

    fn tvar(name: &str) -> Option<usize> {
        name.strip_prefix('t').and_then(|s| s.parse().ok())
    }

    #[test]
    fn parse_and_eval() {
        let e = parse_expr("(+ (* t0 t1) 3/2)", &tvar).unwrap();
        let v = e.eval(&[rat_int(2), rat_int(5)]).unwrap();
        assert_eq!(v, rat(23, 2));
    }

    #[test]
    fn negative_powers_are_laurent() {
        let e = parse_expr("(^ t0 -2)", &tvar).unwrap();
        assert_eq!(e.eval(&[rat_int(2)]).unwrap(), rat(1, 4));
        assert!(e.eval(&[rat_int(0)]).is_err());
    }

    #[test]
    fn dual_derivatives() {
        // d/dt0 (t0^3 + 2 t0 t1) = 3 t0^2 + 2 t1
        let e = parse_expr("(+ (^ t0 3) (* 2 t0 t1))", &tvar).unwrap();
        let (v, d) = e
            .eval_dual(&[rat_int(2), rat_int(5)], 0)
            .unwrap();
        assert_eq!(v, rat_int(28));
        assert_eq!(d, rat_int(22));
        let (_, d1) = e
            .eval_dual(&[rat_int(2), rat_int(5)], 1)
            .unwrap();
        assert_eq!(d1, rat_int(4));
    }

    #[test]
    fn quotient_derivative() {
        // d/dt (1/t) = -1/t^2, via both / and ^.
        for src in ["(/ 1 t0)", "(^ t0 -1)"] {
            let e = parse_expr(src, &tvar).unwrap();
            let (_, d) = e.eval_dual(&[rat_int(2)], 0).unwrap();
            assert_eq!(d, rat(-1, 4));
        }
    }

    #[test]
    fn round_trip_printing() {
        let name = |i: usize| format!("t{i}");
        for src in ["(+ t0 (* t0 t1))", "(^ t0 -3)", "(- t0 1/2)", "(/ t1 t0)"] {
            let e = parse_expr(src, &tvar).unwrap();
            let printed = e.to_prefix(&name);
            let re = parse_expr(&printed, &tvar).unwrap();
            assert_eq!(e, re, "{src} -> {printed}");
        }
    }

    #[test]
    fn parse_errors() {
        assert!(parse_expr("(+ t0", &tvar).is_err());
        assert!(parse_expr("(? t0 t1)", &tvar).is_err());
        assert!(parse_expr("zzz", &tvar).is_err());
        assert!(parse_expr("(^ t0 t1)", &tvar).is_err());
    }
}
