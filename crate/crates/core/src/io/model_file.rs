//! Line-oriented chain description.
//!
//! ```text
//! format_version 1
//! gravity 0 -9.81 0
//! vertical 0 1 0
//! link upper axis 0 0 1 offset 0 0 0 physical m 1.0 com 0 -0.15 0 inertia 0.01 0.001 0.01 0 0 0
//! link lower axis 0 0 1 offset 0 -0.3 0 theta 1 0 0 0 0 1 0 0 1 2
//! ```
//!
//! `#` starts a comment. `physical` takes the mass, the centre of mass in the
//! link frame and the inertia about the centre of mass as
//! `xx yy zz xy xz yz`; `theta` takes the ten regressor parameters directly.
//! `vertical` defaults to the direction opposite gravity (or `+z` without
//! gravity).

use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::model::{ChainModel, LinkParams, LinkSpec, PARAMS_PER_LINK};

pub const MODEL_FORMAT_VERSION: u32 = 1;

struct Tokens<'a> {
    line: usize,
    items: std::iter::Peekable<std::str::SplitWhitespace<'a>>,
}

impl<'a> Tokens<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn word(&mut self, what: &str) -> Result<&'a str> {
        self.items
            .next()
            .ok_or_else(|| self.err(format!("expected {what}")))
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        let w = self.word(&format!("'{kw}'"))?;
        if w != kw {
            return Err(self.err(format!("expected '{kw}', found '{w}'")));
        }
        Ok(())
    }

    fn number(&mut self, what: &str) -> Result<f64> {
        let w = self.word(what)?;
        let v: f64 = w
            .parse()
            .map_err(|_| self.err(format!("{what}: '{w}' is not a number")))?;
        if !v.is_finite() {
            return Err(self.err(format!("{what}: value must be finite")));
        }
        Ok(v)
    }

    fn vec3(&mut self, what: &str) -> Result<Vector3<f64>> {
        Ok(Vector3::new(
            self.number(what)?,
            self.number(what)?,
            self.number(what)?,
        ))
    }

    fn finish(&mut self) -> Result<()> {
        match self.items.next() {
            Some(extra) => Err(self.err(format!("unexpected trailing token '{extra}'"))),
            None => Ok(()),
        }
    }
}

pub fn parse_model(text: &str) -> Result<ChainModel> {
    let mut version = None;
    let mut gravity = None;
    let mut vertical = None;
    let mut links = Vec::new();
    let mut params = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let mut tok = Tokens {
            line: idx + 1,
            items: content.split_whitespace().peekable(),
        };
        let Some(head) = tok.items.next() else {
            continue;
        };
        match head {
            "format_version" => {
                let w = tok.word("version number")?;
                let v: u32 = w
                    .parse()
                    .map_err(|_| tok.err(format!("bad format_version '{w}'")))?;
                if v != MODEL_FORMAT_VERSION {
                    return Err(tok.err(format!("unsupported format_version {v}")));
                }
                version = Some(v);
            }
            "gravity" => gravity = Some(tok.vec3("gravity")?),
            "vertical" => vertical = Some(tok.vec3("vertical")?),
            "link" => {
                let name = tok.word("link name")?.to_string();
                if links.iter().any(|l: &LinkSpec| l.name() == name) {
                    return Err(Error::Semantic {
                        path: format!("link '{name}'"),
                        message: "duplicate link name".into(),
                    });
                }
                tok.keyword("axis")?;
                let axis = tok.vec3("axis")?;
                tok.keyword("offset")?;
                let offset = tok.vec3("offset")?;
                let p = match tok.word("'physical' or 'theta'")? {
                    "theta" => {
                        let mut p = LinkParams::zero();
                        for j in 0..PARAMS_PER_LINK {
                            p.theta[j] = tok.number("theta")?;
                        }
                        p
                    }
                    "physical" => {
                        tok.keyword("m")?;
                        let m = tok.number("mass")?;
                        tok.keyword("com")?;
                        let c = tok.vec3("com")?;
                        tok.keyword("inertia")?;
                        let mut v = [0.0; 6];
                        for x in v.iter_mut() {
                            *x = tok.number("inertia")?;
                        }
                        let ic = Matrix3::new(v[0], v[3], v[4], v[3], v[1], v[5], v[4], v[5], v[2]);
                        LinkParams::from_physical(m, &c, &ic).map_err(|e| Error::Semantic {
                            path: format!("link '{name}'.physical"),
                            message: e.to_string(),
                        })?
                    }
                    other => {
                        return Err(tok.err(format!(
                            "expected 'physical' or 'theta', found '{other}'"
                        )))
                    }
                };
                links.push(LinkSpec::new(name, axis, offset)?);
                params.push(p);
            }
            other => return Err(tok.err(format!("unknown directive '{other}'"))),
        }
        tok.finish()?;
    }

    if version.is_none() {
        return Err(Error::Semantic {
            path: "format_version".into(),
            message: "missing format_version".into(),
        });
    }
    let gravity = gravity.unwrap_or_else(Vector3::zeros);
    let vertical = vertical.unwrap_or_else(|| {
        let g = gravity.norm();
        if g > 0.0 {
            -gravity / g
        } else {
            Vector3::z()
        }
    });
    ChainModel::new(gravity, vertical, links, params)
}

fn fmt3(v: &Vector3<f64>) -> String {
    format!("{:.16e} {:.16e} {:.16e}", v.x, v.y, v.z)
}

/// Writes the chain with `theta` parameters; parsing the result gives back
/// the same model bit for bit.
pub fn serialize_model(model: &ChainModel) -> String {
    let mut out = format!("format_version {MODEL_FORMAT_VERSION}\n");
    out += &format!("gravity {}\n", fmt3(model.gravity()));
    out += &format!("vertical {}\n", fmt3(model.vertical()));
    for (l, p) in model.links().iter().zip(model.params()) {
        let theta: Vec<String> = p.theta.iter().map(|x| format!("{x:.16e}")).collect();
        out += &format!(
            "link {} axis {} offset {} theta {}\n",
            l.name(),
            fmt3(l.joint_axis()),
            fmt3(l.offset()),
            theta.join(" ")
        );
    }
    out
}

pub fn load_model(path: &Path) -> Result<ChainModel> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}
