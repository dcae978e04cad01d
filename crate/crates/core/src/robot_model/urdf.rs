use std::fmt::Write as _;

use nalgebra::Vector3;
use roxmltree::{Document, Node};

use super::{FootSpec, FootType, Joint, JointKind, Link, RobotModel};
use crate::error::{Error, Result};
use crate::lie::Twist;

const SOURCE: &str = "robot description";

/// Chain extraction settings. Document `<foot>` elements are used unless
/// `foot_links` is given; with neither, every leaf link is a foot.
#[derive(Clone, Debug, Default)]
pub struct ParseOptions {
    pub foot_links: Option<Vec<String>>,
    /// Overrides every foot's type.
    pub foot_type: Option<FootType>,
}

pub fn parse_model(text: &str, opts: &ParseOptions) -> Result<RobotModel> {
    parse_model_with_warnings(text, opts).map(|(m, _)| m)
}

/// Parses and also returns one warning per ignored element.
pub fn parse_model_with_warnings(
    text: &str,
    opts: &ParseOptions,
) -> Result<(RobotModel, Vec<String>)> {
    let doc = Document::parse(text).map_err(|e| {
        Error::parse(SOURCE, e.pos().row as usize, e.to_string())
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "robot" {
        return Err(Error::parse(
            SOURCE,
            line_of(&doc, root),
            format!("root element is <{}>, expected <robot>", root.tag_name().name()),
        ));
    }
    let name = root.attribute("name").unwrap_or("robot").to_string();
    let mut warnings = Vec::new();
    let mut links = Vec::new();
    let mut joints = Vec::new();
    let mut doc_feet = Vec::new();

    for node in root.children().filter(Node::is_element) {
        match node.tag_name().name() {
            "link" => {
                let link_name = required_attr(&doc, node, "name")?;
                for c in node.children().filter(Node::is_element) {
                    warnings.push(format!(
                        "link `{link_name}`: ignored <{}>",
                        c.tag_name().name()
                    ));
                }
                links.push(Link {
                    name: link_name.to_string(),
                    parent_joint: None,
                });
            }
            "joint" => joints.push(parse_joint(&doc, node, &mut warnings)?),
            "foot" => {
                let link = required_attr(&doc, node, "link")?.to_string();
                let foot_type = match node.attribute("type") {
                    Some(t) => t.parse().map_err(|_| {
                        Error::parse(SOURCE, line_of(&doc, node), format!("unknown foot type `{t}`"))
                    })?,
                    None => FootType::Point,
                };
                doc_feet.push(FootSpec { link, foot_type });
            }
            other => warnings.push(format!("ignored <{other}>")),
        }
    }

    let mut feet = match &opts.foot_links {
        Some(names) => names
            .iter()
            .map(|n| FootSpec {
                link: n.clone(),
                foot_type: doc_feet
                    .iter()
                    .find(|f| &f.link == n)
                    .map_or(FootType::Point, |f| f.foot_type),
            })
            .collect(),
        None if !doc_feet.is_empty() => doc_feet,
        None => links
            .iter()
            .filter(|l| !joints.iter().any(|j: &Joint| j.parent == l.name))
            .map(|l| FootSpec {
                link: l.name.clone(),
                foot_type: FootType::Point,
            })
            .collect(),
    };
    if let Some(t) = opts.foot_type {
        for f in &mut feet {
            f.foot_type = t;
        }
    }
    let model = RobotModel::assemble(name, links, joints, feet)?;
    Ok((model, warnings))
}

fn line_of(doc: &Document, node: Node) -> usize {
    doc.text_pos_at(node.range().start).row as usize
}

fn required_attr<'a>(doc: &Document, node: Node<'a, '_>, attr: &str) -> Result<&'a str> {
    node.attribute(attr).ok_or_else(|| {
        Error::parse(
            SOURCE,
            line_of(doc, node),
            format!("<{}> lacks attribute `{attr}`", node.tag_name().name()),
        )
    })
}

fn parse_triple(doc: &Document, node: Node, attr: &str, default: [f64; 3]) -> Result<[f64; 3]> {
    let Some(text) = node.attribute(attr) else {
        return Ok(default);
    };
    let bad = |reason: String| Error::parse(SOURCE, line_of(doc, node), reason);
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(bad(format!("`{attr}` needs 3 numbers, got `{text}`")));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad(format!("malformed number `{p}` in `{attr}`")))?;
    }
    Ok(out)
}

fn parse_joint(doc: &Document, node: Node, warnings: &mut Vec<String>) -> Result<Joint> {
    let name = required_attr(doc, node, "name")?.to_string();
    let kind = match required_attr(doc, node, "type")? {
        "revolute" => JointKind::Revolute,
        "continuous" => {
            warnings.push(format!("joint `{name}`: continuous treated as revolute"));
            JointKind::Revolute
        }
        "fixed" => JointKind::Fixed,
        other => {
            return Err(Error::Model(format!(
                "joint `{name}` has unsupported type `{other}`"
            )))
        }
    };
    let mut parent = None;
    let mut child = None;
    let mut xyz = [0.0; 3];
    let mut rpy = [0.0; 3];
    let mut axis = [1.0, 0.0, 0.0];
    for c in node.children().filter(Node::is_element) {
        match c.tag_name().name() {
            "parent" => parent = Some(required_attr(doc, c, "link")?.to_string()),
            "child" => child = Some(required_attr(doc, c, "link")?.to_string()),
            "origin" => {
                xyz = parse_triple(doc, c, "xyz", [0.0; 3])?;
                rpy = parse_triple(doc, c, "rpy", [0.0; 3])?;
            }
            "axis" => axis = parse_triple(doc, c, "xyz", [1.0, 0.0, 0.0])?,
            other => warnings.push(format!("joint `{name}`: ignored <{other}>")),
        }
    }
    let missing = |what: &str| {
        Error::parse(
            SOURCE,
            line_of(doc, node),
            format!("joint `{name}` lacks <{what}>"),
        )
    };
    let parent = parent.ok_or_else(|| missing("parent"))?;
    let child = child.ok_or_else(|| missing("child"))?;
    let screw = match kind {
        JointKind::Revolute => {
            let a = Vector3::from(axis);
            if a.norm() < 1e-12 {
                return Err(Error::Model(format!("joint `{name}` has a zero axis")));
            }
            Some(Twist::new(a.normalize(), Vector3::zeros()))
        }
        JointKind::Fixed => None,
    };
    Ok(Joint {
        origin: Joint::origin_from(xyz, rpy),
        name,
        kind,
        parent,
        child,
        xyz,
        rpy,
        axis,
        screw,
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn triple(v: &[f64; 3]) -> String {
    format!("{:.16e} {:.16e} {:.16e}", v[0], v[1], v[2])
}

pub(super) fn serialize(model: &RobotModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "<?xml version=\"1.0\"?>");
    let _ = writeln!(s, "<robot name=\"{}\">", escape(&model.name));
    for l in &model.links {
        let _ = writeln!(s, "  <link name=\"{}\"/>", escape(&l.name));
    }
    for j in &model.joints {
        let kind = match j.kind {
            JointKind::Revolute => "revolute",
            JointKind::Fixed => "fixed",
        };
        let _ = writeln!(s, "  <joint name=\"{}\" type=\"{kind}\">", escape(&j.name));
        let _ = writeln!(
            s,
            "    <origin xyz=\"{}\" rpy=\"{}\"/>",
            triple(&j.xyz),
            triple(&j.rpy)
        );
        let _ = writeln!(s, "    <parent link=\"{}\"/>", escape(&j.parent));
        let _ = writeln!(s, "    <child link=\"{}\"/>", escape(&j.child));
        if j.kind == JointKind::Revolute {
            let _ = writeln!(s, "    <axis xyz=\"{}\"/>", triple(&j.axis));
        }
        let _ = writeln!(s, "  </joint>");
    }
    for leg in &model.legs {
        let _ = writeln!(
            s,
            "  <foot link=\"{}\" type=\"{}\"/>",
            escape(&leg.foot_link),
            leg.foot_type
        );
    }
    let _ = writeln!(s, "</robot>");
    s
}
