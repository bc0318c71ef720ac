//! Face selection as a binary program: data fitting, model complexity and roof preference
//! energies under manifoldness, single-roof and face-prior constraints.

pub mod extract;
pub mod solver;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::hypothesize::{CandidateFace, CandidateSet, FaceKind, FaceSource};
use crate::{Error, Result};

pub use extract::extract_mesh;
pub use solver::{solve, Solution, SolveStatus, TIE_TOLERANCE};

/// Weights of the three energy terms; they must sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub lambda_d: f64,
    pub lambda_c: f64,
    pub lambda_r: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { lambda_d: 0.34, lambda_c: 0.62, lambda_r: 0.04 }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_d, self.lambda_c, self.lambda_r];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig(format!("lambda_d, lambda_c, lambda_r must be non-negative, got {all:?}")));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("lambda_d + lambda_c + lambda_r = {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectOptions {
    pub weights: Weights,
    /// Fix each roof segment's most confident face to 1.
    pub use_priors: bool,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self { weights: Weights::default(), use_priors: true }
    }
}

/// Per-face coefficients of the data term `E_d = 1 − Σ x_i·support_i / |P|` (constant 1
/// excluded).
pub fn energy_data(faces: &[CandidateFace], total_points: usize) -> Vec<f64> {
    let p = total_points.max(1) as f64;
    faces.iter().map(|f| -(f.support as f64) / p).collect()
}

/// Per-face coefficients of the roof term: `(z_max − z_i) / ((z_max − z_min)·|F|)` for roof
/// faces, zero for the rest. A flat range gives all zeros.
pub fn energy_roof(faces: &[CandidateFace], z_min: f64, z_max: f64) -> Vec<f64> {
    let range = z_max - z_min;
    let n = faces.len().max(1) as f64;
    faces
        .iter()
        .map(|f| if f.kind == FaceKind::Roof && range > 1e-12 { (z_max - f.centroid_z) / (range * n) } else { 0.0 })
        .collect()
}

/// Face pair meeting at an edge with different sources: selecting both makes a crease.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CreasePair {
    pub edge: usize,
    pub a: usize,
    pub b: usize,
}

/// Candidate crease pairs of the complexity term `E_c = Σ_e c_e / |E|`.
pub fn energy_complexity(cs: &CandidateSet) -> Vec<CreasePair> {
    let mut out = Vec::new();
    for (e, edge) in cs.edges.iter().enumerate() {
        for (i, &a) in edge.faces.iter().enumerate() {
            for &b in &edge.faces[i + 1..] {
                if cs.faces[a].source != cs.faces[b].source {
                    out.push(CreasePair { edge: e, a: a.min(b), b: a.max(b) });
                }
            }
        }
    }
    out
}

/// Variables of the linear program: faces, edge auxiliaries and crease auxiliaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X(usize),
    Y(usize),
    Z(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(Var, i32)>,
    pub sense: Sense,
    pub rhs: i32,
}

/// The assembled program. Only face variables are searched; edge and crease auxiliaries are
/// implied by them.
#[derive(Debug, Clone)]
pub struct SelectionProblem {
    pub weights: Weights,
    /// Linear coefficient per face: `λ_d·E_d` and `λ_r·E_r` parts.
    pub linear: Vec<f64>,
    /// `λ_d` from the constant of `E_d`.
    pub constant: f64,
    /// Cost of one crease, `λ_c / |E|`.
    pub crease_weight: f64,
    pub sources: Vec<FaceSource>,
    /// Incident faces per edge.
    pub edges: Vec<Vec<usize>>,
    /// Distinct single-roof groups.
    pub groups: Vec<Vec<usize>>,
    pub creases: Vec<CreasePair>,
    pub fixed: Vec<Option<bool>>,
    pub total_points: usize,
    data_coef: Vec<f64>,
    roof_coef: Vec<f64>,
}

/// Energy breakdown of an assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energies {
    pub data: f64,
    pub complexity: f64,
    pub roof: f64,
    pub total: f64,
}

impl SelectionProblem {
    pub fn num_faces(&self) -> usize {
        self.linear.len()
    }

    pub fn free_count(&self) -> usize {
        self.fixed.iter().filter(|f| f.is_none()).count()
    }

    /// Number of creases: edges whose two selected faces come from different sources.
    pub fn crease_count(&self, x: &[bool]) -> usize {
        self.edges
            .iter()
            .filter(|fs| {
                let sel: Vec<usize> = fs.iter().copied().filter(|&f| x[f]).collect();
                sel.len() == 2 && self.sources[sel[0]] != self.sources[sel[1]]
            })
            .count()
    }

    /// Objective of a full assignment, summed in a fixed order so equal assignments always
    /// give bit-identical values.
    pub fn objective(&self, x: &[bool]) -> f64 {
        let mut v = self.constant;
        for (i, &c) in self.linear.iter().enumerate() {
            if x[i] {
                v += c;
            }
        }
        v + self.crease_weight * self.crease_count(x) as f64
    }

    pub fn energies(&self, x: &[bool]) -> Energies {
        let data = 1.0 + (0..x.len()).filter(|&i| x[i]).map(|i| self.data_coef[i]).sum::<f64>();
        let complexity = if self.edges.is_empty() { 0.0 } else { self.crease_count(x) as f64 / self.edges.len() as f64 };
        let roof = (0..x.len()).filter(|&i| x[i]).map(|i| self.roof_coef[i]).sum::<f64>();
        Energies { data, complexity, roof, total: self.objective(x) }
    }

    /// True when `x` satisfies every hard constraint.
    pub fn is_feasible(&self, x: &[bool]) -> bool {
        self.fixed.iter().zip(x).all(|(f, &v)| f.map_or(true, |f| f == v))
            && self.edges.iter().all(|fs| matches!(fs.iter().filter(|&&f| x[f]).count(), 0 | 2))
            && self.groups.iter().all(|g| g.iter().filter(|&&f| x[f]).count() == 1)
    }

    /// Constraint rows in linear form: edges with exactly two faces become `x_a − x_b = 0`,
    /// larger ones `Σ x − 2·y_e = 0`; single-roof rows `Σ x = 1`; crease auxiliaries
    /// `z ≤ x_a`, `z ≤ x_b`, `z ≥ x_a + x_b − 1`; fixed faces `x = v`.
    pub fn rows(&self) -> Vec<Row> {
        let mut rows = Vec::new();
        for (e, fs) in self.edges.iter().enumerate() {
            let name = format!("edge_{e}");
            match fs.len() {
                1 => rows.push(Row { name, terms: vec![(Var::X(fs[0]), 1)], sense: Sense::Eq, rhs: 0 }),
                2 => rows.push(Row { name, terms: vec![(Var::X(fs[0]), 1), (Var::X(fs[1]), -1)], sense: Sense::Eq, rhs: 0 }),
                _ => {
                    let mut terms: Vec<(Var, i32)> = fs.iter().map(|&f| (Var::X(f), 1)).collect();
                    terms.push((Var::Y(e), -2));
                    rows.push(Row { name, terms, sense: Sense::Eq, rhs: 0 });
                }
            }
        }
        for (g, fs) in self.groups.iter().enumerate() {
            rows.push(Row { name: format!("roof_{g}"), terms: fs.iter().map(|&f| (Var::X(f), 1)).collect(), sense: Sense::Eq, rhs: 1 });
        }
        for (k, c) in self.creases.iter().enumerate() {
            rows.push(Row { name: format!("crease_{k}_a"), terms: vec![(Var::Z(k), 1), (Var::X(c.a), -1)], sense: Sense::Le, rhs: 0 });
            rows.push(Row { name: format!("crease_{k}_b"), terms: vec![(Var::Z(k), 1), (Var::X(c.b), -1)], sense: Sense::Le, rhs: 0 });
            rows.push(Row { name: format!("crease_{k}_and"), terms: vec![(Var::Z(k), 1), (Var::X(c.a), -1), (Var::X(c.b), -1)], sense: Sense::Ge, rhs: -1 });
        }
        for (i, f) in self.fixed.iter().enumerate() {
            if let Some(v) = f {
                rows.push(Row { name: format!("fix_{i}"), terms: vec![(Var::X(i), 1)], sense: Sense::Eq, rhs: *v as i32 });
            }
        }
        rows
    }

    /// Writes the program in CPLEX LP format.
    pub fn write_lp<W: Write>(&self, mut w: W) -> io::Result<()> {
        let name = |v: Var| match v {
            Var::X(i) => format!("x{i}"),
            Var::Y(i) => format!("y{i}"),
            Var::Z(i) => format!("z{i}"),
        };
        writeln!(w, "\\ constant term {:.12}", self.constant)?;
        writeln!(w, "Minimize")?;
        let mut obj: Vec<String> = Vec::new();
        for (i, &c) in self.linear.iter().enumerate() {
            if c != 0.0 {
                obj.push(format!("{} {:.12} x{i}", if c < 0.0 { "-" } else { "+" }, c.abs()));
            }
        }
        for k in 0..self.creases.len() {
            obj.push(format!("+ {:.12} z{k}", self.crease_weight));
        }
        if obj.is_empty() {
            obj.push("0 x0".into());
        }
        writeln!(w, " obj: {}", obj.join(" "))?;
        writeln!(w, "Subject To")?;
        let rows = self.rows();
        for r in &rows {
            let lhs: Vec<String> = r.terms.iter().map(|&(v, c)| format!("{} {} {}", if c < 0 { "-" } else { "+" }, c.abs(), name(v))).collect();
            let op = match r.sense {
                Sense::Eq => "=",
                Sense::Le => "<=",
                Sense::Ge => ">=",
            };
            writeln!(w, " {}: {} {op} {}", r.name, lhs.join(" "), r.rhs)?;
        }
        writeln!(w, "Binaries")?;
        let mut vars: BTreeSet<Var> = (0..self.linear.len()).map(Var::X).collect();
        for r in &rows {
            vars.extend(r.terms.iter().map(|t| t.0));
        }
        vars.extend((0..self.creases.len()).map(Var::Z));
        for v in vars {
            writeln!(w, " {}", name(v))?;
        }
        writeln!(w, "End")
    }
}

/// Assembles the program for a candidate set. `total_points` is |P| of the data term.
pub fn build_problem(cs: &CandidateSet, total_points: usize, opts: &SelectOptions) -> Result<SelectionProblem> {
    opts.weights.validate()?;
    let w = opts.weights;
    let n = cs.faces.len();
    let data = energy_data(&cs.faces, total_points);
    let (zmin, zmax) = cs.roof_faces().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| (lo.min(f.centroid_z), hi.max(f.centroid_z)));
    let roof = if zmin.is_finite() { energy_roof(&cs.faces, zmin, zmax) } else { vec![0.0; n] };
    let linear: Vec<f64> = (0..n).map(|i| w.lambda_d * data[i] + w.lambda_r * roof[i]).collect();

    let mut groups: Vec<Vec<usize>> = cs.vertical_groups.iter().filter(|g| !g.is_empty()).cloned().collect::<BTreeSet<_>>().into_iter().collect();
    groups.sort();

    let mut fixed = vec![None; n];
    if let Some(g) = cs.ground_face() {
        fixed[g] = Some(true);
    }
    if opts.use_priors {
        let priors: BTreeMap<usize, usize> = cs.priors.iter().map(|(&s, &f)| (f, s)).collect();
        for g in &groups {
            let in_group: Vec<usize> = g.iter().copied().filter(|f| priors.contains_key(f)).collect();
            if in_group.len() > 1 {
                // Report the weakest prior so the caller can drop it and retry.
                let weakest = *in_group
                    .iter()
                    .min_by(|&&a, &&b| cs.faces[a].support.cmp(&cs.faces[b].support).then(cs.faces[a].area.total_cmp(&cs.faces[b].area)).then(b.cmp(&a)))
                    .unwrap();
                return Err(Error::InfeasibleByConstruction { prior: weakest, group: g.clone() });
            }
        }
        for &f in priors.keys() {
            fixed[f] = Some(true);
        }
    }

    let edges: Vec<Vec<usize>> = cs.edges.iter().map(|e| e.faces.clone()).collect();
    let crease_weight = if edges.is_empty() { 0.0 } else { w.lambda_c / edges.len() as f64 };
    Ok(SelectionProblem {
        weights: w,
        linear,
        constant: w.lambda_d,
        crease_weight,
        sources: cs.faces.iter().map(|f| f.source).collect(),
        edges,
        groups,
        creases: energy_complexity(cs),
        fixed,
        total_points,
        data_coef: data,
        roof_coef: roof,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::hypothesize::{build_arrangement, compute_vertical_groups, designate_priors, HypothesisParams};
    use crate::plane_detect::{PlanarSegment, SegmentKind};
    use crate::wall_infer::VerticalPlaneSet;
    use crate::{Plane, Point3, Polygon2, Vector3};

    pub(crate) fn seg(plane: Plane) -> PlanarSegment {
        PlanarSegment { inliers: vec![], plane, kind: SegmentKind::Roof, support: 0 }
    }

    pub(crate) fn box_set(support: usize) -> CandidateSet {
        let mut cs = build_arrangement(&[seg(Plane::horizontal(6.0))], &VerticalPlaneSet::default(), &Polygon2::rectangle(0.0, 0.0, 16.0, 10.0), 0.0, 6.0, &HypothesisParams::default()).unwrap();
        for f in &mut cs.faces {
            if f.kind == FaceKind::Roof {
                f.support = support;
            }
        }
        cs.vertical_groups = compute_vertical_groups(&cs.faces, 1e-3);
        cs.priors = designate_priors(&cs.faces, &cs.segment_faces);
        cs
    }

    pub(crate) fn gable_set() -> CandidateSet {
        let a = Plane::from_point_normal(Point3::new(0.0, 0.0, 5.0), Vector3::new(0.0, -0.5, 1.0)).unwrap();
        let b = Plane::from_point_normal(Point3::new(0.0, 10.0, 5.0), Vector3::new(0.0, 0.5, 1.0)).unwrap();
        let mut cs = build_arrangement(&[seg(a), seg(b)], &VerticalPlaneSet::default(), &Polygon2::rectangle(0.0, 0.0, 16.0, 10.0), 0.0, 7.5, &HypothesisParams::default()).unwrap();
        // The true facets (each plane on its low side) carry the points.
        for f in &mut cs.faces {
            if f.kind == FaceKind::Roof {
                let low_side = f.polygon.iter().all(|p| p.z <= 7.5 + 1e-9);
                f.support = if low_side { 400 } else { 3 };
            }
        }
        cs.vertical_groups = compute_vertical_groups(&cs.faces, 1e-3);
        cs.priors = designate_priors(&cs.faces, &cs.segment_faces);
        cs
    }

    #[test]
    fn data_energy_examples() {
        let cs = box_set(0);
        let mut faces = cs.faces[..2].to_vec();
        faces[0].support = 30;
        faces[1].support = 70;
        let c = energy_data(&faces, 200);
        assert!((1.0 + c[0] + c[1] - 0.5).abs() < 1e-15);
        let c = energy_data(&faces, 100);
        assert!((1.0 + c[0] + c[1]).abs() < 1e-15);
    }

    #[test]
    fn roof_energy_examples() {
        let cs = box_set(0);
        let mut faces: Vec<CandidateFace> = cs.faces.iter().cloned().cycle().take(10).collect();
        for f in faces.iter_mut() {
            f.kind = FaceKind::Roof;
        }
        faces[0].centroid_z = 10.0;
        faces[1].centroid_z = 2.0;
        faces[2].centroid_z = 6.0;
        let c = energy_roof(&faces, 2.0, 10.0);
        assert_eq!(c[0], 0.0);
        assert!((c[1] - 0.1).abs() < 1e-15);
        assert!((c[2] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn box_constraints_admit_only_the_full_box() {
        let cs = box_set(500);
        let p = build_problem(&cs, 500, &SelectOptions::default()).unwrap();
        assert_eq!(p.num_faces(), 6);
        let mut feasible = Vec::new();
        for mask in 0u32..64 {
            let x: Vec<bool> = (0..6).map(|i| mask >> i & 1 == 1).collect();
            if p.is_feasible(&x) {
                feasible.push(x);
            }
        }
        assert_eq!(feasible, vec![vec![true; 6]]);
        // Box: six source planes, all twelve edges are creases.
        let e = p.energies(&feasible[0]);
        assert!((e.complexity - 1.0).abs() < 1e-15);
        assert!(e.data.abs() < 1e-15);
    }

    #[test]
    fn stacked_roofs_allow_exactly_one() {
        let mut cs = build_arrangement(
            &[seg(Plane::horizontal(4.0)), seg(Plane::horizontal(6.0))],
            &VerticalPlaneSet::default(),
            &Polygon2::rectangle(0.0, 0.0, 10.0, 10.0),
            0.0,
            6.0,
            &HypothesisParams::default(),
        )
        .unwrap();
        cs.vertical_groups = compute_vertical_groups(&cs.faces, 1e-3);
        let p = build_problem(&cs, 1, &SelectOptions { use_priors: false, ..Default::default() }).unwrap();
        let roofs: Vec<usize> = cs.roof_faces().map(|f| f.id).collect();
        assert_eq!(roofs.len(), 2);
        assert_eq!(p.groups, vec![roofs.clone()]);
        let sol = solve(&p, std::time::Duration::from_secs(5)).unwrap();
        assert_eq!(roofs.iter().filter(|&&f| sol.assignment[f]).count(), 1);
    }

    #[test]
    fn conflicting_priors_are_reported() {
        let mut cs = build_arrangement(
            &[seg(Plane::horizontal(4.0)), seg(Plane::horizontal(6.0))],
            &VerticalPlaneSet::default(),
            &Polygon2::rectangle(0.0, 0.0, 10.0, 10.0),
            0.0,
            6.0,
            &HypothesisParams::default(),
        )
        .unwrap();
        let roofs: Vec<usize> = cs.roof_faces().map(|f| f.id).collect();
        cs.faces[roofs[0]].support = 50;
        cs.faces[roofs[1]].support = 80;
        cs.vertical_groups = compute_vertical_groups(&cs.faces, 1e-3);
        cs.priors = designate_priors(&cs.faces, &cs.segment_faces);
        match build_problem(&cs, 130, &SelectOptions::default()) {
            Err(Error::InfeasibleByConstruction { prior, group }) => {
                assert_eq!(prior, roofs[0]);
                assert_eq!(group, roofs);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gable_crease_count_matches_topology() {
        let cs = gable_set();
        let p = build_problem(&cs, 800, &SelectOptions::default()).unwrap();
        let sol = solve(&p, std::time::Duration::from_secs(5)).unwrap();
        // Oracle: count selected edge pairs on different planes directly from the geometry.
        let x = &sol.assignment;
        let mut manual = 0;
        for fs in &p.edges {
            let sel: Vec<usize> = fs.iter().copied().filter(|&f| x[f]).collect();
            if sel.len() == 2 {
                let (a, b) = (&cs.faces[sel[0]], &cs.faces[sel[1]]);
                if !a.plane.approx_eq(&b.plane, 1e-9) {
                    manual += 1;
                }
            }
        }
        assert_eq!(p.crease_count(x), manual);
        let mesh = extract_mesh(&cs, &sol).unwrap();
        // Gable: 2 roofs, 2 long walls, 2 pentagonal ends, ground; 10 vertices, 15 edges.
        assert_eq!(mesh.faces.len(), 7);
        assert_eq!(mesh.vertices.len(), 10);
        assert_eq!(mesh.edge_table().len(), 15);
    }

    #[test]
    fn lp_dump_lists_all_sections() {
        let cs = gable_set();
        let p = build_problem(&cs, 800, &SelectOptions::default()).unwrap();
        let mut buf = Vec::new();
        p.write_lp(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        for sec in ["Minimize", "Subject To", "Binaries", "End"] {
            assert!(s.contains(sec));
        }
        assert_eq!(s.lines().filter(|l| l.starts_with(" roof_")).count(), p.groups.len());
    }

    #[test]
    fn invalid_weights_are_rejected() {
        let w = Weights { lambda_d: 0.5, lambda_c: 0.5, lambda_r: 0.04 };
        assert!(matches!(w.validate(), Err(Error::InvalidConfig(_))));
        assert!(Weights::default().validate().is_ok());
    }
}
