//! Accuracy, per-type breakdown and WUPS scoring.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{QaInstance, QuestionType};
use crate::error::{Error, Result};

/// A small noun hierarchy bundled with the crate.
pub const DEMO_TAXONOMY: &str = include_str!("../data/demo_taxonomy.tsv");

/// Rooted is-a tree. A word may name several nodes (`bat%1`, `bat%2`).
#[derive(Clone, Debug)]
pub struct Taxonomy {
    names: Vec<String>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    senses: HashMap<String, Vec<usize>>,
}

fn word_of(node: &str) -> &str {
    node.split_once('%').map_or(node, |(w, _)| w)
}

impl Taxonomy {
    /// Parses `child<TAB>parent` lines. Blank lines and `#` comments are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut names = Vec::new();
        let mut parent: Vec<Option<usize>> = Vec::new();
        let mut intern = |name: &str, names: &mut Vec<String>, parent: &mut Vec<Option<usize>>| {
            *index.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                parent.push(None);
                names.len() - 1
            })
        };
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (child, par) = line
                .split_once('\t')
                .map(|(c, p)| (c.trim(), p.trim()))
                .filter(|(c, p)| !c.is_empty() && !p.is_empty() && !p.contains('\t'))
                .ok_or_else(|| {
                    Error::format(
                        "taxonomy",
                        format!("line {}: expected child<TAB>parent", lineno + 1),
                    )
                })?;
            let c = intern(child, &mut names, &mut parent);
            let p = intern(par, &mut names, &mut parent);
            match parent[c] {
                Some(old) if old != p => {
                    return Err(Error::format(
                        "taxonomy",
                        format!("line {}: {child:?} has two parents", lineno + 1),
                    ))
                }
                _ => parent[c] = Some(p),
            }
        }
        let roots: Vec<usize> = (0..names.len()).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::format(
                "taxonomy",
                format!("expected exactly one root, found {}", roots.len()),
            ));
        }
        let mut depth = vec![0usize; names.len()];
        for start in 0..names.len() {
            let mut chain = Vec::new();
            let mut node = start;
            while depth[node] == 0 {
                if chain.len() > names.len() {
                    return Err(Error::format(
                        "taxonomy",
                        format!("cycle through {:?}", names[start]),
                    ));
                }
                chain.push(node);
                match parent[node] {
                    Some(p) => node = p,
                    None => {
                        depth[node] = 1;
                        chain.pop();
                        break;
                    }
                }
            }
            for &n in chain.iter().rev() {
                depth[n] = depth[parent[n].unwrap()] + 1;
            }
        }
        let mut senses: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            senses.entry(word_of(n).to_string()).or_default().push(i);
        }
        Ok(Self {
            names,
            parent,
            depth,
            senses,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&crate::io::read_to_string(path)?)
    }

    pub fn demo() -> Self {
        Self::parse(DEMO_TAXONOMY).expect("bundled taxonomy is valid")
    }

    pub fn contains(&self, word: &str) -> bool {
        self.senses.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Depth of each sense of `word`, root at 1.
    pub fn depths(&self, word: &str) -> Vec<usize> {
        self.senses
            .get(word)
            .map(|s| s.iter().map(|&n| self.depth[n]).collect())
            .unwrap_or_default()
    }

    /// Leaf words under the node named `ancestor`, sorted.
    pub fn leaves_under(&self, ancestor: &str) -> Vec<String> {
        let Some(&target) = self.senses.get(ancestor).and_then(|s| s.first()) else {
            return Vec::new();
        };
        let has_child: HashSet<usize> = self.parent.iter().flatten().copied().collect();
        let mut out: Vec<String> = (0..self.names.len())
            .filter(|n| !has_child.contains(n) && self.is_ancestor(target, *n) && *n != target)
            .map(|n| word_of(&self.names[n]).to_string())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    fn is_ancestor(&self, a: usize, mut n: usize) -> bool {
        loop {
            if n == a {
                return true;
            }
            match self.parent[n] {
                Some(p) => n = p,
                None => return false,
            }
        }
    }

    fn lcs_depth(&self, mut a: usize, mut b: usize) -> usize {
        while self.depth[a] > self.depth[b] {
            a = self.parent[a].unwrap();
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b].unwrap();
        }
        while a != b {
            a = self.parent[a].unwrap();
            b = self.parent[b].unwrap();
        }
        self.depth[a]
    }
}

/// Wu-Palmer similarity, maximized over senses.
pub fn wu_palmer(tax: &Taxonomy, a: &str, b: &str) -> f64 {
    if a == b {
        return 1.0;
    }
    let (Some(sa), Some(sb)) = (tax.senses.get(a), tax.senses.get(b)) else {
        return 0.0;
    };
    let mut best = 0.0f64;
    for &x in sa {
        for &y in sb {
            let s = 2.0 * tax.lcs_depth(x, y) as f64 / (tax.depth[x] + tax.depth[y]) as f64;
            best = best.max(s);
        }
    }
    best
}

/// Lowercased whitespace tokens with surrounding punctuation stripped.
pub fn answer_words(answer: &str) -> HashSet<String> {
    answer
        .split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| c.is_ascii_punctuation())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn thresholded(tax: &Taxonomy, a: &str, b: &str, theta: f64) -> f64 {
    let w = wu_palmer(tax, a, b);
    if w >= theta {
        w
    } else {
        0.1 * w
    }
}

fn coverage(from: &HashSet<String>, to: &HashSet<String>, tax: &Taxonomy, theta: f64) -> f64 {
    from.iter()
        .map(|a| {
            to.iter()
                .map(|t| thresholded(tax, a, t, theta))
                .fold(0.0, f64::max)
        })
        .product()
}

/// WUPS score of one answer pair, in `[0, 1]`.
pub fn wups_item(prediction: &str, truth: &str, theta: f64, tax: &Taxonomy) -> f64 {
    let a = answer_words(prediction);
    let t = answer_words(truth);
    coverage(&a, &t, tax, theta).min(coverage(&t, &a, tax, theta))
}

/// Mean WUPS@θ as a percentage.
pub fn wups(predictions: &[String], truths: &[String], theta: f64, tax: &Taxonomy) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::arg(format!(
            "{} predictions but {} ground truths",
            predictions.len(),
            truths.len()
        )));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::arg(format!("threshold {theta} outside [0, 1]")));
    }
    if predictions.is_empty() {
        return Err(Error::arg("no answers to score"));
    }
    let total: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| wups_item(p, t, theta, tax))
        .sum();
    Ok(100.0 * total / predictions.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeAccuracy {
    pub count: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub wups_0: f64,
    pub wups_09: f64,
    pub per_type: BTreeMap<QuestionType, TypeAccuracy>,
    pub excluding_where_when: Option<f64>,
}

fn ratio(correct: usize, count: usize) -> Option<f64> {
    (count > 0).then(|| correct as f64 / count as f64)
}

/// Scores predicted candidate indices against their instances.
pub fn evaluate(
    predicted: &[usize],
    instances: &[QaInstance],
    tax: &Taxonomy,
) -> Result<EvalReport> {
    if predicted.is_empty() || instances.is_empty() {
        return Err(Error::arg("nothing to evaluate"));
    }
    if predicted.len() != instances.len() {
        return Err(Error::arg(format!(
            "{} predictions for {} instances",
            predicted.len(),
            instances.len()
        )));
    }
    let mut per_type: BTreeMap<QuestionType, TypeAccuracy> = QuestionType::ALL
        .iter()
        .map(|&t| {
            (
                t,
                TypeAccuracy {
                    count: 0,
                    correct: 0,
                    accuracy: None,
                },
            )
        })
        .collect();
    let mut preds = Vec::with_capacity(predicted.len());
    let mut truths = Vec::with_capacity(predicted.len());
    let (mut correct, mut kept, mut kept_correct) = (0, 0, 0);
    for (&p, inst) in predicted.iter().zip(instances) {
        let pred = inst.candidates.get(p).ok_or_else(|| {
            Error::arg(format!("prediction {p} out of range for {}", inst.video_id))
        })?;
        let hit = p == inst.gt_index;
        let entry = per_type.get_mut(&inst.question_type).unwrap();
        entry.count += 1;
        entry.correct += hit as usize;
        correct += hit as usize;
        if !matches!(inst.question_type, QuestionType::Where | QuestionType::When) {
            kept += 1;
            kept_correct += hit as usize;
        }
        preds.push(pred.clone());
        truths.push(inst.ground_truth().to_string());
    }
    for entry in per_type.values_mut() {
        entry.accuracy = ratio(entry.correct, entry.count);
    }
    Ok(EvalReport {
        count: instances.len(),
        correct,
        accuracy: correct as f64 / instances.len() as f64,
        wups_0: wups(&preds, &truths, 0.0, tax)?,
        wups_09: wups(&preds, &truths, 0.9, tax)?,
        per_type,
        excluding_where_when: ratio(kept_correct, kept),
    })
}

impl EvalReport {
    /// Plain-text summary table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}", 100.0 * x));
        let _ = writeln!(s, "{:<24}{:>10}", "instances", self.count);
        let _ = writeln!(s, "{:<24}{:>10}", "accuracy (%)", pct(Some(self.accuracy)));
        let _ = writeln!(s, "{:<24}{:>10.2}", "WUPS@0.0", self.wups_0);
        let _ = writeln!(s, "{:<24}{:>10.2}", "WUPS@0.9", self.wups_09);
        for (t, a) in &self.per_type {
            let _ = writeln!(
                s,
                "{:<24}{:>10}  (n={})",
                format!("{t} (%)"),
                pct(a.accuracy),
                a.count
            );
        }
        let _ = writeln!(
            s,
            "{:<24}{:>10}",
            "without Where/When (%)",
            pct(self.excluding_where_when)
        );
        s
    }
}
