//! Plain-text model dump.
//!
//! ```text
//! cmeta-gbm 1
//! loss squared            | loss pinball <q>
//! learning_rate <f64>
//! base <f64>
//! features <usize>
//! trees <usize>
//! tree <index> <node count>
//! <node> split <feature> <threshold> <left> <right>
//! <node> leaf <value>
//! ```
//!
//! Floats use shortest round-trip formatting, so a dump reloads to a model
//! with identical predictions. The format is stable within a minor version.

use super::{GbmModel, Loss, Tree, TreeNode};
use crate::{Error, Result};

const MAGIC: &str = "cmeta-gbm";
const VERSION: u32 = 1;

impl GbmModel {
    pub fn to_dump(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\n");
        match self.loss {
            Loss::SquaredError => out.push_str("loss squared\n"),
            Loss::Pinball(q) => out.push_str(&format!("loss pinball {q}\n")),
        }
        out.push_str(&format!("learning_rate {}\n", self.learning_rate));
        out.push_str(&format!("base {}\n", self.base_prediction));
        out.push_str(&format!("features {}\n", self.n_features));
        out.push_str(&format!("trees {}\n", self.trees.len()));
        for (t, tree) in self.trees.iter().enumerate() {
            out.push_str(&format!("tree {t} {}\n", tree.nodes().len()));
            for (i, node) in tree.nodes().iter().enumerate() {
                match *node {
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => out.push_str(&format!("{i} split {feature} {threshold} {left} {right}\n")),
                    TreeNode::Leaf(v) => out.push_str(&format!("{i} leaf {v}\n")),
                }
            }
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<GbmModel> {
        let mut reader = Lines {
            inner: text.lines().enumerate(),
        };
        let mut next = |expect: &str| reader.keyword(expect);
        let (line, header) = next(MAGIC)?;
        if header.get(1).map(|v| v.parse::<u32>()) != Some(Ok(VERSION)) {
            return Err(bad(line, format!("unsupported version, expected {VERSION}")));
        }
        let (line, loss) = next("loss")?;
        let loss = match loss.get(1).copied() {
            Some("squared") => Loss::SquaredError,
            Some("pinball") => Loss::Pinball(num(line, loss.get(2))?),
            _ => return Err(bad(line, "unknown loss".into())),
        };
        let (line, t) = next("learning_rate")?;
        let learning_rate = num(line, t.get(1))?;
        let (line, t) = next("base")?;
        let base_prediction = num(line, t.get(1))?;
        let (line, t) = next("features")?;
        let n_features: usize = num(line, t.get(1))?;
        let (line, t) = next("trees")?;
        let n_trees: usize = num(line, t.get(1))?;

        let mut trees = Vec::with_capacity(n_trees);
        for expected in 0..n_trees {
            let (line, t) = next("tree")?;
            if num::<usize>(line, t.get(1))? != expected {
                return Err(bad(line, format!("expected tree {expected}")));
            }
            let count: usize = num(line, t.get(2))?;
            let mut nodes = Vec::with_capacity(count);
            for i in 0..count {
                let (line, t) = next("")?;
                if num::<usize>(line, t.first())? != i {
                    return Err(bad(line, format!("expected node {i}")));
                }
                let node = match t.get(1).copied() {
                    Some("leaf") => TreeNode::Leaf(num(line, t.get(2))?),
                    Some("split") => {
                        let (feature, left, right) = (num(line, t.get(2))?, num(line, t.get(4))?, num(line, t.get(5))?);
                        if feature >= n_features || left >= count || right >= count || left <= i || right <= i {
                            return Err(bad(line, "split references an invalid feature or child".into()));
                        }
                        TreeNode::Split {
                            feature,
                            threshold: num(line, t.get(3))?,
                            left,
                            right,
                        }
                    }
                    _ => return Err(bad(line, "expected `leaf` or `split`".into())),
                };
                nodes.push(node);
            }
            if nodes.is_empty() {
                return Err(bad(line, "tree without nodes".into()));
            }
            trees.push(Tree::from_nodes(nodes));
        }
        Ok(GbmModel {
            trees,
            learning_rate,
            base_prediction,
            loss,
            n_features,
            train_loss: Vec::new(),
        })
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// Next line as tokens; checks the first token unless `expect` is empty.
    fn keyword(&mut self, expect: &str) -> Result<(usize, Vec<&'a str>)> {
        let (i, text) = self.inner.next().ok_or_else(|| Error::Dump {
            line: 0,
            message: format!("unexpected end of dump, expected `{expect}`"),
        })?;
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if !expect.is_empty() && tokens.first() != Some(&expect) {
            return Err(bad(i + 1, format!("expected `{expect}`")));
        }
        Ok((i + 1, tokens))
    }
}

fn bad(line: usize, message: String) -> Error {
    Error::Dump { line, message }
}

fn num<T: std::str::FromStr>(line: usize, token: Option<&&str>) -> Result<T> {
    token
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad(line, format!("cannot parse number from {token:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::{fit, GbmConfig};
    use crate::Matrix;
    use proptest::prelude::*;

    #[test]
    fn golden_stump() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let cfg = GbmConfig {
            n_trees: 1,
            max_depth: 1,
            learning_rate: 1.0,
            min_samples_leaf: 1,
            ..GbmConfig::default()
        };
        let model = fit(&x, &[0.0, 0.0, 2.0, 2.0], &cfg).unwrap();
        let expected = "cmeta-gbm 1\nloss squared\nlearning_rate 1\nbase 1\nfeatures 1\ntrees 1\n\
                        tree 0 3\n0 split 0 1.5 1 2\n1 leaf -1\n2 leaf 1\n";
        assert_eq!(model.to_dump(), expected);
    }

    #[test]
    fn malformed_dumps_rejected() {
        assert!(GbmModel::from_dump("").is_err());
        assert!(GbmModel::from_dump("cmeta-gbm 2\n").is_err());
        let text =
            "cmeta-gbm 1\nloss squared\nlearning_rate 1\nbase 1\nfeatures 1\ntrees 1\ntree 0 1\n0 split 3 0.5 1 2\n";
        assert!(GbmModel::from_dump(text).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn dump_roundtrip_preserves_predictions(
            rows in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 12..60),
            q in 0.05f64..0.95,
            pinball in any::<bool>(),
        ) {
            let x = Matrix::from_rows(&rows.iter().map(|&(a, b)| [a, b]).collect::<Vec<_>>()).unwrap();
            let targets: Vec<f64> = rows.iter().map(|&(a, b)| a.sin() + 0.3 * b).collect();
            let loss = if pinball { Loss::Pinball(q) } else { Loss::SquaredError };
            let cfg = GbmConfig { n_trees: 10, min_samples_leaf: 2, ..GbmConfig::default() }.with_loss(loss);
            let model = fit(&x, &targets, &cfg).unwrap();
            let back = GbmModel::from_dump(&model.to_dump()).unwrap();
            prop_assert_eq!(back.to_dump(), model.to_dump());
            for row in x.iter_rows() {
                prop_assert_eq!(back.predict_row(row), model.predict_row(row));
            }
        }
    }
}
