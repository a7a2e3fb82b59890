//! Template-tree encoding of expressions.
//!
//! Every solution is a full `m`-ary tree of fixed depth `D` stored as a flat
//! slot array in pre-order. Slot `0` is the root, slot `1` its left-most
//! child and slot `len - 1` the right-most leaf. A function of arity `a < m`
//! only consumes its left-most `a` children; the remaining slots below it are
//! introns that stay populated but never influence the output.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coeffmut::init_sigma;
use crate::error::{Error, Result};
use crate::evaluator::Fitness;

/// Atomic functions available to the search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Function {
    Add,
    Sub,
    Mul,
    Div,
    Log,
    Sqrt,
    Sin,
    Cos,
}

impl Function {
    pub const ALL: [Function; 8] = [
        Function::Add,
        Function::Sub,
        Function::Mul,
        Function::Div,
        Function::Log,
        Function::Sqrt,
        Function::Sin,
        Function::Cos,
    ];

    pub fn arity(self) -> usize {
        match self {
            Function::Add | Function::Sub | Function::Mul | Function::Div => 2,
            Function::Log | Function::Sqrt | Function::Sin | Function::Cos => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Function::Add => "+",
            Function::Sub => "-",
            Function::Mul => "*",
            Function::Div => "/",
            Function::Log => "log",
            Function::Sqrt => "sqrt",
            Function::Sin => "sin",
            Function::Cos => "cos",
        }
    }

    /// Accepts both the printed symbol and a spelled-out alias (`add`, `div`, ...).
    pub fn from_name(name: &str) -> Option<Function> {
        let f = match name.trim().to_ascii_lowercase().as_str() {
            "+" | "add" | "plus" => Function::Add,
            "-" | "sub" | "minus" => Function::Sub,
            "*" | "×" | "mul" | "times" => Function::Mul,
            "/" | "÷" | "div" => Function::Div,
            "log" | "ln" => Function::Log,
            "sqrt" => Function::Sqrt,
            "sin" => Function::Sin,
            "cos" => Function::Cos,
            _ => return None,
        };
        Some(f)
    }

    /// Dense id in `0..8`, used as a categorical token.
    pub fn id(self) -> usize {
        self as usize
    }
}

/// Content of one template slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Function(Function),
    Feature(usize),
    /// Ephemeral random constant with its self-adaptive step size.
    Constant { value: f64, sigma: f64 },
}

impl Node {
    pub fn arity(&self) -> usize {
        match self {
            Node::Function(f) => f.arity(),
            _ => 0,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Node::Constant { .. })
    }

    /// Symbol identity: same function, same feature, or same constant value.
    /// The step size `sigma` is ignored because it never affects outputs.
    pub fn same_symbol(&self, other: &Node) -> bool {
        match (self, other) {
            (Node::Function(a), Node::Function(b)) => a == b,
            (Node::Feature(a), Node::Feature(b)) => a == b,
            (Node::Constant { value: a, .. }, Node::Constant { value: b, .. }) => {
                a.to_bits() == b.to_bits() || a == b
            }
            _ => false,
        }
    }
}

/// Number of slots of a full `max_arity`-ary tree of the given depth.
pub fn template_size(depth: usize, max_arity: usize) -> Result<usize> {
    if max_arity == 0 {
        return Err(Error::config("maximal arity must be at least 1"));
    }
    if max_arity == 1 {
        return depth
            .checked_add(1)
            .ok_or_else(|| Error::config("template size overflows"));
    }
    let exp = u32::try_from(depth + 1).map_err(|_| Error::config("template depth too large"))?;
    let power = max_arity
        .checked_pow(exp)
        .ok_or_else(|| Error::config(format!("template of depth {depth} and arity {max_arity} overflows")))?;
    Ok((power - 1) / (max_arity - 1))
}

/// Shape of the fixed template shared by a whole population.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    depth: usize,
    max_arity: usize,
    len: usize,
}

impl Template {
    pub fn new(depth: usize, max_arity: usize) -> Result<Template> {
        let len = template_size(depth, max_arity)?;
        Ok(Template {
            depth,
            max_arity,
            len,
        })
    }

    /// Template able to host every function of `functions`.
    pub fn for_functions(depth: usize, functions: &[Function]) -> Result<Template> {
        let m = functions.iter().map(|f| f.arity()).max().unwrap_or(1);
        Template::new(depth, m)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn max_arity(&self) -> usize {
        self.max_arity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Slot count of a subtree whose root sits at `level`.
    pub fn subtree_len(&self, level: usize) -> usize {
        debug_assert!(level <= self.depth);
        let height = self.depth - level;
        if self.max_arity == 1 {
            height + 1
        } else {
            (self.max_arity.pow(height as u32 + 1) - 1) / (self.max_arity - 1)
        }
    }

    /// Pre-order index of child `k` (0-based) of the slot `slot` at `level`.
    pub fn child(&self, slot: usize, level: usize, k: usize) -> usize {
        debug_assert!(level < self.depth && k < self.max_arity);
        slot + 1 + k * self.subtree_len(level + 1)
    }

    /// All `max_arity` children of `slot`, left to right. Empty at leaf level.
    pub fn children(&self, slot: usize, level: usize) -> Vec<usize> {
        if level >= self.depth {
            return Vec::new();
        }
        (0..self.max_arity)
            .map(|k| self.child(slot, level, k))
            .collect()
    }

    /// Depth level of every slot, in pre-order.
    pub fn levels(&self) -> Vec<usize> {
        let mut levels = vec![0; self.len];
        let mut stack = vec![(0usize, 0usize)];
        while let Some((slot, level)) = stack.pop() {
            levels[slot] = level;
            for child in self.children(slot, level) {
                stack.push((child, level + 1));
            }
        }
        levels
    }
}

/// Initialization flavour of half-and-half.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    Full,
    Grow,
}

/// Everything `random_tree` needs beyond the template.
#[derive(Clone, Debug)]
pub struct InitParams<'a> {
    pub functions: &'a [Function],
    pub n_features: usize,
    /// Constants are drawn as `coeff_scale * U(-5, 5)`.
    pub coeff_scale: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

/// Maps a `U(-5, 5)` draw onto the data-dependent coefficient range.
pub fn scaled_constant(coeff_scale: f64, uniform_draw: f64) -> f64 {
    coeff_scale * uniform_draw
}

/// A solution: one symbol per template slot, plus its latest fitness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    template: Template,
    nodes: Vec<Node>,
    #[serde(skip)]
    pub fitness: Option<Fitness>,
}

impl Tree {
    pub fn new(template: Template, nodes: Vec<Node>) -> Result<Tree> {
        if nodes.len() != template.len() {
            return Err(Error::config(format!(
                "tree has {} slots, template needs {}",
                nodes.len(),
                template.len()
            )));
        }
        for (slot, level) in template.levels().into_iter().enumerate() {
            let arity = nodes[slot].arity();
            if arity > template.max_arity() {
                return Err(Error::config(format!(
                    "slot {slot} holds a function of arity {arity} > {}",
                    template.max_arity()
                )));
            }
            if arity > 0 && level == template.depth() {
                return Err(Error::config(format!("slot {slot} is a leaf but holds a function")));
            }
        }
        Ok(Tree {
            template,
            nodes,
            fitness: None,
        })
    }

    /// Random tree: `Full` puts functions on every non-leaf level, `Grow`
    /// flips a fair coin between function and terminal there. Terminals are
    /// uniform over the features plus one constant option. Intron slots are
    /// filled by the same draw.
    pub fn random<R: Rng + ?Sized>(
        template: Template,
        mode: InitMode,
        params: &InitParams<'_>,
        rng: &mut R,
    ) -> Tree {
        assert!(!params.functions.is_empty(), "function set must not be empty");
        let nodes = template
            .levels()
            .into_iter()
            .map(|level| {
                let use_function = level < template.depth()
                    && match mode {
                        InitMode::Full => true,
                        InitMode::Grow => rng.random_bool(0.5),
                    };
                if use_function {
                    let f = params.functions[rng.random_range(0..params.functions.len())];
                    Node::Function(f)
                } else {
                    random_terminal(params, rng)
                }
            })
            .collect();
        Tree {
            template,
            nodes,
            fitness: None,
        }
    }

    pub fn template(&self) -> Template {
        self.template
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, slot: usize) -> &Node {
        &self.nodes[slot]
    }

    /// Overwrites one slot. Callers must keep functions off the leaf level;
    /// positional donation between trees of one template guarantees that.
    pub fn set_node(&mut self, slot: usize, node: Node) {
        self.nodes[slot] = node;
    }

    pub fn node_mut(&mut self, slot: usize) -> &mut Node {
        &mut self.nodes[slot]
    }

    /// Slots reachable from the root through the left-most `arity` children
    /// of each function.
    pub fn active_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        let mut stack = vec![(0usize, 0usize)];
        while let Some((slot, level)) = stack.pop() {
            mask[slot] = true;
            let arity = self.nodes[slot].arity();
            if level < self.template.depth() {
                for k in 0..arity {
                    stack.push((self.template.child(slot, level, k), level + 1));
                }
            }
        }
        mask
    }

    /// Active slots in post-order (children before parents), the execution
    /// order of a stack machine.
    pub fn postfix(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        self.push_postfix(0, 0, &mut out);
        out
    }

    fn push_postfix(&self, slot: usize, level: usize, out: &mut Vec<usize>) {
        let arity = self.nodes[slot].arity();
        for k in 0..arity {
            self.push_postfix(self.template.child(slot, level, k), level + 1, out);
        }
        out.push(slot);
    }

    pub fn active_len(&self) -> usize {
        self.active_mask().into_iter().filter(|&a| a).count()
    }

    /// Slots currently holding a constant, introns included.
    pub fn constant_slots(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_constant())
            .map(|(i, _)| i)
            .collect()
    }

    /// Infix rendering of the active expression, features named `x1..xd`.
    pub fn to_expression_string(&self) -> String {
        self.render(&|j| format!("x{}", j + 1))
    }

    /// Infix rendering with caller-provided feature names.
    pub fn to_expression_string_with(&self, names: &[String]) -> String {
        self.render(&|j| names.get(j).cloned().unwrap_or_else(|| format!("x{}", j + 1)))
    }

    fn render(&self, name: &dyn Fn(usize) -> String) -> String {
        let mut out = String::new();
        self.render_slot(0, 0, name, &mut out);
        out
    }

    fn render_slot(&self, slot: usize, level: usize, name: &dyn Fn(usize) -> String, out: &mut String) {
        match self.nodes[slot] {
            Node::Feature(j) => out.push_str(&name(j)),
            Node::Constant { value, .. } => out.push_str(&format_constant(value)),
            Node::Function(f) if f.arity() == 2 => {
                out.push('(');
                self.render_slot(self.template.child(slot, level, 0), level + 1, name, out);
                let _ = write!(out, " {} ", f.name());
                self.render_slot(self.template.child(slot, level, 1), level + 1, name, out);
                out.push(')');
            }
            Node::Function(f) => {
                out.push_str(f.name());
                out.push('(');
                self.render_slot(self.template.child(slot, level, 0), level + 1, name, out);
                out.push(')');
            }
        }
    }
}

/// Shortest representation that parses back to the identical `f64`.
pub fn format_constant(value: f64) -> String {
    if value < 0.0 {
        format!("({value:?})")
    } else {
        format!("{value:?}")
    }
}

fn random_terminal<R: Rng + ?Sized>(params: &InitParams<'_>, rng: &mut R) -> Node {
    let pick = rng.random_range(0..=params.n_features);
    if pick < params.n_features {
        Node::Feature(pick)
    } else {
        let draw = rng.random_range(-5.0..5.0);
        Node::Constant {
            value: scaled_constant(params.coeff_scale, draw),
            sigma: init_sigma(rng, params.gamma, params.epsilon),
        }
    }
}
