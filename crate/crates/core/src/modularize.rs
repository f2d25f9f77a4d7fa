//! Shared-tile planning across programs of one kernel family.
//!
//! A min tile is the componentwise gcd of the programs' dimensions (no
//! padding, several iterations each); a max tile is the componentwise maximum
//! (one iteration each, zero-padded operands). Planned GEMM and convolution
//! programs can be lowered to a single design whose tile kernels are reused by
//! every program through load/compute/store sequences.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{DesignConfig, Direction, InterfaceDecl, MemSpace, MemoryDecl, ModuleCall};
use crate::kernels::stimulus::random_bindings;
use crate::kernels::{
    eval_operator, run_design,
    ConvSpec, KernelKind, LinearSpec, LinearVariant, MoveDirection, MoveSpec, OperatorSpec,
};
use crate::tensor::{Tensor, TensorShape};
use crate::util::is_identifier;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModularizeError {
    #[error("no programs given")]
    Empty,
    #[error("dimension tuples differ in arity: {0:?}")]
    Arity(Vec<usize>),
    #[error("dimensions must be >= 1: {0:?}")]
    ZeroDim(Vec<usize>),
    #[error("tile {tile:?} violates {policy} for program {program:?}")]
    Policy {
        tile: Vec<usize>,
        program: Vec<usize>,
        policy: Policy,
    },
    #[error("programs do not share one kernel family: {0}")]
    FamilyMismatch(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("malformed programs spec: {0}")]
    Spec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[serde(alias = "min")]
    MinGcd,
    #[serde(alias = "max")]
    MaxFit,
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::MinGcd => "min_gcd",
            Policy::MaxFit => "max_fit",
        })
    }
}

impl std::str::FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min" | "min_gcd" => Ok(Policy::MinGcd),
            "max" | "max_fit" => Ok(Policy::MaxFit),
            _ => Err(format!("unknown policy \"{s}\" (expected min or max)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSpec {
    pub tile: Vec<usize>,
    pub policy: Policy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramPlan {
    pub id: String,
    pub dims: Vec<usize>,
    /// Tile invocations along each dimension.
    pub grid: Vec<usize>,
    /// Zero padding added to each dimension so the grid covers it exactly.
    pub padding: Vec<usize>,
    pub iterations: usize,
    /// `iterations` times the work of one tile (product of tile dims).
    pub modeled_latency: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModularPlan {
    pub shared: TileSpec,
    pub programs: Vec<ProgramPlan>,
}

impl ModularPlan {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn check_tuples(programs: &[Vec<usize>]) -> Result<usize, ModularizeError> {
    let first = programs.first().ok_or(ModularizeError::Empty)?;
    let arities: BTreeSet<usize> = programs.iter().map(|p| p.len()).collect();
    if arities.len() != 1 || first.is_empty() {
        return Err(ModularizeError::Arity(programs.iter().map(|p| p.len()).collect()));
    }
    if let Some(p) = programs.iter().find(|p| p.contains(&0)) {
        return Err(ModularizeError::ZeroDim(p.clone()));
    }
    Ok(first.len())
}

fn componentwise(programs: &[Vec<usize>], f: impl Fn(usize, usize) -> usize) -> Result<Vec<usize>, ModularizeError> {
    let n = check_tuples(programs)?;
    Ok((0..n).map(|i| programs.iter().map(|p| p[i]).reduce(&f).unwrap()).collect())
}

/// Componentwise gcd of the programs' dimensions.
pub fn min_tile(programs: &[Vec<usize>]) -> Result<TileSpec, ModularizeError> {
    Ok(TileSpec {
        tile: componentwise(programs, gcd)?,
        policy: Policy::MinGcd,
    })
}

/// Componentwise maximum of the programs' dimensions.
pub fn max_tile(programs: &[Vec<usize>]) -> Result<TileSpec, ModularizeError> {
    Ok(TileSpec {
        tile: componentwise(programs, usize::max)?,
        policy: Policy::MaxFit,
    })
}

/// Tile invocations per dimension: `ceil(program / tile)`.
pub fn iteration_grid(program: &[usize], tile: &TileSpec) -> Result<Vec<usize>, ModularizeError> {
    if program.len() != tile.tile.len() {
        return Err(ModularizeError::Arity(vec![program.len(), tile.tile.len()]));
    }
    if tile.tile.contains(&0) || program.contains(&0) {
        return Err(ModularizeError::ZeroDim(if tile.tile.contains(&0) {
            tile.tile.clone()
        } else {
            program.to_vec()
        }));
    }
    if tile.policy == Policy::MaxFit && program.iter().zip(&tile.tile).any(|(p, t)| t < p) {
        return Err(ModularizeError::Policy {
            tile: tile.tile.clone(),
            program: program.to_vec(),
            policy: tile.policy,
        });
    }
    Ok(program.iter().zip(&tile.tile).map(|(p, t)| p.div_ceil(*t)).collect())
}

pub fn iteration_count(program: &[usize], tile: &TileSpec) -> Result<usize, ModularizeError> {
    Ok(iteration_grid(program, tile)?.iter().product())
}

/// Plan every program against an explicit tile.
pub fn plan_with_tile(programs: &[(String, Vec<usize>)], tile: TileSpec) -> Result<ModularPlan, ModularizeError> {
    let work: usize = tile.tile.iter().product();
    let plans = programs
        .iter()
        .map(|(id, dims)| {
            let grid = iteration_grid(dims, &tile)?;
            let padding = grid
                .iter()
                .zip(&tile.tile)
                .zip(dims)
                .map(|((g, t), d)| g * t - d)
                .collect();
            let iterations = grid.iter().product();
            Ok(ProgramPlan {
                id: id.clone(),
                dims: dims.clone(),
                grid,
                padding,
                iterations,
                modeled_latency: iterations * work,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(ModularPlan {
        shared: tile,
        programs: plans,
    })
}

pub fn plan_shared(programs: &[(String, Vec<usize>)], policy: Policy) -> Result<ModularPlan, ModularizeError> {
    let dims: Vec<Vec<usize>> = programs.iter().map(|(_, d)| d.clone()).collect();
    let tile = match policy {
        Policy::MinGcd => min_tile(&dims)?,
        Policy::MaxFit => max_tile(&dims)?,
    };
    plan_with_tile(programs, tile)
}

/// Dimension tuple a spec contributes to tiling, if its family tiles.
///
/// GEMM: `(m, k, n)`; conv: `(in_ch, out_ch, out_h, out_w)`; attention: `(heads,)`.
pub fn dims_of(spec: &OperatorSpec) -> Option<Vec<usize>> {
    match spec {
        OperatorSpec::Linear(s) if s.variant == LinearVariant::Gemm => Some(vec![s.m, s.k, s.n]),
        OperatorSpec::Conv(s) => {
            let (oh, ow) = s.out_hw()?;
            Some(vec![s.in_ch, s.out_ch, oh, ow])
        }
        OperatorSpec::Attention(s) => Some(vec![s.heads]),
        _ => None,
    }
}

fn shape(dims: &[usize]) -> TensorShape {
    TensorShape::new(dims.to_vec()).expect("positive dims")
}

/// Incrementally assembled modular design.
struct Builder {
    cfg: DesignConfig,
}

impl Builder {
    fn memory(&mut self, name: &str, dims: &[usize]) -> String {
        if !self.cfg.memories.iter().any(|m| m.name == name) {
            self.cfg.memories.push(MemoryDecl {
                name: name.to_string(),
                space: MemSpace::OnChip,
                shape: shape(dims),
                element: None,
            });
        }
        name.to_string()
    }

    fn interface(&mut self, name: &str, direction: Direction, dims: &[usize]) -> String {
        self.cfg.interfaces.push(InterfaceDecl {
            name: name.to_string(),
            direction,
            shape: shape(dims),
            element: None,
        });
        name.to_string()
    }

    fn call(&mut self, spec: OperatorSpec, inputs: &[&str], output: &str) {
        self.cfg.calls.push(ModuleCall::new(spec, inputs, &[output]));
    }

    fn mv(&mut self, direction: MoveDirection, outer: &[usize], offset: Vec<usize>, region: &[usize], src: &str, dst: &str) {
        let spec = OperatorSpec::Move(MoveSpec {
            direction,
            outer: shape(outer),
            offset,
            shape: shape(region),
        });
        self.call(spec, &[src], dst);
    }

    /// `src` zero-extended to `padded`, or `src` itself when no padding is needed.
    fn padded(&mut self, src: &str, dims: &[usize], padded: &[usize], at: Vec<usize>) -> String {
        if dims == padded {
            return src.to_string();
        }
        let name = self.memory(&format!("{src}_pad"), padded);
        self.mv(MoveDirection::Store, padded, at, dims, src, &name);
        name
    }
}

/// Lower planned GEMM or conv programs onto shared tile kernels.
///
/// Program `p` gets interfaces `<p>_a`, `<p>_b`, [`<p>_bias`] → `<p>_c` for
/// GEMM and `<p>_x`, `<p>_w`, [`<p>_bias`] → `<p>_y` for conv. Reduction
/// tiles run in increasing order and partial sums are carried through the
/// `accumulate` operand, so each output equals the direct oracle bit for bit.
pub fn emit_modular_design(
    name: &str,
    plan: &ModularPlan,
    base_specs: &[OperatorSpec],
) -> Result<DesignConfig, ModularizeError> {
    if plan.programs.is_empty() {
        return Err(ModularizeError::Empty);
    }
    if base_specs.len() != plan.programs.len() {
        return Err(ModularizeError::Unsupported(format!(
            "{} specs for {} planned programs",
            base_specs.len(),
            plan.programs.len()
        )));
    }
    let kinds: BTreeSet<KernelKind> = base_specs.iter().map(|s| s.kind()).collect();
    if kinds.len() != 1 {
        let tags: Vec<&str> = kinds.iter().map(|k| k.tag()).collect();
        return Err(ModularizeError::FamilyMismatch(tags.join(", ")));
    }
    for (p, spec) in plan.programs.iter().zip(base_specs) {
        if !is_identifier(&p.id) {
            return Err(ModularizeError::Unsupported(format!("program id \"{}\" is not an identifier", p.id)));
        }
        if dims_of(spec).as_deref() != Some(p.dims.as_slice()) {
            return Err(ModularizeError::Unsupported(format!(
                "program {} dims {:?} do not match its spec",
                p.id, p.dims
            )));
        }
    }
    let mut b = Builder {
        cfg: DesignConfig::empty(name),
    };
    for (p, spec) in plan.programs.iter().zip(base_specs) {
        match spec {
            OperatorSpec::Linear(s) if s.variant == LinearVariant::Gemm => gemm_program(&mut b, p, s, &plan.shared.tile),
            OperatorSpec::Conv(s) => conv_program(&mut b, p, s, &plan.shared.tile)?,
            other => {
                return Err(ModularizeError::Unsupported(format!(
                    "modular emission for {} kernels",
                    other.kind()
                )))
            }
        }
    }
    Ok(b.cfg)
}

fn gemm_program(b: &mut Builder, p: &ProgramPlan, s: &LinearSpec, tile: &[usize]) {
    let (m, k, n) = (s.m, s.k, s.n);
    let (tm, tk, tn) = (tile[0], tile[1], tile[2]);
    let (gm, gk, gn) = (p.grid[0], p.grid[1], p.grid[2]);
    let (pm, pk, pn) = (gm * tm, gk * tk, gn * tn);
    let id = &p.id;

    let a = b.interface(&format!("{id}_a"), Direction::In, &[m, k]);
    let bm = b.interface(&format!("{id}_b"), Direction::In, &[k, n]);
    let bias = s.bias.then(|| b.interface(&format!("{id}_bias"), Direction::In, &[n]));
    let c = b.interface(&format!("{id}_c"), Direction::Out, &[m, n]);

    let a_src = b.padded(&a, &[m, k], &[pm, pk], vec![0, 0]);
    let b_src = b.padded(&bm, &[k, n], &[pk, pn], vec![0, 0]);
    let bias_src = bias.map(|bb| b.padded(&bb, &[n], &[pn], vec![0]));
    let c_dst = if (pm, pn) == (m, n) {
        c.clone()
    } else {
        b.memory(&format!("{id}_c_pad"), &[pm, pn])
    };

    let t_a = b.memory(&format!("tile_a_{tm}x{tk}"), &[tm, tk]);
    let t_b = b.memory(&format!("tile_b_{tk}x{tn}"), &[tk, tn]);
    let t_c = [
        b.memory(&format!("tile_c0_{tm}x{tn}"), &[tm, tn]),
        b.memory(&format!("tile_c1_{tm}x{tn}"), &[tm, tn]),
    ];
    let t_bias = bias_src.as_ref().map(|_| b.memory(&format!("tile_bias_{tn}"), &[tn]));

    for mi in 0..gm {
        for ni in 0..gn {
            if let (Some(src), Some(tb)) = (&bias_src, &t_bias) {
                b.mv(MoveDirection::Load, &[pn], vec![ni * tn], &[tn], src, tb);
            }
            for ki in 0..gk {
                b.mv(MoveDirection::Load, &[pm, pk], vec![mi * tm, ki * tk], &[tm, tk], &a_src, &t_a);
                b.mv(MoveDirection::Load, &[pk, pn], vec![ki * tk, ni * tn], &[tk, tn], &b_src, &t_b);
                let mut spec = LinearSpec::gemm(tm, tk, tn);
                spec.loop_order = s.loop_order;
                spec.unroll = s.unroll;
                spec.inline_mul = s.inline_mul;
                spec.accumulate = ki > 0;
                spec.bias = s.bias && ki + 1 == gk;
                let mut inputs = vec![t_a.as_str(), t_b.as_str()];
                if spec.accumulate {
                    inputs.push(&t_c[(ki + 1) % 2]);
                }
                if spec.bias {
                    inputs.push(t_bias.as_deref().unwrap());
                }
                b.call(OperatorSpec::Linear(spec), &inputs, &t_c[ki % 2]);
            }
            let last = &t_c[(gk - 1) % 2];
            b.mv(MoveDirection::Store, &[pm, pn], vec![mi * tm, ni * tn], &[tm, tn], last, &c_dst);
        }
    }
    if c_dst != c {
        b.mv(MoveDirection::Load, &[pm, pn], vec![0, 0], &[m, n], &c_dst, &c);
    }
}

fn conv_program(b: &mut Builder, p: &ProgramPlan, s: &ConvSpec, tile: &[usize]) -> Result<(), ModularizeError> {
    if s.groups != 1 {
        return Err(ModularizeError::Unsupported("modular emission for grouped convolution".into()));
    }
    let (oh, ow) = s.out_hw().expect("dims_of checked the output");
    let (ks, st, pad) = (s.kernel, s.stride, s.padding);
    let (ti, to, th, tw) = (tile[0], tile[1], tile[2], tile[3]);
    let (gi, go, gh, gw) = (p.grid[0], p.grid[1], p.grid[2], p.grid[3]);
    let (pi, po, poh, pow) = (gi * ti, go * to, gh * th, gw * tw);
    // padded input extent: every output tile's window, and the original plus its border
    let ph = ((poh - 1) * st + ks).max(s.h + pad);
    let pw = ((pow - 1) * st + ks).max(s.w + pad);
    let (tih, tiw) = ((th - 1) * st + ks, (tw - 1) * st + ks);
    let id = &p.id;

    let x = b.interface(&format!("{id}_x"), Direction::In, &[s.in_ch, s.h, s.w]);
    let w = b.interface(&format!("{id}_w"), Direction::In, &[s.out_ch, s.in_ch, ks, ks]);
    let bias = s.bias.then(|| b.interface(&format!("{id}_bias"), Direction::In, &[s.out_ch]));
    let y = b.interface(&format!("{id}_y"), Direction::Out, &[s.out_ch, oh, ow]);

    let x_src = b.padded(&x, &[s.in_ch, s.h, s.w], &[pi, ph, pw], vec![0, pad, pad]);
    let w_src = b.padded(&w, &[s.out_ch, s.in_ch, ks, ks], &[po, pi, ks, ks], vec![0, 0, 0, 0]);
    let bias_src = bias.map(|bb| b.padded(&bb, &[s.out_ch], &[po], vec![0]));
    let y_dst = if (po, poh, pow) == (s.out_ch, oh, ow) {
        y.clone()
    } else {
        b.memory(&format!("{id}_y_pad"), &[po, poh, pow])
    };

    let t_x = b.memory(&format!("tile_x_{ti}x{tih}x{tiw}"), &[ti, tih, tiw]);
    let t_w = b.memory(&format!("tile_w_{to}x{ti}x{ks}x{ks}"), &[to, ti, ks, ks]);
    let t_y = [
        b.memory(&format!("tile_y0_{to}x{th}x{tw}"), &[to, th, tw]),
        b.memory(&format!("tile_y1_{to}x{th}x{tw}"), &[to, th, tw]),
    ];
    let t_bias = bias_src.as_ref().map(|_| b.memory(&format!("tile_bias_{to}"), &[to]));

    for oi in 0..go {
        if let (Some(src), Some(tb)) = (&bias_src, &t_bias) {
            b.mv(MoveDirection::Load, &[po], vec![oi * to], &[to], src, tb);
        }
        for yi in 0..gh {
            for xi in 0..gw {
                for ci in 0..gi {
                    b.mv(
                        MoveDirection::Load,
                        &[pi, ph, pw],
                        vec![ci * ti, yi * th * st, xi * tw * st],
                        &[ti, tih, tiw],
                        &x_src,
                        &t_x,
                    );
                    b.mv(
                        MoveDirection::Load,
                        &[po, pi, ks, ks],
                        vec![oi * to, ci * ti, 0, 0],
                        &[to, ti, ks, ks],
                        &w_src,
                        &t_w,
                    );
                    let mut spec = ConvSpec::new(ti, to, tih, tiw, ks);
                    spec.stride = st;
                    spec.unroll_in = s.unroll_in;
                    spec.unroll_out = s.unroll_out;
                    spec.accumulate = ci > 0;
                    spec.bias = s.bias && ci + 1 == gi;
                    let mut inputs = vec![t_x.as_str(), t_w.as_str()];
                    if spec.accumulate {
                        inputs.push(&t_y[(ci + 1) % 2]);
                    }
                    if spec.bias {
                        inputs.push(t_bias.as_deref().unwrap());
                    }
                    b.call(OperatorSpec::Conv(spec), &inputs, &t_y[ci % 2]);
                }
                let last = &t_y[(gi - 1) % 2];
                b.mv(
                    MoveDirection::Store,
                    &[po, poh, pow],
                    vec![oi * to, yi * th, xi * tw],
                    &[to, th, tw],
                    last,
                    &y_dst,
                );
            }
        }
    }
    if y_dst != y {
        b.mv(MoveDirection::Load, &[po, poh, pow], vec![0, 0, 0], &[s.out_ch, oh, ow], &y_dst, &y);
    }
    Ok(())
}

/// Combine programs into one design so their common kernels are emitted once.
///
/// Buffers are prefixed with the program's design name. Every kind in
/// `shared` must occur in every program; the returned list gives, per shared
/// kind, how many distinct kernel functions the merged design needs for it.
pub fn merge_programs(
    name: &str,
    programs: &[DesignConfig],
    shared: &[KernelKind],
) -> Result<(DesignConfig, Vec<(KernelKind, usize)>), ModularizeError> {
    if programs.is_empty() {
        return Err(ModularizeError::Empty);
    }
    let mut out = DesignConfig::empty(name);
    out.synth.data_type = programs[0].synth.data_type.clone();
    for p in programs {
        for kind in shared {
            if !p.calls.iter().any(|c| c.kernel() == *kind) {
                return Err(ModularizeError::FamilyMismatch(format!(
                    "program {} has no {} call",
                    p.name,
                    kind.tag()
                )));
            }
        }
        let rename = |n: &str| format!("{}_{n}", p.name);
        out.memories.extend(p.memories.iter().map(|m| MemoryDecl {
            name: rename(&m.name),
            ..m.clone()
        }));
        out.interfaces.extend(p.interfaces.iter().map(|i| InterfaceDecl {
            name: rename(&i.name),
            ..i.clone()
        }));
        out.calls.extend(p.calls.iter().map(|c| ModuleCall {
            params: c.params.clone(),
            inputs: c.inputs.iter().map(|n| rename(n)).collect(),
            outputs: c.outputs.iter().map(|n| rename(n)).collect(),
        }));
    }
    let counts = shared
        .iter()
        .map(|kind| {
            let distinct: BTreeSet<String> = out
                .calls
                .iter()
                .filter(|c| c.kernel() == *kind)
                .map(|c| c.params.canonical_json())
                .collect();
            (*kind, distinct.len())
        })
        .collect();
    Ok((out, counts))
}

/// Input document naming the programs to modularize.
///
/// Each program gives either `dims` or a `kernel` with `params` (dims are
/// then derived). A dims-only tuple of arity 3 is read as a plain GEMM.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramsDoc {
    #[serde(default = "default_modular_name")]
    pub name: String,
    pub programs: Vec<ProgramDecl>,
}

fn default_modular_name() -> String {
    "modular".into()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramDecl {
    pub id: String,
    #[serde(default)]
    pub dims: Option<Vec<usize>>,
    #[serde(default)]
    pub kernel: Option<KernelKind>,
    #[serde(default)]
    pub params: Option<serde_json::Value>,
}

/// Programs resolved to dimension tuples, plus specs when every program has one.
#[derive(Clone, Debug)]
pub struct Programs {
    pub name: String,
    pub dims: Vec<(String, Vec<usize>)>,
    pub specs: Option<Vec<OperatorSpec>>,
}

pub fn parse_programs(text: &str) -> Result<Programs, ModularizeError> {
    let doc: ProgramsDoc = serde_json::from_str(text).map_err(|e| ModularizeError::Spec(e.to_string()))?;
    if !is_identifier(&doc.name) {
        return Err(ModularizeError::Spec(format!("name \"{}\" is not an identifier", doc.name)));
    }
    let mut dims = Vec::new();
    let mut specs = Vec::new();
    for p in &doc.programs {
        let spec = match (&p.kernel, &p.params) {
            (Some(kind), Some(params)) => Some(
                OperatorSpec::from_params(*kind, params)
                    .map_err(|e| ModularizeError::Spec(format!("{}: params.{}: {}", p.id, e.path, e.message)))?,
            ),
            (None, None) => match p.dims.as_deref() {
                Some(&[m, k, n]) if m > 0 && k > 0 && n > 0 => Some(OperatorSpec::Linear(LinearSpec::gemm(m, k, n))),
                _ => None,
            },
            _ => return Err(ModularizeError::Spec(format!("{}: kernel and params go together", p.id))),
        };
        let d = match (&p.dims, &spec) {
            (Some(d), Some(s)) if dims_of(s).as_ref() != Some(d) => {
                return Err(ModularizeError::Spec(format!("{}: dims {d:?} disagree with params", p.id)))
            }
            (Some(d), _) => d.clone(),
            (None, Some(s)) => dims_of(s)
                .ok_or_else(|| ModularizeError::Unsupported(format!("{}: {} kernels do not tile", p.id, s.kind())))?,
            (None, None) => return Err(ModularizeError::Spec(format!("{}: needs dims or kernel/params", p.id))),
        };
        dims.push((p.id.clone(), d));
        specs.extend(spec);
    }
    let complete = specs.len() == dims.len() && !specs.is_empty();
    Ok(Programs {
        name: doc.name,
        dims,
        specs: complete.then_some(specs),
    })
}

/// A one-call design over `spec`, ports named after its operand roles.
pub fn standalone_design(name: &str, spec: &OperatorSpec) -> Result<DesignConfig, ModularizeError> {
    let sig = spec.signature().map_err(ModularizeError::Spec)?;
    let mut b = Builder {
        cfg: DesignConfig::empty(name),
    };
    let ins: Vec<String> = sig
        .inputs
        .iter()
        .map(|(role, s)| b.interface(role, Direction::In, s.dims()))
        .collect();
    let (role, s) = &sig.outputs[0];
    let out = b.interface(role, Direction::Out, s.dims());
    let refs: Vec<&str> = ins.iter().map(String::as_str).collect();
    b.call(spec.clone(), &refs, &out);
    Ok(b.cfg)
}

/// The compute kernels of a modular design, each instantiated once.
pub fn shared_kernel_design(name: &str, modular: &DesignConfig) -> DesignConfig {
    let mut seen = BTreeSet::new();
    let mut b = Builder {
        cfg: DesignConfig::empty(name),
    };
    b.cfg.synth.data_type = modular.synth.data_type.clone();
    for call in &modular.calls {
        if matches!(call.params, OperatorSpec::Move(_)) || !seen.insert(call.params.canonical_json()) {
            continue;
        }
        let sig = call.params.signature().expect("validated design");
        let tag = format!("k{}", seen.len() - 1);
        let ins: Vec<String> = sig
            .inputs
            .iter()
            .map(|(role, s)| b.interface(&format!("{tag}_{role}"), Direction::In, s.dims()))
            .collect();
        let (role, s) = &sig.outputs[0];
        let out = b.interface(&format!("{tag}_{role}"), Direction::Out, s.dims());
        let refs: Vec<&str> = ins.iter().map(String::as_str).collect();
        b.call(call.params.clone(), &refs, &out);
    }
    b.cfg
}

/// Per-program comparison of a modular design against direct evaluation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FidelityEntry {
    pub id: String,
    pub max_abs_diff: f64,
    pub bit_exact: bool,
}

/// Run `design` and each base spec on the same random operands.
///
/// Outputs are compared with `==`, so signed zeros count as equal.
pub fn check_fidelity(
    design: &DesignConfig,
    plan: &ModularPlan,
    base_specs: &[OperatorSpec],
    seed: u64,
) -> Result<Vec<FidelityEntry>, String> {
    let bindings = random_bindings(design, seed);
    let outs = run_design(design, &bindings).map_err(|e| e.to_string())?;
    plan.programs
        .iter()
        .zip(base_specs)
        .map(|(p, spec)| {
            let (ins, out): (&[&str], &str) = match spec {
                OperatorSpec::Conv(_) => (&["x", "w", "bias"], "y"),
                _ => (&["a", "b", "bias"], "c"),
            };
            let operands: Vec<&Tensor> = ins
                .iter()
                .filter_map(|role| bindings.get(&format!("{}_{role}", p.id)))
                .collect();
            let direct = eval_operator(spec, &operands, None).map_err(|e| format!("{}: {e}", p.id))?;
            let got = outs
                .get(&format!("{}_{out}", p.id))
                .ok_or_else(|| format!("{}: no output", p.id))?;
            Ok(FidelityEntry {
                id: p.id.clone(),
                max_abs_diff: got.max_abs_diff(&direct),
                bit_exact: got.data() == direct.data(),
            })
        })
        .collect()
}
