#include "comet/workload.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace comet {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::CyclicGraph: return "CyclicGraph";
    case Errc::MissingInput: return "MissingInput";
    case Errc::InvalidBlocking: return "InvalidBlocking";
    case Errc::SchemaError: return "SchemaError";
    case Errc::SemanticError: return "SemanticError";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::UnknownLevel: return "UnknownLevel";
    case Errc::UnknownTensor: return "UnknownTensor";
    case Errc::BadFactorization: return "BadFactorization";
    case Errc::SpatialOverflow: return "SpatialOverflow";
    case Errc::DanglingCollective: return "DanglingCollective";
    case Errc::UnsupportedParticipantCount: return "UnsupportedParticipantCount";
    case Errc::ZeroBandwidth: return "ZeroBandwidth";
    case Errc::IncompatibleUnit: return "IncompatibleUnit";
    case Errc::BadTile: return "BadTile";
    case Errc::BadSchedule: return "BadSchedule";
    case Errc::EventBudgetExceeded: return "EventBudgetExceeded";
    case Errc::Unsatisfiable: return "Unsatisfiable";
    case Errc::NoValidMapping: return "NoValidMapping";
    case Errc::IncompatibleStrategy: return "IncompatibleStrategy";
    case Errc::Oom: return "OOM";
  }
  return "Unknown";
}

const char* unary_name(UnaryFn f) {
  switch (f) {
    case UnaryFn::Exp: return "exp";
    case UnaryFn::Reciprocal: return "reciprocal";
    case UnaryFn::Sqrt: return "sqrt";
    case UnaryFn::ScaleByConst: return "scale";
  }
  return "?";
}

const char* binary_name(BinaryFn f) {
  switch (f) {
    case BinaryFn::Add: return "add";
    case BinaryFn::Sub: return "sub";
    case BinaryFn::Mul: return "mul";
    case BinaryFn::Div: return "div";
    case BinaryFn::Max: return "max";
  }
  return "?";
}

const char* reduce_name(ReduceFn f) { return f == ReduceFn::Max ? "max" : "sum"; }

bool TensorSpec::has_dim(const std::string& dim) const {
  for (const auto& d : dims)
    if (d.name == dim) return true;
  return false;
}

Extent TensorSpec::extent_of(const std::string& dim) const {
  for (const auto& d : dims)
    if (d.name == dim) return d.extent;
  return 1;
}

std::string ElementaryOp::simd_fn_name() const {
  switch (kind) {
    case Kind::Gemm: return "mac";
    case Kind::ElementwiseUnary: return unary_name(unary);
    case Kind::ElementwiseBinary: return binary_name(binary);
    case Kind::RowReduction: return reduce == ReduceFn::Max ? "max" : "add";
  }
  return "?";
}

const TensorSpec& CompoundGraph::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  fail(Errc::UnknownTensor, "no tensor named '" + name + "'");
}

TensorSpec& CompoundGraph::tensor(const std::string& name) {
  for (auto& t : tensors)
    if (t.name == name) return t;
  fail(Errc::UnknownTensor, "no tensor named '" + name + "'");
}

bool CompoundGraph::has_tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

const ElementaryOp& CompoundGraph::op(const std::string& id) const {
  for (const auto& o : ops)
    if (o.id == id) return o;
  fail(Errc::SchemaError, "no op named '" + id + "'");
}

bool CompoundGraph::is_external(const std::string& name) const {
  return std::find(externals.begin(), externals.end(), name) != externals.end();
}

int CompoundGraph::producer_of(const std::string& name) const {
  for (size_t i = 0; i < ops.size(); ++i)
    if (ops[i].output == name) return static_cast<int>(i);
  return -1;
}

Extent CompoundGraph::dim_extent(const std::string& dim) const {
  Extent e = 1;
  for (const auto& t : tensors) e = std::max(e, t.extent_of(dim));
  return e;
}

namespace {

// Broadcast-join two dim lists: matching names must agree or one side be 1.
std::vector<Dim> broadcast_dims(const std::vector<Dim>& a, const std::vector<Dim>& b,
                                const std::string& ctx) {
  std::vector<Dim> out = a;
  for (const auto& db : b) {
    bool found = false;
    for (auto& da : out) {
      if (da.name != db.name) continue;
      found = true;
      if (da.extent == db.extent) break;
      if (da.extent == 1) {
        da.extent = db.extent;
      } else if (db.extent != 1) {
        fail(Errc::ShapeMismatch, ctx + ": dim '" + db.name + "' extents " +
                                      std::to_string(da.extent) + " vs " + std::to_string(db.extent));
      }
      break;
    }
    // A size-1 dim on the right side broadcasts away; only real extents
    // extend the output shape.
    if (!found && db.extent > 1) out.push_back(db);
  }
  return out;
}

std::vector<Dim> infer_op_output(const ElementaryOp& op, const std::vector<TensorSpec*>& ins) {
  switch (op.kind) {
    case ElementaryOp::Kind::Gemm: {
      if (ins.size() != 2) fail(Errc::ShapeMismatch, op.id + ": GEMM needs exactly 2 inputs");
      const auto& a = *ins[0];
      const auto& b = *ins[1];
      // The contraction dim is the unique shared dim name with extent > 1 on
      // either side; remaining dims pass through in operand order.
      std::string shared;
      for (const auto& da : a.dims) {
        if (b.has_dim(da.name)) {
          if (!shared.empty())
            fail(Errc::ShapeMismatch, op.id + ": GEMM inputs share more than one dim");
          shared = da.name;
        }
      }
      if (shared.empty()) fail(Errc::ShapeMismatch, op.id + ": GEMM inputs share no dim");
      if (a.extent_of(shared) != b.extent_of(shared))
        fail(Errc::ShapeMismatch, op.id + ": contraction dim '" + shared + "' extents " +
                                      std::to_string(a.extent_of(shared)) + " vs " +
                                      std::to_string(b.extent_of(shared)));
      std::vector<Dim> out;
      for (const auto& d : a.dims)
        if (d.name != shared) out.push_back(d);
      for (const auto& d : b.dims)
        if (d.name != shared) out.push_back(d);
      if (out.empty()) out.push_back({shared, 1});  // scalar-by-scalar corner
      return out;
    }
    case ElementaryOp::Kind::ElementwiseUnary:
      if (ins.size() != 1) fail(Errc::ShapeMismatch, op.id + ": unary op needs 1 input");
      return ins[0]->dims;
    case ElementaryOp::Kind::ElementwiseBinary: {
      if (ins.size() != 2) fail(Errc::ShapeMismatch, op.id + ": binary op needs 2 inputs");
      return broadcast_dims(ins[0]->dims, ins[1]->dims, op.id);
    }
    case ElementaryOp::Kind::RowReduction: {
      if (ins.size() != 1) fail(Errc::ShapeMismatch, op.id + ": reduction needs 1 input");
      if (!ins[0]->has_dim(op.reduced_dim))
        fail(Errc::ShapeMismatch, op.id + ": input lacks reduced dim '" + op.reduced_dim + "'");
      auto out = ins[0]->dims;
      for (auto& d : out)
        if (d.name == op.reduced_dim) d.extent = 1;
      return out;
    }
  }
  fail(Errc::SchemaError, op.id + ": unknown op kind");
}

}  // namespace

CompoundGraph infer_shapes(const CompoundGraph& graph) {
  CompoundGraph g = graph;

  std::set<std::string> known;
  for (const auto& e : g.externals) {
    // Externals that no op produces are graph inputs and must be declared
    // with concrete shapes; produced externals are graph outputs.
    if (g.producer_of(e) >= 0) continue;
    if (!g.has_tensor(e)) fail(Errc::SchemaError, "external input '" + e + "' not declared");
    known.insert(e);
  }

  // Kahn-style topological ordering over the op list.
  std::vector<ElementaryOp> ordered;
  std::vector<bool> placed(g.ops.size(), false);
  for (size_t round = 0; round < g.ops.size(); ++round) {
    bool progress = false;
    for (size_t i = 0; i < g.ops.size(); ++i) {
      if (placed[i]) continue;
      const auto& op = g.ops[i];
      bool ready = true;
      for (const auto& in : op.inputs)
        if (!known.count(in)) ready = false;
      if (!ready) continue;

      std::vector<TensorSpec*> ins;
      for (const auto& in : op.inputs) {
        if (!g.has_tensor(in)) fail(Errc::SchemaError, op.id + ": unknown input '" + in + "'");
        ins.push_back(&g.tensor(in));
      }
      auto out_dims = infer_op_output(op, ins);
      if (!g.has_tensor(op.output)) {
        TensorSpec t;
        t.name = op.output;
        t.dtype_bytes = ins.empty() ? 2 : ins[0]->dtype_bytes;
        g.tensors.push_back(t);
      }
      auto& out = g.tensor(op.output);
      if (!out.dims.empty() && out.dims.size() == out_dims.size()) {
        for (size_t d = 0; d < out_dims.size(); ++d)
          if (out.dims[d].extent != out_dims[d].extent && out.dims[d].extent > 1)
            fail(Errc::ShapeMismatch, op.id + ": declared output shape disagrees with inference");
      }
      out.dims = out_dims;
      known.insert(op.output);
      ordered.push_back(op);
      placed[i] = true;
      progress = true;
    }
    if (!progress) break;
  }
  if (ordered.size() != g.ops.size())
    fail(Errc::CyclicGraph, "ops are not topologically orderable (cycle or missing producer)");
  g.ops = ordered;

  for (const auto& t : g.tensors) {
    for (const auto& d : t.dims)
      if (d.extent < 1) fail(Errc::ShapeMismatch, "tensor '" + t.name + "' has extent < 1");
    if (t.dtype_bytes < 1) fail(Errc::ShapeMismatch, "tensor '" + t.name + "' has dtype_bytes < 1");
  }
  return g;
}

namespace {

ElementaryOp make_gemm(const std::string& id, const std::string& a, const std::string& b,
                       const std::string& out) {
  ElementaryOp op;
  op.id = id;
  op.kind = ElementaryOp::Kind::Gemm;
  op.inputs = {a, b};
  op.output = out;
  return op;
}

ElementaryOp make_unary(const std::string& id, UnaryFn fn, const std::string& in,
                        const std::string& out, double scale = 1.0) {
  ElementaryOp op;
  op.id = id;
  op.kind = ElementaryOp::Kind::ElementwiseUnary;
  op.unary = fn;
  op.scale_const = scale;
  op.inputs = {in};
  op.output = out;
  return op;
}

ElementaryOp make_binary(const std::string& id, BinaryFn fn, const std::string& a,
                         const std::string& b, const std::string& out) {
  ElementaryOp op;
  op.id = id;
  op.kind = ElementaryOp::Kind::ElementwiseBinary;
  op.binary = fn;
  op.inputs = {a, b};
  op.output = out;
  return op;
}

ElementaryOp make_reduce(const std::string& id, ReduceFn fn, const std::string& dim,
                         const std::string& in, const std::string& out) {
  ElementaryOp op;
  op.id = id;
  op.kind = ElementaryOp::Kind::RowReduction;
  op.reduce = fn;
  op.reduced_dim = dim;
  op.inputs = {in};
  op.output = out;
  return op;
}

TensorSpec make_tensor(const std::string& name, std::vector<Dim> dims, int dtype_bytes) {
  TensorSpec t;
  t.name = name;
  t.dims = std::move(dims);
  t.dtype_bytes = dtype_bytes;
  return t;
}

}  // namespace

CompoundGraph gen_gemm_softmax(Extent m, Extent n, Extent k, int dtype_bytes) {
  if (m < 1 || n < 1 || k < 1) fail(Errc::SemanticError, "gemm_softmax dims must be >= 1");
  CompoundGraph g;
  g.tensors = {
      make_tensor("a", {{"M", m}, {"K", k}}, dtype_bytes),
      make_tensor("b", {{"K", k}, {"N", n}}, dtype_bytes),
  };
  g.externals = {"a", "b", "out"};
  g.ops = {
      make_gemm("gemm", "a", "b", "c"),
      make_reduce("row_max", ReduceFn::Max, "N", "c", "c_max"),
      make_binary("shift", BinaryFn::Sub, "c", "c_max", "c_shift"),
      make_unary("expop", UnaryFn::Exp, "c_shift", "c_exp"),
      make_reduce("row_sum", ReduceFn::Sum, "N", "c_exp", "row_sum_v"),
      make_binary("norm", BinaryFn::Div, "c_exp", "row_sum_v", "out"),
  };
  g.fusion_groups = {{"gemm"}, {"row_max", "shift", "expop", "row_sum", "norm"}};
  return infer_shapes(g);
}

CompoundGraph gen_gemm_layernorm(Extent m, Extent n, Extent k, int dtype_bytes) {
  if (m < 1 || n < 1 || k < 1) fail(Errc::SemanticError, "gemm_layernorm dims must be >= 1");
  constexpr double kEps = 1e-5;
  CompoundGraph g;
  g.tensors = {
      make_tensor("a", {{"M", m}, {"K", k}}, dtype_bytes),
      make_tensor("b", {{"K", k}, {"N", n}}, dtype_bytes),
      make_tensor("eps", {{"M", 1}, {"N", 1}}, dtype_bytes),
      make_tensor("gamma", {{"M", 1}, {"N", n}}, dtype_bytes),
      make_tensor("beta", {{"M", 1}, {"N", n}}, dtype_bytes),
  };
  g.tensor("eps").init_value = kEps;
  g.tensor("gamma").fill_default = 1.0;
  g.tensor("beta").fill_default = 0.0;
  g.externals = {"a", "b", "eps", "gamma", "beta", "out"};
  g.ops = {
      make_gemm("gemm", "a", "b", "c"),
      make_reduce("sum1", ReduceFn::Sum, "N", "c", "c_sum"),
      make_unary("mean", UnaryFn::ScaleByConst, "c_sum", "c_mean", 1.0 / double(n)),
      make_binary("center", BinaryFn::Sub, "c", "c_mean", "c_cent"),
      make_binary("square", BinaryFn::Mul, "c_cent", "c_cent", "c_sq"),
      make_reduce("sum2", ReduceFn::Sum, "N", "c_sq", "sq_sum"),
      make_unary("variance", UnaryFn::ScaleByConst, "sq_sum", "var", 1.0 / double(n)),
      make_binary("var_eps", BinaryFn::Add, "var", "eps", "var_e"),
      make_unary("stddev", UnaryFn::Sqrt, "var_e", "std"),
      make_binary("normalize", BinaryFn::Div, "c_cent", "std", "c_norm"),
      make_binary("scale_g", BinaryFn::Mul, "c_norm", "gamma", "c_scaled"),
      make_binary("shift_b", BinaryFn::Add, "c_scaled", "beta", "out"),
  };
  g.fusion_groups = {{"gemm"},
                     {"sum1", "mean", "center", "square", "sum2", "variance", "var_eps", "stddev",
                      "normalize", "scale_g", "shift_b"}};
  return infer_shapes(g);
}

AttentionVariant attention_variant_from(const std::string& s) {
  if (s == "UA" || s == "ua") return AttentionVariant::UA;
  if (s == "PFA" || s == "pfa") return AttentionVariant::PFA;
  if (s == "FA" || s == "fa") return AttentionVariant::FA;
  fail(Errc::SchemaError, "unknown attention variant '" + s + "'");
}

const char* attention_variant_name(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::UA: return "UA";
    case AttentionVariant::PFA: return "PFA";
    case AttentionVariant::FA: return "FA";
  }
  return "?";
}

CompoundGraph gen_attention(AttentionVariant variant, Extent m, Extent k, Extent n, Extent l,
                            Extent block_n, int dtype_bytes) {
  if (m < 1 || k < 1 || n < 1 || l < 1) fail(Errc::SemanticError, "attention dims must be >= 1");

  if (variant != AttentionVariant::FA) {
    CompoundGraph g;
    g.tensors = {
        make_tensor("q", {{"M", m}, {"K", k}}, dtype_bytes),
        make_tensor("k_t", {{"K", k}, {"N", n}}, dtype_bytes),
        make_tensor("v", {{"N", n}, {"L", l}}, dtype_bytes),
    };
    g.externals = {"q", "k_t", "v", "o"};
    g.ops = {
        make_gemm("score", "q", "k_t", "s"),
        make_reduce("row_max", ReduceFn::Max, "N", "s", "s_max"),
        make_binary("shift", BinaryFn::Sub, "s", "s_max", "s_shift"),
        make_unary("expop", UnaryFn::Exp, "s_shift", "s_exp"),
        make_reduce("row_sum", ReduceFn::Sum, "N", "s_exp", "s_den"),
        make_binary("norm", BinaryFn::Div, "s_exp", "s_den", "p"),
        make_gemm("context", "p", "v", "o"),
    };
    if (variant == AttentionVariant::UA) {
      g.fusion_groups = {{"score"}, {"row_max", "shift", "expop", "row_sum", "norm"}, {"context"}};
    } else {  // PFA: score fused with softmax, context separate
      g.fusion_groups = {{"score", "row_max", "shift", "expop", "row_sum", "norm"}, {"context"}};
    }
    return infer_shapes(g);
  }

  // FA: block-wise decomposition over N with running row statistics. Each
  // block contributes a score GEMM, local softmax statistics, the running
  // max/denominator updates and an output rescale + accumulate.
  if (block_n < 1 || n % block_n != 0)
    fail(Errc::InvalidBlocking, "block_n=" + std::to_string(block_n) + " does not divide N=" +
                                    std::to_string(n));
  const Extent nb = n / block_n;

  CompoundGraph g;
  g.tensors = {make_tensor("q", {{"M", m}, {"K", k}}, dtype_bytes)};
  g.externals = {"q"};
  for (Extent j = 0; j < nb; ++j) {
    const std::string js = std::to_string(j);
    g.tensors.push_back(make_tensor("k_t_" + js, {{"K", k}, {"Nb", block_n}}, dtype_bytes));
    g.tensors.push_back(make_tensor("v_" + js, {{"Nb", block_n}, {"L", l}}, dtype_bytes));
    g.externals.push_back("k_t_" + js);
    g.externals.push_back("v_" + js);
  }
  // Running-state seeds live on-chip; they are never DRAM traffic.
  auto m_init = make_tensor("m_run_0", {{"M", m}, {"Nb", 1}}, dtype_bytes);
  m_init.init_value = -std::numeric_limits<double>::infinity();
  auto l_init = make_tensor("l_run_0", {{"M", m}, {"Nb", 1}}, dtype_bytes);
  l_init.init_value = 0.0;
  auto o_init = make_tensor("o_acc_0", {{"M", m}, {"L", l}}, dtype_bytes);
  o_init.init_value = 0.0;
  g.tensors.push_back(m_init);
  g.tensors.push_back(l_init);
  g.tensors.push_back(o_init);
  g.externals.push_back("m_run_0");
  g.externals.push_back("l_run_0");
  g.externals.push_back("o_acc_0");
  g.externals.push_back("o");

  g.fusion_groups.emplace_back();
  auto& group = g.fusion_groups.back();
  for (Extent j = 0; j < nb; ++j) {
    const std::string js = std::to_string(j);
    const std::string prev = std::to_string(j);      // state entering block j
    const std::string next = std::to_string(j + 1);  // state leaving block j
    std::vector<ElementaryOp> blk = {
        make_gemm("score_" + js, "q", "k_t_" + js, "s_" + js),
        make_reduce("blk_max_" + js, ReduceFn::Max, "Nb", "s_" + js, "s_max_" + js),
        make_binary("run_max_" + js, BinaryFn::Max, "m_run_" + prev, "s_max_" + js,
                    "m_run_" + next),
        make_binary("shift_" + js, BinaryFn::Sub, "s_" + js, "m_run_" + next, "s_shift_" + js),
        make_unary("exp_" + js, UnaryFn::Exp, "s_shift_" + js, "p_" + js),
        make_reduce("blk_sum_" + js, ReduceFn::Sum, "Nb", "p_" + js, "l_blk_" + js),
        make_binary("corr_sub_" + js, BinaryFn::Sub, "m_run_" + prev, "m_run_" + next,
                    "corr_arg_" + js),
        make_unary("corr_exp_" + js, UnaryFn::Exp, "corr_arg_" + js, "corr_" + js),
        make_binary("l_scale_" + js, BinaryFn::Mul, "l_run_" + prev, "corr_" + js,
                    "l_corr_" + js),
        make_binary("l_add_" + js, BinaryFn::Add, "l_corr_" + js, "l_blk_" + js, "l_run_" + next),
        make_binary("o_scale_" + js, BinaryFn::Mul, "o_acc_" + prev, "corr_" + js,
                    "o_corr_" + js),
        make_gemm("pv_" + js, "p_" + js, "v_" + js, "o_blk_" + js),
        make_binary("o_add_" + js, BinaryFn::Add, "o_corr_" + js, "o_blk_" + js, "o_acc_" + next),
    };
    for (auto& op : blk) {
      group.push_back(op.id);
      g.ops.push_back(std::move(op));
    }
  }
  auto final_div = make_binary("finalize", BinaryFn::Div, "o_acc_" + std::to_string(nb),
                               "l_run_" + std::to_string(nb), "o");
  group.push_back(final_div.id);
  g.ops.push_back(std::move(final_div));
  return infer_shapes(g);
}

}  // namespace comet
