#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "comet/errors.hpp"

namespace comet {

using Extent = std::int64_t;

struct Dim {
  std::string name;
  Extent extent = 1;
};

// A logical tensor: named dimensions with extents, plus element width.
// Tensors with `init_value` are materialized on-chip (running statistics,
// epsilon and the like) and are never streamed from DRAM; `fill_default`
// gives reference_eval a value for parameter tensors the caller omitted.
struct TensorSpec {
  std::string name;
  std::vector<Dim> dims;
  int dtype_bytes = 2;
  std::optional<double> init_value;
  std::optional<double> fill_default;

  Extent elements() const {
    Extent n = 1;
    for (const auto& d : dims) n *= d.extent;
    return n;
  }
  Extent footprint_bytes() const { return elements() * dtype_bytes; }
  bool has_dim(const std::string& dim) const;
  Extent extent_of(const std::string& dim) const;  // 1 if absent
};

enum class UnaryFn { Exp, Reciprocal, Sqrt, ScaleByConst };
enum class BinaryFn { Add, Sub, Mul, Div, Max };
enum class ReduceFn { Max, Sum };

const char* unary_name(UnaryFn f);
const char* binary_name(BinaryFn f);
const char* reduce_name(ReduceFn f);

struct ElementaryOp {
  enum class Kind { Gemm, ElementwiseUnary, ElementwiseBinary, RowReduction };

  std::string id;
  Kind kind = Kind::Gemm;
  std::vector<std::string> inputs;
  std::string output;

  UnaryFn unary = UnaryFn::Exp;
  double scale_const = 1.0;  // ScaleByConst only
  BinaryFn binary = BinaryFn::Add;
  ReduceFn reduce = ReduceFn::Sum;
  std::string reduced_dim;

  bool is_gemm() const { return kind == Kind::Gemm; }
  // Weight/energy table key for SIMD ops ("exp", "add", ...).
  std::string simd_fn_name() const;
};

struct CompoundGraph {
  std::vector<TensorSpec> tensors;
  std::vector<ElementaryOp> ops;       // topologically ordered after infer_shapes
  std::vector<std::string> externals;  // DRAM-resident at start/end
  // Generator-suggested fusion grouping (op ids); strategies may override.
  std::vector<std::vector<std::string>> fusion_groups;

  const TensorSpec& tensor(const std::string& name) const;
  TensorSpec& tensor(const std::string& name);
  bool has_tensor(const std::string& name) const;
  const ElementaryOp& op(const std::string& id) const;
  bool is_external(const std::string& name) const;
  // Producing op index, or -1 for externals.
  int producer_of(const std::string& name) const;
  Extent dim_extent(const std::string& dim) const;  // max over tensors
};

// Resolves every intermediate tensor's dims from the externals, validating
// GEMM contractions and elementwise broadcast compatibility. Ops are
// topologically sorted; a cycle or an unproducible input is an error.
CompoundGraph infer_shapes(const CompoundGraph& graph);

CompoundGraph gen_gemm_softmax(Extent m, Extent n, Extent k, int dtype_bytes);
CompoundGraph gen_gemm_layernorm(Extent m, Extent n, Extent k, int dtype_bytes);

enum class AttentionVariant { UA, PFA, FA };
AttentionVariant attention_variant_from(const std::string& s);
const char* attention_variant_name(AttentionVariant v);

CompoundGraph gen_attention(AttentionVariant variant, Extent m, Extent k, Extent n, Extent l,
                            Extent block_n, int dtype_bytes);

// ---- Dense reference evaluation (desk-scale test oracle only) ----

struct DenseTensor {
  std::vector<Extent> shape;  // aligned with the TensorSpec's dims
  std::vector<double> data;   // row-major

  static DenseTensor zeros(std::vector<Extent> shape);
  static DenseTensor filled(std::vector<Extent> shape, double v);
  Extent elements() const;
  double& at(const std::vector<Extent>& idx);
  double at(const std::vector<Extent>& idx) const;
};

std::map<std::string, DenseTensor> reference_eval(const CompoundGraph& graph,
                                                  const std::map<std::string, DenseTensor>& inputs);

}  // namespace comet
