#include <algorithm>

#include "comet/mapspace.hpp"

namespace comet {

namespace {

bool has_ops(const CompoundGraph& graph, std::initializer_list<const char*> ids) {
  for (const char* id : ids) {
    bool found = false;
    for (const auto& op : graph.ops)
      if (op.id == id) found = true;
    if (!found) return false;
  }
  return true;
}

bool is_softmax_graph(const CompoundGraph& g) {
  return has_ops(g, {"gemm", "row_max", "shift", "expop", "row_sum", "norm"});
}

bool is_layernorm_graph(const CompoundGraph& g) {
  return has_ops(g, {"gemm", "sum1", "mean", "center", "square", "sum2", "variance", "var_eps",
                     "stddev", "normalize", "scale_g", "shift_b"});
}

bool is_attention_graph(const CompoundGraph& g) {
  return has_ops(g, {"score", "row_max", "shift", "expop", "row_sum", "norm", "context"});
}

bool is_flash_attention_graph(const CompoundGraph& g) {
  return has_ops(g, {"score_0", "finalize"});
}

CollectiveOpSpec all_reduce(const std::string& tensor, ReduceFn fn, const std::string& after,
                            bool chip_scope) {
  CollectiveOpSpec co;
  co.type = ColOpType::AllReduce;
  co.tensor = tensor;
  co.reduce = fn;
  if (chip_scope) {
    co.src = {MemLevelName::GB, MemLevelName::OB};
    co.dest = {MemLevelName::OB};
  } else {
    co.src = {MemLevelName::GB};
    co.dest = {MemLevelName::GB};
  }
  co.after_op = after;
  return co;
}

CollectiveOpSpec gather_to_gb(const std::string& tensor, const std::string& after) {
  CollectiveOpSpec co;
  co.type = ColOpType::Gather;
  co.tensor = tensor;
  co.src = {MemLevelName::GB};
  co.dest = {MemLevelName::GB};
  co.after_op = after;
  return co;
}

GroupConstraint group_of(std::vector<std::vector<std::string>> subgroups,
                         std::set<std::string> cluster_dims, std::set<std::string> core_dims) {
  GroupConstraint gc;
  gc.subgroups = std::move(subgroups);
  gc.cluster_dims = std::move(cluster_dims);
  gc.core_dims = std::move(core_dims);
  return gc;
}

// Unfused: every elementary op runs as its own DRAM-level group; spatial
// unrolling is limited to each op's output dims so no partials ever need an
// implicit merge.
MapSpaceConstraints unfused(const CompoundGraph& graph) {
  MapSpaceConstraints cons;
  for (const auto& op : graph.ops) {
    std::set<std::string> safe;
    for (const auto& d : graph.tensor(op.output).dims)
      if (d.extent > 1) safe.insert(d.name);
    cons.groups.push_back(group_of({{op.id}}, safe, safe));
  }
  return cons;
}

MapSpaceConstraints softmax_family(const CompoundGraph& graph, const std::string& name) {
  const std::vector<std::vector<std::string>> dist_subgroups = {
      {"gemm", "row_max"}, {"shift", "expop", "row_sum"}, {"norm"}};
  const std::vector<std::vector<std::string>> softmax_dist = {
      {"row_max"}, {"shift", "expop", "row_sum"}, {"norm"}};

  MapSpaceConstraints cons;
  if (name == "Fused-GEMM-distSM") {
    cons.groups.push_back(group_of(dist_subgroups, {"M", "N"}, {"M", "N"}));
    cons.collectives = {all_reduce("c_max", ReduceFn::Max, "row_max", true),
                        all_reduce("row_sum_v", ReduceFn::Sum, "row_sum", true)};
  } else if (name == "Fused-distSM") {
    cons.groups.push_back(group_of({{"gemm"}}, {"M", "N"}, {"M", "N"}));
    cons.groups.push_back(group_of(softmax_dist, {"M", "N"}, {"M", "N"}));
    cons.collectives = {all_reduce("c_max", ReduceFn::Max, "row_max", true),
                        all_reduce("row_sum_v", ReduceFn::Sum, "row_sum", true)};
  } else if (name == "Fused-GEMM-SM") {
    auto gc = group_of({{"gemm"}, {"row_max"}, {"shift", "expop", "row_sum"}, {"norm"}},
                       {"M", "N"}, {"M", "N"});
    gc.local_subgroups = {1, 2, 3};
    cons.groups.push_back(std::move(gc));
    cons.collectives = {gather_to_gb("c", "gemm")};
  } else {
    fail(Errc::IncompatibleStrategy, "'" + name + "' is not a GEMM-Softmax strategy");
  }
  return cons;
}

MapSpaceConstraints layernorm_family(const CompoundGraph& graph, const std::string& name) {
  const std::vector<std::vector<std::string>> dist_subgroups = {
      {"gemm", "sum1"},
      {"mean", "center", "square", "sum2"},
      {"variance", "var_eps", "stddev", "normalize", "scale_g", "shift_b"}};
  const std::vector<std::vector<std::string>> ln_dist = {
      {"sum1"},
      {"mean", "center", "square", "sum2"},
      {"variance", "var_eps", "stddev", "normalize", "scale_g", "shift_b"}};

  MapSpaceConstraints cons;
  if (name == "Fused-GEMM-distLN") {
    cons.groups.push_back(group_of(dist_subgroups, {"M", "N"}, {"M", "N"}));
    cons.collectives = {all_reduce("c_sum", ReduceFn::Sum, "sum1", false),
                        all_reduce("sq_sum", ReduceFn::Sum, "sum2", false)};
  } else if (name == "Fused-distLN") {
    cons.groups.push_back(group_of({{"gemm"}}, {"M", "N"}, {"M", "N"}));
    cons.groups.push_back(group_of(ln_dist, {"M", "N"}, {"M", "N"}));
    cons.collectives = {all_reduce("c_sum", ReduceFn::Sum, "sum1", false),
                        all_reduce("sq_sum", ReduceFn::Sum, "sum2", false)};
  } else if (name == "Fused-GEMM-LN") {
    auto gc = group_of({{"gemm"},
                        {"sum1"},
                        {"mean", "center", "square", "sum2"},
                        {"variance", "var_eps", "stddev", "normalize", "scale_g", "shift_b"}},
                       {"M", "N"}, {"M", "N"});
    gc.local_subgroups = {1, 2, 3};
    cons.groups.push_back(std::move(gc));
    cons.collectives = {gather_to_gb("c", "gemm")};
  } else {
    fail(Errc::IncompatibleStrategy, "'" + name + "' is not a GEMM-LayerNorm strategy");
  }
  (void)graph;
  return cons;
}

MapSpaceConstraints attention_family(const CompoundGraph& graph, const std::string& name) {
  MapSpaceConstraints cons;
  if (name == "UA") {
    cons.groups.push_back(group_of({{"score"}}, {"M", "N"}, {"M", "N"}));
    cons.groups.push_back(group_of({{"row_max"}, {"shift", "expop", "row_sum"}, {"norm"}},
                                   {"M", "N"}, {"M", "N"}));
    cons.groups.push_back(group_of({{"context"}}, {"M", "L"}, {"M", "L"}));
    cons.collectives = {all_reduce("s_max", ReduceFn::Max, "row_max", true),
                        all_reduce("s_den", ReduceFn::Sum, "row_sum", true)};
  } else if (name == "PFA") {
    cons.groups.push_back(group_of(
        {{"score", "row_max"}, {"shift", "expop", "row_sum"}, {"norm"}}, {"M", "N"}, {"M", "N"}));
    cons.groups.push_back(group_of({{"context"}}, {"M", "L"}, {"M", "L"}));
    cons.collectives = {all_reduce("s_max", ReduceFn::Max, "row_max", true),
                        all_reduce("s_den", ReduceFn::Sum, "row_sum", true)};
  } else {
    fail(Errc::IncompatibleStrategy, "'" + name + "' is not an attention strategy");
  }
  (void)graph;
  return cons;
}

MapSpaceConstraints flash_attention(const CompoundGraph& graph) {
  // All block ops fuse into a single core-resident chain; rows (and the
  // context columns) spread spatially, so no collective is ever needed.
  GroupConstraint gc;
  gc.subgroups.emplace_back();
  for (const auto& op : graph.ops) gc.subgroups.back().push_back(op.id);
  gc.cluster_dims = {"M", "L"};
  gc.core_dims = {"M", "L"};
  MapSpaceConstraints cons;
  cons.groups.push_back(std::move(gc));
  return cons;
}

}  // namespace

std::vector<std::string> known_strategies() {
  return {"Unfused",      "Fused-distSM", "Fused-GEMM-SM", "Fused-GEMM-distSM", "Fused-distLN",
          "Fused-GEMM-LN", "Fused-GEMM-distLN", "UA", "PFA", "FA"};
}

MapSpaceConstraints build_named_strategy(const std::string& name, const CompoundGraph& graph,
                                         const ArchSpec& arch) {
  (void)arch;
  if (name == "Unfused") {
    if (is_flash_attention_graph(graph))
      fail(Errc::IncompatibleStrategy, "Unfused does not apply to the blocked attention graph");
    return unfused(graph);
  }
  if (name == "Fused-distSM" || name == "Fused-GEMM-SM" || name == "Fused-GEMM-distSM") {
    if (!is_softmax_graph(graph))
      fail(Errc::IncompatibleStrategy, "'" + name + "' needs a GEMM-Softmax graph");
    return softmax_family(graph, name);
  }
  if (name == "Fused-distLN" || name == "Fused-GEMM-LN" || name == "Fused-GEMM-distLN") {
    if (!is_layernorm_graph(graph))
      fail(Errc::IncompatibleStrategy, "'" + name + "' needs a GEMM-LayerNorm graph");
    return layernorm_family(graph, name);
  }
  if (name == "UA" || name == "PFA") {
    if (!is_attention_graph(graph))
      fail(Errc::IncompatibleStrategy, "'" + name + "' needs an attention graph");
    return attention_family(graph, name);
  }
  if (name == "FA") {
    if (!is_flash_attention_graph(graph))
      fail(Errc::IncompatibleStrategy, "FA needs the blocked attention graph");
    return flash_attention(graph);
  }
  fail(Errc::IncompatibleStrategy, "unknown strategy '" + name + "'");
}

}  // namespace comet
