#include "comet/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace comet {

const char* loop_kind_name(LoopKind k) {
  switch (k) {
    case LoopKind::Temporal: return "temporal";
    case LoopKind::SpatialCluster: return "spatial_cluster";
    case LoopKind::SpatialCore: return "spatial_core";
  }
  return "?";
}

LoopKind loop_kind_from(const std::string& s) {
  if (s == "temporal") return LoopKind::Temporal;
  if (s == "spatial_cluster") return LoopKind::SpatialCluster;
  if (s == "spatial_core") return LoopKind::SpatialCore;
  fail(Errc::SchemaError, "unknown loop kind '" + s + "'");
}

const char* schedule_name(Schedule s) {
  switch (s) {
    case Schedule::Sequential: return "sequential";
    case Schedule::Pipelined: return "pipelined";
    case Schedule::Parallel: return "parallel";
  }
  return "?";
}

Schedule schedule_from(const std::string& s) {
  if (s == "sequential") return Schedule::Sequential;
  if (s == "pipelined") return Schedule::Pipelined;
  if (s == "parallel") return Schedule::Parallel;
  fail(Errc::SchemaError, "unknown schedule '" + s + "'");
}

namespace {

using FactorMap = std::map<std::string, Extent>;

Extent factor_of(const FactorMap& m, const std::string& dim) {
  auto it = m.find(dim);
  return it == m.end() ? 1 : it->second;
}

Extent product(const FactorMap& m) {
  Extent p = 1;
  for (const auto& [_, f] : m) p *= f;
  return p;
}

bool tensor_has(const TensorSpec& t, const std::string& dim) { return t.extent_of(dim) > 1; }

struct SubInfo {
  std::vector<const ElementaryOp*> ops;
  bool local = false;
  std::set<std::string> produced;
  std::set<std::string> referenced;
  std::set<std::string> dims;
};

struct GroupInfo {
  const GroupSpec* spec = nullptr;
  int index = 0;
  FactorMap dram_t, cluster_s, gb_t, core_s, ob_t;
  std::vector<SubInfo> subs;
  std::map<std::string, int> producer_sub;
  std::set<std::string> tensors;
  std::set<std::string> dims;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

enum class Gran { DramIter, GbResident, GbIter, ObResident, ObIter };

// Tile bytes of a tensor at a given streaming granularity. Spatial factors
// divide only for distributed contexts and only over dims the tensor indexes.
double tile_bytes(const TensorSpec& t, const GroupInfo& g, bool local, Gran gran) {
  double bytes = t.dtype_bytes;
  for (const auto& d : t.dims) {
    if (d.extent <= 1) continue;
    double e = double(d.extent);
    e /= double(factor_of(g.dram_t, d.name));
    if (gran == Gran::DramIter) {
      bytes *= e;
      continue;
    }
    if (!local) e /= double(factor_of(g.cluster_s, d.name));
    if (gran != Gran::GbResident) e /= double(factor_of(g.gb_t, d.name));
    if ((gran == Gran::ObResident || gran == Gran::ObIter) && !local)
      e /= double(factor_of(g.core_s, d.name));
    if (gran == Gran::ObIter) e /= double(factor_of(g.ob_t, d.name));
    bytes *= e;
  }
  return bytes;
}

Extent temporal_deliveries(const FactorMap& t_factors, const TensorSpec& t) {
  Extent n = 1;
  for (const auto& [dim, f] : t_factors)
    if (tensor_has(t, dim)) n *= f;
  return n;
}

// Product over split dims the tensor does not index: multicast copies on
// fills, partial copies on drains.
double copies_over_lacking(const FactorMap& spatial, const TensorSpec& t,
                           const std::set<std::string>& scope_dims) {
  double c = 1;
  for (const auto& [dim, f] : spatial) {
    if (f <= 1 || !scope_dims.count(dim)) continue;
    if (!tensor_has(t, dim)) c *= double(f);
  }
  return c;
}

std::vector<LoopDim> filter_loops(const std::vector<LoopDim>& loops,
                                  const std::set<std::string>& dims) {
  std::vector<LoopDim> out;
  for (const auto& l : loops)
    if (dims.count(l.dim) && l.factor > 1) out.push_back(l);
  return out;
}

void derive_tensor_nests(MapNode& node, const CompoundGraph& graph,
                         const std::set<std::string>& tensors,
                         const std::map<std::string, std::vector<std::string>>& orders) {
  for (const auto& name : tensors) {
    const auto& spec = graph.tensor(name);
    std::vector<LoopDim> nest;
    for (const auto& l : node.loops)
      if (tensor_has(spec, l.dim)) nest.push_back(l);
    auto it = orders.find(name);
    if (it != orders.end()) {
      std::vector<LoopDim> ordered;
      for (const auto& dim : it->second)
        for (const auto& l : nest)
          if (l.dim == dim) ordered.push_back(l);
      for (const auto& l : nest)
        if (std::find(it->second.begin(), it->second.end(), l.dim) == it->second.end())
          ordered.push_back(l);
      nest = ordered;
    }
    if (!nest.empty()) node.tensor_nests[name] = nest;
  }
}

Extent loops_iterations(const std::vector<LoopDim>& loops) {
  Extent n = 1;
  for (const auto& l : loops)
    if (l.kind == LoopKind::Temporal) n *= l.factor;
  return n;
}

struct LiveInterval {
  double bytes = 0;
  int first = 0;
  int last = 0;
};

double max_live_bytes(const std::vector<LiveInterval>& intervals, int positions) {
  double best = 0;
  for (int p = 0; p < positions; ++p) {
    double sum = 0;
    for (const auto& iv : intervals)
      if (iv.first <= p && p <= iv.last) sum += iv.bytes;
    best = std::max(best, sum);
  }
  return best;
}

void validate_group_loops(const GroupSpec& spec, GroupInfo& info, const CompoundGraph& graph,
                          const ArchSpec& arch) {
  auto take = [&](const std::vector<LoopDim>& loops, FactorMap& temporal, FactorMap* spatial,
                  LoopKind spatial_kind, const char* where) {
    for (const auto& l : loops) {
      if (l.factor < 1)
        fail(Errc::BadFactorization,
             "factor " + std::to_string(l.factor) + " for dim '" + l.dim + "' at " + where);
      if (l.kind == LoopKind::Temporal) {
        temporal[l.dim] = temporal.count(l.dim) ? temporal[l.dim] * l.factor : l.factor;
      } else if (spatial && l.kind == spatial_kind) {
        (*spatial)[l.dim] = spatial->count(l.dim) ? (*spatial)[l.dim] * l.factor : l.factor;
      } else {
        fail(Errc::SchemaError,
             std::string("loop kind ") + loop_kind_name(l.kind) + " not allowed at " + where);
      }
    }
  };
  take(spec.dram_loops, info.dram_t, &info.cluster_s, LoopKind::SpatialCluster, "dram");
  take(spec.gb_loops, info.gb_t, &info.core_s, LoopKind::SpatialCore, "gb");
  take(spec.ob_loops, info.ob_t, nullptr, LoopKind::Temporal, "ob");

  auto check_known = [&](const FactorMap& m, const char* where) {
    for (const auto& [dim, f] : m)
      if (f > 1 && !info.dims.count(dim))
        fail(Errc::SchemaError,
             "dim '" + dim + "' at " + where + " is not used by this group's tensors");
  };
  check_known(info.dram_t, "dram");
  check_known(info.cluster_s, "dram");
  check_known(info.gb_t, "gb");
  check_known(info.core_s, "gb");
  check_known(info.ob_t, "ob");

  for (const auto& dim : info.dims) {
    const Extent extent = graph.dim_extent(dim);
    const Extent f = factor_of(info.dram_t, dim) * factor_of(info.cluster_s, dim) *
                     factor_of(info.gb_t, dim) * factor_of(info.core_s, dim) *
                     factor_of(info.ob_t, dim);
    if (f < 1 || extent % f != 0)
      fail(Errc::BadFactorization, "factors for dim '" + dim + "' multiply to " +
                                       std::to_string(f) + ", which does not divide extent " +
                                       std::to_string(extent));
  }

  if (product(info.cluster_s) > arch.clusters())
    fail(Errc::SpatialOverflow, "cluster unroll " + std::to_string(product(info.cluster_s)) +
                                    " exceeds " + std::to_string(arch.clusters()) + " clusters");
  if (product(info.core_s) > arch.cores_per_cluster())
    fail(Errc::SpatialOverflow, "core unroll " + std::to_string(product(info.core_s)) +
                                    " exceeds " + std::to_string(arch.cores_per_cluster()) +
                                    " cores per cluster");
}

struct CollectivePlacement {
  const CollectiveOpSpec* spec;
  int group = 0;
  int after_subgroup = 0;
};

struct Scope {
  bool clusters = false;
  bool cores = false;
  Grid grid{1, 1};
  MemLevelName mem = MemLevelName::OB;
};

Scope collective_scope(const CollectiveOpSpec& spec, const ArchSpec& arch) {
  auto is = [](const std::vector<MemLevelName>& v, std::initializer_list<MemLevelName> want) {
    return v == std::vector<MemLevelName>(want);
  };
  Scope s;
  if (is(spec.src, {MemLevelName::GB, MemLevelName::OB}) && is(spec.dest, {MemLevelName::OB})) {
    s.clusters = s.cores = true;
    s.grid = arch.chip_grid();
    s.mem = MemLevelName::OB;
  } else if (is(spec.src, {MemLevelName::OB}) && is(spec.dest, {MemLevelName::OB})) {
    s.cores = true;
    s.grid = arch.mesh.core_grid;
    s.mem = MemLevelName::OB;
  } else if (is(spec.src, {MemLevelName::GB}) && is(spec.dest, {MemLevelName::GB})) {
    s.clusters = true;
    s.grid = arch.mesh.cluster_grid;
    s.mem = MemLevelName::GB;
  } else {
    fail(Errc::SchemaError, "unsupported collective src/dest scope");
  }
  return s;
}

bool reduce_kind(ColOpType t) {
  return t == ColOpType::AllReduce || t == ColOpType::ReduceScatter;
}

}  // namespace

const MapNode& MappingTree::at(int node_id) const {
  for (const auto* n : all_nodes())
    if (n->node_id == node_id) return *n;
  fail(Errc::IndexOutOfRange, "no node with id " + std::to_string(node_id));
}

std::vector<const MapNode*> MappingTree::all_nodes() const {
  std::vector<const MapNode*> out;
  std::vector<const MapNode*> stack{root.get()};
  while (!stack.empty()) {
    const MapNode* n = stack.back();
    stack.pop_back();
    out.push_back(n);
    for (auto it = n->children.rbegin(); it != n->children.rend(); ++it)
      stack.push_back(it->get());
  }
  return out;
}

Extent iteration_count(const MapNode& node) { return loops_iterations(node.loops); }

double data_volume_per_iter(const MapNode& node, const std::string& tensor, Direction dir) {
  bool seen = node.tensor_nests.count(tensor) > 0;
  double total = 0;
  for (const auto& f : node.analysis.flows) {
    if (f.tensor != tensor) continue;
    seen = true;
    if (f.dir != dir) continue;
    double bytes = f.bytes_per_delivery * double(f.deliveries);
    if (dir == Direction::Write) bytes *= f.child_copies;
    total += bytes;
  }
  if (!seen)
    fail(Errc::UnknownTensor, "tensor '" + tensor + "' is not visible at node " + node.label);
  return total / double(std::max<Extent>(1, node.analysis.iterations));
}

std::map<MemLevelName, double> node_footprint(const MapNode& node) {
  return node.analysis.footprint_bytes;
}

std::string FitResult::describe() const {
  if (ok) return "ok";
  std::ostringstream os;
  os << "OOM at " << mem_level_name(level) << " (" << node << "): needs " << needed
     << " B, capacity " << capacity << " B";
  return os.str();
}

FitResult validate_fit(const MappingTree& tree, const ArchSpec& arch) {
  for (const auto* n : tree.all_nodes()) {
    for (const auto& [level, bytes] : n->analysis.footprint_bytes) {
      const double cap = arch.level(level).capacity_bytes;
      if (bytes > cap) return FitResult{false, level, bytes, cap, n->label};
    }
  }
  return FitResult{};
}

std::map<std::string, std::pair<double, double>> dram_traffic_by_tensor(const MappingTree& tree) {
  std::map<std::string, std::pair<double, double>> out;
  for (const auto* n : tree.all_nodes()) {
    if (n->kind != MapNode::Kind::DramStage) continue;
    for (const auto& f : n->analysis.flows) {
      auto& [rd, wr] = out[f.tensor];
      const double bytes = f.bytes_per_delivery * double(f.deliveries) *
                           (f.dir == Direction::Write ? f.child_copies : 1.0) *
                           double(f.parent_instances);
      if (f.dir == Direction::Read)
        rd += bytes;
      else
        wr += bytes;
    }
  }
  return out;
}

MappingTree build_tree(const MappingInstance& instance, const CompoundGraph& graph,
                       const ArchSpec& arch) {
  MappingTree tree;
  tree.graph = &graph;
  tree.instance = instance;

  // ---- op partition ----
  std::map<std::string, std::pair<int, int>> op_home;
  for (size_t gi = 0; gi < instance.groups.size(); ++gi) {
    const auto& gs = instance.groups[gi];
    if (gs.subgroups.empty()) fail(Errc::SchemaError, "group without subgroups");
    for (size_t si = 0; si < gs.subgroups.size(); ++si) {
      if (gs.subgroups[si].empty()) fail(Errc::SchemaError, "empty subgroup");
      for (const auto& op_id : gs.subgroups[si]) {
        graph.op(op_id);
        if (op_home.count(op_id)) fail(Errc::SchemaError, "op '" + op_id + "' mapped twice");
        op_home[op_id] = {int(gi), int(si)};
      }
    }
  }
  for (const auto& op : graph.ops)
    if (!op_home.count(op.id)) fail(Errc::SchemaError, "op '" + op.id + "' is not mapped");

  std::map<std::string, int> producer_group;
  for (const auto& op : graph.ops) producer_group[op.output] = op_home[op.id].first;

  // ---- per-group info ----
  std::vector<GroupInfo> groups(instance.groups.size());
  for (size_t gi = 0; gi < instance.groups.size(); ++gi) {
    auto& info = groups[gi];
    info.spec = &instance.groups[gi];
    info.index = int(gi);
    info.subs.resize(info.spec->subgroups.size());
    for (size_t si = 0; si < info.spec->subgroups.size(); ++si) {
      auto& sub = info.subs[si];
      sub.local = std::find(info.spec->local_subgroups.begin(), info.spec->local_subgroups.end(),
                            int(si)) != info.spec->local_subgroups.end();
      for (const auto& op_id : info.spec->subgroups[si]) {
        const auto& op = graph.op(op_id);
        sub.ops.push_back(&op);
        sub.produced.insert(op.output);
        info.producer_sub[op.output] = int(si);
        for (const auto& t : op.inputs) sub.referenced.insert(t);
        sub.referenced.insert(op.output);
      }
      for (const auto& t : sub.referenced) {
        info.tensors.insert(t);
        for (const auto& d : graph.tensor(t).dims)
          if (d.extent > 1) {
            sub.dims.insert(d.name);
            info.dims.insert(d.name);
          }
      }
    }
    validate_group_loops(*info.spec, info, graph, arch);

    // Every op input must already be available in mapping order.
    std::set<std::string> available;
    for (const auto& t : graph.tensors)
      if (graph.producer_of(t.name) < 0) available.insert(t.name);
    for (size_t gj = 0; gj < gi; ++gj)
      for (const auto& sg : instance.groups[gj].subgroups)
        for (const auto& op_id : sg) available.insert(graph.op(op_id).output);
    for (const auto& sub : info.subs) {
      for (const auto* op : sub.ops) {
        for (const auto& in : op->inputs)
          if (!available.count(in))
            fail(Errc::SchemaError,
                 "op '" + op->id + "' input '" + in + "' is produced later in the mapping order");
        available.insert(op->output);
      }
    }

    std::set<std::string> consumed_here, produced_here;
    for (const auto& sub : info.subs)
      for (const auto* op : sub.ops) {
        for (const auto& in : op->inputs) consumed_here.insert(in);
        produced_here.insert(op->output);
      }
    for (const auto& t : consumed_here)
      if (!produced_here.count(t)) info.inputs.push_back(t);
    for (const auto& t : produced_here) {
      bool needed_outside = graph.is_external(t);
      for (size_t gj = gi + 1; gj < instance.groups.size() && !needed_outside; ++gj)
        for (const auto& sg : instance.groups[gj].subgroups)
          for (const auto& op_id : sg)
            for (const auto& in : graph.op(op_id).inputs)
              if (in == t) needed_outside = true;
      if (needed_outside) info.outputs.push_back(t);
    }
  }

  // ---- collective placement ----
  std::vector<CollectivePlacement> placements;
  for (const auto& co : instance.collectives) {
    auto it = op_home.find(co.after_op);
    if (it == op_home.end())
      fail(Errc::SchemaError, "collective after unknown op '" + co.after_op + "'");
    const auto [gi, si] = it->second;
    if (!graph.has_tensor(co.tensor))
      fail(Errc::UnknownTensor, "collective on unknown tensor '" + co.tensor + "'");
    const auto& info = groups[gi];
    auto ps = info.producer_sub.find(co.tensor);
    if (ps == info.producer_sub.end() || ps->second > si)
      fail(Errc::DanglingCollective, "collective tensor '" + co.tensor +
                                         "' is not produced upstream of '" + co.after_op + "'");
    if (reduce_kind(co.type) && !co.reduce)
      fail(Errc::SchemaError, "reduction collective needs a reduce op");
    if (!reduce_kind(co.type) && co.reduce)
      fail(Errc::SchemaError, "non-reduction collective must not carry a reduce op");
    collective_scope(co, arch);  // validates src/dest
    placements.push_back({&co, gi, si});
  }

  // ---- build nodes ----
  int next_id = 0;
  tree.root = std::make_unique<MapNode>();
  tree.root->kind = MapNode::Kind::Root;
  tree.root->level = MemLevelName::DRAM;
  tree.root->label = "root";
  tree.root->node_id = next_id++;
  tree.root->schedule = instance.root_schedule;

  double dram_resident = 0;
  for (const auto& t : graph.tensors)
    if (graph.is_external(t.name) && !t.init_value) dram_resident += double(t.footprint_bytes());
  tree.root->analysis.footprint_bytes[MemLevelName::DRAM] = dram_resident;

  for (size_t gi = 0; gi < instance.groups.size(); ++gi) {
    auto& info = groups[gi];
    const auto& gs = instance.groups[gi];
    const std::string gtag = "g" + std::to_string(gi);

    auto dram_node = std::make_unique<MapNode>();
    dram_node->kind = MapNode::Kind::DramStage;
    dram_node->level = MemLevelName::DRAM;
    dram_node->label = gtag + "/dram";
    dram_node->node_id = next_id++;
    dram_node->loops = filter_loops(gs.dram_loops, info.dims);
    derive_tensor_nests(*dram_node, graph, info.tensors, gs.tensor_orders);
    dram_node->analysis.iterations = loops_iterations(dram_node->loops);

    auto gb_node = std::make_unique<MapNode>();
    gb_node->kind = MapNode::Kind::GbStage;
    gb_node->level = MemLevelName::GB;
    gb_node->label = gtag + "/gb";
    gb_node->node_id = next_id++;
    gb_node->loops = filter_loops(gs.gb_loops, info.dims);
    gb_node->schedule = gs.schedule;
    derive_tensor_nests(*gb_node, graph, info.tensors, gs.tensor_orders);
    gb_node->analysis.iterations = loops_iterations(gb_node->loops);

    std::vector<MapNode*> sub_nodes;
    for (size_t si = 0; si < gs.subgroups.size(); ++si) {
      auto& sub = info.subs[si];
      auto ob_node = std::make_unique<MapNode>();
      ob_node->kind = MapNode::Kind::ObStage;
      ob_node->level = MemLevelName::OB;
      ob_node->label = gtag + "/sg" + std::to_string(si);
      ob_node->node_id = next_id++;
      ob_node->loops = filter_loops(gs.ob_loops, sub.dims);
      ob_node->schedule =
          si < gs.subgroup_schedules.size() ? gs.subgroup_schedules[si] : Schedule::Sequential;
      derive_tensor_nests(*ob_node, graph, sub.referenced, gs.tensor_orders);
      ob_node->analysis.iterations = loops_iterations(ob_node->loops);

      if (ob_node->schedule != Schedule::Sequential) {
        std::set<std::string> prior;
        for (const auto* op : sub.ops) {
          for (const auto& in : op->inputs)
            if (prior.count(in))
              fail(Errc::BadSchedule, "subgroup '" + ob_node->label +
                                          "' has dependent ops under a concurrent schedule");
          prior.insert(op->output);
        }
      }

      for (const auto* op : sub.ops) {
        auto leaf = std::make_unique<MapNode>();
        leaf->kind = MapNode::Kind::Leaf;
        leaf->level = MemLevelName::OB;
        leaf->label = op->id;
        leaf->node_id = next_id++;
        leaf->op_id = op->id;
        leaf->on_gemm_unit = op->is_gemm();

        std::set<std::string> op_dims;
        for (const auto& tn : op->inputs)
          for (const auto& d : graph.tensor(tn).dims)
            if (d.extent > 1) op_dims.insert(d.name);
        for (const auto& d : graph.tensor(op->output).dims)
          if (d.extent > 1) op_dims.insert(d.name);
        Extent engaged = 1;
        for (const auto& dim : op_dims) {
          const Extent temporal = factor_of(info.dram_t, dim) * factor_of(info.gb_t, dim) *
                                  factor_of(info.ob_t, dim);
          Extent spatial = factor_of(info.cluster_s, dim) * factor_of(info.core_s, dim);
          if (sub.local) spatial = 1;
          leaf->leaf_tile[dim] = graph.dim_extent(dim) / (temporal * spatial);
          engaged *= spatial;
        }
        leaf->engaged_cores = int(engaged);
        for (const auto& tn : op->inputs) {
          const double b = tile_bytes(graph.tensor(tn), info, sub.local, Gran::ObIter);
          leaf->leaf_input_bytes.push_back(b);
          leaf->leaf_in_bytes += b;
        }
        leaf->leaf_out_bytes = tile_bytes(graph.tensor(op->output), info, sub.local, Gran::ObIter);
        ob_node->children.push_back(std::move(leaf));
      }
      sub_nodes.push_back(ob_node.get());
      gb_node->children.push_back(std::move(ob_node));
    }

    // Collectives slot in right after their producing subgroup.
    {
      std::vector<std::unique_ptr<MapNode>> ordered;
      for (size_t si = 0; si < gb_node->children.size(); ++si) {
        ordered.push_back(std::move(gb_node->children[si]));
        for (const auto& pl : placements) {
          if (pl.group != int(gi) || pl.after_subgroup != int(si)) continue;
          auto co_node = std::make_unique<MapNode>();
          co_node->kind = MapNode::Kind::Collective;
          co_node->label = gtag + "/co_" + pl.spec->tensor;
          co_node->node_id = next_id++;

          const auto& tspec = graph.tensor(pl.spec->tensor);
          const auto scope = collective_scope(*pl.spec, arch);
          const int prod_sub = info.producer_sub.at(pl.spec->tensor);
          const bool local_prod = info.subs[prod_sub].local;

          FactorMap tier;
          if (scope.clusters && !local_prod)
            for (const auto& [d, f] : info.cluster_s) tier[d] = f;
          if (scope.cores && !local_prod)
            for (const auto& [d, f] : info.core_s) tier[d] = tier.count(d) ? tier[d] * f : f;

          Extent participants = 1, parallel = 1;
          for (const auto& [dim, f] : tier) {
            if (f <= 1) continue;
            const bool has = tensor_has(tspec, dim);
            const bool counts = reduce_kind(pl.spec->type) ? !has : has;
            if (counts)
              participants *= f;
            else
              parallel *= f;
          }

          CollectiveInfo ci;
          ci.spec = *pl.spec;
          ci.participants = int(participants);
          ci.grid = scope.grid;
          ci.parallel_instances = int(parallel);
          ci.mem_level = scope.mem;
          const Gran gran = scope.mem == MemLevelName::OB ? Gran::ObResident : Gran::GbIter;
          ci.payload_bytes = tile_bytes(tspec, info, local_prod, gran);
          co_node->level = scope.mem;
          co_node->collective = ci;
          ordered.push_back(std::move(co_node));
        }
      }
      gb_node->children = std::move(ordered);
    }

    // ---- flows across the GB boundary ----
    {
      std::set<std::string> ob_resident;  // placed into OBs by a collective
      std::set<std::string> gb_gathered;  // staged fully on a single GB
      std::set<std::string> gb_reduced;   // reduced across GBs by a collective
      std::set<std::string> ob_collected;
      for (const auto& pl : placements) {
        if (pl.group != int(gi)) continue;
        if (collective_scope(*pl.spec, arch).mem == MemLevelName::OB)
          ob_collected.insert(pl.spec->tensor);
      }

      int child_index = 0;
      int sub_seen = 0;
      for (const auto& child : gb_node->children) {
        if (child->kind == MapNode::Kind::Collective) {
          const auto& ci = *child->collective;
          if (ci.mem_level == MemLevelName::OB) {
            ob_resident.insert(ci.spec.tensor);
          } else if (ci.spec.type == ColOpType::Gather) {
            gb_gathered.insert(ci.spec.tensor);
          } else {
            gb_reduced.insert(ci.spec.tensor);
          }
          ++child_index;
          continue;
        }
        const int si = sub_seen++;
        auto& sub = info.subs[si];
        const Extent gb_instances = sub.local ? 1 : product(info.cluster_s);

        std::set<std::string> filled;
        for (const auto* op : sub.ops) {
          for (const auto& in : op->inputs) {
            if (sub.produced.count(in) || filled.count(in)) continue;
            filled.insert(in);
            const auto& tspec = graph.tensor(in);
            if (tspec.init_value && graph.producer_of(in) < 0) continue;
            if (ob_resident.count(in)) continue;

            Flow f;
            f.tensor = in;
            f.dir = Direction::Read;
            const bool gathered = gb_gathered.count(in) > 0;
            f.bytes_per_delivery = tile_bytes(tspec, info, sub.local || gathered, Gran::GbIter);
            f.deliveries = temporal_deliveries(info.gb_t, tspec);
            f.child_copies = sub.local ? 1 : copies_over_lacking(info.core_s, tspec, sub.dims);
            f.parent_instances = int(gathered ? 1 : gb_instances);
            f.child_buffer = MemLevelName::OB;
            if (op->is_gemm()) {
              if (in == op->inputs[0]) f.child_buffer = MemLevelName::IB;
              if (in == op->inputs[1]) f.child_buffer = MemLevelName::WB;
            }
            const int pg = graph.producer_of(in) >= 0 ? producer_group[in] : -1;
            f.sibling = (pg == int(gi) && info.producer_sub.at(in) < si) || gathered ||
                        gb_reduced.count(in) > 0;
            f.child_index = child_index;
            gb_node->analysis.flows.push_back(std::move(f));
          }
        }

        for (const auto* op : sub.ops) {
          const auto& out = op->output;
          bool consumed_later_sub = false;
          for (size_t sj = si + 1; sj < info.subs.size(); ++sj)
            for (const auto* op2 : info.subs[sj].ops)
              for (const auto& in : op2->inputs)
                if (in == out) consumed_later_sub = true;
          const bool consumed_outside =
              std::find(info.outputs.begin(), info.outputs.end(), out) != info.outputs.end();
          if (!consumed_later_sub && !consumed_outside) continue;

          Flow f;
          f.tensor = out;
          f.dir = Direction::Write;
          f.bytes_per_delivery = tile_bytes(graph.tensor(out), info, sub.local, Gran::GbIter);
          f.deliveries = temporal_deliveries(info.gb_t, graph.tensor(out));
          f.child_copies =
              sub.local ? 1 : copies_over_lacking(info.core_s, graph.tensor(out), sub.dims);
          f.parent_instances = int(gb_instances);
          f.child_buffer = MemLevelName::OB;
          f.sibling = consumed_later_sub;
          f.child_index = child_index;
          if (ob_collected.count(out)) {
            // The collective itself moves the tensor between OBs. A copy only
            // drains upward if some later group or the graph output needs it.
            if (!consumed_outside) continue;
            f.child_copies = 1;
            f.sibling = false;
          }
          gb_node->analysis.flows.push_back(std::move(f));
        }
        ++child_index;
      }

      // Compulsory stalls: the fill that gates the very first op and the
      // drain of the very last op's output.
      const auto* first_op = info.subs.front().ops.front();
      const auto* last_op = info.subs.back().ops.back();
      for (const auto& f : gb_node->analysis.flows) {
        if (f.dir == Direction::Read && !f.sibling &&
            std::find(first_op->inputs.begin(), first_op->inputs.end(), f.tensor) !=
                first_op->inputs.end())
          gb_node->analysis.cs_fill_bytes += f.bytes_per_delivery;
        if (f.dir == Direction::Write && f.tensor == last_op->output)
          gb_node->analysis.cs_drain_bytes += f.bytes_per_delivery * f.child_copies;
      }

      if (gs.schedule != Schedule::Sequential)
        for (const auto& f : gb_node->analysis.flows)
          if (f.sibling)
            fail(Errc::BadSchedule,
                 "group '" + gtag + "' has dependent subgroups under a concurrent schedule");
    }

    // ---- flows across the DRAM boundary ----
    {
      for (const auto& in : info.inputs) {
        const auto& tspec = graph.tensor(in);
        if (tspec.init_value && graph.producer_of(in) < 0) continue;
        Flow f;
        f.tensor = in;
        f.dir = Direction::Read;
        f.bytes_per_delivery = tile_bytes(tspec, info, false, Gran::DramIter);
        f.deliveries = temporal_deliveries(info.dram_t, tspec);
        double copies = 1;
        for (const auto& sub : info.subs) {
          bool consumes = false;
          for (const auto* op : sub.ops)
            for (const auto& i2 : op->inputs)
              if (i2 == in) consumes = true;
          if (!consumes || sub.produced.count(in)) continue;
          const double c = sub.local ? 1 : copies_over_lacking(info.cluster_s, tspec, sub.dims);
          copies = std::max(copies, c);
        }
        f.child_copies = copies;
        f.parent_instances = 1;
        f.child_buffer = MemLevelName::GB;
        f.child_index = 0;
        dram_node->analysis.flows.push_back(std::move(f));
      }
      for (const auto& out : info.outputs) {
        const auto& tspec = graph.tensor(out);
        Flow f;
        f.tensor = out;
        f.dir = Direction::Write;
        f.bytes_per_delivery = tile_bytes(tspec, info, false, Gran::DramIter);
        f.deliveries = temporal_deliveries(info.dram_t, tspec);
        const int psub = info.producer_sub.at(out);
        f.child_copies = info.subs[psub].local
                             ? 1
                             : copies_over_lacking(info.cluster_s, tspec, info.subs[psub].dims);
        f.parent_instances = 1;
        f.child_buffer = MemLevelName::GB;
        f.child_index = 0;
        dram_node->analysis.flows.push_back(std::move(f));
      }
      const auto* first_op = info.subs.front().ops.front();
      const auto* last_op = info.subs.back().ops.back();
      for (const auto& f : dram_node->analysis.flows) {
        if (f.dir == Direction::Read &&
            std::find(first_op->inputs.begin(), first_op->inputs.end(), f.tensor) !=
                first_op->inputs.end())
          dram_node->analysis.cs_fill_bytes += f.bytes_per_delivery;
        if (f.dir == Direction::Write && f.tensor == last_op->output)
          dram_node->analysis.cs_drain_bytes += f.bytes_per_delivery * f.child_copies;
      }
    }

    // ---- footprints ----
    {
      std::map<std::string, LiveInterval> live;
      const int positions = int(info.subs.size());
      for (int si = 0; si < positions; ++si) {
        const auto& sub = info.subs[si];
        for (const auto& tn : sub.referenced) {
          const auto& tspec = graph.tensor(tn);
          if (tspec.init_value && graph.producer_of(tn) < 0) continue;
          auto& iv = live[tn];
          const double bytes = tile_bytes(tspec, info, sub.local, Gran::GbResident);
          if (iv.bytes == 0) iv.first = si;
          iv.bytes = std::max(iv.bytes, bytes);
          iv.last = si;
        }
      }
      std::vector<LiveInterval> ivs;
      for (auto& [_, iv] : live) ivs.push_back(iv);
      dram_node->analysis.footprint_bytes[MemLevelName::GB] = 2.0 * max_live_bytes(ivs, positions);

      for (size_t si = 0; si < info.subs.size(); ++si) {
        const auto& sub = info.subs[si];
        auto* ob_node = sub_nodes[si];
        double ib = 0, wb = 0;
        std::map<std::string, LiveInterval> ob_live;
        int pos = 0;
        for (const auto* op : sub.ops) {
          for (const auto& tn : op->inputs) {
            const double bytes = tile_bytes(graph.tensor(tn), info, sub.local, Gran::ObIter);
            if (op->is_gemm() && tn == op->inputs[0]) {
              ib = std::max(ib, bytes);
              continue;
            }
            if (op->is_gemm() && tn == op->inputs[1]) {
              wb = std::max(wb, bytes);
              continue;
            }
            auto& iv = ob_live[tn];
            if (iv.bytes == 0) iv.first = pos;
            iv.bytes = std::max(iv.bytes, bytes);
            iv.last = pos;
          }
          auto& ov = ob_live[op->output];
          const double obytes =
              tile_bytes(graph.tensor(op->output), info, sub.local, Gran::ObIter);
          if (ov.bytes == 0) ov.first = pos;
          ov.bytes = std::max(ov.bytes, obytes);
          ov.last = int(sub.ops.size()) - 1;
          ++pos;
        }
        std::vector<LiveInterval> obs;
        for (auto& [_, iv] : ob_live) obs.push_back(iv);
        if (ib > 0) ob_node->analysis.footprint_bytes[MemLevelName::IB] = 2.0 * ib;
        if (wb > 0) ob_node->analysis.footprint_bytes[MemLevelName::WB] = 2.0 * wb;
        ob_node->analysis.footprint_bytes[MemLevelName::OB] =
            2.0 * max_live_bytes(obs, int(sub.ops.size()));
      }

      // A gathered tensor stages whole on its destination memory.
      for (const auto& pl : placements) {
        if (pl.group != int(gi) || pl.spec->type != ColOpType::Gather) continue;
        const auto scope = collective_scope(*pl.spec, arch);
        const auto& tspec = graph.tensor(pl.spec->tensor);
        const double full = tile_bytes(tspec, info, /*local=*/true, Gran::GbIter);
        if (scope.mem == MemLevelName::GB) {
          auto& fp = dram_node->analysis.footprint_bytes[MemLevelName::GB];
          fp = std::max(fp, 2.0 * full);
        } else {
          MapNode* target = pl.after_subgroup + 1 < int(sub_nodes.size())
                                ? sub_nodes[pl.after_subgroup + 1]
                                : sub_nodes.back();
          auto& fp = target->analysis.footprint_bytes[MemLevelName::OB];
          fp = std::max(fp, 2.0 * full);
        }
      }
    }

    dram_node->children.push_back(std::move(gb_node));
    tree.root->children.push_back(std::move(dram_node));
  }

  return tree;
}

}  // namespace comet
