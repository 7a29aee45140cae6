#include "comet/cost.hpp"

#include <algorithm>
#include <cmath>

namespace comet {

double mem_lat_ns(double dv_bytes, double bw_bytes_per_s) {
  if (bw_bytes_per_s <= 0) fail(Errc::ZeroBandwidth, "memory bandwidth must be positive");
  if (dv_bytes <= 0) return 0.0;
  return dv_bytes / bw_bytes_per_s * 1e9;
}

Extent gemm_cycles(const SystolicSpec& unit, Extent m, Extent n, Extent k) {
  if (m < 1 || n < 1 || k < 1)
    fail(Errc::BadTile, "degenerate GEMM tile " + std::to_string(m) + "x" + std::to_string(n) +
                            "x" + std::to_string(k));
  const Extent folds = ((k + unit.rows - 1) / unit.rows) * ((n + unit.cols - 1) / unit.cols);
  const Extent spread = (folds + unit.array_grid.size() - 1) / unit.array_grid.size();
  return (2 * unit.rows + unit.cols + m - 2) * spread;
}

double gemm_compute_ns(const SystolicSpec& unit, Extent m, Extent n, Extent k) {
  return double(gemm_cycles(unit, m, n, k)) * unit.clock_ns;
}

Extent simd_cycles(const SimdSpec& unit, Extent elements, const std::string& fn) {
  if (elements < 0) fail(Errc::BadTile, "negative element count");
  const Extent per_cycle = Extent(unit.lanes) * unit.ops_per_cycle;
  return ((elements + per_cycle - 1) / per_cycle) * unit.weight_for(fn);
}

double simd_compute_ns(const SimdSpec& unit, Extent elements, const std::string& fn) {
  return double(simd_cycles(unit, elements, fn)) * unit.clock_ns;
}

namespace {

// GEMM tile roles: T (rows streamed) from the first operand's free dims,
// array columns from the second operand's free dims, folds from contraction.
void gemm_tile_dims(const ElementaryOp& op, const CompoundGraph& graph,
                    const std::map<std::string, Extent>& tile, Extent& m, Extent& n, Extent& k) {
  const auto& a = graph.tensor(op.inputs[0]);
  const auto& b = graph.tensor(op.inputs[1]);
  std::string shared;
  for (const auto& d : a.dims)
    if (d.extent > 1 && b.extent_of(d.name) > 1) shared = d.name;
  auto tile_of = [&](const std::string& dim) {
    auto it = tile.find(dim);
    return it == tile.end() ? Extent(1) : it->second;
  };
  m = n = 1;
  k = shared.empty() ? 1 : tile_of(shared);
  for (const auto& d : a.dims)
    if (d.extent > 1 && d.name != shared) m *= tile_of(d.name);
  for (const auto& d : b.dims)
    if (d.extent > 1 && d.name != shared) n *= tile_of(d.name);
}

Extent simd_elements(const ElementaryOp& op, const CompoundGraph& graph,
                     const std::map<std::string, Extent>& tile) {
  // Reductions touch every input element; elementwise ops every output one.
  const auto& shape = op.kind == ElementaryOp::Kind::RowReduction
                          ? graph.tensor(op.inputs[0])
                          : graph.tensor(op.output);
  Extent e = 1;
  for (const auto& d : shape.dims) {
    if (d.extent <= 1) continue;
    auto it = tile.find(d.name);
    e *= it == tile.end() ? d.extent : it->second;
  }
  return e;
}

}  // namespace

double compute_time_ns(const ElementaryOp& op, bool gemm_unit, const ArchSpec& arch,
                       const CompoundGraph& graph, const std::map<std::string, Extent>& tile) {
  if (op.is_gemm() != gemm_unit)
    fail(Errc::IncompatibleUnit, "op '" + op.id + "' bound to the wrong compute unit");
  if (op.is_gemm()) {
    Extent m, n, k;
    gemm_tile_dims(op, graph, tile, m, n, k);
    return gemm_compute_ns(arch.gemm_unit, m, n, k);
  }
  return simd_compute_ns(arch.simd, simd_elements(op, graph, tile), op.simd_fn_name());
}

NodeLatency tile_node_latency(Extent n, double mw_ns, double mem_lat_ns_, double fill_ns,
                              double drain_ns) {
  NodeLatency lat;
  lat.n_iterations = n;
  lat.mw_ns = mw_ns;
  lat.cs_ns = fill_ns + drain_ns;
  lat.os_ns = n > 1 ? double(n - 1) * std::max(0.0, mem_lat_ns_ - mw_ns) : 0.0;
  lat.total_ns = double(n) * mw_ns + lat.cs_ns + lat.os_ns;
  return lat;
}

NodeLatency combine_children(Schedule schedule, std::span<const NodeLatency> children,
                             std::span<const double> shared_mem_lat_ns) {
  NodeLatency out;
  if (children.empty()) return out;
  if (schedule == Schedule::Sequential) {
    for (const auto& c : children) out.total_ns += c.total_ns;
    out.mw_ns = out.total_ns;
    return out;
  }
  double lat = children[0].total_ns;
  double ml = shared_mem_lat_ns.empty() ? 0.0 : shared_mem_lat_ns[0];
  for (size_t i = 1; i < children.size(); ++i) {
    const double ml_i = i < shared_mem_lat_ns.size() ? shared_mem_lat_ns[i] : 0.0;
    const double conflict_time = ml + ml_i - std::max(lat, children[i].total_ns);
    const double stall = std::max(0.0, conflict_time);
    lat = std::max(lat, children[i].total_ns) + stall;
    ml += ml_i;
    out.conflict_ns += stall;
  }
  out.total_ns = lat;
  out.mw_ns = lat;
  return out;
}

double LatencyBreakdown::total() const {
  double t = gemm_ns + simd_ns + collective_ns + conflict_ns;
  for (const auto& [_, v] : cs_ns) t += v;
  for (const auto& [_, v] : os_ns) t += v;
  for (const auto& [_, v] : mem_ns) t += v;
  return t;
}

LatencyBreakdown& LatencyBreakdown::operator+=(const LatencyBreakdown& o) {
  gemm_ns += o.gemm_ns;
  simd_ns += o.simd_ns;
  collective_ns += o.collective_ns;
  conflict_ns += o.conflict_ns;
  for (const auto& [k, v] : o.cs_ns) cs_ns[k] += v;
  for (const auto& [k, v] : o.os_ns) os_ns[k] += v;
  for (const auto& [k, v] : o.mem_ns) mem_ns[k] += v;
  return *this;
}

LatencyBreakdown LatencyBreakdown::scaled(double k) const {
  LatencyBreakdown s = *this;
  s.gemm_ns *= k;
  s.simd_ns *= k;
  s.collective_ns *= k;
  s.conflict_ns *= k;
  for (auto& [_, v] : s.cs_ns) v *= k;
  for (auto& [_, v] : s.os_ns) v *= k;
  for (auto& [_, v] : s.mem_ns) v *= k;
  return s;
}

namespace {

const char* energy_key(MemLevelName l) {
  switch (l) {
    case MemLevelName::DRAM: return "dram";
    case MemLevelName::GB: return "gb";
    case MemLevelName::IB:
    case MemLevelName::WB: return "ib_wb";
    case MemLevelName::OB: return "ob";
  }
  return "?";
}

class Evaluator {
 public:
  Evaluator(const MappingTree& tree, const ArchSpec& arch) : tree_(tree), arch_(arch) {}

  CostReport run() {
    const auto fit = validate_fit(tree_, arch_);
    if (!fit.ok) fail(Errc::Oom, fit.describe());

    auto res = eval(*tree_.root, 1.0);
    report_.total_ns = res.lat.total_ns;
    report_.latency = res.vec;
    report_.dram_tensor_traffic = dram_traffic_by_tensor(tree_);
    for (auto& [_, v] : report_.energy.pj) report_.energy.total_pj += v;
    return std::move(report_);
  }

 private:
  struct Result {
    NodeLatency lat;
    LatencyBreakdown vec;
    double port_ns_per_iter = 0;  // shared-memory time, for conflict stalls
  };

  void charge(MemLevelName level, Direction dir, double bytes) {
    if (bytes <= 0) return;
    report_.energy.pj[energy_key(level)] += bytes * level_energy(arch_, level, dir);
    auto& slot = dir == Direction::Read ? report_.counts.bytes_read : report_.counts.bytes_written;
    slot[mem_level_name(level)] += bytes;
  }

  // Per-iteration port times of one child on this node's memory.
  struct PortLoad {
    double read_ns = 0;
    double write_ns = 0;
    double sibling_ns = 0;
  };

  PortLoad child_port_load(const MapNode& node, int child_index, double bw) const {
    PortLoad load;
    const double n = double(std::max<Extent>(1, node.analysis.iterations));
    for (const auto& f : node.analysis.flows) {
      if (f.child_index != child_index) continue;
      const double bytes = f.bytes_per_delivery * double(f.deliveries) *
                           (f.dir == Direction::Write ? f.child_copies : 1.0) / n;
      const double t = mem_lat_ns(bytes, bw);
      if (f.sibling)
        load.sibling_ns += t;
      else if (f.dir == Direction::Read)
        load.read_ns += t;
      else
        load.write_ns += t;
    }
    return load;
  }

  void charge_flows(const MapNode& node, double exec_scale) {
    for (const auto& f : node.analysis.flows) {
      const double base =
          f.bytes_per_delivery * double(f.deliveries) * double(f.parent_instances) * exec_scale;
      if (f.dir == Direction::Read) {
        charge(node.level, Direction::Read, base);
        charge(f.child_buffer, Direction::Write, base * f.child_copies);
      } else {
        charge(f.child_buffer, Direction::Read, base * f.child_copies);
        charge(node.level, Direction::Write, base * f.child_copies);
      }
    }
  }

  Result eval_leaf(const MapNode& node, double exec_scale) {
    const auto& op = tree_.graph->op(node.op_id);
    Result r;
    r.lat.mw_ns = compute_time_ns(op, node.on_gemm_unit, arch_, *tree_.graph, node.leaf_tile);
    r.lat.total_ns = r.lat.mw_ns;
    const double obw = level_bandwidth(arch_, MemLevelName::OB, Direction::Read);
    r.port_ns_per_iter = mem_lat_ns(node.leaf_in_bytes + node.leaf_out_bytes, obw);

    // Unit-side buffer accesses and compute energy, chip-wide.
    const double execs = exec_scale * double(node.engaged_cores);
    if (node.on_gemm_unit) {
      Extent prod = 1;
      for (const auto& [_, e] : node.leaf_tile) prod *= e;
      const double macs = double(prod) * execs;
      report_.energy.pj["gemm_unit"] += macs * arch_.gemm_unit.e_mac_pj;
      report_.counts.mac_count += macs;
      if (node.leaf_input_bytes.size() == 2) {
        charge(MemLevelName::IB, Direction::Read, node.leaf_input_bytes[0] * execs);
        charge(MemLevelName::WB, Direction::Read, node.leaf_input_bytes[1] * execs);
      }
      charge(MemLevelName::OB, Direction::Write, node.leaf_out_bytes * execs);
      r.vec.gemm_ns = r.lat.total_ns;
    } else {
      Extent prod = 1;
      const auto& shape = op.kind == ElementaryOp::Kind::RowReduction
                              ? tree_.graph->tensor(op.inputs[0])
                              : tree_.graph->tensor(op.output);
      for (const auto& d : shape.dims) {
        if (d.extent <= 1) continue;
        auto it = node.leaf_tile.find(d.name);
        prod *= it == node.leaf_tile.end() ? d.extent : it->second;
      }
      const double elems = double(prod) * execs;
      report_.energy.pj["simd_unit"] += elems * arch_.simd.energy_for(op.simd_fn_name());
      report_.counts.simd_op_count += elems;
      charge(MemLevelName::OB, Direction::Read, node.leaf_in_bytes * execs);
      charge(MemLevelName::OB, Direction::Write, node.leaf_out_bytes * execs);
      r.vec.simd_ns = r.lat.total_ns;
    }
    return r;
  }

  Result eval_collective(const MapNode& node, double exec_scale) {
    const auto& ci = *node.collective;
    Result r;
    const auto plan = plan_collective(ci.spec.type, ci.participants, ci.payload_bytes, ci.grid);
    const auto cost = collective_latency(plan, arch_, ci.mem_level);
    r.lat.total_ns = cost.total_ns;
    r.lat.mw_ns = cost.total_ns;
    r.vec.collective_ns = cost.total_ns;

    const double instances = double(ci.parallel_instances) * exec_scale;
    // Memory side: every moved byte is one read and one write at the
    // participant level. The flit-hop term goes to the NoC component.
    charge(ci.mem_level, Direction::Read, plan.total_bytes * instances);
    charge(ci.mem_level, Direction::Write, plan.total_bytes * instances);
    for (const auto& st : plan.steps) {
      const double flits = std::ceil(st.bytes_per_node * 8.0 / arch_.mesh.channel_width_links);
      report_.counts.noc_flit_hops += flits * st.hop_sum * instances;
      report_.energy.pj["noc"] += flits * st.hop_sum * arch_.mesh.e_per_flit_hop_pj * instances;
    }
    return r;
  }

  Result eval_stage(const MapNode& node, double exec_scale) {
    const Extent n = std::max<Extent>(1, node.analysis.iterations);
    const double bw = level_bandwidth(arch_, node.level, Direction::Read);
    charge_flows(node, exec_scale);

    // One pass over the ordered children: collectives and sibling transfers
    // serialize; tile children within a segment follow the node schedule.
    double pass_ns = 0;
    LatencyBreakdown pass_vec;
    std::vector<NodeLatency> segment;
    std::vector<double> segment_ml;
    std::vector<LatencyBreakdown> segment_vecs;

    auto flush_segment = [&]() {
      if (segment.empty()) return;
      const auto combined = combine_children(node.schedule, segment, segment_ml);
      pass_ns += combined.total_ns;
      if (node.schedule == Schedule::Sequential) {
        for (const auto& v : segment_vecs) pass_vec += v;
      } else {
        size_t slow = 0;
        for (size_t i = 1; i < segment.size(); ++i)
          if (segment[i].total_ns > segment[slow].total_ns) slow = i;
        pass_vec += segment_vecs[slow];
        pass_vec.conflict_ns += combined.conflict_ns;
      }
      segment.clear();
      segment_ml.clear();
      segment_vecs.clear();
    };

    double read_ns_iter = 0, write_ns_iter = 0;
    int child_index = 0;
    for (const auto& child : node.children) {
      if (child->kind == MapNode::Kind::Collective) {
        flush_segment();
        auto r = eval_collective(*child, exec_scale * double(n));
        node_lat(*child, r.lat);
        pass_ns += r.lat.total_ns;
        pass_vec += r.vec;
        ++child_index;
        continue;
      }
      auto r = eval(*child, exec_scale * double(n));
      const auto load = child_port_load(node, child_index, bw);
      read_ns_iter += load.read_ns;
      write_ns_iter += load.write_ns;

      NodeLatency block = r.lat;
      LatencyBreakdown block_vec = r.vec;
      if (load.sibling_ns > 0) {
        block.total_ns += load.sibling_ns;
        block_vec.mem_ns[node.level] += load.sibling_ns;
      }
      segment.push_back(block);
      segment_ml.push_back(load.read_ns + load.write_ns);
      segment_vecs.push_back(block_vec);
      ++child_index;
    }
    flush_segment();

    const double mem_lat = std::max(read_ns_iter, write_ns_iter);
    const double fill = mem_lat_ns(node.analysis.cs_fill_bytes, bw);
    const double drain = mem_lat_ns(node.analysis.cs_drain_bytes, bw);

    Result out;
    out.lat = tile_node_latency(n, pass_ns, mem_lat, fill, drain);
    out.vec = pass_vec.scaled(double(n));
    out.vec.cs_ns[node.level] += out.lat.cs_ns;
    out.vec.os_ns[node.level] += out.lat.os_ns;
    out.port_ns_per_iter = read_ns_iter + write_ns_iter;
    return out;
  }

  Result eval_root(const MapNode& node, double exec_scale) {
    std::vector<NodeLatency> lats;
    std::vector<double> mls;
    std::vector<LatencyBreakdown> vecs;
    for (const auto& child : node.children) {
      auto r = eval(*child, exec_scale);
      lats.push_back(r.lat);
      mls.push_back(r.port_ns_per_iter);
      vecs.push_back(r.vec);
    }
    Result out;
    out.lat = combine_children(node.schedule, lats, mls);
    if (node.schedule == Schedule::Sequential) {
      for (const auto& v : vecs) out.vec += v;
    } else if (!lats.empty()) {
      size_t slow = 0;
      for (size_t i = 1; i < lats.size(); ++i)
        if (lats[i].total_ns > lats[slow].total_ns) slow = i;
      out.vec += vecs[slow];
      out.vec.conflict_ns += out.lat.conflict_ns;
    }
    return out;
  }

  void node_lat(const MapNode& node, const NodeLatency& lat) {
    report_.node_latency[node.node_id] = lat;
  }

  Result eval(const MapNode& node, double exec_scale) {
    Result r;
    switch (node.kind) {
      case MapNode::Kind::Leaf: r = eval_leaf(node, exec_scale); break;
      case MapNode::Kind::Collective: r = eval_collective(node, exec_scale); break;
      case MapNode::Kind::Root: r = eval_root(node, exec_scale); break;
      case MapNode::Kind::ObStage: {
        const Extent n = std::max<Extent>(1, node.analysis.iterations);
        std::vector<NodeLatency> lats;
        std::vector<double> mls;
        std::vector<LatencyBreakdown> vecs;
        for (const auto& child : node.children) {
          auto cr = eval(*child, exec_scale * double(n));
          lats.push_back(cr.lat);
          mls.push_back(cr.port_ns_per_iter);
          vecs.push_back(cr.vec);
        }
        const auto combined = combine_children(node.schedule, lats, mls);
        r.lat = tile_node_latency(n, combined.total_ns, 0.0, 0.0, 0.0);
        r.lat.conflict_ns = combined.conflict_ns * double(n);
        if (node.schedule == Schedule::Sequential) {
          for (const auto& v : vecs) r.vec += v;
        } else if (!vecs.empty()) {
          size_t slow = 0;
          for (size_t i = 1; i < lats.size(); ++i)
            if (lats[i].total_ns > lats[slow].total_ns) slow = i;
          r.vec += vecs[slow];
          r.vec.conflict_ns += combined.conflict_ns;
        }
        r.vec = r.vec.scaled(double(n));
        break;
      }
      case MapNode::Kind::DramStage:
      case MapNode::Kind::GbStage: r = eval_stage(node, exec_scale); break;
    }
    node_lat(node, r.lat);
    return r;
  }

  const MappingTree& tree_;
  const ArchSpec& arch_;
  CostReport report_;
};

}  // namespace

CostReport evaluate(const MappingTree& tree, const ArchSpec& arch) {
  return Evaluator(tree, arch).run();
}

}  // namespace comet
