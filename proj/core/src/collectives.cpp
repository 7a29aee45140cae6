#include "comet/collectives.hpp"

#include <algorithm>
#include <cmath>

namespace comet {

const char* col_op_name(ColOpType t) {
  switch (t) {
    case ColOpType::AllReduce: return "all_reduce";
    case ColOpType::AllGather: return "all_gather";
    case ColOpType::ReduceScatter: return "reduce_scatter";
    case ColOpType::Gather: return "gather";
    case ColOpType::Broadcast: return "broadcast";
  }
  return "?";
}

ColOpType col_op_from(const std::string& s) {
  if (s == "all_reduce" || s == "allreduce") return ColOpType::AllReduce;
  if (s == "all_gather" || s == "allgather") return ColOpType::AllGather;
  if (s == "reduce_scatter") return ColOpType::ReduceScatter;
  if (s == "gather") return ColOpType::Gather;
  if (s == "broadcast") return ColOpType::Broadcast;
  fail(Errc::SchemaError, "unknown collective type '" + s + "'");
}

namespace {

bool is_pow2(int p) { return p > 0 && (p & (p - 1)) == 0; }

int log2i(int p) {
  int k = 0;
  while ((1 << k) < p) ++k;
  return k;
}

// One exchange round at the given partner offset. Every node sends `bytes`
// to (index XOR offset); hop distances come from the placement on the mesh.
CollectiveStep exchange_step(int participants, int offset, double bytes, const Grid& grid,
                             std::span<const int> placement) {
  CollectiveStep st;
  st.partner_offset = offset;
  st.bytes_per_node = bytes;
  st.total_bytes = bytes * participants;
  for (int i = 0; i < participants; ++i) {
    const int j = i ^ offset;
    const int d = mesh_distance(grid, placement[i], placement[j]);
    st.max_hops = std::max(st.max_hops, d);
    st.hop_sum += d;
  }
  return st;
}

}  // namespace

CollectivePlan plan_collective(ColOpType kind, int participants, double payload_bytes,
                               const Grid& grid, std::span<const int> placement) {
  CollectivePlan plan;
  plan.kind = kind;
  plan.participants = participants;
  plan.payload_bytes = payload_bytes;
  if (participants <= 1 || payload_bytes <= 0) return plan;  // nothing to move

  if (!is_pow2(participants))
    fail(Errc::UnsupportedParticipantCount,
         "recursive doubling/halving needs a power-of-two participant count, got " +
             std::to_string(participants));
  if (participants > grid.size())
    fail(Errc::IndexOutOfRange, "more participants than mesh positions");

  std::vector<int> default_placement;
  if (placement.empty()) {
    default_placement.resize(participants);
    for (int i = 0; i < participants; ++i) default_placement[i] = i;
    placement = default_placement;
  }

  const int P = participants;
  const double S = payload_bytes;
  const int k = log2i(P);

  switch (kind) {
    case ColOpType::ReduceScatter:
      // Recursive halving: step i exchanges S / 2^(i+1) at offset 2^i.
      for (int i = 0; i < k; ++i)
        plan.steps.push_back(
            exchange_step(P, 1 << i, S / double(1 << (i + 1)), grid, placement));
      plan.per_node_bytes = S * double(P - 1) / double(P);
      break;
    case ColOpType::AllGather:
      // Recursive doubling, mirrored: grows from S/P up to S/2 per step.
      for (int i = 0; i < k; ++i)
        plan.steps.push_back(
            exchange_step(P, 1 << (k - 1 - i), S / double(1 << (k - i)), grid, placement));
      plan.per_node_bytes = S * double(P - 1) / double(P);
      break;
    case ColOpType::AllReduce:
      // Reduce-scatter then the mirrored all-gather.
      for (int i = 0; i < k; ++i)
        plan.steps.push_back(
            exchange_step(P, 1 << i, S / double(1 << (i + 1)), grid, placement));
      for (int i = 0; i < k; ++i)
        plan.steps.push_back(
            exchange_step(P, 1 << (k - 1 - i), S / double(1 << (k - i)), grid, placement));
      plan.per_node_bytes = 2.0 * S * double(P - 1) / double(P);
      break;
    case ColOpType::Gather: {
      // Every non-root sends its payload straight to the root; the root's
      // ingress aggregates S * (P - 1).
      CollectiveStep st;
      st.partner_offset = 0;
      st.bytes_per_node = S;
      st.total_bytes = S * double(P - 1);
      for (int i = 1; i < P; ++i) {
        const int d = mesh_distance(grid, placement[i], placement[0]);
        st.max_hops = std::max(st.max_hops, d);
        st.hop_sum += d;
      }
      plan.steps.push_back(st);
      plan.per_node_bytes = S * double(P - 1);
      break;
    }
    case ColOpType::Broadcast: {
      CollectiveStep st;
      st.partner_offset = 0;
      st.bytes_per_node = S;
      st.total_bytes = S * double(P - 1);
      for (int i = 1; i < P; ++i) {
        const int d = mesh_distance(grid, placement[0], placement[i]);
        st.max_hops = std::max(st.max_hops, d);
        st.hop_sum += d;
      }
      plan.steps.push_back(st);
      plan.per_node_bytes = S * double(P - 1);
      break;
    }
  }

  for (const auto& st : plan.steps) {
    plan.total_bytes += st.total_bytes;
    plan.total_hops += st.max_hops;
  }
  return plan;
}

CollectiveCost collective_latency(const CollectivePlan& plan, const ArchSpec& arch,
                                  MemLevelName src_level) {
  CollectiveCost cost;
  if (plan.participants <= 1 || plan.total_bytes <= 0) return cost;

  const double level_bw = level_bandwidth(arch, src_level, Direction::Read);
  const double bw = std::min(level_bw, arch.mesh.channel_bandwidth_bytes_per_s);
  if (bw <= 0) fail(Errc::ZeroBandwidth, "collective bandwidth is zero");
  cost.mem_ns = plan.per_node_bytes / bw * 1e9;

  // Flit count rounds up once over the whole collective.
  const double flits = std::ceil(plan.total_bytes * 8.0 / arch.mesh.channel_width_links);
  cost.noc_ns = arch.mesh.t_router_ns * plan.total_hops + arch.mesh.t_enq_ns * flits;
  cost.total_ns = cost.mem_ns + cost.noc_ns;
  return cost;
}

double collective_energy(const CollectivePlan& plan, const ArchSpec& arch, MemLevelName level) {
  if (plan.participants <= 1 || plan.total_bytes <= 0) return 0.0;
  double pj = 0.0;
  // Per-step flit count times the summed per-pair distances.
  for (const auto& st : plan.steps) {
    const double flits = std::ceil(st.bytes_per_node * 8.0 / arch.mesh.channel_width_links);
    pj += flits * st.hop_sum * arch.mesh.e_per_flit_hop_pj;
  }
  // Each byte moved is one read at the sender and one write at the receiver.
  pj += plan.total_bytes *
        (level_energy(arch, level, Direction::Read) + level_energy(arch, level, Direction::Write));
  return pj;
}

}  // namespace comet
