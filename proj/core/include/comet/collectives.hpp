#pragma once

#include <optional>
#include <span>
#include <vector>

#include "comet/arch.hpp"
#include "comet/workload.hpp"

namespace comet {

enum class ColOpType { AllReduce, AllGather, ReduceScatter, Gather, Broadcast };
const char* col_op_name(ColOpType t);
ColOpType col_op_from(const std::string& s);

struct CollectiveStep {
  int partner_offset = 0;     // partner = index XOR offset (0 for rooted ops)
  double bytes_per_node = 0;  // payload each participating node sends this step
  int max_hops = 0;           // critical-path partner distance this step
  double total_bytes = 0;     // summed over all senders this step
  int hop_sum = 0;            // sum over senders of the per-pair distance
};

struct CollectivePlan {
  ColOpType kind = ColOpType::AllReduce;
  int participants = 1;
  double payload_bytes = 0;  // S: per-participant payload
  std::vector<CollectiveStep> steps;
  double per_node_bytes = 0;  // volume through the bottleneck node
  double total_bytes = 0;     // summed over all nodes and steps
  int total_hops = 0;         // sum over steps of max partner distance
};

// Plans a collective among P participants holding S bytes each, placed
// row-major on `grid` (or at `placement` indices when given). AllReduce is
// recursive halving (reduce-scatter) followed by the mirrored recursive
// doubling (all-gather); Gather/Broadcast move whole payloads to/from the
// first participant. P must be a power of two.
CollectivePlan plan_collective(ColOpType kind, int participants, double payload_bytes,
                               const Grid& grid, std::span<const int> placement = {});

struct CollectiveCost {
  double mem_ns = 0;
  double noc_ns = 0;
  double total_ns = 0;
};

CollectiveCost collective_latency(const CollectivePlan& plan, const ArchSpec& arch,
                                  MemLevelName src_level);

double collective_energy(const CollectivePlan& plan, const ArchSpec& arch, MemLevelName level);

}  // namespace comet
