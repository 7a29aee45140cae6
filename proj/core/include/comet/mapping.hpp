#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "comet/arch.hpp"
#include "comet/collectives.hpp"
#include "comet/workload.hpp"

namespace comet {

enum class LoopKind { Temporal, SpatialCluster, SpatialCore };
const char* loop_kind_name(LoopKind k);
LoopKind loop_kind_from(const std::string& s);

struct LoopDim {
  std::string dim;
  Extent factor = 1;
  LoopKind kind = LoopKind::Temporal;
};

enum class Schedule { Sequential, Pipelined, Parallel };
const char* schedule_name(Schedule s);
Schedule schedule_from(const std::string& s);

// ---- Serializable mapping instance (the YAML-facing description) ----

// One fusion group: ops that keep their intermediates on-chip. Subgroups are
// ops co-resident in the core buffers (their intermediates never leave OB);
// tensors between subgroups bounce through the GB. Tensors between groups
// round-trip DRAM, so a mapping of all-singleton groups is the unfused case.
struct GroupSpec {
  std::vector<std::vector<std::string>> subgroups;
  std::vector<LoopDim> dram_loops;  // temporal + spatial_cluster
  std::vector<LoopDim> gb_loops;    // temporal + spatial_core
  std::vector<LoopDim> ob_loops;    // temporal
  // Subgroups that run on a single cluster+core (e.g. after a gather);
  // spatial factors do not apply to them.
  std::vector<int> local_subgroups;
  Schedule schedule = Schedule::Sequential;        // across subgroups
  std::vector<Schedule> subgroup_schedules;        // within each subgroup
  std::map<std::string, std::vector<std::string>> tensor_orders;  // optional
};

struct CollectiveOpSpec {
  ColOpType type = ColOpType::AllReduce;
  std::string tensor;
  std::optional<ReduceFn> reduce;
  std::vector<MemLevelName> src;
  std::vector<MemLevelName> dest;
  std::string after_op;  // placed right after the subgroup producing this op
};

struct MappingInstance {
  std::vector<GroupSpec> groups;
  std::vector<CollectiveOpSpec> collectives;
  Schedule root_schedule = Schedule::Sequential;
};

// ---- Mapping tree IR ----

// One boundary crossing at a tile node, per tensor and direction. Bytes are
// per engaged parent-memory instance; `child_copies` is the multicast (fills)
// or partial-copy (drains) multiplier on the child side.
struct Flow {
  std::string tensor;
  Direction dir = Direction::Read;
  double bytes_per_delivery = 0;
  Extent deliveries = 1;
  double child_copies = 1;
  int parent_instances = 1;
  MemLevelName child_buffer = MemLevelName::GB;
  bool sibling = false;  // serialized intra-pass transfer between siblings
  int child_index = 0;
};

struct CollectiveInfo {
  CollectiveOpSpec spec;
  int participants = 1;
  Grid grid{1, 1};
  double payload_bytes = 0;     // S per participant
  int parallel_instances = 1;   // orthogonal copies running concurrently
  MemLevelName mem_level = MemLevelName::OB;
};

struct NodeAnalysis {
  Extent iterations = 1;
  std::vector<Flow> flows;
  double cs_fill_bytes = 0;   // first-delivery fill of the first child
  double cs_drain_bytes = 0;  // last-delivery drain of the last child
  // Residency of the memory this node fills, per engaged instance, with
  // double buffering applied on on-chip levels.
  std::map<MemLevelName, double> footprint_bytes;
};

struct MapNode {
  enum class Kind { Root, DramStage, GbStage, ObStage, Leaf, Collective };

  Kind kind = Kind::Root;
  MemLevelName level = MemLevelName::DRAM;  // memory this node streams from
  std::string label;
  int node_id = 0;

  std::vector<LoopDim> loops;  // this node's loop nest, outer to inner
  std::map<std::string, std::vector<LoopDim>> tensor_nests;
  Schedule schedule = Schedule::Sequential;
  std::vector<std::unique_ptr<MapNode>> children;

  // Leaf binding
  std::string op_id;
  bool on_gemm_unit = false;
  std::map<std::string, Extent> leaf_tile;  // dim -> extent at the compute unit
  int engaged_cores = 1;                    // spatial instances running this op
  std::vector<double> leaf_input_bytes;     // unit-side tile bytes, per input
  double leaf_in_bytes = 0, leaf_out_bytes = 0;

  std::optional<CollectiveInfo> collective;
  NodeAnalysis analysis;

  bool is_tile() const { return kind != Kind::Collective; }
};

struct MappingTree {
  std::unique_ptr<MapNode> root;
  const CompoundGraph* graph = nullptr;
  MappingInstance instance;

  const MapNode& at(int node_id) const;
  std::vector<const MapNode*> all_nodes() const;
};

// Converts a mapping instance into the tree IR, deriving per-tensor loop
// nests, boundary flows, collective participant sets and footprints.
MappingTree build_tree(const MappingInstance& instance, const CompoundGraph& graph,
                       const ArchSpec& arch);

Extent iteration_count(const MapNode& node);
double data_volume_per_iter(const MapNode& node, const std::string& tensor, Direction dir);

// Residency of the memory this node fills, per engaged instance.
std::map<MemLevelName, double> node_footprint(const MapNode& node);

struct FitResult {
  bool ok = true;
  MemLevelName level = MemLevelName::DRAM;
  double needed = 0;
  double capacity = 0;
  std::string node;

  std::string describe() const;
};

FitResult validate_fit(const MappingTree& tree, const ArchSpec& arch);

// Chip-wide DRAM traffic per tensor, in bytes, over the whole execution.
std::map<std::string, std::pair<double, double>> dram_traffic_by_tensor(const MappingTree& tree);

}  // namespace comet
