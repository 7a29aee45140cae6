#pragma once

#include <cstdint>
#include <set>

#include "comet/cost.hpp"
#include "comet/oracle.hpp"

namespace comet {

// Search-time constraints for one fusion group. Subgroup structure, local
// subgroups and collectives are pinned by the strategy; tiling factors are
// sampled unless pinned. Factor slots: dram, cluster, gb, core, ob.
struct GroupConstraint {
  std::vector<std::vector<std::string>> subgroups;
  std::vector<int> local_subgroups;
  std::set<std::string> cluster_dims;  // dims allowed to unroll across clusters
  std::set<std::string> core_dims;     // dims allowed to unroll across cores
  std::map<std::string, std::map<std::string, Extent>> pinned_factors;  // dim -> slot -> factor
  std::vector<Schedule> allowed_schedules{Schedule::Sequential};
  bool spatial_power_of_two = true;
};

struct MapSpaceConstraints {
  std::vector<GroupConstraint> groups;
  std::vector<CollectiveOpSpec> collectives;
  int max_iterations = 10000;
  std::uint64_t seed = 0;
};

struct SearchResult {
  bool found = false;
  MappingInstance best;
  CostReport best_report;
  int best_iteration = -1;
  std::vector<std::pair<int, double>> trace;  // (iteration, latency) improvements
  int evaluated = 0;
  int invalid = 0;
  int oom = 0;
};

// Deterministic draw of a mapping instance from the constrained space.
MappingInstance sample_instance(const MapSpaceConstraints& constraints, const CompoundGraph& graph,
                                const ArchSpec& arch, std::uint64_t rng_state);

// Iterative sampling search minimizing (latency, energy). Honors the
// COMET_THREADS environment variable; results are independent of the worker
// count for a fixed seed.
SearchResult search(const CompoundGraph& graph, const ArchSpec& arch,
                    const MapSpaceConstraints& constraints);

// The named mapping families used in strategy comparisons.
MapSpaceConstraints build_named_strategy(const std::string& name, const CompoundGraph& graph,
                                         const ArchSpec& arch);
std::vector<std::string> known_strategies();

// Fallback constraints for custom graphs: fusion grouping as annotated on the
// graph, spatial unrolling over each op's output dims, no collectives.
MapSpaceConstraints default_constraints(const CompoundGraph& graph);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace comet
