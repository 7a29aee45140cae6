#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "comet/cost.hpp"

namespace comet {

struct Event {
  double start_ns = 0;
  double end_ns = 0;
  std::string kind;  // fill, compute, drain, collective
  int node_id = 0;
  Extent iteration = 0;
};

struct OracleResult {
  double total_ns = 0;
  std::vector<Event> trace;
  std::size_t event_count = 0;
};

// Event-driven reference execution of a mapping tree: explicit double-buffered
// fills, drains on a separate port, serialized sibling transfers and
// per-iteration collectives. Validates the analytical stall composition.
OracleResult simulate(const MappingTree& tree, const ArchSpec& arch,
                      std::size_t event_budget = 1'000'000, bool keep_trace = false);

struct Comparison {
  double analytical_ns = 0;
  double oracle_ns = 0;
  double relative_error = 0;
};

Comparison compare(const MappingTree& tree, const ArchSpec& arch);

}  // namespace comet
