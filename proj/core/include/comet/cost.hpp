#pragma once

#include <map>
#include <span>
#include <string>

#include "comet/mapping.hpp"

namespace comet {

double mem_lat_ns(double dv_bytes, double bw_bytes_per_s);

// Systolic-array streaming time: (2R + C + T - 2) cycles per fold with
// T = M_tile, folds = ceil(K/R) * ceil(N/C), folds spread over the array grid.
Extent gemm_cycles(const SystolicSpec& unit, Extent m, Extent n, Extent k);
double gemm_compute_ns(const SystolicSpec& unit, Extent m, Extent n, Extent k);

Extent simd_cycles(const SimdSpec& unit, Extent elements, const std::string& fn);
double simd_compute_ns(const SimdSpec& unit, Extent elements, const std::string& fn);

// Dispatches on the bound unit; IncompatibleUnit when the op and unit differ.
double compute_time_ns(const ElementaryOp& op, bool gemm_unit, const ArchSpec& arch,
                       const CompoundGraph& graph, const std::map<std::string, Extent>& tile);

struct NodeLatency {
  double total_ns = 0;
  double mw_ns = 0;
  double cs_ns = 0;
  double os_ns = 0;
  double conflict_ns = 0;
  Extent n_iterations = 1;
};

// Lat = N * MW + CS + OS, with OS = (N - 1) * max(0, MemLat - MW) and
// CS = fill + drain.
NodeLatency tile_node_latency(Extent n, double mw_ns, double mem_lat_ns, double fill_ns,
                              double drain_ns);

// Sequential: sum of child totals. Pipelined/parallel: slower child plus the
// conflict stall, folded pairwise in child order over the shared-memory times.
NodeLatency combine_children(Schedule schedule, std::span<const NodeLatency> children,
                             std::span<const double> shared_mem_lat_ns);

struct LatencyBreakdown {
  double gemm_ns = 0;
  double simd_ns = 0;
  double collective_ns = 0;
  double conflict_ns = 0;
  std::map<MemLevelName, double> cs_ns;
  std::map<MemLevelName, double> os_ns;
  std::map<MemLevelName, double> mem_ns;  // serialized sibling transfers

  double total() const;
  LatencyBreakdown& operator+=(const LatencyBreakdown& o);
  LatencyBreakdown scaled(double k) const;
};

struct EnergyBreakdown {
  std::map<std::string, double> pj;  // dram, gb, ib_wb, ob, gemm_unit, simd_unit, noc
  double total_pj = 0;
};

struct AccessCounts {
  std::map<std::string, double> bytes_read;     // per memory level
  std::map<std::string, double> bytes_written;  // per memory level
  double mac_count = 0;
  double simd_op_count = 0;
  double noc_flit_hops = 0;
};

struct CostReport {
  double total_ns = 0;
  LatencyBreakdown latency;
  EnergyBreakdown energy;
  AccessCounts counts;
  std::map<std::string, std::pair<double, double>> dram_tensor_traffic;
  std::map<int, NodeLatency> node_latency;  // keyed by node id
};

// Bottom-up evaluation of a mapping tree. Fails with Errc::Oom when the
// mapping does not fit the memory hierarchy.
CostReport evaluate(const MappingTree& tree, const ArchSpec& arch);

}  // namespace comet
