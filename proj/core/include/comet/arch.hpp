#pragma once

#include <map>
#include <string>
#include <vector>

#include "comet/errors.hpp"
#include "comet/workload.hpp"

namespace comet {

enum class MemLevelName { DRAM, GB, IB, WB, OB };
const char* mem_level_name(MemLevelName l);
MemLevelName mem_level_from(const std::string& s);

enum class Direction { Read, Write };

struct MemoryLevel {
  MemLevelName name = MemLevelName::DRAM;
  double capacity_bytes = 0;
  double bandwidth_bytes_per_s = 0;
  double read_pj_per_byte = 0;
  double write_pj_per_byte = 0;
  int multiplicity = 1;  // instances per parent level
};

struct Grid {
  int rows = 1;
  int cols = 1;
  int size() const { return rows * cols; }
};

// Manhattan distance between row-major node indices on a mesh.
int mesh_distance(const Grid& grid, int a, int b);

struct MeshSpec {
  Grid cluster_grid{2, 2};
  Grid core_grid{2, 2};
  int channel_width_links = 256;  // W: bits per flit
  double t_router_ns = 5.0;
  double t_enq_ns = 2.0;
  double channel_bandwidth_bytes_per_s = 64e9;
  double e_per_flit_hop_pj = 1.0;
  bool charge_scatter_noc = false;  // NoC latency for plain parent-to-child scatter
};

struct SystolicSpec {
  Grid array_grid{8, 8};  // arrays per core
  int rows = 32;          // R
  int cols = 32;          // C
  double clock_ns = 1.0;
  double e_mac_pj = 0.3;
};

struct SimdSpec {
  int lanes = 64;
  int ops_per_cycle = 2;
  double clock_ns = 1.0;
  double e_op_pj = 2.0;
  std::map<std::string, double> e_op_overrides;  // per op-kind energy (pJ/op)
  std::map<std::string, int> weight_overrides;   // per op-kind cycle weight

  int weight_for(const std::string& fn) const;
  double energy_for(const std::string& fn) const;
};

struct ArchSpec {
  std::string name = "arch";
  std::vector<MemoryLevel> levels;  // DRAM, GB, IB, WB, OB
  MeshSpec mesh;
  SystolicSpec gemm_unit;
  SimdSpec simd;

  const MemoryLevel& level(MemLevelName l) const;
  int clusters() const { return mesh.cluster_grid.size(); }
  int cores_per_cluster() const { return mesh.core_grid.size(); }
  int total_cores() const { return clusters() * cores_per_cluster(); }
  // Flattened chip-wide grid: clusters tiled by their core meshes.
  Grid chip_grid() const;
};

double level_bandwidth(const ArchSpec& arch, MemLevelName level, Direction dir);
double level_energy(const ArchSpec& arch, MemLevelName level, Direction dir);

}  // namespace comet
