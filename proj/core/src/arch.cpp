#include "comet/arch.hpp"

#include <cmath>
#include <cstdlib>

namespace comet {

const char* mem_level_name(MemLevelName l) {
  switch (l) {
    case MemLevelName::DRAM: return "DRAM";
    case MemLevelName::GB: return "GB";
    case MemLevelName::IB: return "IB";
    case MemLevelName::WB: return "WB";
    case MemLevelName::OB: return "OB";
  }
  return "?";
}

MemLevelName mem_level_from(const std::string& s) {
  if (s == "DRAM" || s == "dram") return MemLevelName::DRAM;
  if (s == "GB" || s == "gb") return MemLevelName::GB;
  if (s == "IB" || s == "ib") return MemLevelName::IB;
  if (s == "WB" || s == "wb") return MemLevelName::WB;
  if (s == "OB" || s == "ob") return MemLevelName::OB;
  fail(Errc::UnknownLevel, "unknown memory level '" + s + "'");
}

int mesh_distance(const Grid& grid, int a, int b) {
  if (a < 0 || b < 0 || a >= grid.size() || b >= grid.size())
    fail(Errc::IndexOutOfRange, "mesh node out of range for " + std::to_string(grid.rows) + "x" +
                                    std::to_string(grid.cols) + " grid");
  const int ar = a / grid.cols, ac = a % grid.cols;
  const int br = b / grid.cols, bc = b % grid.cols;
  return std::abs(ar - br) + std::abs(ac - bc);
}

int SimdSpec::weight_for(const std::string& fn) const {
  auto it = weight_overrides.find(fn);
  if (it != weight_overrides.end()) return it->second;
  if (fn == "exp" || fn == "div" || fn == "sqrt" || fn == "reciprocal") return 4;
  return 1;  // add, sub, mul, max, scale
}

double SimdSpec::energy_for(const std::string& fn) const {
  auto it = e_op_overrides.find(fn);
  if (it != e_op_overrides.end()) return it->second;
  return e_op_pj;
}

const MemoryLevel& ArchSpec::level(MemLevelName l) const {
  for (const auto& m : levels)
    if (m.name == l) return m;
  fail(Errc::UnknownLevel, std::string("level ") + mem_level_name(l) + " not configured");
}

Grid ArchSpec::chip_grid() const {
  return Grid{mesh.cluster_grid.rows * mesh.core_grid.rows,
              mesh.cluster_grid.cols * mesh.core_grid.cols};
}

double level_bandwidth(const ArchSpec& arch, MemLevelName l, Direction) {
  // Dual-port memories: read and write ports each run at the configured rate.
  return arch.level(l).bandwidth_bytes_per_s;
}

double level_energy(const ArchSpec& arch, MemLevelName l, Direction dir) {
  const auto& m = arch.level(l);
  return dir == Direction::Read ? m.read_pj_per_byte : m.write_pj_per_byte;
}

}  // namespace comet
