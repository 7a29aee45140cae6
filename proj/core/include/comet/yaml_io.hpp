#pragma once

#include <string>

#include <yaml-cpp/yaml.h>

#include "comet/mapspace.hpp"

namespace comet {

// Workload documents: canned generators or explicit tensor/op lists.
CompoundGraph parse_workload(const YAML::Node& doc);
CompoundGraph parse_workload_file(const std::string& path);

// Architecture documents mirroring the hardware-table keys.
ArchSpec parse_arch(const YAML::Node& doc);
ArchSpec parse_arch_file(const std::string& path);
YAML::Node arch_to_yaml(const ArchSpec& arch);

// Mapping instances; emitted mappings re-parse to the same instance.
MappingInstance parse_mapping(const YAML::Node& doc);
MappingInstance parse_mapping_file(const std::string& path);
std::string mapping_to_yaml(const MappingInstance& inst);

// Search constraints; `strategy:` names a canned family instead of groups.
struct ConstraintsDoc {
  MapSpaceConstraints constraints;
  std::string strategy;  // empty when groups are given explicitly
};
ConstraintsDoc parse_constraints(const YAML::Node& doc);
ConstraintsDoc parse_constraints_file(const std::string& path);

YAML::Node load_yaml_file(const std::string& path);

}  // namespace comet
