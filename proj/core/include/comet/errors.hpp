#pragma once

#include <stdexcept>
#include <string>

namespace comet {

enum class Errc {
  ShapeMismatch,
  CyclicGraph,
  MissingInput,
  InvalidBlocking,
  SchemaError,
  SemanticError,
  IndexOutOfRange,
  UnknownLevel,
  UnknownTensor,
  BadFactorization,
  SpatialOverflow,
  DanglingCollective,
  UnsupportedParticipantCount,
  ZeroBandwidth,
  IncompatibleUnit,
  BadTile,
  BadSchedule,
  EventBudgetExceeded,
  Unsatisfiable,
  NoValidMapping,
  IncompatibleStrategy,
  Oom,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace comet
