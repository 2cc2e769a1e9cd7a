#pragma once

#include <stdexcept>
#include <string>

namespace igc {

// Inconsistent dimensions, broken invariants, infeasible structural requests.
struct structural_error : std::runtime_error {
  explicit structural_error(const std::string& what) : std::runtime_error(what) {}
};

// Bad arguments or malformed input documents.
struct usage_error : std::invalid_argument {
  explicit usage_error(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed data files; carries the byte offset when known.
struct ingest_error : std::runtime_error {
  long long offset;
  explicit ingest_error(const std::string& what, long long off = -1)
      : std::runtime_error(what), offset(off) {}
};

// Non-finite loss or gradients during training.
struct divergence_error : std::runtime_error {
  explicit divergence_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace igc
