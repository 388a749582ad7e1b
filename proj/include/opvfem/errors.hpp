#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace opvfem {

/// Inconsistent sizes, counts, or extents.
struct dimension_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Degenerate element geometry (zero or negative simplex volume).
struct geometry_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A state exponent left the representable range; the nonlinear iteration blew up.
struct divergence_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Linear or nonlinear solver failure that is not a divergence.
struct solver_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Carries every validation problem found, not just the first.
struct config_error : std::runtime_error {
  std::vector<std::string> problems;

  explicit config_error(std::vector<std::string> p)
      : std::runtime_error(join(p)), problems(std::move(p)) {}
  explicit config_error(const std::string& p)
      : std::runtime_error(p), problems{p} {}

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string s;
    for (const auto& e : p) {
      if (!s.empty()) s += "\n";
      s += e;
    }
    return s;
  }
};

}  // namespace opvfem
