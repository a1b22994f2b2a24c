#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "dml4ssi/core.hpp"

namespace dml4ssi {

// Malformed or schema-violating input data.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Trajectory CSV layout:
//   t,x_1..x_pX,d,h_1..h_pH,y
// Row t=0 carries h0 with empty x/d/y cells. Values use 17 significant digits.
void write_trajectory_csv(const Trajectory& traj, std::ostream& out);
void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path);

// Parses the CSV layout above. Regime and design are not part of the file and
// are attached by the caller. Throws SchemaError naming the offending line or
// column. The result is not validated; call validate_trajectory.
Trajectory read_trajectory_csv(std::istream& in, Regime regime = {},
                               std::optional<SwitchbackDesign> design = std::nullopt);
Trajectory read_trajectory_csv(const std::filesystem::path& path, Regime regime = {},
                               std::optional<SwitchbackDesign> design = std::nullopt);

}  // namespace dml4ssi
