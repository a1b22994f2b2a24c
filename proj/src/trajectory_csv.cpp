#include "dml4ssi/trajectory_csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>
#include <vector>

namespace dml4ssi {
namespace {

std::vector<std::string_view> split_row(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

bool parse_double(std::string_view cell, double& out) {
  while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
  while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  // from_chars does not accept "nan"/"inf" spellings consistently; handle them
  // so that validation (not parsing) reports non-finite values.
  if (cell == "nan" || cell == "NaN" || cell == "-nan") {
    out = std::nan("");
    return true;
  }
  if (cell == "inf" || cell == "Inf") {
    out = INFINITY;
    return true;
  }
  if (cell == "-inf" || cell == "-Inf") {
    out = -INFINITY;
    return true;
  }
  auto res = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return res.ec == std::errc() && res.ptr == cell.data() + cell.size();
}

struct Layout {
  std::size_t p_x = 0;
  std::size_t p_h = 0;
  std::size_t columns() const { return p_x + p_h + 3; }
};

Layout parse_header(std::string_view line) {
  const auto cells = split_row(line);
  std::size_t i = 0;
  auto expect_next = [&](std::string_view name) {
    if (i >= cells.size() || cells[i] != name) {
      throw SchemaError("trajectory CSV header: missing column '" + std::string(name) + "'");
    }
    ++i;
  };
  expect_next("t");
  Layout layout;
  while (i < cells.size() && cells[i] == "x_" + std::to_string(layout.p_x + 1)) {
    ++layout.p_x;
    ++i;
  }
  expect_next("d");
  while (i < cells.size() && cells[i] == "h_" + std::to_string(layout.p_h + 1)) {
    ++layout.p_h;
    ++i;
  }
  expect_next("y");
  if (i != cells.size()) {
    throw SchemaError("trajectory CSV header: unexpected column '" + std::string(cells[i]) + "'");
  }
  return layout;
}

}  // namespace

void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  const std::size_t p_x = traj.p_x();
  const std::size_t p_h = traj.p_h();
  out << "t";
  for (std::size_t j = 1; j <= p_x; ++j) out << ",x_" << j;
  out << ",d";
  for (std::size_t j = 1; j <= p_h; ++j) out << ",h_" << j;
  out << ",y\n";

  out << "0";
  for (std::size_t j = 0; j < p_x; ++j) out << ',';
  out << ',';
  for (double v : traj.h0) out << ',' << format_double(v);
  out << ",\n";

  for (std::size_t i = 0; i < traj.obs.size(); ++i) {
    const Observation& o = traj.obs[i];
    out << (i + 1);
    for (double v : o.x) out << ',' << format_double(v);
    out << ',' << o.d;
    for (double v : o.h) out << ',' << format_double(v);
    out << ',' << format_double(o.y) << '\n';
  }
}

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_trajectory_csv(traj, out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Trajectory read_trajectory_csv(std::istream& in, Regime regime,
                               std::optional<SwitchbackDesign> design) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("trajectory CSV is empty");
  const Layout layout = parse_header(line);

  Trajectory traj;
  traj.regime = regime;
  traj.design = design;

  std::size_t line_no = 1;
  bool saw_initial = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_row(line);
    const std::string where = "line " + std::to_string(line_no);
    if (cells.size() != layout.columns()) {
      throw SchemaError(where + ": expected " + std::to_string(layout.columns()) +
                        " cells, found " + std::to_string(cells.size()));
    }
    double t_value = 0.0;
    if (!parse_double(cells[0], t_value)) throw SchemaError(where + ": bad value in column 't'");
    const std::size_t expected_t = saw_initial ? traj.obs.size() + 1 : 0;
    if (t_value != static_cast<double>(expected_t)) {
      throw SchemaError(where + ": expected t=" + std::to_string(expected_t));
    }

    auto read_cell = [&](std::size_t col, const std::string& name) {
      double v = 0.0;
      if (!parse_double(cells[col], v)) {
        throw SchemaError(where + ": missing or malformed value in column '" + name + "'");
      }
      return v;
    };

    const std::size_t d_col = 1 + layout.p_x;
    const std::size_t h_col = d_col + 1;
    const std::size_t y_col = h_col + layout.p_h;

    if (!saw_initial) {
      traj.h0.resize(layout.p_h);
      for (std::size_t j = 0; j < layout.p_h; ++j) {
        traj.h0[j] = read_cell(h_col + j, "h_" + std::to_string(j + 1));
      }
      saw_initial = true;
      continue;
    }

    Observation o;
    o.x.resize(layout.p_x);
    for (std::size_t j = 0; j < layout.p_x; ++j) {
      o.x[j] = read_cell(1 + j, "x_" + std::to_string(j + 1));
    }
    const double d = read_cell(d_col, "d");
    // Non-integral treatments are mapped to -1 so validation flags them.
    o.d = (d == std::floor(d) && std::fabs(d) < 1e9) ? static_cast<int>(d) : -1;
    o.h.resize(layout.p_h);
    for (std::size_t j = 0; j < layout.p_h; ++j) {
      o.h[j] = read_cell(h_col + j, "h_" + std::to_string(j + 1));
    }
    o.y = read_cell(y_col, "y");
    traj.obs.push_back(std::move(o));
  }
  if (!saw_initial) throw SchemaError("trajectory CSV has no t=0 row");
  return traj;
}

Trajectory read_trajectory_csv(const std::filesystem::path& path, Regime regime,
                               std::optional<SwitchbackDesign> design) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_trajectory_csv(in, regime, design);
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace dml4ssi
