#include "starwave/io.hpp"

#include <charconv>
#include <fstream>

#include "starwave/error.hpp"

namespace starwave {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw numeric_error("failed to format double");
  return std::string(buf, end);
}

nlohmann::json to_json(const GraphFunction& u) {
  const auto& g = u.grid();
  nlohmann::json data = nlohmann::json::array();
  for (int e = 0; e < g.n_edges(); ++e) {
    nlohmann::json edge = nlohmann::json::array();
    for (int c = 0; c < u.components(); ++c) {
      nlohmann::json ch = nlohmann::json::array();
      for (int m = 0; m < g.samples(); ++m) ch.push_back({u(e, c, m).real(), u(e, c, m).imag()});
      edge.push_back(std::move(ch));
    }
    data.push_back(std::move(edge));
  }
  nlohmann::json j;
  j["schema"] = 1;
  j["n_edges"] = g.n_edges();
  j["components"] = u.components();
  j["M"] = g.samples();
  j["L"] = g.edge_length();
  j["data"] = std::move(data);
  return j;
}

GraphFunction graph_function_from_json(const nlohmann::json& j) {
  try {
    const StarGrid g(j.at("n_edges").get<int>(), j.at("L").get<double>(), j.at("M").get<int>());
    GraphFunction u(g, j.at("components").get<int>());
    const auto& data = j.at("data");
    for (int e = 0; e < g.n_edges(); ++e)
      for (int c = 0; c < u.components(); ++c)
        for (int m = 0; m < g.samples(); ++m) {
          const auto& z = data.at(e).at(c).at(m);
          u(e, c, m) = cplx(z.at(0).get<double>(), z.at(1).get<double>());
        }
    return u;
  } catch (const nlohmann::json::exception& ex) {
    throw config_error(std::string("malformed graph function JSON: ") + ex.what());
  }
}

std::string to_csv(const GraphFunction& u) {
  CsvTable t({"edge", "component", "x", "re", "im"});
  const auto& g = u.grid();
  for (int e = 0; e < g.n_edges(); ++e)
    for (int c = 0; c < u.components(); ++c)
      for (int m = 0; m < g.samples(); ++m)
        t.row({std::to_string(e), std::to_string(c), format_double(g.x(m)),
               format_double(u(e, c, m).real()), format_double(u(e, c, m).imag())});
  return t.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw numeric_error("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw numeric_error("failed writing " + path.string());
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_double(v));
  return row(cells);
}

CsvTable& CsvTable::row(const std::vector<std::string>& cells) {
  if (cells.size() != header_.size()) throw numeric_error("CSV row width mismatch");
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += cells[i];
  }
  rows_.push_back(std::move(line));
  return *this;
}

std::string CsvTable::str() const {
  std::string s;
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (i) s += ',';
    s += header_[i];
  }
  s += '\n';
  for (const auto& r : rows_) s += r + '\n';
  return s;
}

}  // namespace starwave
