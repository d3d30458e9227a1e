#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "starwave/graph.hpp"

namespace starwave {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

nlohmann::json to_json(const GraphFunction& u);
GraphFunction graph_function_from_json(const nlohmann::json& j);
std::string to_csv(const GraphFunction& u);

/// Writes bytes as-is (LF line endings are the caller's job); throws on I/O failure.
void write_text_file(const std::filesystem::path& path, const std::string& content);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

/// Small CSV builder with a fixed header.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  CsvTable& row(const std::vector<double>& values);
  CsvTable& row(const std::vector<std::string>& cells);
  std::string str() const;
  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::string> rows_;
};

}  // namespace starwave
