#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace manta {

/// Numeric CSV table with `# key=value` metadata lines ahead of the header.
struct Table {
  std::map<std::string, std::string> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;  // throws ValidationError
  bool has_column(const std::string& name) const;
};

void write_table(const std::filesystem::path& path, const Table& table);
Table read_table(const std::filesystem::path& path);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace manta
