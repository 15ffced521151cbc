#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hwopt {

// Raised on unreadable files, malformed CSV/config text, bad JSON shapes.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

// CSV: comma-separated, no quoting or escapes (none of our formats need them).
// Blank lines are dropped; cells are whitespace-trimmed.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

// Flat key = value config ("TOML-like"): '#' comments, optional [section]
// headers (ignored), values are bare words, quoted strings, numbers, or
// comma-separated lists. Later keys override earlier ones.
std::map<std::string, std::string> parse_kv_config(const std::string& text);
std::map<std::string, std::string> read_kv_config(const std::filesystem::path& path);

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

double to_double(const std::string& s, const std::string& what);
long long to_int(const std::string& s, const std::string& what);

} // namespace hwopt
