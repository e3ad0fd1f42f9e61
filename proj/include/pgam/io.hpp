#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pgam {

// Writes to a sibling temp file, flushes, then renames over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

// 17 significant digits; round-trips every finite double.
std::string format_double(double v);
std::string join_doubles(std::span<const double> values, char sep = ';');
std::vector<double> split_doubles(std::string_view text, char sep = ';');

}  // namespace pgam
