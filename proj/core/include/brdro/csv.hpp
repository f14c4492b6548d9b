#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace brdro {

/// printf "%.17g": exact round trip for every finite double.
std::string format_double(double v);

/// Writes to `<path>.tmp` and renames, so the file is either complete or absent.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

std::vector<std::string> split_fields(std::string_view line, char sep = ',');

std::string_view trim(std::string_view s);

}  // namespace brdro
