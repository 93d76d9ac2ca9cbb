#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace caplf {

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// Whole-string decimal parse; returns false on trailing garbage.
bool parse_double(std::string_view s, double& out);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

std::string_view trim(std::string_view s);

}  // namespace caplf
