#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fuselearn::text {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view line, char sep = ',');

// Splits on LF, strips a trailing CR from each line. A final empty line after
// the last LF is not reported.
std::vector<std::string_view> lines(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace fuselearn::text
