#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace asmr {

// Shortest round-trip decimal form (to_chars), so report files are
// byte-deterministic and parse back to the same double.
std::string format_double(double v);

std::uint64_t fnv1a64(std::string_view s);
std::string hex64(std::uint64_t v);

// CSV with a '# config=<hash>' provenance comment, then a header row.
void write_csv(const std::filesystem::path& path, const std::string& config_hash,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

std::string csv_to_string(const std::string& config_hash, const std::vector<std::string>& header,
                          const std::vector<std::vector<std::string>>& rows);

}  // namespace asmr
