#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dynlab {

/// Shortest round-trip decimal formatting of a double (std::to_chars).
std::string format_double(double value);

/// CSV table with a fixed header; all numeric cells use shortest
/// round-trip formatting so reruns are byte-identical and reloads exact.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

/// FNV-1a 64-bit hash; used for scenario identity and artifact checksums.
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t file_checksum(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     std::string_view content);

}  // namespace dynlab
