#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mimo::io {

// Shortest decimal string that round-trips to the same f64 bit pattern.
std::string format_double(double v);

// Parse a full string as f64; throws IoError on trailing junk or overflow.
double parse_double(const std::string& text, const std::string& context);

std::string read_file(const std::filesystem::path& path);
std::vector<std::uint8_t> read_binary(const std::filesystem::path& path);

// Write via a sibling temp file and rename, so readers never observe a
// half-written file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
void write_binary_atomic(const std::filesystem::path& path,
                         const std::vector<std::uint8_t>& contents);

// Minimal CSV: comma-separated, no quoting (writers reject cells containing
// commas, quotes, or newlines rather than emit something a strict reader
// would misparse).
struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::string to_csv(const Csv& table);
Csv parse_csv(const std::string& text, const std::string& context);

void write_csv_atomic(const std::filesystem::path& path, const Csv& table);
Csv read_csv(const std::filesystem::path& path);

} // namespace mimo::io
