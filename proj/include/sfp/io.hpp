#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "sfp/common.hpp"

namespace sfp {

// Matrix file, 16-byte header + payload:
//   bytes  0-3   ASCII "SFMT"
//   byte   4     dtype code (2 = float64, the only code written or accepted)
//   bytes  5-7   zero
//   bytes  8-11  row count, unsigned 32-bit little-endian
//   bytes 12-15  column count, unsigned 32-bit little-endian
//   payload      rows*cols float64 values, row-major, little-endian
//
// Readers reject bad magic, unknown dtype codes, truncated or oversized
// payloads, and non-finite values, naming the offending file.
void write_matrix_file(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_file(const std::filesystem::path& path);

using Json = nlohmann::ordered_json;

void write_json_file(const std::filesystem::path& path, const Json& j);
Json read_json_file(const std::filesystem::path& path);

// Fetch a required key, failing with the file and key named.
const Json& json_field(const Json& j, const std::string& key,
                       const std::string& where);

}  // namespace sfp
