#include "sfp/io.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace sfp {

bool all_finite(const Matrix& m) { return m.allFinite(); }

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_matrix(const Matrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      double v = m(r, c);
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

namespace {

constexpr char kMagic[4] = {'S', 'F', 'M', 'T'};
constexpr unsigned char kDtypeF64 = 2;

void put_u32_le(unsigned char* p, std::uint32_t v) {
  p[0] = static_cast<unsigned char>(v & 0xff);
  p[1] = static_cast<unsigned char>((v >> 8) & 0xff);
  p[2] = static_cast<unsigned char>((v >> 16) & 0xff);
  p[3] = static_cast<unsigned char>((v >> 24) & 0xff);
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void write_matrix_file(const std::filesystem::path& path, const Matrix& m) {
  check(m.rows() > 0 && m.cols() > 0,
        "write_matrix_file: refusing to write empty matrix to " +
            path.string());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(out.good(), "write_matrix_file: cannot open " + path.string());

  unsigned char header[16] = {};
  std::memcpy(header, kMagic, 4);
  header[4] = kDtypeF64;
  put_u32_le(header + 8, static_cast<std::uint32_t>(m.rows()));
  put_u32_le(header + 12, static_cast<std::uint32_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(header), sizeof(header));

  // Doubles go out row-major; this code assumes a little-endian host.
  std::vector<double> row(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row[static_cast<std::size_t>(c)] = m(r, c);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  check(out.good(), "write_matrix_file: short write to " + path.string());
}

Matrix read_matrix_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "read_matrix_file: cannot open " + path.string());

  unsigned char header[16];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  check(in.gcount() == sizeof(header),
        "read_matrix_file: truncated header in " + path.string());
  check(std::memcmp(header, kMagic, 4) == 0,
        "read_matrix_file: bad magic in " + path.string());
  check(header[4] == kDtypeF64, "read_matrix_file: unsupported dtype code " +
                                    std::to_string(int(header[4])) + " in " +
                                    path.string());
  std::uint32_t rows = get_u32_le(header + 8);
  std::uint32_t cols = get_u32_le(header + 12);
  check(rows > 0 && cols > 0,
        "read_matrix_file: zero dimension in " + path.string());

  Matrix m(rows, cols);
  std::vector<double> row(cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(cols * sizeof(double)));
    check(in.gcount() == static_cast<std::streamsize>(cols * sizeof(double)),
          "read_matrix_file: truncated payload in " + path.string());
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = row[c];
  }
  in.peek();
  check(in.eof(),
        "read_matrix_file: trailing bytes after payload in " + path.string());
  check(all_finite(m),
        "read_matrix_file: non-finite value in " + path.string());
  return m;
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::trunc);
  check(out.good(), "write_json_file: cannot open " + path.string());
  out << j.dump(2) << "\n";
  check(out.good(), "write_json_file: short write to " + path.string());
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  check(in.good(), "read_json_file: cannot open " + path.string());
  Json j = Json::parse(in, nullptr, /*allow_exceptions=*/false);
  check(!j.is_discarded(), "read_json_file: invalid JSON in " + path.string());
  return j;
}

const Json& json_field(const Json& j, const std::string& key,
                       const std::string& where) {
  auto it = j.find(key);
  check(it != j.end(), where + ": missing field \"" + key + "\"");
  return *it;
}

}  // namespace sfp
